#pragma once

// Optimizers as vector fields.
//
// Every method produces a field X_t from the current gradient (and its own
// accumulators); the parameters then move by one explicit Euler step
// theta <- theta + eta * X_t with a fixed eta. Accumulators are convex
// averages E[F]_t = (1 - beta) F_t + beta E[F]_{t-1}.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "basinlab/model.hpp"

namespace basinlab::optim {

enum class Kind { sgd, sgdm, adagrad, rmsprop, adadelta, adam };

std::string_view kind_name(Kind k);
Kind parse_kind(std::string_view name);

/// Second-order explicit Runge-Kutta coefficients (a1, a2, q1).
struct Rk2Coefficients {
  double a1 = 0.5;
  double a2 = 0.5;
  double q1 = 1.0;

  static Rk2Coefficients midpoint() { return {0.0, 1.0, 0.5}; }
  static Rk2Coefficients heun() { return {0.5, 0.5, 1.0}; }
  static Rk2Coefficients ralston() { return {1.0 / 3.0, 2.0 / 3.0, 0.75}; }
  /// "midpoint", "heun" or "ralston".
  static Rk2Coefficients named(std::string_view name);
  /// Name of a table entry, or "rk2" for custom coefficients.
  [[nodiscard]] std::string name() const;

  friend bool operator==(const Rk2Coefficients&, const Rk2Coefficients&) = default;
};

struct OptimizerSpec {
  Kind kind = Kind::sgd;
  double eta = 0.1;
  double beta1 = 0.9;    // sgdm momentum, adam first moment
  double beta2 = 0.999;  // rmsprop / adadelta decay, adam second moment
  double epsilon = 1e-8;
  std::optional<Rk2Coefficients> rk2;

  /// Per-kind defaults: sgd/sgdm eta 0.1, sgdm beta 0.9; adaptive eta 1e-3;
  /// adam (0.9, 0.999, 1e-8); rmsprop decay 0.9, eps 1e-8; adagrad eps 1e-8;
  /// adadelta rho 0.95, eps 1e-6.
  static OptimizerSpec defaults(Kind kind);

  /// Doubles eta and attaches the coefficients.
  [[nodiscard]] OptimizerSpec with_rk2(Rk2Coefficients c) const;

  void validate() const;
  /// e.g. "adam", "sgd+heun".
  [[nodiscard]] std::string label() const;

  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

/// The step size Euler actually uses: 1 for adadelta, eta otherwise.
double effective_eta(const OptimizerSpec& spec);

struct OptimizerState {
  std::uint64_t t = 0;
  std::vector<double> m;  // E[g]
  std::vector<double> v;  // E[g^2]
  std::vector<double> s;  // sum of g^2
  std::vector<double> u;  // E[X^2]

  static OptimizerState zeros(std::size_t n);
  [[nodiscard]] std::size_t size() const { return m.size(); }
};

/// Computes X_t and advances the accumulators exactly once.
std::vector<double> vector_field(const OptimizerSpec& spec, OptimizerState& state, std::span<const double> g);

/// Gradient of the minibatch loss at an arbitrary point.
using GradFn = std::function<std::vector<double>(std::span<const double> theta)>;

/// k1 = -g(theta), k2 = -g(theta + q1 h k1); the base method then consumes the
/// substituted gradient -(a1 k1 + a2 k2) in place of g(theta).
std::vector<double> rk2_vector_field(const OptimizerSpec& spec, OptimizerState& state,
                                     std::span<const double> theta, const GradFn& grad_fn, double h);

/// Same as above, reusing an already computed g(theta).
std::vector<double> rk2_vector_field(const OptimizerSpec& spec, OptimizerState& state,
                                     std::span<const double> theta, std::span<const double> g_at_theta,
                                     const GradFn& grad_fn, double h);

/// theta + eta * X.
ParameterVector apply_step(const ParameterVector& theta, std::span<const double> field, double eta);
void apply_step_inplace(std::span<double> theta, std::span<const double> field, double eta);

/// vector_field (or rk2_vector_field when spec.rk2 is set) followed by apply_step
/// with effective_eta.
void step(const OptimizerSpec& spec, OptimizerState& state, std::span<double> theta, std::span<const double> g,
          const GradFn& grad_fn = {});

struct Segment {
  std::size_t start_epoch = 0;
  OptimizerSpec spec;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SwitchSchedule {
  std::vector<Segment> segments;

  static SwitchSchedule single(const OptimizerSpec& spec) { return {{{0, spec}}}; }
  /// `first` for epochs [0, at), `second` afterwards.
  static SwitchSchedule switch_at(const OptimizerSpec& first, std::size_t at, const OptimizerSpec& second) {
    return {{{0, first}, {at, second}}};
  }

  void validate() const;
  [[nodiscard]] const OptimizerSpec& spec_at(std::size_t epoch) const;
  /// "A10-S10"-style label for a total length.
  [[nodiscard]] std::string label(std::size_t total_epochs) const;

  friend bool operator==(const SwitchSchedule&, const SwitchSchedule&) = default;
};

}  // namespace basinlab::optim
