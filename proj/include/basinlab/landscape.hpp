#pragma once

// Weight-space projections of the loss surface.
//
// Coordinate convention: the FIRST vertex is the point that lives at
// coordinate 1. interp_linear(a, b, 1) == a and interp_linear(a, b, 0) == b, so
// an init -> final profile is interp_linear(final, init, alpha).
//
// Every evaluated point gets fresh batch-norm running statistics computed
// from training data at that point; interpolating stored statistics is not
// meaningful.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "basinlab/data.hpp"
#include "basinlab/model.hpp"

namespace basinlab::landscape {

// ---- interpolation ----------------------------------------------------------

/// alpha * a + (1 - alpha) * b, elementwise. alpha may leave [0, 1].
/// Exact at alpha = 0, alpha = 1 and wherever a == b.
ParameterVector interp_linear(const ParameterVector& a, const ParameterVector& b, double alpha);

/// phi = lin(t1, t2, alpha), varphi = lin(t3, t4, alpha), result = lin(phi, varphi, beta).
ParameterVector interp_bilinear(const ParameterVector& t1, const ParameterVector& t2, const ParameterVector& t3,
                                const ParameterVector& t4, double alpha, double beta);

/// With d1 = t1 - t0 and d2 = t2 - t0: phi = t0 + alpha d1, varphi = t0 + alpha d2,
/// result = beta phi + (1 - beta) varphi. alpha = 0 is the apex t0.
ParameterVector interp_barycentric(const ParameterVector& t0, const ParameterVector& t1, const ParameterVector& t2,
                                   double alpha, double beta);

enum class InterpMode { linear, bilinear, barycentric };
std::string_view mode_name(InterpMode m);
InterpMode parse_mode(std::string_view name);
std::size_t vertex_count(InterpMode m);

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

struct InterpolationSpec {
  InterpMode mode = InterpMode::linear;
  std::vector<ParameterVector> vertices;
  Range alpha_range{0.0, 1.0};
  Range beta_range{0.0, 1.0};
  std::size_t resolution = 101;

  void validate() const;
  [[nodiscard]] bool two_dimensional() const { return mode != InterpMode::linear; }
  /// The point at grid coordinate (alpha, beta); beta is ignored for linear.
  [[nodiscard]] ParameterVector point(double alpha, double beta) const;
};

/// `resolution` evenly spaced points with exact endpoints.
std::vector<double> grid(Range range, std::size_t resolution);

/// Like grid() but with 0 and 1 spliced in exactly when they fall inside the range.
std::vector<double> basin_alpha_grid(Range range, std::size_t resolution);

// ---- evaluation -------------------------------------------------------------

struct BnRefreshPolicy {
  std::size_t num_batches = 0;  // 0 = full pass over the training data
  std::size_t batch_size = 128;
};

/// Simple (count-weighted) average of per-batch statistics over the first
/// `num_batches` training batches in natural order, dropout disabled.
BnStats refresh_bn_stats(const Model& model, const ParameterVector& theta, const Dataset& train,
                         const BnRefreshPolicy& policy);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  bool diverged = false;  // non-finite activations; loss is +inf
};

/// Eval-mode mean cross-entropy and accuracy with the given running statistics.
Evaluation evaluate(const Model& model, const ParameterVector& theta, const BnStats& stats, const Dataset& data);

struct SurfaceSample {
  double alpha = 0.0;
  std::optional<double> beta;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  bool diverged = false;
};

/// Refresh statistics on `train`, then evaluate on `train` (and `test` when given).
SurfaceSample evaluate_point(const Model& model, const ParameterVector& theta, const Dataset& train,
                             const BnRefreshPolicy& policy, const Dataset* test = nullptr);

struct SweepOptions {
  BnRefreshPolicy policy;
  const Dataset* test = nullptr;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// Evaluates the whole grid. Samples come back alpha-major (beta inner),
/// independent of how the work was scheduled.
std::vector<SurfaceSample> sweep(const InterpolationSpec& spec, const Model& model, const Dataset& train,
                                 const SweepOptions& options = {});

/// Loss along init + alpha (final - init); alpha = 1 is the final point.
std::vector<SurfaceSample> basin_profile_alpha(const Model& model, const ParameterVector& init,
                                               const ParameterVector& final_point, std::span<const double> alphas,
                                               const Dataset& train, const SweepOptions& options = {});

/// Loss along the unit-speed ray final + lambda (init - final) / |init - final|.
/// lambda = 0 is the final point, lambda = |init - final| the initial one.
/// Samples store lambda in `alpha`.
std::vector<SurfaceSample> basin_profile_lambda(const Model& model, const ParameterVector& init,
                                                const ParameterVector& final_point, std::span<const double> lambdas,
                                                const Dataset& train, const SweepOptions& options = {});

/// Point on the lambda ray (exact at both ends).
ParameterVector lambda_point(const ParameterVector& init, const ParameterVector& final_point, double lambda);

}  // namespace basinlab::landscape
