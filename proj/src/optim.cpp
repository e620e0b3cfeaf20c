#include "basinlab/optim.hpp"

#include <cmath>
#include <string>

#include "basinlab/errors.hpp"

namespace basinlab::optim {

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::sgd: return "sgd";
    case Kind::sgdm: return "sgdm";
    case Kind::adagrad: return "adagrad";
    case Kind::rmsprop: return "rmsprop";
    case Kind::adadelta: return "adadelta";
    case Kind::adam: return "adam";
  }
  return "sgd";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : {Kind::sgd, Kind::sgdm, Kind::adagrad, Kind::rmsprop, Kind::adadelta, Kind::adam}) {
    if (kind_name(k) == name) return k;
  }
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

Rk2Coefficients Rk2Coefficients::named(std::string_view name) {
  if (name == "midpoint") return midpoint();
  if (name == "heun") return heun();
  if (name == "ralston") return ralston();
  throw InvalidArgument("unknown Runge-Kutta method '" + std::string(name) + "'");
}

std::string Rk2Coefficients::name() const {
  if (*this == midpoint()) return "midpoint";
  if (*this == heun()) return "heun";
  if (*this == ralston()) return "ralston";
  return "rk2";
}

OptimizerSpec OptimizerSpec::defaults(Kind kind) {
  OptimizerSpec s;
  s.kind = kind;
  switch (kind) {
    case Kind::sgd:
    case Kind::sgdm:
      s.eta = 0.1;
      s.beta1 = 0.9;
      break;
    case Kind::adagrad:
      s.eta = 1e-3;
      s.epsilon = 1e-8;
      break;
    case Kind::rmsprop:
      s.eta = 1e-3;
      s.beta2 = 0.9;
      s.epsilon = 1e-8;
      break;
    case Kind::adadelta:
      s.eta = 1.0;
      s.beta2 = 0.95;
      s.epsilon = 1e-6;
      break;
    case Kind::adam:
      s.eta = 1e-3;
      s.beta1 = 0.9;
      s.beta2 = 0.999;
      s.epsilon = 1e-8;
      break;
  }
  return s;
}

OptimizerSpec OptimizerSpec::with_rk2(Rk2Coefficients c) const {
  OptimizerSpec s = *this;
  s.eta = 2.0 * eta;
  s.rk2 = c;
  return s;
}

void OptimizerSpec::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be finite and non-negative");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("momentum decay rates must lie in [0, 1)");
  }
  if (rk2) {
    if (std::abs(rk2->a1 + rk2->a2 - 1.0) > 1e-12) throw InvalidArgument("Runge-Kutta weights must satisfy a1 + a2 = 1");
  }
}

std::string OptimizerSpec::label() const {
  std::string out(kind_name(kind));
  if (rk2) out += "+" + rk2->name();
  return out;
}

double effective_eta(const OptimizerSpec& spec) { return spec.kind == Kind::adadelta ? 1.0 : spec.eta; }

OptimizerState OptimizerState::zeros(std::size_t n) {
  OptimizerState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.s.assign(n, 0.0);
  s.u.assign(n, 0.0);
  return s;
}

std::vector<double> vector_field(const OptimizerSpec& spec, OptimizerState& state, std::span<const double> g) {
  const std::size_t n = g.size();
  if (state.size() != n) throw ShapeError("optimizer state does not match the gradient layout");
  check_finite(g, "gradient");

  std::vector<double> x(n);
  const double b1 = spec.beta1;
  const double b2 = spec.beta2;
  const double eps = spec.epsilon;
  switch (spec.kind) {
    case Kind::sgd:
      for (std::size_t i = 0; i < n; ++i) x[i] = -g[i];
      break;
    case Kind::sgdm:
      for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = (1.0 - b1) * g[i] + b1 * state.m[i];
        x[i] = -state.m[i];
      }
      break;
    case Kind::adagrad:
      for (std::size_t i = 0; i < n; ++i) {
        state.s[i] += g[i] * g[i];
        x[i] = -g[i] / std::sqrt(state.s[i] + eps);
      }
      break;
    case Kind::rmsprop:
      for (std::size_t i = 0; i < n; ++i) {
        state.v[i] = (1.0 - b2) * g[i] * g[i] + b2 * state.v[i];
        x[i] = -g[i] / std::sqrt(state.v[i] + eps);
      }
      break;
    case Kind::adadelta:
      for (std::size_t i = 0; i < n; ++i) {
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g[i] * g[i];
        x[i] = -(std::sqrt(state.u[i] + eps) / std::sqrt(state.v[i] + eps)) * g[i];
        state.u[i] = b2 * state.u[i] + (1.0 - b2) * x[i] * x[i];
      }
      break;
    case Kind::adam: {
      const double t = static_cast<double>(state.t + 1);
      const double c = std::sqrt(1.0 - std::pow(b2, t)) / (1.0 - std::pow(b1, t));
      for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = (1.0 - b1) * g[i] + b1 * state.m[i];
        state.v[i] = (1.0 - b2) * g[i] * g[i] + b2 * state.v[i];
        // epsilon sits outside the root: the first step is sign(g) to within eps / sqrt(v)
        x[i] = -c * state.m[i] / (std::sqrt(state.v[i]) + eps);
      }
      break;
    }
  }
  ++state.t;
  return x;
}

std::vector<double> rk2_vector_field(const OptimizerSpec& spec, OptimizerState& state,
                                     std::span<const double> theta, std::span<const double> g_at_theta,
                                     const GradFn& grad_fn, double h) {
  if (!spec.rk2) throw InvalidArgument("rk2_vector_field needs Runge-Kutta coefficients");
  if (!grad_fn) throw InvalidArgument("rk2_vector_field needs a gradient function");
  const auto& c = *spec.rk2;
  const std::size_t n = theta.size();
  if (g_at_theta.size() != n) throw ShapeError("rk2: gradient does not match parameters");

  // k1 = -g(theta); probe = theta + q1 h k1
  std::vector<double> probe(n);
  for (std::size_t i = 0; i < n; ++i) probe[i] = theta[i] - c.q1 * h * g_at_theta[i];
  const std::vector<double> g2 = grad_fn(probe);
  if (g2.size() != n) throw ShapeError("rk2: second-stage gradient has the wrong size");

  // substituted gradient -(a1 k1 + a2 k2)
  std::vector<double> g_bar(n);
  for (std::size_t i = 0; i < n; ++i) g_bar[i] = c.a1 * g_at_theta[i] + c.a2 * g2[i];

  OptimizerSpec base = spec;
  base.rk2.reset();
  return vector_field(base, state, g_bar);
}

std::vector<double> rk2_vector_field(const OptimizerSpec& spec, OptimizerState& state,
                                     std::span<const double> theta, const GradFn& grad_fn, double h) {
  if (!grad_fn) throw InvalidArgument("rk2_vector_field needs a gradient function");
  const std::vector<double> g1 = grad_fn(theta);
  return rk2_vector_field(spec, state, theta, g1, grad_fn, h);
}

void apply_step_inplace(std::span<double> theta, std::span<const double> field, double eta) {
  if (theta.size() != field.size()) throw ShapeError("apply_step: field does not match parameter layout");
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eta * field[i];
}

ParameterVector apply_step(const ParameterVector& theta, std::span<const double> field, double eta) {
  std::vector<double> out(theta.data().begin(), theta.data().end());
  apply_step_inplace(out, field, eta);
  return theta.with_data(std::move(out));
}

void step(const OptimizerSpec& spec, OptimizerState& state, std::span<double> theta, std::span<const double> g,
          const GradFn& grad_fn) {
  const double eta = effective_eta(spec);
  const auto field = spec.rk2 ? rk2_vector_field(spec, state, theta, g, grad_fn, eta) : vector_field(spec, state, g);
  apply_step_inplace(theta, field, eta);
}

void SwitchSchedule::validate() const {
  if (segments.empty()) throw InvalidArgument("schedule needs at least one segment");
  if (segments.front().start_epoch != 0) throw InvalidArgument("schedule must start at epoch 0");
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].start_epoch <= segments[i - 1].start_epoch) {
      throw InvalidArgument("schedule segment starts must be strictly increasing");
    }
  }
  for (const auto& s : segments) s.spec.validate();
}

const OptimizerSpec& SwitchSchedule::spec_at(std::size_t epoch) const {
  const Segment* cur = &segments.front();
  for (const auto& s : segments) {
    if (s.start_epoch <= epoch) cur = &s;
  }
  return cur->spec;
}

namespace {
char kind_letter(Kind k) {
  switch (k) {
    case Kind::sgd: return 'S';
    case Kind::sgdm: return 'M';
    case Kind::adagrad: return 'G';
    case Kind::rmsprop: return 'R';
    case Kind::adadelta: return 'D';
    case Kind::adam: return 'A';
  }
  return 'S';
}
}  // namespace

std::string SwitchSchedule::label(std::size_t total_epochs) const {
  if (segments.size() == 1) return segments.front().spec.label();
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::size_t end = i + 1 < segments.size() ? segments[i + 1].start_epoch : total_epochs;
    if (i) out += '-';
    out += kind_letter(segments[i].spec.kind);
    if (segments[i].spec.rk2) out += "k";
    out += std::to_string(end - segments[i].start_epoch);
  }
  return out;
}

}  // namespace basinlab::optim
