#include "basinlab/landscape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "basinlab/errors.hpp"

namespace basinlab::landscape {

// ---- interpolation ----------------------------------------------------------

ParameterVector interp_linear(const ParameterVector& a, const ParameterVector& b, double alpha) {
  a.require_compatible(b, "interp_linear");
  std::vector<double> out(a.size());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::lerp(db[i], da[i], alpha);
  return a.with_data(std::move(out));
}

ParameterVector interp_bilinear(const ParameterVector& t1, const ParameterVector& t2, const ParameterVector& t3,
                                const ParameterVector& t4, double alpha, double beta) {
  t1.require_compatible(t2, "interp_bilinear");
  t1.require_compatible(t3, "interp_bilinear");
  t1.require_compatible(t4, "interp_bilinear");
  const auto phi = interp_linear(t1, t2, alpha);
  const auto varphi = interp_linear(t3, t4, alpha);
  return interp_linear(phi, varphi, beta);
}

ParameterVector interp_barycentric(const ParameterVector& t0, const ParameterVector& t1, const ParameterVector& t2,
                                   double alpha, double beta) {
  t0.require_compatible(t1, "interp_barycentric");
  t0.require_compatible(t2, "interp_barycentric");
  // t0 + alpha * (t_k - t0), evaluated as a lerp so the vertices come back exactly
  const auto phi = interp_linear(t1, t0, alpha);
  const auto varphi = interp_linear(t2, t0, alpha);
  return interp_linear(phi, varphi, beta);
}

std::string_view mode_name(InterpMode m) {
  switch (m) {
    case InterpMode::linear: return "linear";
    case InterpMode::bilinear: return "bilinear";
    case InterpMode::barycentric: return "barycentric";
  }
  return "linear";
}

InterpMode parse_mode(std::string_view name) {
  for (InterpMode m : {InterpMode::linear, InterpMode::bilinear, InterpMode::barycentric}) {
    if (mode_name(m) == name) return m;
  }
  throw InvalidArgument("unknown interpolation mode '" + std::string(name) + "'");
}

std::size_t vertex_count(InterpMode m) {
  switch (m) {
    case InterpMode::linear: return 2;
    case InterpMode::bilinear: return 4;
    case InterpMode::barycentric: return 3;
  }
  return 2;
}

void InterpolationSpec::validate() const {
  if (vertices.size() != vertex_count(mode)) {
    throw InvalidArgument(std::string(mode_name(mode)) + " interpolation needs " + std::to_string(vertex_count(mode)) +
                          " vertices, got " + std::to_string(vertices.size()));
  }
  for (std::size_t i = 1; i < vertices.size(); ++i) vertices[0].require_compatible(vertices[i], "interpolation");
  if (resolution < 2) throw InvalidArgument("grid resolution must be at least 2");
}

ParameterVector InterpolationSpec::point(double alpha, double beta) const {
  switch (mode) {
    case InterpMode::linear: return interp_linear(vertices[0], vertices[1], alpha);
    case InterpMode::bilinear:
      return interp_bilinear(vertices[0], vertices[1], vertices[2], vertices[3], alpha, beta);
    case InterpMode::barycentric: return interp_barycentric(vertices[0], vertices[1], vertices[2], alpha, beta);
  }
  return vertices[0];
}

std::vector<double> grid(Range range, std::size_t resolution) {
  if (resolution == 0) return {};
  if (resolution == 1) return {range.lo};
  std::vector<double> g(resolution);
  const double last = static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < resolution; ++i) g[i] = std::lerp(range.lo, range.hi, static_cast<double>(i) / last);
  return g;
}

std::vector<double> basin_alpha_grid(Range range, std::size_t resolution) {
  auto g = grid(range, resolution);
  for (double anchor : {0.0, 1.0}) {
    if (anchor >= range.lo && anchor <= range.hi && std::find(g.begin(), g.end(), anchor) == g.end()) {
      g.push_back(anchor);
    }
  }
  std::sort(g.begin(), g.end());
  return g;
}

ParameterVector lambda_point(const ParameterVector& init, const ParameterVector& final_point, double lambda) {
  const double d = distance(init, final_point);
  if (d == 0.0) throw InvalidArgument("basin_profile_lambda: initial and final points coincide");
  return interp_linear(init, final_point, lambda / d);
}

// ---- evaluation -------------------------------------------------------------

BnStats refresh_bn_stats(const Model& model, const ParameterVector& theta, const Dataset& train,
                         const BnRefreshPolicy& policy) {
  if (train.empty()) throw InvalidArgument("refresh_bn_stats: empty training data");
  BnStats stats = model.initial_bn_stats();
  if (stats.layers.empty()) return stats;
  if (policy.batch_size < 2) throw InvalidArgument("refresh_bn_stats: batch size must be at least 2");

  std::vector<BnLayerStats> sums = stats.layers;
  for (auto& l : sums) {
    std::fill(l.mean.begin(), l.mean.end(), 0.0);
    std::fill(l.var.begin(), l.var.end(), 0.0);
  }
  std::size_t total = 0;
  const std::size_t n = train.size();
  const std::size_t n_batches = (n + policy.batch_size - 1) / policy.batch_size;
  const std::size_t use = policy.num_batches == 0 ? n_batches : std::min(policy.num_batches, n_batches);
  for (std::size_t b = 0; b < use; ++b) {
    const Dataset batch = train.slice(b * policy.batch_size, (b + 1) * policy.batch_size);
    if (batch.size() < 2) continue;
    BnStats scratch = stats;
    auto trace = model.forward(theta, scratch, batch.inputs, Mode::train, nullptr, false);
    const auto bs = trace.batch_stats();
    const auto w = static_cast<double>(batch.size());
    for (std::size_t l = 0; l < bs.size(); ++l) {
      for (std::size_t j = 0; j < bs[l].mean.size(); ++j) {
        sums[l].mean[j] += w * bs[l].mean[j];
        sums[l].var[j] += w * bs[l].var[j];
      }
    }
    total += batch.size();
  }
  if (total == 0) throw InvalidArgument("refresh_bn_stats: no batch with at least 2 examples");
  const auto inv = 1.0 / static_cast<double>(total);
  for (auto& l : sums) {
    for (double& m : l.mean) m *= inv;
    for (double& v : l.var) v *= inv;
    check_finite(l.mean, "refreshed batch-norm mean");
    check_finite(l.var, "refreshed batch-norm variance");
  }
  stats.layers = std::move(sums);
  return stats;
}

Evaluation evaluate(const Model& model, const ParameterVector& theta, const BnStats& stats, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("evaluate: empty dataset");
  constexpr std::size_t kChunk = 1000;
  Evaluation ev;
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const Dataset chunk = data.slice(begin, begin + kChunk);
    Tensor logits;
    try {
      logits = model.logits(theta, stats, chunk.inputs);
    } catch (const NonFiniteError&) {
      ev.diverged = true;
      continue;
    }
    const auto pred = argmax_rows(logits);
    for (std::size_t i = 0; i < chunk.size(); ++i) hits += pred[i] == chunk.labels[i] ? 1 : 0;
    if (ev.diverged) continue;
    try {
      loss_sum += softmax_xent(logits, chunk.labels).loss * static_cast<double>(chunk.size());
    } catch (const NonFiniteError&) {
      ev.diverged = true;
    }
  }
  const auto n = static_cast<double>(data.size());
  ev.loss = ev.diverged ? std::numeric_limits<double>::infinity() : loss_sum / n;
  ev.accuracy = static_cast<double>(hits) / n;
  if (!std::isfinite(ev.loss)) {
    ev.diverged = true;
    ev.loss = std::numeric_limits<double>::infinity();
  }
  return ev;
}

SurfaceSample evaluate_point(const Model& model, const ParameterVector& theta, const Dataset& train,
                             const BnRefreshPolicy& policy, const Dataset* test) {
  SurfaceSample s;
  BnStats stats;
  try {
    stats = refresh_bn_stats(model, theta, train, policy);
  } catch (const NonFiniteError&) {
    s.diverged = true;
    s.train_loss = std::numeric_limits<double>::infinity();
    if (test) {
      s.test_loss = s.train_loss;
      s.test_accuracy = 0.0;
    }
    return s;
  }
  const auto tr = evaluate(model, theta, stats, train);
  s.train_loss = tr.loss;
  s.train_accuracy = tr.accuracy;
  s.diverged = tr.diverged;
  if (test) {
    const auto te = evaluate(model, theta, stats, *test);
    s.test_loss = te.loss;
    s.test_accuracy = te.accuracy;
    s.diverged = s.diverged || te.diverged;
  }
  return s;
}

namespace {

// Runs fn(i) for i in [0, count) on up to `threads` workers; results land by index.
template <typename Fn>
std::vector<SurfaceSample> parallel_samples(std::size_t count, std::size_t threads, Fn fn) {
  std::vector<SurfaceSample> out(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace

std::vector<SurfaceSample> sweep(const InterpolationSpec& spec, const Model& model, const Dataset& train,
                                 const SweepOptions& options) {
  spec.validate();
  const auto alphas = grid(spec.alpha_range, spec.resolution);
  const auto betas = spec.two_dimensional() ? grid(spec.beta_range, spec.resolution) : std::vector<double>{0.0};
  const std::size_t nb = betas.size();
  return parallel_samples(alphas.size() * nb, options.threads, [&](std::size_t k) {
    const double a = alphas[k / nb];
    const double b = betas[k % nb];
    auto s = evaluate_point(model, spec.point(a, b), train, options.policy, options.test);
    s.alpha = a;
    if (spec.two_dimensional()) s.beta = b;
    return s;
  });
}

std::vector<SurfaceSample> basin_profile_alpha(const Model& model, const ParameterVector& init,
                                               const ParameterVector& final_point, std::span<const double> alphas,
                                               const Dataset& train, const SweepOptions& options) {
  init.require_compatible(final_point, "basin_profile_alpha");
  return parallel_samples(alphas.size(), options.threads, [&](std::size_t k) {
    auto s = evaluate_point(model, interp_linear(final_point, init, alphas[k]), train, options.policy, options.test);
    s.alpha = alphas[k];
    return s;
  });
}

std::vector<SurfaceSample> basin_profile_lambda(const Model& model, const ParameterVector& init,
                                                const ParameterVector& final_point, std::span<const double> lambdas,
                                                const Dataset& train, const SweepOptions& options) {
  init.require_compatible(final_point, "basin_profile_lambda");
  if (distance(init, final_point) == 0.0) {
    throw InvalidArgument("basin_profile_lambda: initial and final points coincide");
  }
  return parallel_samples(lambdas.size(), options.threads, [&](std::size_t k) {
    auto s = evaluate_point(model, lambda_point(init, final_point, lambdas[k]), train, options.policy, options.test);
    s.alpha = lambdas[k];
    return s;
  });
}

}  // namespace basinlab::landscape
