#include "basinlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "basinlab/errors.hpp"

namespace basinlab::analysis {

PreparedNet prepare(const Model& model, const ParameterVector& params, const Dataset& train,
                    const landscape::BnRefreshPolicy& policy) {
  return {params, landscape::refresh_bn_stats(model, params, train, policy)};
}

double functional_distance(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape()) throw ShapeError("functional_distance: output shapes differ");
  if (p.rows() == 0) throw InvalidArgument("functional_distance: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double d = p(i, j) - q(i, j);
      row += d * d;
    }
    total += row;
  }
  return std::sqrt(total / static_cast<double>(p.rows()));
}

double disagreement_rate(const Tensor& p, const Tensor& q) {
  if (p.shape() != q.shape()) throw ShapeError("disagreement_rate: output shapes differ");
  if (p.rows() == 0) throw InvalidArgument("disagreement_rate: empty dataset");
  const auto a = argmax_rows(p);
  const auto b = argmax_rows(q);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i] != b[i] ? 1 : 0;
  return static_cast<double>(differ) / static_cast<double>(a.size());
}

double functional_distance(const Model& model, const PreparedNet& a, const PreparedNet& b, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("functional_distance: empty dataset");
  a.params.require_compatible(b.params, "functional_distance");
  return functional_distance(model.predict(a.params, a.stats, data.inputs), model.predict(b.params, b.stats, data.inputs));
}

double disagreement_rate(const Model& model, const PreparedNet& a, const PreparedNet& b, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("disagreement_rate: empty dataset");
  a.params.require_compatible(b.params, "disagreement_rate");
  return disagreement_rate(model.predict(a.params, a.stats, data.inputs), model.predict(b.params, b.stats, data.inputs));
}

BumpStatistic bump_statistic(std::span<const landscape::SurfaceSample> path) {
  if (path.size() < 3) throw InvalidArgument("bump_statistic needs at least 3 samples along the path");
  BumpStatistic b;
  b.endpoint_losses = {path.front().train_loss, path.back().train_loss};
  b.interior_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < path.size(); ++i) b.interior_max = std::max(b.interior_max, path[i].train_loss);
  b.bump_height = b.interior_max - std::max(b.endpoint_losses.first, b.endpoint_losses.second);
  return b;
}

TrajectorySeries trajectory_series(std::span<const EpochRecord> records) {
  TrajectorySeries s;
  for (const auto& r : records) {
    TrajectoryPoint p;
    p.epoch = r.epoch;
    p.optimizer = r.optimizer;
    p.distance_from_init = r.dist_from_init;
    p.weight_norm = r.weight_norm;
    p.train_loss = r.train_loss;
    p.train_accuracy = r.train_accuracy;
    p.test_accuracy = r.test_accuracy.value_or(std::numeric_limits<double>::quiet_NaN());
    s.points.push_back(std::move(p));
  }
  if (!records.empty()) {
    // at epoch 0 the distance is 0, so the norm there is the initial norm
    s.init_norm = records.front().weight_norm;
  }
  for (const auto& p : s.points) s.max_norm_gap = std::max(s.max_norm_gap, std::abs(p.distance_from_init - p.weight_norm));
  return s;
}

}  // namespace basinlab::analysis
