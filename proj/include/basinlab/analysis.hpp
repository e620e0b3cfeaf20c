#pragma once

// Comparisons between trained solutions: how different their functions are,
// how often they disagree, and whether a loss barrier separates them.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "basinlab/data.hpp"
#include "basinlab/landscape.hpp"
#include "basinlab/model.hpp"
#include "basinlab/training.hpp"

namespace basinlab::analysis {

/// A parameter vector together with batch-norm statistics refreshed for it.
struct PreparedNet {
  ParameterVector params;
  BnStats stats;
};

PreparedNet prepare(const Model& model, const ParameterVector& params, const Dataset& train,
                    const landscape::BnRefreshPolicy& policy = {});

/// sqrt(mean_i |p_i - q_i|^2) over rows of two probability matrices.
double functional_distance(const Tensor& p, const Tensor& q);
/// Fraction of rows whose argmax differs (lowest index wins ties).
double disagreement_rate(const Tensor& p, const Tensor& q);

/// Network outputs are softmax probabilities.
double functional_distance(const Model& model, const PreparedNet& a, const PreparedNet& b, const Dataset& data);
double disagreement_rate(const Model& model, const PreparedNet& a, const PreparedNet& b, const Dataset& data);

struct BumpStatistic {
  double bump_height = 0.0;  // max interior loss minus max endpoint loss
  double interior_max = 0.0;
  std::pair<double, double> endpoint_losses{0.0, 0.0};
};

/// Needs at least three samples ordered along the path.
BumpStatistic bump_statistic(std::span<const landscape::SurfaceSample> path);

struct ComparisonReport {
  std::string path_id;
  double functional_distance = 0.0;
  double disagreement_rate = 0.0;
  double bump_height = 0.0;
  std::pair<double, double> endpoint_losses{0.0, 0.0};
};

struct TrajectoryPoint {
  std::size_t epoch = 0;
  std::string optimizer;
  double distance_from_init = 0.0;
  double weight_norm = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;  // NaN when not evaluated
};

struct TrajectorySeries {
  std::vector<TrajectoryPoint> points;
  double init_norm = 0.0;
  /// max over epochs of |distance_from_init - weight_norm|; never exceeds init_norm.
  double max_norm_gap = 0.0;
  [[nodiscard]] bool norm_tracks_distance() const { return max_norm_gap <= init_norm; }
};

TrajectorySeries trajectory_series(std::span<const EpochRecord> records);

}  // namespace basinlab::analysis
