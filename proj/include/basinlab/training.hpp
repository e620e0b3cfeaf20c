#pragma once

// Minibatch training loops. Every run draws its minibatch order and dropout
// masks from the shared counter-based streams, so runs that differ only in
// their optimizer see identical data sequences.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "basinlab/data.hpp"
#include "basinlab/landscape.hpp"
#include "basinlab/model.hpp"
#include "basinlab/optim.hpp"
#include "basinlab/rng.hpp"

namespace basinlab {

/// Parameters plus provenance. `eval_loss` / `eval_accuracy` were measured on
/// the training data with `bn` (refreshed statistics) in eval mode.
struct Checkpoint {
  ParameterVector params;
  BnStats bn;
  ModelSpec model;
  std::string optimizer;
  std::size_t epoch = 0;
  std::uint64_t master_seed = 0;
  std::string run_hash;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  std::string run_config;  // canonical run configuration JSON, empty when unknown

  [[nodiscard]] const std::string& config_hash() const { return params.config_hash(); }
};

struct RunState {
  ParameterVector theta;
  optim::OptimizerState opt;
  BnStats bn;  // exponential running averages maintained during training
};

struct EpochMetrics {
  double train_loss = 0.0;  // minibatch losses averaged over the epoch
  double train_accuracy = 0.0;
  double dist_from_init = 0.0;
  double weight_norm = 0.0;
  std::size_t batches = 0;
  std::uint64_t stream_digest = 0;  // hash of the shuffle order and dropout masks consumed
};

/// One pass over `train` in shuffled minibatches. A trailing batch with fewer
/// than two examples is dropped when the model uses batch normalization.
EpochMetrics run_epoch(const Model& model, RunState& state, const optim::OptimizerSpec& spec, const Dataset& train,
                       const ParameterVector& init, const rng::SeedPlan& seeds, std::size_t epoch,
                       std::size_t batch_size = 128);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string optimizer;
  double train_loss = 0.0;  // full training set, eval mode, refreshed statistics
  double train_accuracy = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  double dist_from_init = 0.0;
  double weight_norm = 0.0;
  double minibatch_loss = 0.0;  // running averages from the epoch itself (0 at epoch 0)
  double minibatch_accuracy = 0.0;
  std::uint64_t stream_digest = 0;
};

struct ScheduleOptions {
  std::size_t batch_size = 128;
  landscape::BnRefreshPolicy refresh{};
  std::size_t eval_every = 1;  // test-set cadence in epochs
  bool warm_start = false;     // keep accumulators across a switch instead of zeroing them
  std::string run_hash;
};

struct ScheduleResult {
  std::vector<Checkpoint> checkpoints;  // at epoch 0, every switch boundary and the end
  std::vector<EpochRecord> series;      // epochs 0..total
};

ScheduleResult run_schedule(const Model& model, const ParameterVector& theta0, const optim::SwitchSchedule& schedule,
                            std::size_t total_epochs, const Dataset& train, const Dataset* test,
                            const rng::SeedPlan& seeds, const ScheduleOptions& options = {});

}  // namespace basinlab
