#pragma once

// Canned desk-scale reproductions. Each recipe trains what it needs from the
// shared seed plan, writes its artifacts under `out_dir/<name>/` and returns
// the numbers its checks are phrased in.
//
//   bump-fc2     optimizer-pair loss bumps on FC2 + BN
//   switch-fc2   Adam -> SGD at epoch 10 of 20
//   basin-fc2    init -> final profiles, alpha and lambda
//   bn-scale     hidden-layer rescaling under refreshed BN
//   exotic-init  gaussian(-10, 0.01) with and without BN
//   rk2          SGD and Adam with the RK2-augmented gradient
//
// Data: the first 10 000 MNIST training images when the IDX files are found in
// `mnist_dir`, otherwise synthetic blobs (see synthetic_fallback()).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "basinlab/analysis.hpp"
#include "basinlab/config.hpp"
#include "basinlab/training.hpp"

namespace basinlab::recipes {

struct Options {
  std::filesystem::path out_dir = "out";
  std::filesystem::path mnist_dir = "data/mnist";
  std::uint64_t master_seed = 0;
  std::size_t epochs = 20;
  std::size_t resolution = 101;  // points per 1-D sweep
  std::size_t threads = 0;
  bool quiet = false;
};

/// Ten 784-dimensional blobs at 3 e_c with unit noise, mapped onto [0, 1].
SynthSpec synthetic_fallback();

struct DeskSetup {
  RunConfig base;  // FC2 + BN, Xavier init, SGD; callers swap the schedule
  LoadedData data;
  bool mnist = false;
  double accuracy_threshold = 0.99;  // bump-fc2 thresholds for this data source
  double bump_threshold = 0.3;
};

DeskSetup desk_setup(const Options& options);

/// Model + init + schedule from a config; checkpoints carry the config.
ScheduleResult train(const RunConfig& config, const LoadedData& data, std::size_t threads = 0);

/// config.json, series.csv and epoch-NNN.ckpt for every checkpoint of a run.
void save_run(const std::filesystem::path& dir, const RunConfig& config, const ScheduleResult& result);

std::vector<optim::OptimizerSpec> bump_optimizers();

struct RunSummary {
  std::string label;
  double final_train_accuracy = 0.0;
  double final_train_loss = 0.0;
  std::vector<EpochRecord> series;
  Checkpoint init;
  Checkpoint final_point;
};

struct BumpResult {
  bool mnist = false;
  double accuracy_threshold = 0.0;
  double bump_threshold = 0.0;
  std::vector<RunSummary> runs;
  std::vector<analysis::ComparisonReport> pairs;
};

struct SwitchResult {
  std::vector<EpochRecord> switched;  // A10-S10
  std::vector<EpochRecord> sgd;
  std::vector<EpochRecord> adam;
  std::size_t switch_epoch = 0;
  analysis::ComparisonReport switched_vs_adam;
};

struct BasinProfile {
  std::string label;
  std::vector<landscape::SurfaceSample> alpha;
  std::vector<landscape::SurfaceSample> lambda;
  double distance = 0.0;       // |init - final|
  double init_loss = 0.0;      // evaluate_point at init
  double final_loss = 0.0;     // evaluate_point at final
};

struct BasinResult {
  std::vector<BasinProfile> profiles;
};

struct BnScaleResult {
  double max_abs_diff = 0.0;  // predict() before vs after scaling
  double factor = 10.0;
  std::size_t examples = 0;
};

struct ExoticResult {
  std::vector<EpochRecord> without_bn;
  std::vector<EpochRecord> with_bn;
  double chance = 0.1;
};

struct Rk2Result {
  std::vector<RunSummary> runs;
};

BumpResult bump_fc2(const Options& options);
SwitchResult switch_fc2(const Options& options);
BasinResult basin_fc2(const Options& options);
BnScaleResult bn_scale(const Options& options);
ExoticResult exotic_init(const Options& options);
Rk2Result rk2(const Options& options);

const std::vector<std::string>& names();
/// Runs one recipe by name; throws InvalidArgument for unknown names.
void run(const std::string& name, const Options& options);

}  // namespace basinlab::recipes
