#pragma once

// Run configuration in canonical JSON: object keys sorted, compact, no
// insignificant whitespace. config hash = FNV-1a-64 of that text.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "basinlab/data.hpp"
#include "basinlab/model.hpp"
#include "basinlab/optim.hpp"
#include "basinlab/rng.hpp"
#include "json.hpp"

namespace basinlab {

struct DatasetConfig {
  enum class Kind { synthetic, mnist };
  Kind kind = Kind::synthetic;
  std::string mnist_dir;
  std::size_t train_subset = 10000;  // first N training examples (0 = all)
  std::size_t test_subset = 0;       // first N test examples (0 = no test set)
  SynthSpec synth;                   // synthetic only; per_class sizes the training set

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct RunConfig {
  ModelSpec model = ModelSpec::fc2();
  DatasetConfig dataset;
  InitScheme init;
  optim::SwitchSchedule schedule = optim::SwitchSchedule::single(optim::OptimizerSpec::defaults(optim::Kind::sgd));
  std::size_t total_epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t master_seed = 0;
  std::map<rng::Stream, std::uint64_t> seed_overrides;
  std::size_t eval_every = 1;
  std::size_t bn_refresh_batches = 0;
  bool warm_start_on_switch = false;

  void validate() const;
  [[nodiscard]] rng::SeedPlan seeds() const { return {master_seed, seed_overrides}; }
  [[nodiscard]] std::string canonical() const;
  [[nodiscard]] std::string hash() const;
};

nlohmann::json to_json(const ModelSpec& m);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const optim::OptimizerSpec& s);
optim::OptimizerSpec optimizer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
};

/// MNIST from disk, or synthetic blobs from the data_synth stream. Synthetic
/// test examples come from a disjoint counter range.
LoadedData load_data(const DatasetConfig& config, const rng::SeedPlan& seeds);

}  // namespace basinlab
