#include "basinlab/config.hpp"

#include <fstream>
#include <sstream>

#include "basinlab/errors.hpp"
#include "basinlab/hash.hpp"

namespace basinlab {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->get<T>();
}

// Synthetic test examples start far beyond any training counter.
constexpr std::uint64_t kSynthTestCounter = std::uint64_t{1} << 62;

}  // namespace

json to_json(const ModelSpec& m) {
  return json{{"layer_sizes", m.layer_sizes}, {"batch_norm", m.batch_norm}, {"dropout_rate", m.dropout_rate}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec m;
  m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  m.batch_norm = j.at("batch_norm").get<std::vector<bool>>();
  m.dropout_rate = get_or(j, "dropout_rate", 0.0);
  m.validate();
  return m;
}

json to_json(const optim::OptimizerSpec& s) {
  json j{{"kind", std::string(optim::kind_name(s.kind))},
         {"eta", s.eta},
         {"beta1", s.beta1},
         {"beta2", s.beta2},
         {"epsilon", s.epsilon}};
  if (s.rk2) {
    j["rk2"] = json{{"a1", s.rk2->a1}, {"a2", s.rk2->a2}, {"q1", s.rk2->q1}};
  } else {
    j["rk2"] = nullptr;
  }
  return j;
}

optim::OptimizerSpec optimizer_from_json(const json& j) {
  auto s = optim::OptimizerSpec::defaults(optim::parse_kind(j.at("kind").get<std::string>()));
  s.eta = get_or(j, "eta", s.eta);
  s.beta1 = get_or(j, "beta1", s.beta1);
  s.beta2 = get_or(j, "beta2", s.beta2);
  s.epsilon = get_or(j, "epsilon", s.epsilon);
  if (auto it = j.find("rk2"); it != j.end() && !it->is_null()) {
    if (it->is_string()) {
      s.rk2 = optim::Rk2Coefficients::named(it->get<std::string>());
    } else {
      s.rk2 = optim::Rk2Coefficients{it->at("a1").get<double>(), it->at("a2").get<double>(), it->at("q1").get<double>()};
    }
  }
  s.validate();
  return s;
}

void RunConfig::validate() const {
  model.validate();
  init.validate();
  schedule.validate();
  if (total_epochs == 0) throw InvalidArgument("total_epochs must be positive");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  for (const auto& seg : schedule.segments) {
    if (seg.start_epoch >= total_epochs) throw InvalidArgument("schedule segment starts beyond total_epochs");
  }
}

json to_json(const RunConfig& c) {
  json segments = json::array();
  for (const auto& s : c.schedule.segments) segments.push_back({{"start_epoch", s.start_epoch}, {"optimizer", to_json(s.spec)}});
  json overrides = json::object();
  for (const auto& [stream, seed] : c.seed_overrides) overrides[std::string(rng::stream_name(stream))] = seed;
  const auto& d = c.dataset;
  json dataset{{"kind", d.kind == DatasetConfig::Kind::mnist ? "mnist" : "synthetic"},
               {"mnist_dir", d.mnist_dir},
               {"train_subset", d.train_subset},
               {"test_subset", d.test_subset},
               {"synthetic",
                {{"classes", d.synth.classes},
                 {"per_class", d.synth.per_class},
                 {"dim", d.synth.dim},
                 {"scale", d.synth.scale},
                 {"sigma", d.synth.sigma},
                 {"unit_range", d.synth.unit_range}}}};
  return json{{"model", to_json(c.model)},
              {"dataset", dataset},
              {"init", {{"kind", std::string(init_kind_name(c.init.kind))}, {"mean", c.init.mean}, {"std", c.init.std}}},
              {"schedule", segments},
              {"total_epochs", c.total_epochs},
              {"batch_size", c.batch_size},
              {"master_seed", c.master_seed},
              {"seed_overrides", overrides},
              {"eval_every", c.eval_every},
              {"bn_refresh_batches", c.bn_refresh_batches},
              {"warm_start_on_switch", c.warm_start_on_switch}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("model")) c.model = model_spec_from_json(j.at("model"));
  if (auto it = j.find("dataset"); it != j.end()) {
    const auto& d = *it;
    c.dataset.kind = get_or<std::string>(d, "kind", "synthetic") == "mnist" ? DatasetConfig::Kind::mnist
                                                                          : DatasetConfig::Kind::synthetic;
    c.dataset.mnist_dir = get_or<std::string>(d, "mnist_dir", "");
    c.dataset.train_subset = get_or<std::size_t>(d, "train_subset", c.dataset.train_subset);
    c.dataset.test_subset = get_or<std::size_t>(d, "test_subset", c.dataset.test_subset);
    if (auto s = d.find("synthetic"); s != d.end()) {
      auto& y = c.dataset.synth;
      y.classes = get_or(*s, "classes", y.classes);
      y.per_class = get_or(*s, "per_class", y.per_class);
      y.dim = get_or(*s, "dim", y.dim);
      y.scale = get_or(*s, "scale", y.scale);
      y.sigma = get_or(*s, "sigma", y.sigma);
      y.unit_range = get_or(*s, "unit_range", y.unit_range);
    }
  }
  if (auto it = j.find("init"); it != j.end()) {
    c.init.kind = parse_init_kind(get_or<std::string>(*it, "kind", "xavier_uniform"));
    c.init.mean = get_or(*it, "mean", c.init.mean);
    c.init.std = get_or(*it, "std", c.init.std);
  }
  if (auto it = j.find("schedule"); it != j.end()) {
    c.schedule.segments.clear();
    for (const auto& s : *it) {
      c.schedule.segments.push_back({s.at("start_epoch").get<std::size_t>(), optimizer_from_json(s.at("optimizer"))});
    }
  }
  c.total_epochs = get_or(j, "total_epochs", c.total_epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.master_seed = get_or(j, "master_seed", c.master_seed);
  if (auto it = j.find("seed_overrides"); it != j.end()) {
    for (const auto& [name, seed] : it->items()) c.seed_overrides[rng::parse_stream(name)] = seed.get<std::uint64_t>();
  }
  c.eval_every = get_or(j, "eval_every", c.eval_every);
  c.bn_refresh_batches = get_or(j, "bn_refresh_batches", c.bn_refresh_batches);
  c.warm_start_on_switch = get_or(j, "warm_start_on_switch", c.warm_start_on_switch);
  c.validate();
  return c;
}

std::string RunConfig::canonical() const { return to_json(*this).dump(); }

std::string RunConfig::hash() const { return hex64(fnv1a(canonical())); }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  try {
    return run_config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write config " + path.string());
  out << to_json(config).dump(2) << '\n';
}

LoadedData load_data(const DatasetConfig& config, const rng::SeedPlan& seeds) {
  LoadedData d;
  if (config.kind == DatasetConfig::Kind::mnist) {
    d.train = load_mnist_dir(config.mnist_dir, true, config.train_subset);
    if (config.test_subset > 0) d.test = load_mnist_dir(config.mnist_dir, false, config.test_subset);
    return d;
  }
  d.train = synth_dataset(config.synth, seeds.key(rng::Stream::data_synth)).head(config.train_subset);
  if (config.test_subset > 0) {
    SynthSpec ts = config.synth;
    ts.per_class = (config.test_subset + ts.classes - 1) / ts.classes;
    d.test = synth_dataset(ts, seeds.key(rng::Stream::data_synth, kSynthTestCounter)).head(config.test_subset);
  }
  return d;
}

}  // namespace basinlab
