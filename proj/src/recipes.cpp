#include "basinlab/recipes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "basinlab/checkpoint_io.hpp"
#include "basinlab/emit.hpp"
#include "basinlab/errors.hpp"
#include "json.hpp"

namespace basinlab::recipes {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void note(const Options& o, const std::string& msg) {
  if (!o.quiet) std::fprintf(stderr, "[recipe] %s\n", msg.c_str());
}

fs::path recipe_dir(const Options& o, const std::string& name) {
  auto dir = o.out_dir / name;
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RunConfig with_schedule(const RunConfig& base, const optim::SwitchSchedule& schedule) {
  RunConfig c = base;
  c.schedule = schedule;
  return c;
}

std::string ckpt_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%03zu.ckpt", epoch);
  return buf;
}

RunSummary summarize(std::string label, ScheduleResult r) {
  RunSummary s;
  s.label = std::move(label);
  s.final_train_accuracy = r.series.back().train_accuracy;
  s.final_train_loss = r.series.back().train_loss;
  s.init = r.checkpoints.front();
  s.final_point = r.checkpoints.back();
  s.series = std::move(r.series);
  return s;
}

const Dataset& comparison_data(const LoadedData& d) { return d.test ? *d.test : d.train; }

analysis::ComparisonReport compare(const Model& model, const Checkpoint& a, const Checkpoint& b, const LoadedData& data,
                                   const Options& o, const std::string& path_id,
                                   std::vector<landscape::SurfaceSample>* path_out) {
  landscape::InterpolationSpec spec;
  spec.mode = landscape::InterpMode::linear;
  spec.vertices = {a.params, b.params};
  spec.resolution = o.resolution;
  landscape::SweepOptions so;
  so.threads = o.threads;
  auto path = landscape::sweep(spec, model, data.train, so);
  const auto bump = analysis::bump_statistic(path);

  const auto pa = analysis::prepare(model, a.params, data.train);
  const auto pb = analysis::prepare(model, b.params, data.train);
  const auto& cmp = comparison_data(data);

  analysis::ComparisonReport r;
  r.path_id = path_id;
  r.functional_distance = analysis::functional_distance(model, pa, pb, cmp);
  r.disagreement_rate = analysis::disagreement_rate(model, pa, pb, cmp);
  r.bump_height = bump.bump_height;
  r.endpoint_losses = bump.endpoint_losses;
  if (path_out) *path_out = std::move(path);
  return r;
}

json run_json(const RunSummary& s) {
  return {{"optimizer", s.label},
          {"final_train_accuracy", s.final_train_accuracy},
          {"final_train_loss", s.final_train_loss}};
}

}  // namespace

void save_run(const fs::path& dir, const RunConfig& config, const ScheduleResult& r) {
  fs::create_directories(dir);
  save_run_config(config, dir / "config.json");
  emit_series(dir / "series.csv", r.series);
  for (const auto& c : r.checkpoints) save_checkpoint(c, dir / ckpt_name(c.epoch));
}

SynthSpec synthetic_fallback() {
  SynthSpec s;
  s.classes = 10;
  s.per_class = 1000;
  s.dim = 784;
  s.scale = 3.0;
  s.sigma = 1.0;
  s.unit_range = true;
  return s;
}

DeskSetup desk_setup(const Options& options) {
  DeskSetup d;
  RunConfig& c = d.base;
  c.model = ModelSpec::fc2(true);
  c.init = InitScheme::xavier();
  c.schedule = optim::SwitchSchedule::single(optim::OptimizerSpec::defaults(optim::Kind::sgd));
  c.total_epochs = options.epochs;
  c.batch_size = 128;
  c.master_seed = options.master_seed;
  c.dataset.train_subset = 10000;
  if (mnist_available(options.mnist_dir)) {
    d.mnist = true;
    c.dataset.kind = DatasetConfig::Kind::mnist;
    c.dataset.mnist_dir = options.mnist_dir.string();
    c.dataset.test_subset = 10000;
    d.accuracy_threshold = 0.95;
    d.bump_threshold = 0.5;
  } else {
    c.dataset.kind = DatasetConfig::Kind::synthetic;
    c.dataset.synth = synthetic_fallback();
    c.dataset.test_subset = 1000;
  }
  c.validate();
  d.data = load_data(c.dataset, c.seeds());
  return d;
}

ScheduleResult train(const RunConfig& config, const LoadedData& data, std::size_t threads) {
  (void)threads;
  config.validate();
  const Model model(config.model);
  const auto seeds = config.seeds();
  const auto theta0 = model.initialize(config.init, seeds.key(rng::Stream::init, 0));
  ScheduleOptions so;
  so.batch_size = config.batch_size;
  so.refresh.num_batches = config.bn_refresh_batches;
  so.eval_every = config.eval_every;
  so.warm_start = config.warm_start_on_switch;
  so.run_hash = config.hash();
  auto r = run_schedule(model, theta0, config.schedule, config.total_epochs, data.train,
                        data.test ? &*data.test : nullptr, seeds, so);
  const auto text = config.canonical();
  for (auto& c : r.checkpoints) c.run_config = text;
  return r;
}

std::vector<optim::OptimizerSpec> bump_optimizers() {
  using optim::Kind;
  using optim::OptimizerSpec;
  return {OptimizerSpec::defaults(Kind::sgd), OptimizerSpec::defaults(Kind::sgdm),
          OptimizerSpec::defaults(Kind::rmsprop), OptimizerSpec::defaults(Kind::adam)};
}

BumpResult bump_fc2(const Options& o) {
  const auto dir = recipe_dir(o, "bump-fc2");
  auto desk = desk_setup(o);
  const Model model(desk.base.model);

  BumpResult res;
  res.mnist = desk.mnist;
  res.accuracy_threshold = desk.accuracy_threshold;
  res.bump_threshold = desk.bump_threshold;

  for (const auto& spec : bump_optimizers()) {
    note(o, "bump-fc2: training " + spec.label());
    const auto config = with_schedule(desk.base, optim::SwitchSchedule::single(spec));
    auto r = train(config, desk.data, o.threads);
    save_run(dir / "runs" / spec.label(), config, r);
    res.runs.push_back(summarize(spec.label(), std::move(r)));
  }

  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    for (std::size_t j = i + 1; j < res.runs.size(); ++j) {
      const auto id = res.runs[i].label + "__" + res.runs[j].label;
      note(o, "bump-fc2: sweeping " + id);
      std::vector<landscape::SurfaceSample> path;
      res.pairs.push_back(
          compare(model, res.runs[i].final_point, res.runs[j].final_point, desk.data, o, id, &path));
      emit_surface(dir / "sweeps" / (id + ".csv"), path);
    }
  }
  emit_report(dir / "report.json", res.pairs);

  json runs = json::array();
  for (const auto& r : res.runs) runs.push_back(run_json(r));
  write_json(dir / "summary.json", {{"data", desk.mnist ? "mnist" : "synthetic"},
                                    {"accuracy_threshold", res.accuracy_threshold},
                                    {"bump_threshold", res.bump_threshold},
                                    {"runs", runs}});
  return res;
}

SwitchResult switch_fc2(const Options& o) {
  const auto dir = recipe_dir(o, "switch-fc2");
  auto desk = desk_setup(o);
  const Model model(desk.base.model);
  const auto adam = optim::OptimizerSpec::defaults(optim::Kind::adam);
  const auto sgd = optim::OptimizerSpec::defaults(optim::Kind::sgd);

  SwitchResult res;
  res.switch_epoch = o.epochs / 2;

  struct Plan {
    std::string name;
    optim::SwitchSchedule schedule;
    std::vector<EpochRecord>* series;
  };
  const std::vector<Plan> plans{
      {"switched", optim::SwitchSchedule::switch_at(adam, res.switch_epoch, sgd), &res.switched},
      {"sgd", optim::SwitchSchedule::single(sgd), &res.sgd},
      {"adam", optim::SwitchSchedule::single(adam), &res.adam}};

  std::vector<Checkpoint> finals;
  for (const auto& p : plans) {
    note(o, "switch-fc2: training " + p.schedule.label(o.epochs));
    const auto config = with_schedule(desk.base, p.schedule);
    auto r = train(config, desk.data, o.threads);
    save_run(dir / "runs" / p.name, config, r);
    *p.series = r.series;
    finals.push_back(r.checkpoints.back());
  }

  std::vector<landscape::SurfaceSample> path;
  res.switched_vs_adam = compare(model, finals[0], finals[2], desk.data, o, "switched__adam", &path);
  emit_surface(dir / "switched__adam.csv", path);
  emit_report(dir / "report.json", std::span(&res.switched_vs_adam, 1));
  return res;
}

BasinResult basin_fc2(const Options& o) {
  const auto dir = recipe_dir(o, "basin-fc2");
  auto desk = desk_setup(o);
  const Model model(desk.base.model);
  landscape::SweepOptions so;
  so.threads = o.threads;

  std::vector<RunSummary> runs;
  for (const auto& spec : bump_optimizers()) {
    note(o, "basin-fc2: training " + spec.label());
    const auto config = with_schedule(desk.base, optim::SwitchSchedule::single(spec));
    auto r = train(config, desk.data, o.threads);
    save_run(dir / "runs" / spec.label(), config, r);
    runs.push_back(summarize(spec.label(), std::move(r)));
  }

  // one lambda grid shared by every optimizer so widths compare directly
  double longest = 0.0;
  for (const auto& r : runs) longest = std::max(longest, distance(r.init.params, r.final_point.params));
  const auto lambdas = landscape::grid({0.0, longest}, o.resolution);
  const auto alphas = landscape::basin_alpha_grid({-0.25, 2.0}, o.resolution);

  BasinResult res;
  for (const auto& r : runs) {
    note(o, "basin-fc2: profiling " + r.label);
    BasinProfile p;
    p.label = r.label;
    p.distance = distance(r.init.params, r.final_point.params);
    p.alpha = landscape::basin_profile_alpha(model, r.init.params, r.final_point.params, alphas, desk.data.train, so);
    p.lambda = landscape::basin_profile_lambda(model, r.init.params, r.final_point.params, lambdas, desk.data.train, so);
    p.init_loss = landscape::evaluate_point(model, r.init.params, desk.data.train, so.policy).train_loss;
    p.final_loss = landscape::evaluate_point(model, r.final_point.params, desk.data.train, so.policy).train_loss;
    emit_surface(dir / ("alpha-" + r.label + ".csv"), p.alpha);
    emit_surface(dir / ("lambda-" + r.label + ".csv"), p.lambda);
    res.profiles.push_back(std::move(p));
  }
  return res;
}

BnScaleResult bn_scale(const Options& o) {
  const auto dir = recipe_dir(o, "bn-scale");
  auto desk = desk_setup(o);
  const Model model(desk.base.model);
  note(o, "bn-scale: training " + desk.base.schedule.label(o.epochs));
  auto r = train(desk.base, desk.data, o.threads);
  const auto& theta = r.checkpoints.back().params;

  BnScaleResult res;
  ParameterVector scaled = theta;
  for (const char* name : {"W0", "b0"}) {
    for (double& v : scaled.view(name)) v *= res.factor;
  }
  const auto& train = desk.data.train;
  const auto before = model.predict(theta, landscape::refresh_bn_stats(model, theta, train, {}), train.inputs);
  const auto after = model.predict(scaled, landscape::refresh_bn_stats(model, scaled, train, {}), train.inputs);
  for (std::size_t i = 0; i < before.storage().size(); ++i) {
    res.max_abs_diff = std::max(res.max_abs_diff, std::abs(before.storage()[i] - after.storage()[i]));
  }
  res.examples = train.size();
  write_json(dir / "result.json",
             {{"factor", res.factor}, {"examples", res.examples}, {"max_abs_diff", res.max_abs_diff}});
  return res;
}

ExoticResult exotic_init(const Options& o) {
  const auto dir = recipe_dir(o, "exotic-init");
  auto desk = desk_setup(o);
  auto sgd = optim::OptimizerSpec::defaults(optim::Kind::sgd);
  sgd.eta = 0.01;

  ExoticResult res;
  res.chance = 1.0 / static_cast<double>(desk.base.model.num_classes());
  for (bool bn : {false, true}) {
    RunConfig config = with_schedule(desk.base, optim::SwitchSchedule::single(sgd));
    config.model = ModelSpec::fc2(bn);
    config.init = InitScheme::gaussian(-10.0, 0.01);
    note(o, std::string("exotic-init: training ") + (bn ? "with" : "without") + " BN");
    auto r = train(config, desk.data, o.threads);
    save_run(dir / (bn ? "with-bn" : "without-bn"), config, r);
    (bn ? res.with_bn : res.without_bn) = std::move(r.series);
  }
  return res;
}

Rk2Result rk2(const Options& o) {
  const auto dir = recipe_dir(o, "rk2");
  auto desk = desk_setup(o);
  using optim::Kind;
  using optim::OptimizerSpec;
  using optim::Rk2Coefficients;

  std::vector<OptimizerSpec> specs;
  for (auto kind : {Kind::sgd, Kind::adam}) {
    const auto base = OptimizerSpec::defaults(kind);
    specs.push_back(base);
    for (const auto& c : {Rk2Coefficients::midpoint(), Rk2Coefficients::heun(), Rk2Coefficients::ralston()}) {
      specs.push_back(base.with_rk2(c));
    }
  }
  Rk2Result res;
  for (const auto& spec : specs) {
    note(o, "rk2: training " + spec.label());
    const auto config = with_schedule(desk.base, optim::SwitchSchedule::single(spec));
    auto r = train(config, desk.data, o.threads);
    save_run(dir / "runs" / spec.label(), config, r);
    res.runs.push_back(summarize(spec.label(), std::move(r)));
  }
  json runs = json::array();
  for (const auto& r : res.runs) runs.push_back(run_json(r));
  write_json(dir / "summary.json", {{"runs", runs}});
  return res;
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"bump-fc2", "switch-fc2", "basin-fc2", "bn-scale", "exotic-init", "rk2"};
  return n;
}

void run(const std::string& name, const Options& options) {
  if (name == "bump-fc2") {
    bump_fc2(options);
  } else if (name == "switch-fc2") {
    switch_fc2(options);
  } else if (name == "basin-fc2") {
    basin_fc2(options);
  } else if (name == "bn-scale") {
    bn_scale(options);
  } else if (name == "exotic-init") {
    exotic_init(options);
  } else if (name == "rk2") {
    rk2(options);
  } else {
    throw InvalidArgument("unknown recipe '" + name + "'");
  }
}

}  // namespace basinlab::recipes
