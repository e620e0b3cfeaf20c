// basinlab command-line driver.
//
//   basinlab train  --config F --out DIR
//   basinlab sweep  --mode {linear,bilinear,barycentric} --ckpt A [--ckpt B ...] --grid R --out F
//   basinlab basin  --init I --final F --profile {alpha,lambda} [--grid R] --out F
//   basinlab fdist  --ckpt A --ckpt B [--data D] [--out F]
//   basinlab recipe NAME [--out DIR]
//
// Exit status: 0 on success, 2 on usage errors (including missing files),
// 1 when a command fails.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "basinlab/analysis.hpp"
#include "basinlab/checkpoint_io.hpp"
#include "basinlab/config.hpp"
#include "basinlab/emit.hpp"
#include "basinlab/errors.hpp"
#include "basinlab/landscape.hpp"
#include "basinlab/recipes.hpp"

namespace fs = std::filesystem;
using namespace basinlab;

namespace {

// JSON number, or its text when not finite.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_number(v)); }

// `--data` names an MNIST directory or a run-config file; without it the
// dataset recorded in the checkpoint is rebuilt.
LoadedData resolve_data(const Checkpoint& ckpt, const std::string& data) {
  if (!data.empty()) {
    if (fs::is_directory(data)) {
      DatasetConfig dc;
      dc.kind = DatasetConfig::Kind::mnist;
      dc.mnist_dir = data;
      dc.test_subset = 10000;
      return load_data(dc, rng::SeedPlan{ckpt.master_seed, {}});
    }
    const auto config = load_run_config(data);
    return load_data(config.dataset, config.seeds());
  }
  if (ckpt.run_config.empty()) {
    throw InvalidArgument("checkpoint records no dataset; pass --data");
  }
  const auto config = run_config_from_json(nlohmann::json::parse(ckpt.run_config));
  return load_data(config.dataset, config.seeds());
}

std::pair<double, double> parse_range(const std::vector<double>& v, std::pair<double, double> fallback) {
  if (v.empty()) return fallback;
  if (v.size() != 2) throw InvalidArgument("ranges take two values: LO HI");
  return {v[0], v[1]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"basinlab: loss-surface projections of trained networks"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Sweep worker threads (0 = all cores)");

  // train
  auto* train = app.add_subcommand("train", "Run a training schedule from a config file");
  std::string config_path, train_out;
  train->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Evaluate loss on an interpolation grid between checkpoints");
  std::string mode = "linear", sweep_out, sweep_data;
  std::vector<std::string> ckpts;
  std::size_t grid = 0;
  std::vector<double> alpha_range, beta_range;
  std::size_t refresh_batches = 0;
  sweep->add_option("--mode", mode, "linear | bilinear | barycentric")
      ->check(CLI::IsMember({"linear", "bilinear", "barycentric"}));
  sweep->add_option("--ckpt", ckpts, "Vertex checkpoints, in order (linear: alpha 1 is the first)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid, "Points per axis (default 101 for 1-D, 25 for 2-D)");
  sweep->add_option("--alpha", alpha_range, "Alpha range LO HI")->expected(2);
  sweep->add_option("--beta", beta_range, "Beta range LO HI")->expected(2);
  sweep->add_option("--refresh-batches", refresh_batches, "BN refresh batches (0 = full pass)");
  sweep->add_option("--data", sweep_data, "MNIST directory or run config (default: from checkpoint)");
  sweep->add_option("--out", sweep_out, "Output CSV")->required();

  // basin
  auto* basin = app.add_subcommand("basin", "Loss profile from the initial to the final point");
  std::string init_path, final_path, profile = "alpha", basin_out, basin_data;
  std::size_t basin_grid = 101;
  std::vector<double> basin_range;
  basin->add_option("--init", init_path, "Initial checkpoint")->required()->check(CLI::ExistingFile);
  basin->add_option("--final", final_path, "Final checkpoint")->required()->check(CLI::ExistingFile);
  basin->add_option("--profile", profile, "alpha | lambda")->check(CLI::IsMember({"alpha", "lambda"}));
  basin->add_option("--grid", basin_grid, "Number of points");
  basin->add_option("--range", basin_range, "Coordinate range LO HI (alpha: -0.25 2; lambda: 0 |init-final|)")
      ->expected(2);
  basin->add_option("--data", basin_data, "MNIST directory or run config (default: from checkpoint)");
  basin->add_option("--out", basin_out, "Output CSV")->required();

  // fdist
  auto* fdist = app.add_subcommand("fdist", "Functional distance and disagreement between two checkpoints");
  std::vector<std::string> fd_ckpts;
  std::string fd_data, fd_out;
  fdist->add_option("--ckpt", fd_ckpts, "Two checkpoints")->required()->check(CLI::ExistingFile);
  fdist->add_option("--data", fd_data, "MNIST directory or run config (default: from checkpoint)");
  fdist->add_option("--out", fd_out, "Also write the report here");

  // recipe
  auto* recipe = app.add_subcommand("recipe", "Run a canned desk-scale reproduction");
  std::string recipe_name;
  recipes::Options ro;
  std::string recipe_out = "out", mnist_dir = "data/mnist";
  recipe->add_option("name", recipe_name, "Recipe name")->required()->check(CLI::IsMember(recipes::names()));
  recipe->add_option("--out", recipe_out, "Output root directory");
  recipe->add_option("--mnist", mnist_dir, "Directory holding the MNIST IDX files");
  recipe->add_option("--seed", ro.master_seed, "Master seed");
  recipe->add_option("--epochs", ro.epochs, "Training epochs per run");
  recipe->add_option("--grid", ro.resolution, "Points per 1-D sweep");
  recipe->add_flag("--quiet", ro.quiet, "No progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (fdist->parsed() && fd_ckpts.size() != 2) {
      std::cerr << "fdist: exactly two --ckpt options are required\n" << fdist->help();
      return 2;
    }

    if (train->parsed()) {
      const auto config = load_run_config(config_path);
      const auto data = load_data(config.dataset, config.seeds());
      const auto result = recipes::train(config, data, threads);
      recipes::save_run(train_out, config, result);
      return 0;
    }

    if (sweep->parsed()) {
      const auto m = landscape::parse_mode(mode);
      if (ckpts.size() != landscape::vertex_count(m)) {
        std::cerr << "sweep: mode " << mode << " takes " << landscape::vertex_count(m) << " checkpoints\n"
                  << sweep->help();
        return 2;
      }
      std::vector<Checkpoint> loaded;
      for (const auto& p : ckpts) loaded.push_back(load_checkpoint(p, loaded.empty() ? nullptr : &loaded[0].model));
      landscape::InterpolationSpec spec;
      spec.mode = m;
      for (const auto& c : loaded) spec.vertices.push_back(c.params);
      spec.resolution = grid ? grid : (spec.two_dimensional() ? 25 : 101);
      const auto [alo, ahi] = parse_range(alpha_range, {0.0, 1.0});
      const auto [blo, bhi] = parse_range(beta_range, {0.0, 1.0});
      spec.alpha_range = {alo, ahi};
      spec.beta_range = {blo, bhi};
      const auto data = resolve_data(loaded[0], sweep_data);
      landscape::SweepOptions so;
      so.threads = threads;
      so.policy.num_batches = refresh_batches;
      so.test = data.test ? &*data.test : nullptr;
      emit_surface(sweep_out, landscape::sweep(spec, Model(loaded[0].model), data.train, so));
      return 0;
    }

    if (basin->parsed()) {
      const auto init = load_checkpoint(init_path);
      const auto fin = load_checkpoint(final_path, &init.model);
      const auto data = resolve_data(fin, basin_data);
      const Model model(fin.model);
      landscape::SweepOptions so;
      so.threads = threads;
      std::vector<landscape::SurfaceSample> samples;
      if (profile == "alpha") {
        const auto [lo, hi] = parse_range(basin_range, {-0.25, 2.0});
        const auto alphas = landscape::basin_alpha_grid({lo, hi}, basin_grid);
        samples = landscape::basin_profile_alpha(model, init.params, fin.params, alphas, data.train, so);
      } else {
        const auto [lo, hi] = parse_range(basin_range, {0.0, distance(init.params, fin.params)});
        const auto lambdas = landscape::grid({lo, hi}, basin_grid);
        samples = landscape::basin_profile_lambda(model, init.params, fin.params, lambdas, data.train, so);
      }
      emit_surface(basin_out, samples);
      return 0;
    }

    if (fdist->parsed()) {
      const auto a = load_checkpoint(fd_ckpts[0]);
      const auto b = load_checkpoint(fd_ckpts[1], &a.model);
      const auto data = resolve_data(a, fd_data);
      const Model model(a.model);
      const auto pa = analysis::prepare(model, a.params, data.train);
      const auto pb = analysis::prepare(model, b.params, data.train);
      const Dataset& eval = data.test ? *data.test : data.train;
      const nlohmann::json report{
          {"a", fd_ckpts[0]},
          {"b", fd_ckpts[1]},
          {"examples", eval.size()},
          {"functional_distance", analysis::functional_distance(model, pa, pb, eval)},
          {"disagreement_rate", analysis::disagreement_rate(model, pa, pb, eval)},
          {"train_losses",
           {number(landscape::evaluate(model, a.params, pa.stats, data.train).loss),
            number(landscape::evaluate(model, b.params, pb.stats, data.train).loss)}}};
      std::cout << report.dump(2) << '\n';
      if (!fd_out.empty()) {
        std::ofstream out(fd_out, std::ios::binary);
        out << report.dump(2) << '\n';
        if (!out) throw FormatError("cannot write " + fd_out);
      }
      return 0;
    }

    if (recipe->parsed()) {
      ro.out_dir = recipe_out;
      ro.mnist_dir = mnist_dir;
      ro.threads = threads;
      recipes::run(recipe_name, ro);
      return 0;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "basinlab: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "basinlab: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
