#include <cmath>

#include "basinlab/landscape.hpp"
#include "basinlab/training.hpp"
#include "doctest.h"

using namespace basinlab;
using optim::Kind;
using optim::OptimizerSpec;

namespace {

struct Fixture {
  Model model{ModelSpec{{4, 8, 2}, {true}, 0.0}};
  Dataset train;
  rng::SeedPlan seeds{11, {}};
  ParameterVector init;

  Fixture() {
    SynthSpec s;
    s.classes = 2;
    s.per_class = 40;
    s.dim = 4;
    s.scale = 3.0;
    s.sigma = 0.3;
    train = synth_dataset(s, seeds.key(rng::Stream::data_synth));
    init = model.initialize(InitScheme::xavier(), seeds.key(rng::Stream::init));
  }

  RunState fresh() const { return {init, optim::OptimizerState::zeros(init.size()), model.initial_bn_stats()}; }
};

OptimizerSpec tuned(Kind k) {
  auto s = OptimizerSpec::defaults(k);
  if (k == Kind::rmsprop || k == Kind::adam) s.eta = 0.01;
  if (k == Kind::adagrad) s.eta = 0.1;
  return s;
}

}  // namespace

TEST_CASE("training: every optimizer fits separable blobs") {
  const Fixture f;
  for (auto k : {Kind::sgd, Kind::sgdm, Kind::rmsprop, Kind::adam, Kind::adagrad, Kind::adadelta}) {
    CAPTURE(optim::kind_name(k));
    const auto r = run_schedule(f.model, f.init, optim::SwitchSchedule::single(tuned(k)), 15, f.train, nullptr,
                                f.seeds, {.batch_size = 16});
    CHECK(r.series.back().train_accuracy == 1.0);
  }
}

TEST_CASE("training: zero step size leaves parameters alone") {
  const Fixture f;
  auto st = f.fresh();
  auto spec = OptimizerSpec::defaults(Kind::sgd);
  spec.eta = 0.0;
  (void)run_epoch(f.model, st, spec, f.train, f.init, f.seeds, 0, 16);
  CHECK(st.theta.bitwise_equal(f.init));
}

TEST_CASE("training: runs are deterministic and share data order") {
  const Fixture f;
  auto a = f.fresh(), b = f.fresh(), c = f.fresh();
  const auto ma = run_epoch(f.model, a, OptimizerSpec::defaults(Kind::sgd), f.train, f.init, f.seeds, 1, 16);
  const auto mb = run_epoch(f.model, b, OptimizerSpec::defaults(Kind::sgd), f.train, f.init, f.seeds, 1, 16);
  const auto mc = run_epoch(f.model, c, tuned(Kind::adam), f.train, f.init, f.seeds, 1, 16);
  CHECK(a.theta.bitwise_equal(b.theta));
  CHECK(ma.train_loss == mb.train_loss);
  CHECK(ma.stream_digest == mc.stream_digest);
  CHECK(ma.batches == 5);
  CHECK_FALSE(a.theta.bitwise_equal(c.theta));

  auto d = f.fresh();
  const auto md = run_epoch(f.model, d, OptimizerSpec::defaults(Kind::sgd), f.train, f.init, f.seeds, 0, 16);
  CHECK(md.stream_digest != ma.stream_digest);
}

TEST_CASE("training: single segment schedule equals an epoch loop") {
  const Fixture f;
  const auto spec = tuned(Kind::adam);
  const auto r = run_schedule(f.model, f.init, optim::SwitchSchedule::single(spec), 3, f.train, nullptr, f.seeds,
                              {.batch_size = 16});
  auto st = f.fresh();
  for (std::size_t e = 0; e < 3; ++e) (void)run_epoch(f.model, st, spec, f.train, f.init, f.seeds, e, 16);
  REQUIRE(r.checkpoints.size() == 2);
  CHECK(r.checkpoints.back().params.bitwise_equal(st.theta));
  CHECK(r.checkpoints.front().params.bitwise_equal(f.init));
  CHECK(r.series.size() == 4);
  CHECK(r.series.front().minibatch_loss == 0.0);
}

TEST_CASE("training: switching zeroes accumulators by default") {
  const Fixture f;
  const auto adam = tuned(Kind::adam), sgdm = OptimizerSpec::defaults(Kind::sgdm);
  const auto sched = optim::SwitchSchedule::switch_at(adam, 2, sgdm);
  const auto r = run_schedule(f.model, f.init, sched, 4, f.train, nullptr, f.seeds, {.batch_size = 16});
  REQUIRE(r.checkpoints.size() == 3);
  CHECK(r.checkpoints[0].epoch == 0);
  CHECK(r.checkpoints[1].epoch == 2);
  CHECK(r.checkpoints[2].epoch == 4);
  CHECK(r.series[2].optimizer == "adam");
  CHECK(r.series[4].optimizer == "sgdm");

  // replay: two adam epochs, then sgdm from a fresh state
  auto st = f.fresh();
  for (std::size_t e = 0; e < 2; ++e) (void)run_epoch(f.model, st, adam, f.train, f.init, f.seeds, e, 16);
  CHECK(st.theta.bitwise_equal(r.checkpoints[1].params));
  st.opt = optim::OptimizerState::zeros(st.theta.size());
  for (std::size_t e = 2; e < 4; ++e) (void)run_epoch(f.model, st, sgdm, f.train, f.init, f.seeds, e, 16);
  CHECK(st.theta.bitwise_equal(r.checkpoints[2].params));

  const auto warm = run_schedule(f.model, f.init, sched, 4, f.train, nullptr, f.seeds,
                                 {.batch_size = 16, .warm_start = true});
  CHECK_FALSE(warm.checkpoints[2].params.bitwise_equal(r.checkpoints[2].params));
}

TEST_CASE("training: checkpoint losses reproduce under evaluate_point") {
  const Fixture f;
  const auto r = run_schedule(f.model, f.init, optim::SwitchSchedule::single(OptimizerSpec::defaults(Kind::sgd)), 2,
                              f.train, &f.train, f.seeds, {.batch_size = 16});
  for (const auto& c : r.checkpoints) {
    const auto s = landscape::evaluate_point(f.model, c.params, f.train, {});
    CHECK(std::abs(s.train_loss - c.eval_loss) <= 1e-9);
    CHECK(s.train_accuracy == c.eval_accuracy);
  }
  CHECK(r.series.back().test_accuracy.has_value());
}

TEST_CASE("training: distance and norm obey the triangle inequality") {
  const Fixture f;
  const auto r = run_schedule(f.model, f.init, optim::SwitchSchedule::single(OptimizerSpec::defaults(Kind::sgd)), 4,
                              f.train, nullptr, f.seeds, {.batch_size = 16});
  const double n0 = norm(f.init);
  CHECK(r.series.front().dist_from_init == 0.0);
  CHECK(r.series.front().weight_norm == doctest::Approx(n0));
  for (const auto& e : r.series) CHECK(std::abs(e.dist_from_init - e.weight_norm) <= n0 + 1e-12);
}
