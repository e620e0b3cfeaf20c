#include <cmath>

#include "basinlab/errors.hpp"
#include "basinlab/landscape.hpp"
#include "basinlab/model.hpp"
#include "doctest.h"

using namespace basinlab;

namespace {

Tensor gaussian_inputs(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  Tensor t({rows, cols});
  const rng::StreamKey k{seed, rng::Stream::data_synth, 0};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng::draw_gaussian(k.offset(2 * i));
  return t;
}

std::vector<int> cyclic_labels(std::size_t n, int classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % classes);
  return y;
}

void perturb(ParameterVector& p, std::uint64_t seed, double scale) {
  const rng::StreamKey k{seed, rng::Stream::init, 1ull << 50};
  for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] += scale * rng::draw_gaussian(k.offset(2 * i));
}

}  // namespace

TEST_CASE("model: layout and parameter counts") {
  const Model fc2(ModelSpec::fc2(true));
  CHECK(fc2.parameter_count() == 39860);
  CHECK(Model(ModelSpec::fc2(false)).parameter_count() == 39760);
  CHECK(Model(ModelSpec{{2, 2}, {}, 0.0}).parameter_count() == 6);

  const auto& e = fc2.layout()->entries();
  REQUIRE(e.size() == 6);
  CHECK(e[0].name == "W0");
  CHECK(e[1].name == "b0");
  CHECK(e[2].name == "gamma0");
  CHECK(e[3].name == "beta0");
  CHECK(e[4].name == "W1");
  CHECK(e[5].offset + e[5].size == 39860);
  for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i].offset == e[i - 1].offset + e[i - 1].size);
}

TEST_CASE("model: spec validation") {
  CHECK_THROWS_AS(Model(ModelSpec{{5}, {}, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(Model(ModelSpec{{5, 0, 2}, {false}, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(Model(ModelSpec{{5, 3, 2}, {}, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(Model(ModelSpec{{5, 3, 2}, {false}, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(InitScheme::gaussian(0.0, 0.0).validate(), InvalidArgument);
}

TEST_CASE("model: config hash gates compatibility") {
  const Model a(ModelSpec::fc2(true)), b(ModelSpec::fc2(false));
  CHECK(a.config_hash() == Model(ModelSpec::fc2(true)).config_hash());
  CHECK(a.config_hash() != b.config_hash());
  const auto pa = a.zero_parameters(), pb = b.zero_parameters();
  CHECK_FALSE(pa.compatible(pb));
  CHECK_THROWS_AS(pa.require_compatible(pb, "test"), IncompatibleError);
  CHECK_THROWS_AS(landscape::interp_linear(pa, pb, 0.5), IncompatibleError);
}

TEST_CASE("model: initialization") {
  const Model m(ModelSpec::fc2(true));
  const rng::SeedPlan seeds{0, {}};
  const auto p = m.initialize(InitScheme::xavier(), seeds.key(rng::Stream::init));
  const double a = std::sqrt(6.0 / 834.0);
  CHECK(a == doctest::Approx(0.08482).epsilon(1e-4));
  double maxabs = 0;
  for (double w : p.view("W0")) maxabs = std::max(maxabs, std::abs(w));
  CHECK(maxabs < a);
  CHECK(maxabs > 0.95 * a);
  for (double v : p.view("b0")) CHECK(v == 0.0);
  for (double v : p.view("gamma0")) CHECK(v == 1.0);
  for (double v : p.view("beta0")) CHECK(v == 0.0);
  CHECK(p.bitwise_equal(m.initialize(InitScheme::xavier(), seeds.key(rng::Stream::init))));
  CHECK_FALSE(p.bitwise_equal(m.initialize(InitScheme::xavier(), rng::SeedPlan{1, {}}.key(rng::Stream::init))));

  const auto g = m.initialize(InitScheme::gaussian(-10.0, 0.01), seeds.key(rng::Stream::init));
  double mean = 0;
  for (double w : g.view("W0")) mean += w;
  mean /= 39200.0;
  CHECK(std::abs(mean + 10.0) < 0.001);
}

TEST_CASE("model: zeroed parameters give uniform predictions") {
  const Model m(ModelSpec{{6, 4, 10}, {false}, 0.0});
  const auto p = m.zero_parameters();
  const auto x = gaussian_inputs(20, 6, 1);
  const auto labels = cyclic_labels(20, 10);
  auto stats = m.initial_bn_stats();
  const auto lg = m.loss_and_grad(p, stats, x, labels, Mode::eval);
  CHECK(lg.loss == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  CHECK(lg.accuracy == doctest::Approx(0.1));  // every row predicts class 0
  const auto probs = m.predict(p, stats, x);
  for (double v : probs.storage()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
  const auto again = m.predict(p, stats, x);
  CHECK(probs == again);
}

TEST_CASE("model: predict rows sum to one") {
  const Model m(ModelSpec{{6, 8, 5}, {true}, 0.0});
  const auto p = m.initialize(InitScheme::xavier(), rng::SeedPlan{3, {}}.key(rng::Stream::init));
  const auto x = gaussian_inputs(16, 6, 2);
  const auto probs = m.predict(p, landscape::refresh_bn_stats(m, p, Dataset{x, cyclic_labels(16, 5), 5}, {}), x);
  for (std::size_t r = 0; r < 16; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += probs(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("model: composite gradient matches finite differences") {
  // BN + dropout with a fixed mask, two hidden layers
  const ModelSpec spec{{5, 6, 4, 3}, {true, false}, 0.3};
  const Model m(spec);
  const rng::SeedPlan seeds{11, {}};
  auto p = m.initialize(InitScheme::xavier(), seeds.key(rng::Stream::init));
  perturb(p, 11, 0.2);
  const auto x = gaussian_inputs(7, 5, 4);
  const auto labels = cyclic_labels(7, 3);
  const auto masks = m.dropout_masks(seeds, 0, 0, 7);
  REQUIRE(masks.size() == 2);

  auto loss_at = [&](const ParameterVector& q) {
    auto s = m.initial_bn_stats();
    return m.loss_and_grad(q, s, x, labels, Mode::train, &masks, false).loss;
  };
  auto stats = m.initial_bn_stats();
  const auto lg = m.loss_and_grad(p, stats, x, labels, Mode::train, &masks, false);
  CHECK(lg.grad.grad.size() == p.size());
  constexpr double h = 1e-5;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto up = p, down = p;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double fd = (loss_at(up) - loss_at(down)) / (2 * h);
    const double err = std::abs(fd - lg.grad.grad[i]);
    CHECK((err <= 1e-7 || err <= 1e-4 * std::max(std::abs(fd), std::abs(lg.grad.grad[i]))));
  }
}

TEST_CASE("model: traces are single use") {
  const Model m(ModelSpec{{3, 2}, {}, 0.0});
  const auto p = m.zero_parameters();
  const auto x = gaussian_inputs(2, 3, 1);
  auto stats = m.initial_bn_stats();
  auto trace = m.forward(p, stats, x, Mode::train);
  const Tensor dl({2, 2}, 0.5);
  CHECK(trace.state() == ForwardTrace::State::forwarded);
  (void)m.backward(trace, dl);
  CHECK(trace.state() == ForwardTrace::State::consumed);
  CHECK_THROWS_AS((void)m.backward(trace, dl), Error);
  ForwardTrace empty;
  CHECK_THROWS_AS((void)m.backward(empty, dl), Error);
}

TEST_CASE("model: a single example can be memorized") {
  const Model m(ModelSpec{{4, 8, 3}, {false}, 0.0});
  auto p = m.initialize(InitScheme::xavier(), rng::SeedPlan{2, {}}.key(rng::Stream::init));
  const auto x = Tensor::matrix(1, 4, {0.5, -1.0, 2.0, 0.3});
  const std::vector<int> label{2};
  auto stats = m.initial_bn_stats();
  LossAndGrad lg;
  for (int it = 0; it < 2000; ++it) {
    lg = m.loss_and_grad(p, stats, x, label, Mode::train);
    for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] -= 0.5 * lg.grad.grad[i];
  }
  lg = m.loss_and_grad(p, stats, x, label, Mode::eval);
  CHECK(lg.loss < 1e-3);
  CHECK(lg.accuracy == 1.0);
}

TEST_CASE("model: flatten round trip and metric properties") {
  const Model m(ModelSpec{{4, 3, 2}, {true}, 0.0});
  auto p = m.initialize(InitScheme::gaussian(0.0, 1.0), rng::SeedPlan{4, {}}.key(rng::Stream::init));
  const auto back = flatten(m.layout(), m.config_hash(), unflatten(p));
  CHECK(back.bitwise_equal(p));

  auto q = m.initialize(InitScheme::gaussian(0.0, 1.0), rng::SeedPlan{5, {}}.key(rng::Stream::init));
  auto r = m.initialize(InitScheme::gaussian(0.0, 1.0), rng::SeedPlan{6, {}}.key(rng::Stream::init));
  CHECK(distance(p, p) == 0.0);
  CHECK(distance(p, q) == distance(q, p));
  CHECK(distance(p, q) > 0.0);
  CHECK(distance(p, r) <= distance(p, q) + distance(q, r));

  const Model two(ModelSpec{{1, 2}, {}, 0.0});
  auto onehot = two.zero_parameters();
  onehot.data()[1] = 3.0;
  CHECK(norm(onehot) == 3.0);
  auto e1 = two.zero_parameters(), e2 = two.zero_parameters();
  e1.data()[0] = 1.0;
  e2.data()[1] = 1.0;
  CHECK(distance(e1, e2) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("model: BN absorbs a rescaled hidden layer once statistics are refreshed") {
  const Model m(ModelSpec{{6, 5, 3}, {true}, 0.0});
  auto p = m.initialize(InitScheme::xavier(), rng::SeedPlan{8, {}}.key(rng::Stream::init));
  perturb(p, 8, 0.3);
  // well-scaled pre-activations (variance >> BN epsilon)
  const Dataset data{gaussian_inputs(200, 6, 9, 3.0), cyclic_labels(200, 3), 3};
  const auto before = m.predict(p, landscape::refresh_bn_stats(m, p, data, {}), data.inputs);
  for (double c : {0.5, 10.0, 1000.0}) {
    auto scaled = p;
    for (const char* name : {"W0", "b0"}) {
      for (double& v : scaled.view(name)) v *= c;
    }
    const auto after = m.predict(scaled, landscape::refresh_bn_stats(m, scaled, data, {}), data.inputs);
    double worst = 0;
    for (std::size_t i = 0; i < before.size(); ++i) worst = std::max(worst, std::abs(before[i] - after[i]));
    CHECK(worst < 1e-6);
  }
}
