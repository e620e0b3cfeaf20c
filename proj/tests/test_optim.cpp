#include <cmath>
#include <numeric>

#include "basinlab/errors.hpp"
#include "basinlab/optim.hpp"
#include "doctest.h"

using namespace basinlab;
using namespace basinlab::optim;

namespace {

std::vector<double> field(const OptimizerSpec& spec, std::vector<double> g, int steps = 1) {
  auto st = OptimizerState::zeros(g.size());
  std::vector<double> x;
  for (int i = 0; i < steps; ++i) x = vector_field(spec, st, g);
  return x;
}

}  // namespace

TEST_CASE("optim: sgd negates the gradient") {
  CHECK(field(OptimizerSpec::defaults(Kind::sgd), {3, -4}) == std::vector<double>{-3, 4});
  CHECK(field(OptimizerSpec::defaults(Kind::sgd), {6, -8}) == std::vector<double>{-6, 8});
}

TEST_CASE("optim: adam first step") {
  const auto adam = OptimizerSpec::defaults(Kind::adam);
  const double c1 = std::sqrt(1 - 0.999) / (1 - 0.9);
  CHECK(c1 == doctest::Approx(0.316228).epsilon(1e-6));
  for (double g : {1e-3, 0.1, 1.0, -7.0}) {
    const double x = field(adam, {g})[0];
    // relative error bounded by eps / sqrt(v)
    const double bound = adam.epsilon / std::sqrt((1 - adam.beta2) * g * g);
    CHECK(std::abs(x + std::copysign(1.0, g)) <= bound * 1.0000001);
  }
  // eps -> 0 limit: exactly -sign(g)
  auto exact = adam;
  exact.epsilon = 0.0;
  CHECK(field(exact, {0.25})[0] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("optim: first-step scale behaviour separates the families") {
  for (Kind k : {Kind::adam, Kind::rmsprop, Kind::adagrad}) {
    auto spec = OptimizerSpec::defaults(k);
    spec.epsilon = 0.0;
    CHECK(field(spec, {0.5})[0] == doctest::Approx(field(spec, {1.0})[0]).epsilon(1e-14));
  }
  const auto sgd = OptimizerSpec::defaults(Kind::sgd);
  CHECK(field(sgd, {1.0})[0] * 2 == field(sgd, {2.0})[0]);
}

TEST_CASE("optim: adagrad retards itself under a constant gradient") {
  const auto spec = OptimizerSpec::defaults(Kind::adagrad);
  auto st = OptimizerState::zeros(1);
  const double x1 = vector_field(spec, st, std::vector<double>{2.0})[0];
  const double x2 = vector_field(spec, st, std::vector<double>{2.0})[0];
  CHECK(std::abs(x1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(x2) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-8));
  CHECK(std::abs(x2) < std::abs(x1));
}

TEST_CASE("optim: momentum closed form") {
  const auto spec = OptimizerSpec::defaults(Kind::sgdm);
  auto st = OptimizerState::zeros(2);
  const std::vector<double> g{1.5, -0.25};
  for (int t = 1; t <= 100; ++t) {
    const auto x = vector_field(spec, st, g);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(st.m[i] - (1 - std::pow(0.9, t)) * g[i]) <= 1e-12);
      CHECK(x[i] == -st.m[i]);
    }
  }
}

TEST_CASE("optim: accumulators stay nonnegative") {
  for (Kind k : {Kind::adagrad, Kind::rmsprop, Kind::adadelta, Kind::adam}) {
    const auto spec = OptimizerSpec::defaults(k);
    auto st = OptimizerState::zeros(3);
    for (int t = 0; t < 20; ++t) {
      (void)vector_field(spec, st, std::vector<double>{std::sin(t * 1.0), -3.0 + t, 0.0});
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(st.v[i] >= 0);
        CHECK(st.s[i] >= 0);
        CHECK(st.u[i] >= 0);
      }
    }
  }
}

TEST_CASE("optim: apply_step") {
  std::vector<double> theta{1.0};
  const auto spec = OptimizerSpec::defaults(Kind::sgd);
  auto st = OptimizerState::zeros(1);
  double expect = 1.0;
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> g{theta[0]};
    step(spec, st, theta, g);
    expect *= 0.9;
    CHECK(theta[0] == doctest::Approx(expect).epsilon(1e-15));
  }
  std::vector<double> still{2.0, 3.0};
  apply_step_inplace(still, std::vector<double>{0.0, 0.0}, 0.1);
  CHECK(still == std::vector<double>{2.0, 3.0});
}

TEST_CASE("optim: adadelta ignores eta") {
  auto a = OptimizerSpec::defaults(Kind::adadelta), b = a;
  b.eta = 0.001;
  CHECK(effective_eta(a) == 1.0);
  CHECK(effective_eta(b) == 1.0);
  std::vector<double> ta{1.0, -2.0}, tb = ta;
  auto sa = OptimizerState::zeros(2), sb = sa;
  for (int i = 0; i < 10; ++i) {
    step(a, sa, ta, std::vector<double>{ta[0], ta[1]});
    step(b, sb, tb, std::vector<double>{tb[0], tb[1]});
  }
  CHECK(ta == tb);
}

TEST_CASE("optim: rk2 degenerate and constant fields") {
  const GradFn constant = [](std::span<const double>) { return std::vector<double>{2.0, -1.0}; };
  const std::vector<double> theta{0.3, 0.7};
  for (const auto& c : {Rk2Coefficients::midpoint(), Rk2Coefficients::heun(), Rk2Coefficients::ralston()}) {
    auto spec = OptimizerSpec::defaults(Kind::sgd);
    spec.rk2 = c;
    auto st = OptimizerState::zeros(2);
    const auto x = rk2_vector_field(spec, st, theta, constant, 0.1);
    CHECK(x[0] == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-15));
  }
  // a1 = 1, a2 = 0 is plain Euler
  const GradFn linear = [](std::span<const double> t) { return std::vector<double>{3 * t[0], -t[1]}; };
  auto spec = OptimizerSpec::defaults(Kind::sgd);
  spec.rk2 = Rk2Coefficients{1.0, 0.0, 0.5};
  auto st = OptimizerState::zeros(2);
  CHECK(rk2_vector_field(spec, st, theta, linear, 0.1) == field(OptimizerSpec::defaults(Kind::sgd), linear(theta)));
}

TEST_CASE("optim: heun step on a linear field is the second-order Taylor polynomial") {
  const double lambda = 2.0, h = 0.05;
  const GradFn grad = [&](std::span<const double> t) { return std::vector<double>{lambda * t[0]}; };
  auto spec = OptimizerSpec::defaults(Kind::sgd);
  spec.eta = h;
  spec.rk2 = Rk2Coefficients::heun();
  auto st = OptimizerState::zeros(1);
  std::vector<double> theta{1.5};
  step(spec, st, theta, grad(theta), grad);
  const double lh = lambda * h;
  CHECK(theta[0] == doctest::Approx(1.5 * (1 - lh + lh * lh / 2)).epsilon(1e-15));
}

TEST_CASE("optim: rk2 global error order") {
  auto integrate = [](OptimizerSpec spec, double h) {
    spec.eta = h;
    const GradFn g = [](std::span<const double> t) { return std::vector<double>{t[0]}; };
    auto st = OptimizerState::zeros(1);
    std::vector<double> theta{1.0};
    for (int i = 0; i < std::lround(1 / h); ++i) step(spec, st, theta, g(theta), g);
    return std::abs(theta[0] - std::exp(-1.0));
  };
  const auto sgd = OptimizerSpec::defaults(Kind::sgd);
  const double euler = integrate(sgd, 0.1) / integrate(sgd, 0.05);
  CHECK(euler >= 1.8);
  CHECK(euler <= 2.2);
  for (const auto& c : {Rk2Coefficients::midpoint(), Rk2Coefficients::heun(), Rk2Coefficients::ralston()}) {
    const double ratio = integrate(sgd.with_rk2(c), 0.1) / integrate(sgd.with_rk2(c), 0.05);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }
}

TEST_CASE("optim: updates commute with permutations of the parameter vector") {
  const std::vector<double> g{0.3, -1.2, 4.0, 1e-4, -0.07};
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> gp(5);
  for (std::size_t i = 0; i < 5; ++i) gp[i] = g[perm[i]];
  for (Kind k : {Kind::sgd, Kind::sgdm, Kind::adagrad, Kind::rmsprop, Kind::adadelta, Kind::adam}) {
    const auto spec = OptimizerSpec::defaults(k);
    const auto x = field(spec, g, 3);
    const auto xp = field(spec, gp, 3);
    for (std::size_t i = 0; i < 5; ++i) CHECK(xp[i] == x[perm[i]]);
  }
}

TEST_CASE("optim: spec validation and labels") {
  auto s = OptimizerSpec::defaults(Kind::adam);
  s.eta = -1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = OptimizerSpec::defaults(Kind::adam);
  s.epsilon = 0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = OptimizerSpec::defaults(Kind::sgd);
  s.rk2 = Rk2Coefficients{0.5, 0.6, 1.0};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);

  const auto heun = OptimizerSpec::defaults(Kind::sgd).with_rk2(Rk2Coefficients::heun());
  CHECK(heun.eta == 0.2);
  CHECK(heun.label() == "sgd+heun");
  CHECK(Rk2Coefficients::named("ralston") == Rk2Coefficients::ralston());
  CHECK(parse_kind("rmsprop") == Kind::rmsprop);
  CHECK_THROWS_AS(parse_kind("lbfgs"), InvalidArgument);
}

TEST_CASE("optim: switch schedules") {
  const auto adam = OptimizerSpec::defaults(Kind::adam), sgd = OptimizerSpec::defaults(Kind::sgd);
  const auto s = SwitchSchedule::switch_at(adam, 10, sgd);
  CHECK(s.spec_at(0) == adam);
  CHECK(s.spec_at(9) == adam);
  CHECK(s.spec_at(10) == sgd);
  CHECK(s.label(20) == "A10-S10");
  CHECK_THROWS_AS((SwitchSchedule{{{1, adam}}}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SwitchSchedule{{{0, adam}, {5, sgd}, {5, adam}}}.validate()), InvalidArgument);
}
