#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "twoscale/averaging.hpp"
#include "twoscale/error.hpp"
#include "twoscale/models.hpp"
#include "twoscale/parallel.hpp"

using namespace twoscale;

namespace {

std::string csv(const ConvergenceReport& r) {
  std::ostringstream out;
  write_convergence_csv(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("averaged drift of a state-independent drift is the drift") {
  const auto model = make_model("constant-drift", {{"c", 2.0}}, "reset_example232");
  for (double x : {-1.0, 0.0, 2.5}) CHECK(averaged_drift(model, point(x), 60)(0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("indicator drift averages to 1 - x") {
  const auto model = make_model("indicator-drift");
  for (double x : {0.1, 0.3, 0.8}) CHECK(std::abs(averaged_drift(model, point(x), 200)(0) - (1 - x)) < 1e-8);
  const auto sym = make_model("indicator-drift", {}, "two_state");
  CHECK(averaged_drift(sym, point(0.4), 2)(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("rk4 on linear fields") {
  const VectorField decay = [](const Point& x) -> Point { return -x; };
  const auto p = solve_averaged_ode(decay, point(1.0), 1.0, 0.01);
  CHECK(std::abs(p.final_value()(0) - std::exp(-1.0)) < 1e-9);
  CHECK(p.times.back() == 1.0);
  CHECK(p.times.size() == 101);
  // Fourth order: halving the step cuts the error by about 16.
  const double e1 = std::abs(solve_averaged_ode(decay, point(1.0), 1.0, 0.2).final_value()(0) - std::exp(-1.0));
  const double e2 = std::abs(solve_averaged_ode(decay, point(1.0), 1.0, 0.1).final_value()(0) - std::exp(-1.0));
  CHECK(e1 / e2 > 8.0);
  CHECK(e1 / e2 < 32.0);
}

TEST_CASE("reference solution of the indicator-drift model matches the closed form") {
  const auto model = make_model("indicator-drift");
  const AveragedSystem sys(model, 200);
  for (double x0 : {0.0, 0.5}) {
    const auto p = solve_averaged_ode(sys, point(x0), 1.0, kReferenceStep);
    CHECK(std::abs(p.final_value()(0) - (1 - std::exp(-1.0) * (1 - x0))) < 1e-6);
  }
}

TEST_CASE("averaged drift inherits Lipschitz regularity from the stationary laws") {
  // |bbar(x) - bbar(y)| <= K1 |x - y| + K2 ||pi^x - pi^y||_var.
  const auto model = make_model("sin-coupled");
  const AveragedSystem sys(model, 60);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const Point x = point(u(rng)), y = point(u(rng));
    const double lhs = (sys.drift_bar(x) - sys.drift_bar(y)).norm();
    const double tv = total_variation(sys.measure(x), sys.measure(y));
    CHECK(lhs <= model.coefficients.k1 * (x - y).norm() + model.coefficients.k2 * tv + 1e-12);
  }
}

TEST_CASE("averaged drift difference quotients respect the fitted ergodic constants") {
  // |bbar(x) - bbar(y)| / |x - y| <= K1 + 2 K3 c1 / lambda1, with 20% slack.
  const auto model = make_model("sin-coupled");
  const auto& f = model.generator;
  std::vector<double> times;
  for (int k = 1; k <= 60; ++k) times.push_back(0.25 * k);
  double c1 = 0.0, lambda1 = 1e300;
  for (double x : {-3.0, -1.5, 0.0, 1.5, 3.0}) {
    const auto fit = fit_ergodic_rate(f, point(x), 60, times);
    c1 = std::max(c1, fit.c);
    lambda1 = std::min(lambda1, fit.lambda);
  }
  REQUIRE(lambda1 > 0.0);
  const double bound = 1.2 * (model.coefficients.k1 + 2 * *f.lipschitz_k3() * c1 / lambda1);
  const AveragedSystem sys(model, 60);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double x = u(rng), y = u(rng);
    worst = std::max(worst, std::abs(sys.drift_bar(point(x))(0) - sys.drift_bar(point(y))(0)) / std::abs(x - y));
  }
  CHECK(worst <= bound);
}

TEST_CASE("averaged drift is a convex combination of the frozen drifts") {
  const auto model = make_model("sin-coupled");
  for (double x : {-2.0, 0.0, 1.3}) {
    const double b = averaged_drift(model, point(x), 60)(0);
    CHECK(b >= std::tanh(x) + 1.0 / 60 - 1e-12);
    CHECK(b <= std::tanh(x) + 1.0 + 1e-12);
  }
}

TEST_CASE("averaged drift is stable under enlarging the truncation") {
  const auto model = make_model("sin-coupled");
  for (double x : {-1.0, 0.7}) {
    const double a = averaged_drift(model, point(x), 100)(0);
    const double b = averaged_drift(model, point(x), 200)(0);
    CHECK(std::abs(a - b) < 1e-10);
  }
}

TEST_CASE("truncation error of the averaged drift is bounded by the tail mass") {
  const auto model = make_model("sin-coupled");
  for (double x : {-1.0, 0.7}) {
    const auto pi = invariant_measure(truncate(model.generator, point(x), 40));
    double tail = 0.0;
    for (State i = 21; i <= 40; ++i) tail += pi.prob(i);
    const double d = std::abs(averaged_drift(model, point(x), 20)(0) - averaged_drift(model, point(x), 40)(0));
    CHECK(tail > 0.0);
    CHECK(d <= model.coefficients.k2 * tail + 1e-15);
  }
}

TEST_CASE("quantized cache") {
  const auto model = make_model("sin-coupled");
  const AveragedSystem cached(model, 60, PiCache::quantized), plain(model, 60);
  const double a = cached.drift_bar(point(0.3))(0);
  (void)cached.drift_bar(point(0.3 + 1e-9));
  CHECK(cached.cached_entries() == 1);
  CHECK(cached.measure(point(0.3)).weights() == cached.measure(point(0.3 + 1e-9)).weights());
  CHECK(std::abs(a - plain.drift_bar(point(0.3))(0)) < 1e-5);
  CHECK(plain.cached_entries() == 0);
  const AveragedSystem copy = cached;
  (void)copy.drift_bar(point(0.9));
  CHECK(cached.cached_entries() == 2);
}

TEST_CASE("experiments on models with a state-independent drift and no noise") {
  const auto model = make_model("constant-drift", {{"c", 0.7}, {"x0", 0.2}});
  ExperimentSettings s;
  s.replicates = 100;
  s.window = 2;
  s.seed = 5;
  const auto l1 = l1_error_experiment(model, {{0.1, 0.1}, {0.05, 0.02}}, s);
  REQUIRE(l1.cells.size() == 2);
  CHECK(l1.reference(0) == doctest::Approx(0.9).epsilon(1e-12));
  for (const auto& c : l1.cells) {
    CHECK(c.kind == "L1");
    CHECK(c.mean_error <= 1e-12);
    CHECK(c.replicates == 100);
  }
  const auto weak = weak_error_experiment(model, {test_function("const")}, {{0.1, 0.1}}, s);
  REQUIRE(weak.cells.size() == 1);
  CHECK(weak.cells[0].mean_error == 0.0);
  CHECK(weak.cells[0].std_error == 0.0);
}

TEST_CASE("convergence CSV and determinism") {
  const auto model = make_model("sin-coupled");
  ExperimentSettings s;
  s.replicates = 100;
  s.window = 30;
  s.seed = 11;
  const std::vector<std::pair<double, double>> grid{{0.2, 0.2}, {0.1, 0.1}};
  const auto a = csv(l1_error_experiment(model, grid, s));
  const auto before = thread_count();
  set_thread_count(before == 1 ? 3 : 1);
  const auto b = csv(l1_error_experiment(model, grid, s));
  set_thread_count(before);
  CHECK(a == b);
  CHECK(a.rfind("eps,alpha,kind,testfn,mean_error,std_error,replicates\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 3);
  CHECK(a.find("0.2,0.2,L1,,") != std::string::npos);
}

TEST_CASE("experiment preconditions") {
  const auto model = make_model("sin-coupled");
  ExperimentSettings s;
  s.replicates = 99;
  CHECK_THROWS_AS(l1_error_experiment(model, {{0.1, 0.1}}, s), Error);
  s.replicates = 1;
  CHECK_THROWS_AS(weak_error_experiment(model, {test_function("tanh")}, {{0.1, 0.1}}, s), Error);
  CHECK_THROWS_AS(test_function("nope"), Error);
  CHECK(experiment_step(0.2) == doctest::Approx(std::min(0.01, std::pow(0.2, 0.75) / 10)));
}

TEST_CASE("clipped identity: finest weak error is explained by the Euler bias") {
  // Separate single-cell runs with one seed share their random numbers, so
  // the eps = 0 run measures the discretization bias of the finest cell.
  const auto model = make_model("indicator-drift");
  ExperimentSettings s;
  s.replicates = kDefaultReplicates;
  s.window = 200;
  s.seed = 17;
  const auto fn = test_function("clip");
  const auto fine = weak_error_experiment(model, {fn}, {{0.02, 0.02}}, s).cells.at(0);
  const auto control = weak_error_experiment(model, {fn}, {{0.0, 0.02}}, s).cells.at(0);
  const double corrected = fine.signed_error - control.signed_error;
  CHECK(std::abs(corrected) <= 3 * std::hypot(fine.std_error, control.std_error));
}
