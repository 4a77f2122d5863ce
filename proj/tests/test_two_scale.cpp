#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "twoscale/chain_core.hpp"
#include "twoscale/error.hpp"
#include "twoscale/models.hpp"
#include "twoscale/parallel.hpp"
#include "twoscale/skorokhod.hpp"
#include "twoscale/two_scale.hpp"

using namespace twoscale;

namespace {

SimulationSettings settings(double eps, double alpha, double T, std::uint64_t seed = 1) {
  SimulationSettings s;
  s.eps = eps;
  s.alpha = alpha;
  s.T = T;
  s.window = 60;
  s.seed = seed;
  return s;
}

std::pair<double, double> mean_se(const std::vector<double>& v) {
  double m = 0;
  for (double a : v) m += a;
  m /= double(v.size());
  double ss = 0;
  for (double a : v) ss += (a - m) * (a - m);
  return {m, std::sqrt(ss / double(v.size() - 1) / double(v.size()))};
}

}  // namespace

TEST_CASE("no drift, no noise: X stays put") {
  const auto model = make_model("constant-drift", {{"c", 0.0}, {"x0", 0.7}});
  const auto p = simulate_two_scale(model, settings(0.3, 0.01, 1.0));
  for (const auto& x : p.x) CHECK(x(0) == 0.7);
}

TEST_CASE("constant drift moves linearly") {
  const auto model = make_model("constant-drift", {{"c", 1.5}, {"x0", -0.2}});
  const auto p = simulate_two_scale(model, settings(0.4, 0.02, 2.0));
  CHECK(p.final_x()(0) == doctest::Approx(-0.2 + 3.0).epsilon(1e-13));
  CHECK(p.times.back() == 2.0);
}

TEST_CASE("grid, jump log and recorded states are consistent") {
  const auto model = make_model("sin-coupled");
  auto s = settings(0.1, 0.05, 1.0);
  s.dt = 0.003;
  const auto p = simulate_two_scale(model, s);
  CHECK(p.dt <= 0.003);
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    CHECK(p.times[k + 1] - p.times[k] <= 0.003 + 1e-15);
    CHECK(p.y[k] == p.jumps.state_at(p.times[k]));
  }
  for (const auto& j : p.jumps.jumps) CHECK(j.from != j.to);
}

TEST_CASE("step size guard") {
  const auto model = make_model("sin-coupled");
  auto s = settings(0.1, 0.01, 1.0);
  s.dt = 0.002;
  CHECK_THROWS_AS(simulate_two_scale(model, s), Error);
  try {
    simulate_two_scale(model, s);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::step_size_rejected);
  }
  s.allow_large_step = true;
  CHECK_NOTHROW(simulate_two_scale(model, s));
  s.dt.reset();
  s.allow_large_step = false;
  CHECK(resolve_grid(s).first == doctest::Approx(0.0005));
}

TEST_CASE("non-finite slow state is reported") {
  const auto model = make_model("constant-drift", {{"c", 1.7e308}, {"x0", 1.7e308}});
  auto s = settings(0.0, 1.0, 1.0);
  try {
    simulate_two_scale(model, s);
    FAIL("expected numerical failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numerical_failure);
  }
}

TEST_CASE("mean jump count of the reset chain matches its stationary jump rate") {
  // At x = 0: pi_1 = 1/2 with exit rate 2, other states exit at rate 4, so
  // jumps occur at mean rate 3/alpha once stationary.
  const auto model = make_model("constant-drift", {{"c", 0.0}, {"s0", 0.0}}, "reset_example232");
  const double alpha = 0.01;
  const auto family_chain = truncate(model.generator, point(0.0), 60);
  const auto counts = parallel_map<double>(1000, [&](std::size_t r) {
    auto s = settings(0.0, alpha, 1.0, 8);
    s.replicate = r;
    return double(simulate_two_scale(model, s).jumps.jumps.size());
  });
  const auto [mean, se] = mean_se(counts);
  // Exact expectation from i0 = 1: (1/alpha) int_0^1 sum_i P_s(1,i) q_i ds.
  double expect = 0.0;
  const int n = 200;
  for (int k = 0; k <= n; ++k) {
    const double t = double(k) / n / alpha;
    const auto p = transition_kernel(family_chain, t, 1);
    double rate = 0;
    for (State i = 1; i <= 60; ++i) rate += p.prob(i) * -family_chain.rates()(i - 1, i - 1);
    const double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
    expect += w * rate;
  }
  expect *= (1.0 / n) / 3.0 / alpha;
  CHECK(expect == doctest::Approx(300.0).epsilon(0.01));
  CHECK(std::abs(mean - expect) < 3 * se + 1e-9);
}

TEST_CASE("slow marginal is Gaussian with the Euler variance") {
  const auto model = make_model("constant-drift", {{"c", 0.0}, {"s0", 0.8}});
  const double eps = 0.25, T = 1.0;
  const int reps = 4000;
  const auto xs = parallel_map<double>(reps, [&](std::size_t r) {
    auto s = settings(eps, 0.1, T, 21);
    s.replicate = r;
    return simulate_two_scale(model, s).final_x()(0);
  });
  const auto [mean, se] = mean_se(xs);
  double var = 0;
  for (double v : xs) var += (v - mean) * (v - mean);
  var /= reps - 1;
  const double target = eps * 0.64 * T;
  CHECK(std::abs(mean) < 3 * se);
  CHECK(std::abs(var - target) < 3 * target * std::sqrt(2.0 / (reps - 1)));
}

TEST_CASE("fast occupation fractions follow the averaged kernel") {
  const auto model = make_model("constant-drift", {{"c", 0.0}, {"s0", 0.0}, {"x0", 0.4}},
                                "reset_example232");
  const double alpha = 0.02, T = 50 * alpha;
  const int reps = 400;
  const auto fractions = parallel_map<double>(reps, [&](std::size_t r) {
    auto s = settings(0.0, alpha, T, 3);
    s.replicate = r;
    const auto p = simulate_two_scale(model, s);
    // Time in state 1 from the skeleton.
    double in1 = 0, prev = 0;
    State cur = p.jumps.initial;
    for (const auto& j : p.jumps.jumps) {
      if (cur == 1) in1 += j.time - prev;
      prev = j.time;
      cur = j.to;
    }
    if (cur == 1) in1 += T - prev;
    return in1 / T;
  });
  const auto [mean, se] = mean_se(fractions);
  // Expected fraction: (1/T) int_0^T P_{s/alpha}(1, 1) ds by Simpson.
  const auto chain = truncate(model.generator, point(0.4), 60);
  const auto pi = invariant_measure(chain);
  double expect = 0;
  const int n = 400;
  for (int k = 0; k <= n; ++k) {
    const double s = T * k / n;
    const double w = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
    expect += w * transition_kernel(chain, s / alpha, 1).prob(1);
  }
  expect /= 3.0 * n;
  CHECK(std::abs(mean - expect) < 3 * se);
  CHECK(std::abs(mean - pi.prob(1)) < 0.05);
}

TEST_CASE("jump counts are invariant under joint rescaling of alpha and T") {
  const auto model = make_model("constant-drift", {{"c", 0.0}, {"s0", 0.0}}, "two_state");
  auto count = [&](double alpha, double T, std::uint64_t seed) {
    return parallel_map<double>(2000, [&](std::size_t r) {
      auto s = settings(0.0, alpha, T, seed);
      s.replicate = r;
      return double(simulate_two_scale(model, s).jumps.jumps.size());
    });
  };
  const auto [m1, s1] = mean_se(count(0.1, 2.0, 40));
  const auto [m2, s2] = mean_se(count(0.01, 0.2, 41));
  CHECK(std::abs(m1 - m2) < 3 * std::hypot(s1, s2));
}

TEST_CASE("coupled systems share the Brownian increments") {
  const auto a = make_model("sin-coupled", {{"x0", 0.0}});
  const auto b = make_model("sin-coupled", {{"x0", 0.5}});
  auto s = settings(0.1, 0.05, 1.0, 9);
  s.record_noise = true;
  const auto c = simulate_full_coupled(a, b, s);
  REQUIRE(c.first.noise.size() == c.second.noise.size());
  for (std::size_t k = 0; k < c.first.noise.size(); ++k) CHECK(c.first.noise[k] == c.second.noise[k]);
}

TEST_CASE("identical coupled systems give identical paths") {
  const auto a = make_model("sin-coupled");
  const auto c = simulate_full_coupled(a, a, settings(0.1, 0.05, 1.0, 10));
  CHECK(c.occupation == 0.0);
  CHECK(c.first.x == c.second.x);
  CHECK(c.first.y == c.second.y);
}

TEST_CASE("frozen coefficients reduce to the frozen coupling") {
  const auto a = make_model("constant-drift", {{"c", 0.0}, {"s0", 0.0}, {"x0", 0.0}}, "bd_example233");
  const auto b = make_model("constant-drift", {{"c", 0.0}, {"s0", 0.0}, {"x0", 0.1}}, "bd_example233");
  for (std::uint64_t r = 0; r < 30; ++r) {
    auto s = settings(0.0, 1.0, 3.0, 12);
    s.replicate = r;
    const auto full = simulate_full_coupled(a, b, s);
    const auto frozen = simulate_frozen_coupled(a.generator, point(0.0), point(0.1), 1, 3.0, 60, 12, r);
    REQUIRE(full.first.jumps.jumps.size() == frozen.first.jumps.size());
    REQUIRE(full.second.jumps.jumps.size() == frozen.second.jumps.size());
    for (std::size_t k = 0; k < frozen.first.jumps.size(); ++k) {
      CHECK(full.first.jumps.jumps[k].time == frozen.first.jumps[k].time);
      CHECK(full.first.jumps.jumps[k].to == frozen.first.jumps[k].to);
    }
    for (std::size_t k = 0; k < frozen.second.jumps.size(); ++k) {
      CHECK(full.second.jumps.jumps[k].time == frozen.second.jumps[k].time);
      CHECK(full.second.jumps.jumps[k].to == frozen.second.jumps[k].to);
    }
    CHECK(full.occupation == frozen.occupation);
  }
}

TEST_CASE("full coupling respects the integrated rate-distance bound") {
  const auto a = make_model("sin-coupled", {{"x0", 0.0}});
  const auto b = make_model("sin-coupled", {{"x0", 0.1}});
  const int reps = 400;
  const auto runs = parallel_map<std::pair<double, double>>(reps, [&](std::size_t r) {
    auto s = settings(0.05, 0.05, 1.0, 13);
    s.replicate = r;
    const auto c = simulate_full_coupled(a, b, s);
    return std::make_pair(c.occupation, c.ell1_integral);
  });
  std::vector<double> occ, rhs;
  for (const auto& [o, e] : runs) {
    occ.push_back(o);
    rhs.push_back(e);
  }
  const auto [mo, so] = mean_se(occ);
  const auto [me, se] = mean_se(rhs);
  CHECK(mo <= me + 3 * std::hypot(so, se));
}

TEST_CASE("path export") {
  const auto model = make_model("sin-coupled");
  const auto p = simulate_two_scale(model, settings(0.1, 0.1, 0.05, 2));
  std::ostringstream a, b;
  write_path_csv(a, p);
  write_path_csv(b, simulate_two_scale(model, settings(0.1, 0.1, 0.05, 2)));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("t,X_1,Y\n0,0,1\n", 0) == 0);
}
