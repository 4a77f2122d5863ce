#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "twoscale/chain_core.hpp"
#include "twoscale/error.hpp"
#include "twoscale/models.hpp"
#include "twoscale/skorokhod.hpp"

using namespace twoscale;

TEST_CASE("layouts of the birth-death family") {
  const auto f = make_generator("bd_example21");
  const double z = 0.3;
  const auto l1 = interval_layout(f, point(z), 1, 50);
  REQUIRE(l1.entries.size() == 1);
  CHECK(l1.entries[0].destination == 2);
  CHECK(l1.entries[0].lo == 0.0);
  CHECK(l1.entries[0].hi == doctest::Approx(z));
  CHECK(l1.dominating_measure == 1.0);

  const auto l2 = interval_layout(f, point(z), 2, 50);
  REQUIRE(l2.entries.size() == 2);
  CHECK(l2.entries[0].destination == 1);
  CHECK(l2.entries[0].lo == -1.0);
  CHECK(l2.entries[0].hi == 0.0);
  CHECK(l2.entries[1].destination == 3);
  CHECK(l2.entries[1].lo == 0.0);
  CHECK(l2.entries[1].hi == doctest::Approx(z));
}

TEST_CASE("absorbing state has an empty layout") {
  Eigen::MatrixXd q(2, 2);
  q << -1, 1, 0, 0;
  const auto f = interpolated_family("absorbing", q, q);
  const auto l = interval_layout(f, point(0.5), 2, 2);
  CHECK(l.entries.empty());
  CHECK(l.dominating_measure == 0.0);
}

TEST_CASE("jump destinations are half-open") {
  const auto f = make_generator("bd_example21");
  const auto l = interval_layout(f, point(0.25), 1, 10);
  CHECK(jump_destination(l, 0.1) == std::optional<State>(2));
  CHECK_FALSE(jump_destination(l, 0.5).has_value());
  CHECK_FALSE(jump_destination(l, l.entries[0].hi).has_value());
  CHECK(jump_destination(l, 0.0) == std::optional<State>(2));
  CHECK_FALSE(jump_destination(l, -0.1).has_value());
}

TEST_CASE("layout invariants for every built-in family") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ux(-3.0, 3.0), u01(0.0, 1.0);
  for (const auto& name : generator_names()) {
    CAPTURE(name);
    const auto f = make_generator(name);
    const std::size_t window = 30;
    const MarkSpace space(f, window);
    const std::size_t m = f.window_size(window);
    for (int trial = 0; trial < 40; ++trial) {
      const Point x = point(name == "bd_example21" ? u01(rng) : ux(rng));
      const State n = 1 + static_cast<State>(rng() % m);
      const auto l = interval_layout(f, x, n, window);
      const double g = f.gamma(n);
      double total = 0.0;
      for (std::size_t e = 0; e < l.entries.size(); ++e) {
        const auto& en = l.entries[e];
        const State k = en.destination;
        if (e > 0) CHECK(l.entries[e - 1].hi <= en.lo);
        total += en.hi - en.lo;
        if (en.lo >= static_cast<double>(m - n) * g && k == m && n < m) continue;  // overflow slot
        CHECK(en.hi - en.lo == doctest::Approx(f.rate(n, k, x)).epsilon(1e-14));
        const double slot = k > n ? double(k - n - 1) * g : double(k) * g - double(n) * g;
        CHECK(en.lo >= slot - 1e-12);
        CHECK(en.hi <= slot + g + 1e-12);
      }
      CHECK(total == doctest::Approx(f.exit_rate(n, x) - (n == m ? f.tail_rate(n, x, m) : 0.0))
                         .epsilon(1e-10));
      CHECK(l.dominating_measure <= f.kappa() + (n < m ? f.tail_sup(n, m) : 0.0) + 1e-12);
      CHECK(l.dominating_measure == doctest::Approx(space.dominating(n).measure()).epsilon(1e-12));
      // The fast locator agrees with the materialized layout.
      const auto& set = space.dominating(n);
      for (int s = 0; s < 200; ++s) {
        const double mark = set.measure() > 0 ? set.sample(u01(rng)) : 0.0;
        CHECK(space.locate(n, x, mark) == jump_destination(l, mark));
      }
    }
  }
}

TEST_CASE("stream inter-event times are exponential with the window measure") {
  const auto f = make_generator("reset_example232");
  const MarkSpace space(f, 20);
  MarkedPointDriver driver(space, 1.0, 99);
  const State n = 5;
  const double rate = space.dominating(n).measure();
  CHECK(rate == doctest::Approx(6.0));
  std::vector<double> gaps;
  double t = 0.0;
  for (int k = 0; k < 20000; ++k) {
    const auto ev = driver.next_event(n, t);
    REQUIRE(ev.has_value());
    gaps.push_back(ev->time - t);
    t = ev->time;
  }
  std::sort(gaps.begin(), gaps.end());
  double ks = 0.0;
  const double nn = double(gaps.size());
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double cdf = 1 - std::exp(-rate * gaps[i]);
    ks = std::max({ks, std::abs(cdf - i / nn), std::abs(cdf - (i + 1) / nn)});
  }
  // 0.1% critical value of the Kolmogorov distribution.
  CHECK(ks < 1.95 / std::sqrt(nn));
}

TEST_CASE("streams depend only on the key") {
  const auto f = make_generator("bd_example233");
  const MarkSpace space(f, 20);
  MarkedPointDriver a(space, 2.0, 5), b(space, 2.0, 5), c(space, 2.0, 6);
  // Query b in a different order first; answers must not change.
  (void)b.next_event(7, 30.0);
  for (double t : {0.0, 0.5, 3.0, 12.25}) {
    const auto ea = a.next_event(3, t), eb = b.next_event(3, t), ec = c.next_event(3, t);
    CHECK(ea->time == eb->time);
    CHECK(ea->mark == eb->mark);
    CHECK(ea->time != ec->time);
  }
}

TEST_CASE("occupation statistic from jump skeletons") {
  JumpPath a{1, {{0.2, 1, 2}, {0.7, 2, 1}}};
  JumpPath b{1, {{0.5, 1, 2}}};
  // Apart on [0.2, 0.5) and [0.7, 1).
  CHECK(occupation_statistic(a, b, 1.0) == doctest::Approx(0.6));
  CHECK(occupation_statistic(a, a, 1.0) == 0.0);
  CHECK(a.state_at(0.1) == 1);
  CHECK(a.state_at(0.2) == 2);
  CHECK(a.state_at(0.7) == 1);
}

TEST_CASE("identical parameters give identical paths") {
  const auto f = make_generator("reset_example232");
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto p = simulate_frozen_coupled(f, point(0.4), point(0.4), 1, 5.0, 40, 1234, r);
    CHECK(p.occupation == 0.0);
    REQUIRE(p.first.jumps.size() == p.second.jumps.size());
    for (std::size_t k = 0; k < p.first.jumps.size(); ++k) {
      CHECK(p.first.jumps[k].time == p.second.jumps[k].time);
      CHECK(p.first.jumps[k].to == p.second.jumps[k].to);
    }
  }
}

TEST_CASE("fixed seed reproduces paths bit for bit") {
  const auto f = make_generator("bd_example233");
  const auto a = simulate_frozen_coupled(f, point(0.0), point(1.0), 2, 3.0, 50, 77, 3);
  const auto b = simulate_frozen_coupled(f, point(0.0), point(1.0), 2, 3.0, 50, 77, 3);
  std::ostringstream sa, sb;
  const CoupledChainPaths ra[] = {a}, rb[] = {b};
  write_jump_log(sa, ra);
  write_jump_log(sb, rb);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("replicate,time,chain_id,from_state,to_state\n", 0) == 0);
}

TEST_CASE("per-jump transition frequencies match the rates") {
  const auto f = make_generator("reset_example232");
  const MarkSpace space(f, 60);
  const Point x = point(0.7);
  MarkedPointDriver driver(space, 1.0, 4242);
  DrivenChain chain(space, driver, 1);
  std::vector<JumpEvent> log;
  chain.advance(20000.0, x, &log);
  std::map<State, std::map<State, double>> counts;
  for (const auto& j : log) counts[j.from][j.to] += 1;
  for (State n : {2u, 3u}) {
    double total = 0;
    for (const auto& [k, c] : counts[n]) total += c;
    REQUIRE(total >= 1e4);
    const double p_up = f.rate(n, n + 1, x) / f.exit_rate(n, x);
    const double se = std::sqrt(p_up * (1 - p_up) / total);
    CHECK(std::abs(counts[n][n + 1] / total - p_up) < 3 * se);
    CHECK(counts[n][1] + counts[n][n + 1] == total);
  }
}

TEST_CASE("two-state frozen chain: law of Y_1 matches the kernel") {
  const auto f = make_generator("two_state", {{"a", 1.3}, {"b", 0.6}, {"mod", 0.5}});
  const Point x = point(0.8);
  const MarkSpace space(f, 2);
  const int reps = 10000;
  int in_two = 0;
  for (int r = 0; r < reps; ++r) {
    const auto p = simulate_frozen_coupled(space, x, x, 1, 1.0, 555, r);
    in_two += p.first.state_at(1.0) == 2;
  }
  const auto kernel = transition_kernel(truncate(f, x, 2), 1.0, 1);
  const double p2 = kernel.prob(2);
  const double se = std::sqrt(p2 * (1 - p2) / reps);
  CHECK(std::abs(in_two / double(reps) - p2) < 3 * se);
}

TEST_CASE("coupling report") {
  const auto f = make_generator("bd_example233");
  std::vector<std::pair<Point, Point>> pairs{{point(0.3), point(0.3)},
                                             {point(0.0), point(0.2)},
                                             {point(0.0), point(0.1)},
                                             {point(0.0), point(0.05)}};
  const auto rows = coupling_bound_report(f, pairs, 1, 1.0, 60, 2000, 31);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].mean == 0.0);
  CHECK(rows[0].bound == 0.0);
  CHECK_FALSE(rows[0].flagged);
  for (std::size_t k = 1; k < 4; ++k) {
    CHECK_FALSE(rows[k].flagged);
    CHECK(rows[k].ci_lo <= rows[k].bound);
    CHECK(rows[k].bound == doctest::Approx(0.5 * std::abs(std::sin(pairs[k].second(0)))));
  }
  // Shrinking |x - y| does not increase the statistic beyond CI noise.
  for (std::size_t k = 2; k < 4; ++k) CHECK(rows[k].ci_lo <= rows[k - 1].ci_hi);
  REQUIRE_THROWS_AS(coupling_bound_report(f, pairs, 1, 1.0, 60, 99, 31), Error);
}
