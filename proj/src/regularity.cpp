#include "twoscale/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "twoscale/csv.hpp"
#include "twoscale/error.hpp"
#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) fail(ErrorKind::invalid_argument, "beta must lie in (0, 1]");
}

ProbabilityVector pi_at(const GeneratorFamily& family, const Point& x, std::size_t window) {
  return invariant_measure(truncate(family, x, window));
}

}  // namespace

double pi_distance_ratio(const GeneratorFamily& family, const Point& x, const Point& y,
                         double beta, std::size_t window) {
  check_beta(beta);
  const double gap = (x - y).norm();
  if (!(gap > 0.0)) fail(ErrorKind::invalid_argument, "pi_distance_ratio needs x != y");
  const double tv = total_variation(pi_at(family, x, window), pi_at(family, y, window));
  return tv / std::pow(gap, beta);
}

double RegularityProbe::max_ratio() const {
  double best = 0.0;
  for (const auto& r : rows) best = std::max(best, r.ratio);
  return best;
}

std::vector<std::pair<Point, Point>> sample_pairs(double lo, double hi, std::size_t count,
                                                  std::uint64_t seed, double min_gap,
                                                  double max_gap) {
  if (!(hi > lo) || !(min_gap > 0.0) || !(max_gap >= min_gap) || max_gap > hi - lo)
    fail(ErrorKind::invalid_argument, "sample_pairs: inconsistent range or gap bounds");
  CounterRng rng(derive_key(seed, {static_cast<std::uint64_t>(StreamTag::sampling)}));
  std::vector<std::pair<Point, Point>> pairs;
  pairs.reserve(count);
  const double llo = std::log(min_gap), lhi = std::log(max_gap);
  for (std::size_t k = 0; k < count; ++k) {
    const double x = lo + (hi - lo) * rng.uniform();
    const double gap = std::exp(llo + (lhi - llo) * rng.uniform());
    double y = rng.uniform() < 0.5 ? x - gap : x + gap;
    if (y < lo || y > hi) y = 2.0 * x - y;
    pairs.emplace_back(point(x), point(y));
  }
  return pairs;
}

RegularityProbe lipschitz_probe(const GeneratorFamily& family,
                                const std::vector<std::pair<Point, Point>>& pairs, double beta,
                                std::size_t window) {
  check_beta(beta);
  auto tvs = parallel_map<double>(pairs.size(), [&](std::size_t k) {
    const auto& [x, y] = pairs[k];
    if (!((x - y).norm() > 0.0)) fail(ErrorKind::invalid_argument, "probe pair with x == y");
    return total_variation(pi_at(family, x, window), pi_at(family, y, window));
  });
  RegularityProbe probe;
  probe.family = family.name();
  probe.window = window;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [x, y] = pairs[k];
    probe.rows.push_back({k, x, y, beta, tvs[k], tvs[k] / std::pow((x - y).norm(), beta)});
  }
  return probe;
}

double geometric_tv(double x, double y, std::size_t terms) {
  double sum = 0.0;
  double px = 1.0 - x, py = 1.0 - y;  // pi_1
  for (std::size_t i = 1; i <= terms; ++i) {
    sum += std::abs(px - py);
    px *= x;
    py *= y;
  }
  const double n = static_cast<double>(terms);
  return sum + (std::pow(x, n) - std::pow(y, n));
}

std::vector<BlowupRow> blowup_table(std::size_t m_max, double beta, std::size_t window) {
  check_beta(beta);
  if (m_max < 2) fail(ErrorKind::invalid_argument, "blowup_table needs m_max >= 2");
  if (window < 60 * m_max)
    fail(ErrorKind::precondition_violation,
         "blowup_table needs M >= 60 m_max (M = " + std::to_string(window) + ")");
  std::vector<BlowupRow> rows;
  for (std::size_t m = 2; m <= m_max; ++m) {
    const double md = static_cast<double>(m);
    const double x = 1.0 - 1.0 / md;
    const double y = (2.0 * md - 2.0) / (2.0 * md - 1.0) * x;
    const double scale = std::pow(std::abs(x - y), beta);
    BlowupRow row;
    row.m = m;
    row.x = x;
    row.y = y;
    row.beta = beta;
    row.tv = geometric_tv(x, y, window);
    row.ratio = row.tv / scale;
    row.lower_bound = (std::pow(x, md) - std::pow(y, md)) / scale;
    rows.push_back(row);
  }
  return rows;
}

void write_probe_csv(std::ostream& out, const RegularityProbe& probe) {
  CsvWriter csv(out);
  csv.header({"pair_id", "x", "y", "beta", "tv", "ratio", "lower_bound"});
  for (const auto& r : probe.rows) {
    csv.cell(static_cast<std::uint64_t>(r.pair_id)).cell(r.x(0)).cell(r.y(0)).cell(r.beta);
    csv.cell(r.tv).cell(r.ratio).cell("");
    csv.end_row();
  }
}

void write_blowup_csv(std::ostream& out, const std::vector<BlowupRow>& rows) {
  CsvWriter csv(out);
  csv.header({"m", "x", "y", "beta", "tv", "ratio", "lower_bound"});
  for (const auto& r : rows) {
    csv.cell(static_cast<std::uint64_t>(r.m)).cell(r.x).cell(r.y).cell(r.beta);
    csv.cell(r.tv).cell(r.ratio).cell(r.lower_bound);
    csv.end_row();
  }
}

}  // namespace twoscale
