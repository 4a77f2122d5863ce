#pragma once

// Probes of the regularity of x -> pi^x: difference quotients
// ||pi^x - pi^y||_var / |x - y|^beta over sampled pairs, and the divergent
// sequence for the birth-death family where no Hoelder exponent works.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "twoscale/chain_core.hpp"

namespace twoscale {

/// total_variation(pi^x, pi^y) / |x - y|^beta at truncation M.
double pi_distance_ratio(const GeneratorFamily& family, const Point& x, const Point& y,
                         double beta, std::size_t window);

struct ProbeRow {
  std::size_t pair_id = 0;
  Point x;
  Point y;
  double beta = 1.0;
  double tv = 0.0;
  double ratio = 0.0;
};

struct RegularityProbe {
  std::string family;
  std::size_t window = 0;
  std::vector<ProbeRow> rows;

  double max_ratio() const;
};

/// `count` one-dimensional pairs with x uniform on [lo, hi] and |x - y|
/// log-uniform on [min_gap, max_gap] (y kept inside [lo, hi] by reflecting
/// the direction).
std::vector<std::pair<Point, Point>> sample_pairs(double lo, double hi, std::size_t count,
                                                  std::uint64_t seed, double min_gap = 1e-4,
                                                  double max_gap = 1.0);

inline constexpr std::size_t kDefaultProbePairs = 200;

/// Ratios for every pair, evaluated in parallel.
RegularityProbe lipschitz_probe(const GeneratorFamily& family,
                                const std::vector<std::pair<Point, Point>>& pairs, double beta,
                                std::size_t window);

struct BlowupRow {
  std::size_t m = 0;
  double x = 0.0;
  double y = 0.0;
  double beta = 1.0;
  double tv = 0.0;
  double ratio = 0.0;
  double lower_bound = 0.0;
};

/// sum_i |pi^x_i - pi^y_i| for pi^z_i = (1-z) z^{i-1}; the first `terms`
/// summands explicitly plus the exact tail x^terms - y^terms (x > y and
/// terms >= (1-x)/x make every tail summand positive).
double geometric_tv(double x, double y, std::size_t terms);

/// Rows m = 2..m_max for x = 1 - 1/m, y = (2m-2)/(2m-1) x with
/// lower_bound = (x^m - y^m)/|x-y|^beta. Requires M >= 60 m_max.
std::vector<BlowupRow> blowup_table(std::size_t m_max, double beta, std::size_t window);

/// CSV with columns pair_id,x,y,beta,tv,ratio,lower_bound (lower_bound empty).
void write_probe_csv(std::ostream& out, const RegularityProbe& probe);
/// CSV with columns m,x,y,beta,tv,ratio,lower_bound.
void write_blowup_csv(std::ostream& out, const std::vector<BlowupRow>& rows);

}  // namespace twoscale
