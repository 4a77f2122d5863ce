#pragma once

// Built-in generator families and slow-coefficient sets.
//
// Generators (names accepted by make_generator):
//   bd_example21      birth x, death 1 on {1,2,...}; x is clamped to
//                     [x_min, x_max] inside (0, 1)
//   geom_example231   q_ij(x) = (1-e^{-s}) e^{-(j-1)s}, s = |x| + decay
//   reset_example232  q_{i,i+1} = 2 + sin x, q_{i,1} = 2 - sin x
//   bd_example233     birth 1, death 2 - sin(x)/2
//   two_state         q_12 = a(1 + mod sin x), q_21 = b(1 + mod cos x)
//
// Models (names accepted by make_model):
//   indicator-drift   b(x,i) = 1{i=1}, sigma = s0, generator bd_example21
//   sin-coupled       b(x,i) = tanh x + 1/i, sigma = s0/(1+x^2),
//                     generator reset_example232
//   constant-drift    b = c, sigma = s0, any generator (default two_state)

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "twoscale/chain_core.hpp"

namespace twoscale {

using ParamMap = std::map<std::string, double>;

std::vector<std::string> generator_names();
std::vector<std::string> model_names();

/// Parameter keys (with defaults) understood by a generator / model.
ParamMap generator_defaults(const std::string& name);
ParamMap model_defaults(const std::string& name);

GeneratorFamily make_generator(const std::string& name, const ParamMap& params = {});

struct SlowCoefficients {
  std::size_t dimension = 1;
  std::size_t noise_dimension = 1;
  std::function<Point(const Point&, State)> drift;
  /// dimension x noise_dimension matrix.
  std::function<Eigen::MatrixXd(const Point&, State)> diffusion;
  /// Declared Lipschitz constant (drift and diffusion combined).
  double k1 = 0.0;
  /// Declared sup bound, applied to |b| and ||sigma|| separately.
  double k2 = 0.0;
};

struct TwoScaleModel {
  std::string name;
  SlowCoefficients coefficients;
  GeneratorFamily generator;
  Point x0;
  State i0 = 1;
};

/// `generator` overrides the model's default generator family (empty keeps
/// it). Generator parameters are taken from the same map.
TwoScaleModel make_model(const std::string& name, const ParamMap& params = {},
                         const std::string& generator = "");

struct ConditionReport {
  bool ok = true;
  double worst = 0.0;
  std::string detail;
};

/// Rate-bound spot checks on a truncation window: nonnegative off-diagonals, row
/// sums at most kappa, gamma_n dominating, irreducible truncations.
ConditionReport check_generator_bounds(const GeneratorFamily& family, std::span<const Point> xs,
                                       std::size_t window);

/// Sampled Lipschitz check: max ell1_distance(x, y) / |x - y| relative to the declared K3.
ConditionReport check_generator_lipschitz(const GeneratorFamily& family,
                                          std::span<const std::pair<Point, Point>> pairs,
                                          std::size_t window);

/// Coefficient spot checks: |b|, ||sigma|| <= K2 and difference quotients <= K1.
ConditionReport check_coefficient_bounds(const SlowCoefficients& coefficients,
                                         std::span<const Point> xs, std::span<const State> states);

}  // namespace twoscale
