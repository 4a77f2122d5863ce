#include "twoscale/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "twoscale/error.hpp"

namespace twoscale {

namespace {

double param(const ParamMap& defaults, const ParamMap& given, const std::string& key) {
  if (auto it = given.find(key); it != given.end()) return it->second;
  return defaults.at(key);
}

void reject_unknown(const ParamMap& known, const ParamMap& given, const std::string& what,
                    const ParamMap& also_allowed = {}) {
  for (const auto& [key, value] : given) {
    (void)value;
    if (!known.contains(key) && !also_allowed.contains(key))
      fail(ErrorKind::invalid_argument, what + ": unknown parameter '" + key + "'");
  }
}

double norm_of(const Point& p) { return p.norm(); }

// --- Birth-death chain with birth rate x and unit death rate. --------------

GeneratorFamily bd_example21(const ParamMap& p) {
  const double lo = param(generator_defaults("bd_example21"), p, "x_min");
  const double hi = param(generator_defaults("bd_example21"), p, "x_max");
  if (!(lo > 0.0 && lo < hi && hi < 1.0))
    fail(ErrorKind::domain_error, "bd_example21: need 0 < x_min < x_max < 1");
  auto birth = [lo, hi](const Point& x) { return std::clamp(x(0), lo, hi); };
  GeneratorDefinition def;
  def.name = "bd_example21";
  def.rate = [birth](State i, State j, const Point& x) {
    if (j == i + 1) return birth(x);
    if (i >= 2 && j + 1 == i) return 1.0;
    return 0.0;
  };
  def.exit_rate = [birth](State i, const Point& x) { return birth(x) + (i >= 2 ? 1.0 : 0.0); };
  def.sup_rate = [](State i, State j) { return (j == i + 1 || (i >= 2 && j + 1 == i)) ? 1.0 : 0.0; };
  def.gamma = [](State) { return 1.0; };
  def.kappa = 2.0;
  def.lipschitz_k3 = 1.0;
  def.max_up_jump = 1;
  return GeneratorFamily(std::move(def));
}

// --- Dense geometric family. -----------------------------------------------

// sup over s >= a of (1 - e^{-s}) e^{-(j-1)s}.
double geom_sup(State j, double a) {
  if (j == 1) return 1.0;
  const double jd = static_cast<double>(j);
  const double s_star = std::log(jd / (jd - 1.0));
  const double s = std::max(s_star, a);
  return (1.0 - std::exp(-s)) * std::exp(-(jd - 1.0) * s);
}

// sum_{k >= first, k != skip} geom_sup(k, a).
double geom_sup_sum(State first, State skip, double a) {
  double total = 0.0;
  State k = first;
  // Below the first k whose unconstrained maximiser lies below a, sum
  // term by term; beyond it the terms are geometric with ratio e^{-a}.
  for (;; ++k) {
    const double kd = static_cast<double>(k);
    if (k >= 2 && std::log(kd / (kd - 1.0)) < a) break;
    if (k != skip) total += geom_sup(k, a);
  }
  total += std::exp(-(static_cast<double>(k) - 1.0) * a);
  if (skip >= k) total -= (1.0 - std::exp(-a)) * std::exp(-(static_cast<double>(skip) - 1.0) * a);
  return total;
}

GeneratorFamily geom_example231(const ParamMap& p) {
  const double a = param(generator_defaults("geom_example231"), p, "decay");
  if (!(a > 0.0)) fail(ErrorKind::domain_error, "geom_example231: decay must be positive");
  auto s_of = [a](const Point& x) { return std::abs(x(0)) + a; };
  GeneratorDefinition def;
  def.name = "geom_example231";
  def.rate = [s_of](State, State j, const Point& x) {
    const double s = s_of(x);
    return (1.0 - std::exp(-s)) * std::exp(-(static_cast<double>(j) - 1.0) * s);
  };
  def.exit_rate = [s_of](State i, const Point& x) {
    const double s = s_of(x);
    return 1.0 - (1.0 - std::exp(-s)) * std::exp(-(static_cast<double>(i) - 1.0) * s);
  };
  def.sup_rate = [a](State, State j) { return geom_sup(j, a); };
  def.gamma = [a](State n) { return n == 1 ? geom_sup(2, a) : 1.0; };
  def.tail_sup = [a](State n, std::size_t window) { return geom_sup_sum(window + 1, n, a); };
  def.kappa = geom_sup_sum(1, 0, a);
  const double e = std::exp(-a);
  def.lipschitz_k3 = 2.0 * e / ((1.0 - e) * (1.0 - e));
  return GeneratorFamily(std::move(def));
}

// --- Up-or-reset family. ---------------------------------------------------

GeneratorFamily reset_example232(const ParamMap&) {
  GeneratorDefinition def;
  def.name = "reset_example232";
  // Row 1's "jump to 1" is a self-loop and is discarded.
  def.rate = [](State i, State j, const Point& x) {
    const double s = std::sin(x(0));
    if (j == i + 1) return 2.0 + s;
    if (j == 1 && i >= 2) return 2.0 - s;
    return 0.0;
  };
  def.exit_rate = [](State i, const Point& x) { return i == 1 ? 2.0 + std::sin(x(0)) : 4.0; };
  def.sup_rate = [](State i, State j) { return (j == i + 1 || (j == 1 && i >= 2)) ? 3.0 : 0.0; };
  def.gamma = [](State) { return 3.0; };
  def.kappa = 6.0;
  def.lipschitz_k3 = 2.0;
  def.max_up_jump = 1;
  return GeneratorFamily(std::move(def));
}

// --- Birth-death chain with modulated death rate. --------------------------

GeneratorFamily bd_example233(const ParamMap&) {
  GeneratorDefinition def;
  def.name = "bd_example233";
  def.rate = [](State i, State j, const Point& x) {
    if (j == i + 1) return 1.0;
    if (i >= 2 && j + 1 == i) return 2.0 - 0.5 * std::sin(x(0));
    return 0.0;
  };
  def.exit_rate = [](State i, const Point& x) {
    return 1.0 + (i >= 2 ? 2.0 - 0.5 * std::sin(x(0)) : 0.0);
  };
  def.sup_rate = [](State i, State j) {
    if (j == i + 1) return 1.0;
    if (i >= 2 && j + 1 == i) return 2.5;
    return 0.0;
  };
  def.gamma = [](State n) { return n == 1 ? 1.0 : 2.5; };
  def.kappa = 3.5;
  def.lipschitz_k3 = 0.5;
  def.max_up_jump = 1;
  return GeneratorFamily(std::move(def));
}

GeneratorFamily two_state(const ParamMap& p) {
  const ParamMap d = generator_defaults("two_state");
  const double a = param(d, p, "a");
  const double b = param(d, p, "b");
  const double mod = param(d, p, "mod");
  if (!(a > 0.0 && b > 0.0)) fail(ErrorKind::domain_error, "two_state: rates a, b must be positive");
  if (!(mod >= 0.0 && mod < 1.0)) fail(ErrorKind::domain_error, "two_state: mod must lie in [0, 1)");
  GeneratorDefinition def;
  def.name = "two_state";
  def.state_count = 2;
  def.rate = [a, b, mod](State i, State, const Point& x) {
    return i == 1 ? a * (1.0 + mod * std::sin(x(0))) : b * (1.0 + mod * std::cos(x(0)));
  };
  def.sup_rate = [a, b, mod](State i, State) { return (i == 1 ? a : b) * (1.0 + mod); };
  def.lipschitz_k3 = mod * std::max(a, b);
  return GeneratorFamily(std::move(def));
}

}  // namespace

std::vector<std::string> generator_names() {
  return {"bd_example21", "geom_example231", "reset_example232", "bd_example233", "two_state"};
}

std::vector<std::string> model_names() { return {"indicator-drift", "sin-coupled", "constant-drift"}; }

ParamMap generator_defaults(const std::string& name) {
  if (name == "bd_example21") return {{"x_min", 1e-4}, {"x_max", 1.0 - 1e-4}};
  if (name == "geom_example231") return {{"decay", 1.0}};
  if (name == "reset_example232" || name == "bd_example233") return {};
  if (name == "two_state") return {{"a", 1.0}, {"b", 1.0}, {"mod", 0.0}};
  fail(ErrorKind::unknown_name, "unknown generator '" + name + "'");
}

ParamMap model_defaults(const std::string& name) {
  if (name == "indicator-drift") return {{"s0", 1.0}, {"x0", 0.0}, {"i0", 1.0}};
  if (name == "sin-coupled") return {{"s0", 1.0}, {"x0", 0.0}, {"i0", 1.0}};
  if (name == "constant-drift") return {{"c", 0.0}, {"s0", 0.0}, {"x0", 0.0}, {"i0", 1.0}};
  fail(ErrorKind::unknown_name, "unknown model '" + name + "'");
}

GeneratorFamily make_generator(const std::string& name, const ParamMap& params) {
  const ParamMap defaults = generator_defaults(name);
  reject_unknown(defaults, params, name);
  if (name == "bd_example21") return bd_example21(params);
  if (name == "geom_example231") return geom_example231(params);
  if (name == "reset_example232") return reset_example232(params);
  if (name == "bd_example233") return bd_example233(params);
  return two_state(params);
}

TwoScaleModel make_model(const std::string& name, const ParamMap& params,
                         const std::string& generator) {
  const ParamMap defaults = model_defaults(name);
  std::string gen_name = generator;
  if (gen_name.empty()) {
    if (name == "indicator-drift") gen_name = "bd_example21";
    else if (name == "sin-coupled") gen_name = "reset_example232";
    else gen_name = "two_state";
  }
  const ParamMap gen_defaults = generator_defaults(gen_name);
  reject_unknown(defaults, params, name, gen_defaults);
  ParamMap model_params, gen_params;
  for (const auto& [k, v] : params) (defaults.contains(k) ? model_params : gen_params)[k] = v;

  const double s0 = param(defaults, model_params, "s0");
  const double x0 = param(defaults, model_params, "x0");
  const double i0 = param(defaults, model_params, "i0");
  if (!(s0 >= 0.0)) fail(ErrorKind::domain_error, name + ": s0 must be nonnegative");
  if (!(i0 >= 1.0) || i0 != std::floor(i0)) fail(ErrorKind::domain_error, name + ": i0 must be a positive integer");

  SlowCoefficients coeff;
  if (name == "indicator-drift") {
    coeff.drift = [](const Point&, State i) { return point(i == 1 ? 1.0 : 0.0); };
    coeff.diffusion = [s0](const Point&, State) { return Eigen::MatrixXd::Constant(1, 1, s0); };
    coeff.k1 = 0.0;
    coeff.k2 = std::max(1.0, s0);
  } else if (name == "sin-coupled") {
    coeff.drift = [](const Point& x, State i) {
      return point(std::tanh(x(0)) + 1.0 / static_cast<double>(i));
    };
    coeff.diffusion = [s0](const Point& x, State) {
      return Eigen::MatrixXd::Constant(1, 1, s0 / (1.0 + x(0) * x(0)));
    };
    // sup |d/dx 1/(1+x^2)| = 3 sqrt(3) / 8.
    coeff.k1 = 1.0 + s0 * 3.0 * std::sqrt(3.0) / 8.0;
    coeff.k2 = std::max(2.0, s0);
  } else {
    const double c = param(defaults, model_params, "c");
    coeff.drift = [c](const Point&, State) { return point(c); };
    coeff.diffusion = [s0](const Point&, State) { return Eigen::MatrixXd::Constant(1, 1, s0); };
    coeff.k1 = 0.0;
    coeff.k2 = std::max(std::abs(c), s0);
  }

  TwoScaleModel model{name, std::move(coeff), make_generator(gen_name, gen_params), point(x0),
                      static_cast<State>(i0)};
  if (!model.generator.contains(model.i0))
    fail(ErrorKind::domain_error, name + ": i0 outside the generator's state space");
  return model;
}

ConditionReport check_generator_bounds(const GeneratorFamily& family, std::span<const Point> xs,
                                       std::size_t window) {
  ConditionReport r;
  const std::size_t m = family.window_size(window);
  for (const Point& x : xs) {
    for (State i = 1; i <= m; ++i) {
      double row = 0.0;
      for (State j = 1; j <= m; ++j) {
        if (i == j) continue;
        const double q = family.rate(i, j, x);
        row += q;
        if (q > family.gamma(i) * (1.0 + 1e-12)) {
          r.ok = false;
          r.detail = "gamma_" + std::to_string(i) + " does not dominate";
        }
        if (q > family.sup_rate(i, j) * (1.0 + 1e-12)) {
          r.ok = false;
          r.detail = "sup_rate(" + std::to_string(i) + "," + std::to_string(j) + ") violated";
        }
      }
      row += family.tail_rate(i, x, m);
      r.worst = std::max(r.worst, row);
      if (row > family.kappa() * (1.0 + 1e-12)) {
        r.ok = false;
        r.detail = "row sum exceeds kappa at state " + std::to_string(i);
      }
    }
    if (!truncate(family, x, window).is_irreducible()) {
      r.ok = false;
      r.detail = "truncation is reducible";
    }
  }
  return r;
}

ConditionReport check_generator_lipschitz(const GeneratorFamily& family,
                                          std::span<const std::pair<Point, Point>> pairs,
                                          std::size_t window) {
  ConditionReport r;
  if (!family.lipschitz_k3()) {
    r.ok = false;
    r.detail = "no declared K3";
    return r;
  }
  const double k3 = *family.lipschitz_k3();
  for (const auto& [x, y] : pairs) {
    const double dist = norm_of(x - y);
    if (dist == 0.0) continue;
    const double ratio = ell1_distance(family, x, y, window) / dist;
    r.worst = std::max(r.worst, ratio);
  }
  if (r.worst > k3 * (1.0 + 1e-6)) {
    r.ok = false;
    std::ostringstream os;
    os << "sampled l1 quotient " << r.worst << " exceeds K3 = " << k3;
    r.detail = os.str();
  }
  return r;
}

ConditionReport check_coefficient_bounds(const SlowCoefficients& coefficients,
                                         std::span<const Point> xs, std::span<const State> states) {
  ConditionReport r;
  for (State i : states) {
    for (std::size_t a = 0; a < xs.size(); ++a) {
      const Point b = coefficients.drift(xs[a], i);
      const Eigen::MatrixXd s = coefficients.diffusion(xs[a], i);
      const double sup = std::max(b.norm(), s.norm());
      r.worst = std::max(r.worst, sup);
      if (sup > coefficients.k2 * (1.0 + 1e-12)) {
        r.ok = false;
        r.detail = "sup bound K2 exceeded";
      }
      if (a == 0) continue;
      const double dist = (xs[a] - xs[a - 1]).norm();
      if (dist == 0.0) continue;
      const double quotient = ((b - coefficients.drift(xs[a - 1], i)).norm() +
                               (s - coefficients.diffusion(xs[a - 1], i)).norm()) /
                              dist;
      if (quotient > coefficients.k1 * (1.0 + 1e-6)) {
        r.ok = false;
        r.detail = "Lipschitz bound K1 exceeded";
      }
    }
  }
  return r;
}

}  // namespace twoscale
