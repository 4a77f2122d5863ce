#pragma once

// Averaged drift bbar(x) = sum_i b(x, i) pi^x_i, the limiting ODE, and the
// Monte Carlo convergence experiments comparing X^{eps,alpha}_T with it.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "twoscale/models.hpp"

namespace twoscale {

/// Sum_{i <= M} b(x, i) pi_i with pi = invariant_measure(truncate(x, M), 1e-10).
Point averaged_drift(const TwoScaleModel& model, const Point& x, std::size_t window);

enum class PiCache {
  none,
  /// Measures are computed and stored at x rounded to a 1e-6 grid.
  quantized,
};

inline constexpr double kPiCacheResolution = 1e-6;

/// bbar on a fixed truncation, optionally memoizing pi^x. Copies share the
/// cache; concurrent use is safe.
class AveragedSystem {
 public:
  AveragedSystem(const TwoScaleModel& model, std::size_t window, PiCache cache = PiCache::none);

  Point drift_bar(const Point& x) const;
  /// The stationary law used for x (after quantization when caching).
  ProbabilityVector measure(const Point& x) const;

  std::size_t window() const noexcept { return window_; }
  std::size_t dimension() const noexcept { return model_.coefficients.dimension; }
  std::size_t cached_entries() const;

 private:
  struct Cache {
    mutable std::shared_mutex mutex;
    std::map<std::vector<std::int64_t>, ProbabilityVector> entries;
  };
  TwoScaleModel model_;
  std::size_t window_;
  PiCache policy_;
  std::shared_ptr<Cache> cache_;
};

struct OdePath {
  std::vector<double> times;
  std::vector<Point> values;
  const Point& final_value() const { return values.back(); }
};

using VectorField = std::function<Point(const Point&)>;

/// Classical RK4 on a uniform grid with step T/ceil(T/dt).
OdePath solve_averaged_ode(const VectorField& field, const Point& x0, double T, double dt);
OdePath solve_averaged_ode(const AveragedSystem& system, const Point& x0, double T, double dt);

/// Step used for the reference solution.
inline constexpr double kReferenceStep = 1e-4;

struct TestFunction {
  std::string id;
  std::function<double(const Point&)> f;
};

/// Built-ins: "const" (1), "tanh" (tanh x_1), "clip" (x_1 clipped to [-10, 10]).
TestFunction test_function(const std::string& id);

struct ConvergenceCell {
  double eps = 0.0;
  double alpha = 0.0;
  std::string kind;
  std::string testfn;
  double mean_error = 0.0;
  double std_error = 0.0;
  std::size_t replicates = 0;
  /// Weak kind only: mean f(X_T) - f(Xbar_T) with its sign.
  double signed_error = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceCell> cells;
  Point reference;
};

struct ExperimentSettings {
  double T = 1.0;
  std::size_t replicates = 400;
  std::size_t window = 100;
  std::uint64_t seed = 0;
  /// Time step as a function of alpha; empty uses min(alpha/20, alpha^{3/4}/10).
  std::function<double(double)> step;
};

inline constexpr std::size_t kDefaultReplicates = 400;

double experiment_step(double alpha);

/// Per cell: mean and standard error of |X_T - Xbar_T| over replicates.
ConvergenceReport l1_error_experiment(const TwoScaleModel& model,
                                      const std::vector<std::pair<double, double>>& grid,
                                      const ExperimentSettings& settings);

/// Per cell and test function: |mean f(X_T) - f(Xbar_T)| and the standard
/// error of the mean.
ConvergenceReport weak_error_experiment(const TwoScaleModel& model,
                                        const std::vector<TestFunction>& functions,
                                        const std::vector<std::pair<double, double>>& grid,
                                        const ExperimentSettings& settings);

/// CSV with columns eps,alpha,kind,testfn,mean_error,std_error,replicates.
void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);

}  // namespace twoscale
