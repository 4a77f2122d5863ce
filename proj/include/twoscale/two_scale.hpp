#pragma once

// Simulation of the slow diffusion / fast chain pair
//   dX = b(X, Y) dt + sqrt(eps) sigma(X, Y) dW,   Y jumps at rates q_ij(X)/alpha.
// X uses Euler-Maruyama on a uniform grid. Y is event driven through the
// shared mark streams of skorokhod.hpp, with X frozen at the left end of the
// enclosing step.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "twoscale/models.hpp"
#include "twoscale/skorokhod.hpp"

namespace twoscale {

struct SimulationSettings {
  double eps = 0.01;
  double alpha = 0.01;
  double T = 1.0;
  /// nullopt means alpha / 20.
  std::optional<double> dt;
  std::size_t window = 100;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  /// Accept dt > alpha / 10.
  bool allow_large_step = false;
  /// Keep the Brownian increments in the returned sample.
  bool record_noise = false;
};

inline constexpr double kMaxStepFraction = 0.1;
inline constexpr double kDefaultStepFraction = 0.05;

struct PathSample {
  std::vector<double> times;
  /// X at each grid time.
  std::vector<Point> x;
  /// Y at each grid time (the state holding on [t_k, t_{k+1})).
  std::vector<State> y;
  JumpPath jumps;
  /// Increments dW per step when requested.
  std::vector<Eigen::VectorXd> noise;
  double eps = 0.0;
  double alpha = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;

  const Point& final_x() const { return x.back(); }
};

/// Resolved step and step count for the settings (uniform grid, h <= dt).
std::pair<double, std::size_t> resolve_grid(const SimulationSettings& settings);

PathSample simulate_two_scale(const TwoScaleModel& model, const SimulationSettings& settings);

/// Same, with a prebuilt mark space for model.generator (replicate loops).
PathSample simulate_two_scale(const TwoScaleModel& model, const MarkSpace& space,
                              const SimulationSettings& settings);

struct CoupledPathSample {
  PathSample first;
  PathSample second;
  /// (1/T) * time the two fast chains spend in different states.
  double occupation = 0.0;
  /// Left Riemann sum of ||Q(X_s) - Q(X~_s)||_l1 over the grid.
  double ell1_integral = 0.0;
};

/// Runs both systems on the same Brownian increments and mark streams. The
/// models must share the generator family (the same parameters).
CoupledPathSample simulate_full_coupled(const TwoScaleModel& first, const TwoScaleModel& second,
                                        const SimulationSettings& settings);

/// CSV with columns t,X_1..X_d,Y.
void write_path_csv(std::ostream& out, const PathSample& path);

}  // namespace twoscale
