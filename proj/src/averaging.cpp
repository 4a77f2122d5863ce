#include "twoscale/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <ostream>

#include "twoscale/csv.hpp"
#include "twoscale/error.hpp"
#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/two_scale.hpp"

namespace twoscale {

namespace {

Point mix_drift(const TwoScaleModel& model, const Point& x, const ProbabilityVector& pi) {
  Point acc = Point::Zero(static_cast<Eigen::Index>(model.coefficients.dimension));
  for (State i = 1; i <= pi.size(); ++i) {
    const double p = pi.prob(i);
    if (p != 0.0) acc += p * model.coefficients.drift(x, i);
  }
  return acc;
}

ProbabilityVector solve_pi(const TwoScaleModel& model, const Point& x, std::size_t window) {
  return invariant_measure(truncate(model.generator, x, window), 1e-10);
}

}  // namespace

Point averaged_drift(const TwoScaleModel& model, const Point& x, std::size_t window) {
  return mix_drift(model, x, solve_pi(model, x, window));
}

AveragedSystem::AveragedSystem(const TwoScaleModel& model, std::size_t window, PiCache cache)
    : model_(model), window_(window), policy_(cache), cache_(std::make_shared<Cache>()) {}

ProbabilityVector AveragedSystem::measure(const Point& x) const {
  if (policy_ == PiCache::none) return solve_pi(model_, x, window_);
  std::vector<std::int64_t> key(static_cast<std::size_t>(x.size()));
  Point xq(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    key[static_cast<std::size_t>(i)] = std::llround(x(i) / kPiCacheResolution);
    xq(i) = static_cast<double>(key[static_cast<std::size_t>(i)]) * kPiCacheResolution;
  }
  {
    std::shared_lock lock(cache_->mutex);
    auto it = cache_->entries.find(key);
    if (it != cache_->entries.end()) return it->second;
  }
  ProbabilityVector pi = solve_pi(model_, xq, window_);
  std::unique_lock lock(cache_->mutex);
  // A concurrent writer may have inserted the same (identical) value.
  return cache_->entries.emplace(std::move(key), std::move(pi)).first->second;
}

Point AveragedSystem::drift_bar(const Point& x) const {
  return mix_drift(model_, x, measure(x));
}

std::size_t AveragedSystem::cached_entries() const {
  std::shared_lock lock(cache_->mutex);
  return cache_->entries.size();
}

OdePath solve_averaged_ode(const VectorField& field, const Point& x0, double T, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::invalid_argument, "dt must be positive");
  if (!(T >= 0.0) || !std::isfinite(T)) fail(ErrorKind::invalid_argument, "T must be nonnegative");
  const auto steps = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(T / dt * (1.0 - 1e-12))));
  const double h = T / static_cast<double>(steps);
  OdePath path;
  path.times.reserve(steps + 1);
  path.values.reserve(steps + 1);
  Point x = x0;
  path.times.push_back(0.0);
  path.values.push_back(x);
  for (std::size_t k = 0; k < steps; ++k) {
    const Point k1 = field(x);
    const Point k2 = field(x + 0.5 * h * k1);
    const Point k3 = field(x + 0.5 * h * k2);
    const Point k4 = field(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) fail(ErrorKind::numerical_failure, "averaged ODE produced a non-finite value");
    path.times.push_back(k + 1 == steps ? T : static_cast<double>(k + 1) * h);
    path.values.push_back(x);
  }
  return path;
}

OdePath solve_averaged_ode(const AveragedSystem& system, const Point& x0, double T, double dt) {
  return solve_averaged_ode([&](const Point& x) { return system.drift_bar(x); }, x0, T, dt);
}

TestFunction test_function(const std::string& id) {
  if (id == "const") return {id, [](const Point&) { return 1.0; }};
  if (id == "tanh") return {id, [](const Point& x) { return std::tanh(x(0)); }};
  if (id == "clip") return {id, [](const Point& x) { return std::clamp(x(0), -10.0, 10.0); }};
  fail(ErrorKind::unknown_name, "unknown test function '" + id + "' (known: const, tanh, clip)");
}

double experiment_step(double alpha) {
  return std::min(alpha / 20.0, std::pow(alpha, 0.75) / 10.0);
}

namespace {

void validate(const ExperimentSettings& s, const std::vector<std::pair<double, double>>& grid,
              std::size_t min_replicates) {
  if (grid.empty()) fail(ErrorKind::invalid_argument, "experiment grid is empty");
  if (s.replicates < min_replicates)
    fail(ErrorKind::precondition_violation,
         "experiment needs at least " + std::to_string(min_replicates) + " replicates");
  for (const auto& [eps, alpha] : grid)
    if (!(eps >= 0.0) || !(alpha > 0.0))
      fail(ErrorKind::invalid_argument, "grid cells need eps >= 0 and alpha > 0");
}

Point reference_solution(const TwoScaleModel& model, const ExperimentSettings& s) {
  AveragedSystem exact(model, s.window, PiCache::none);
  return solve_averaged_ode(exact, model.x0, s.T, kReferenceStep).final_value();
}

// Final slow states for every (cell, replicate), parallel over the flattened
// index and stored by index.
std::vector<std::vector<Point>> run_cells(const TwoScaleModel& model,
                                          const std::vector<std::pair<double, double>>& grid,
                                          const ExperimentSettings& s) {
  MarkSpace space(model.generator, s.window);
  const std::size_t n = s.replicates;
  auto finals = parallel_map<Point>(grid.size() * n, [&](std::size_t idx) {
    const std::size_t c = idx / n, r = idx % n;
    SimulationSettings sim;
    sim.eps = grid[c].first;
    sim.alpha = grid[c].second;
    sim.T = s.T;
    sim.dt = s.step ? s.step(sim.alpha) : experiment_step(sim.alpha);
    sim.window = s.window;
    sim.seed = derive_key(s.seed, static_cast<std::uint64_t>(c));
    sim.replicate = r;
    return simulate_two_scale(model, space, sim).final_x();
  });
  std::vector<std::vector<Point>> out(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c)
    out[c].assign(finals.begin() + static_cast<std::ptrdiff_t>(c * n),
                  finals.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
  return out;
}

std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double a : v) sum += a;
  const double mean = sum / n;
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

}  // namespace

ConvergenceReport l1_error_experiment(const TwoScaleModel& model,
                                      const std::vector<std::pair<double, double>>& grid,
                                      const ExperimentSettings& settings) {
  validate(settings, grid, 100);
  ConvergenceReport report;
  report.reference = reference_solution(model, settings);
  const auto finals = run_cells(model, grid, settings);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::vector<double> errs;
    errs.reserve(finals[c].size());
    for (const auto& x : finals[c]) errs.push_back((x - report.reference).norm());
    const auto [mean, se] = mean_and_se(errs);
    report.cells.push_back({grid[c].first, grid[c].second, "L1", "", mean, se,
                            settings.replicates, mean});
  }
  return report;
}

ConvergenceReport weak_error_experiment(const TwoScaleModel& model,
                                        const std::vector<TestFunction>& functions,
                                        const std::vector<std::pair<double, double>>& grid,
                                        const ExperimentSettings& settings) {
  validate(settings, grid, 2);
  if (functions.empty()) fail(ErrorKind::invalid_argument, "no test functions given");
  ConvergenceReport report;
  report.reference = reference_solution(model, settings);
  const auto finals = run_cells(model, grid, settings);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (const auto& fn : functions) {
      const double target = fn.f(report.reference);
      std::vector<double> vals;
      vals.reserve(finals[c].size());
      for (const auto& x : finals[c]) vals.push_back(fn.f(x));
      const auto [mean, se] = mean_and_se(vals);
      const double bias = mean - target;
      report.cells.push_back({grid[c].first, grid[c].second, "weak", fn.id, std::abs(bias), se,
                              settings.replicates, bias});
    }
  }
  return report;
}

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report) {
  CsvWriter csv(out);
  csv.header({"eps", "alpha", "kind", "testfn", "mean_error", "std_error", "replicates"});
  for (const auto& c : report.cells) {
    csv.cell(c.eps).cell(c.alpha).cell(c.kind).cell(c.testfn).cell(c.mean_error).cell(c.std_error);
    csv.cell(static_cast<std::uint64_t>(c.replicates));
    csv.end_row();
  }
}

}  // namespace twoscale
