#include "twoscale/two_scale.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "twoscale/csv.hpp"
#include "twoscale/error.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

std::pair<double, std::size_t> resolve_grid(const SimulationSettings& s) {
  if (!(s.T > 0.0) || !std::isfinite(s.T)) fail(ErrorKind::invalid_argument, "T must be positive");
  if (!(s.alpha > 0.0) || !std::isfinite(s.alpha))
    fail(ErrorKind::invalid_argument, "alpha must be positive");
  if (!(s.eps >= 0.0) || !std::isfinite(s.eps))
    fail(ErrorKind::invalid_argument, "eps must be nonnegative");
  const double dt = s.dt.value_or(kDefaultStepFraction * s.alpha);
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::invalid_argument, "dt must be positive");
  if (dt > kMaxStepFraction * s.alpha * (1.0 + 1e-12) && !s.allow_large_step)
    fail(ErrorKind::step_size_rejected,
         "dt = " + format_double(dt) + " exceeds alpha/10 = " + format_double(s.alpha / 10));
  const auto steps = static_cast<std::size_t>(std::ceil(s.T / dt * (1.0 - 1e-12)));
  const std::size_t k = std::max<std::size_t>(steps, 1);
  return {s.T / static_cast<double>(k), k};
}

PathSample simulate_two_scale(const TwoScaleModel& model, const MarkSpace& space,
                              const SimulationSettings& s) {
  const auto [h, steps] = resolve_grid(s);
  const auto& coef = model.coefficients;
  if (static_cast<std::size_t>(model.x0.size()) != coef.dimension)
    fail(ErrorKind::invalid_argument, "initial point has the wrong dimension");

  PathSample path;
  path.eps = s.eps;
  path.alpha = s.alpha;
  path.dt = h;
  path.seed = s.seed;
  path.replicate = s.replicate;
  path.times.reserve(steps + 1);
  path.x.reserve(steps + 1);
  path.y.reserve(steps + 1);
  path.jumps.initial = model.i0;

  MarkedPointDriver driver(space, 1.0 / s.alpha, mark_stream_key(s.seed, s.replicate));
  DrivenChain chain(space, driver, model.i0);
  CounterRng noise(derive_key(
      s.seed, {s.replicate, static_cast<std::uint64_t>(StreamTag::brownian)}));

  const double sqrt_h = std::sqrt(h);
  const double sqrt_eps = std::sqrt(s.eps);
  const auto m = static_cast<Eigen::Index>(coef.noise_dimension);
  Point x = model.x0;
  Eigen::VectorXd dw(m);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = k == steps ? s.T : static_cast<double>(k) * h;
    path.times.push_back(t);
    path.x.push_back(x);
    path.y.push_back(chain.state());
    if (k == steps) break;

    const State yk = chain.state();
    for (Eigen::Index r = 0; r < m; ++r) dw(r) = sqrt_h * noise.normal();
    if (s.record_noise) path.noise.push_back(dw);
    const double t_next = k + 1 == steps ? s.T : static_cast<double>(k + 1) * h;
    chain.advance(t_next, x, &path.jumps.jumps);

    Point next = x + coef.drift(x, yk) * h;
    if (s.eps > 0.0) next += sqrt_eps * (coef.diffusion(x, yk) * dw);
    if (!next.allFinite())
      fail(ErrorKind::numerical_failure, "slow state became non-finite at t = " + format_double(t_next));
    x = std::move(next);
  }
  return path;
}

PathSample simulate_two_scale(const TwoScaleModel& model, const SimulationSettings& settings) {
  MarkSpace space(model.generator, settings.window);
  return simulate_two_scale(model, space, settings);
}

CoupledPathSample simulate_full_coupled(const TwoScaleModel& first, const TwoScaleModel& second,
                                        const SimulationSettings& settings) {
  if (first.generator.name() != second.generator.name())
    fail(ErrorKind::precondition_violation, "coupled systems must share the generator family");
  if (first.coefficients.dimension != second.coefficients.dimension ||
      first.coefficients.noise_dimension != second.coefficients.noise_dimension)
    fail(ErrorKind::precondition_violation, "coupled systems must have matching dimensions");
  MarkSpace space(first.generator, settings.window);
  CoupledPathSample out;
  out.first = simulate_two_scale(first, space, settings);
  out.second = simulate_two_scale(second, space, settings);
  out.occupation = occupation_statistic(out.first.jumps, out.second.jumps, settings.T);
  const SupportTable support = support_table(first.generator, settings.window);
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < out.first.times.size(); ++k) {
    const double h = out.first.times[k + 1] - out.first.times[k];
    integral += h * ell1_distance(first.generator, out.first.x[k], out.second.x[k], support);
  }
  out.ell1_integral = integral;
  return out;
}

void write_path_csv(std::ostream& out, const PathSample& path) {
  CsvWriter csv(out);
  std::vector<std::string> names{"t"};
  const auto d = path.x.empty() ? 0 : path.x.front().size();
  for (Eigen::Index i = 0; i < d; ++i) names.push_back("X_" + std::to_string(i + 1));
  names.emplace_back("Y");
  csv.header(names);
  for (std::size_t k = 0; k < path.times.size(); ++k) {
    csv.cell(path.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) csv.cell(path.x[k](i));
    csv.cell(static_cast<std::uint64_t>(path.y[k]));
    csv.end_row();
  }
}

}  // namespace twoscale
