#include "twoscale/chain_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "twoscale/error.hpp"

namespace twoscale {

namespace {

using Index = Eigen::Index;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

constexpr double kPoissonTail = 1e-14;
// The quadrature in integration_by_parts_residual applies the semigroup
// thousands of times; a cutoff below double precision keeps the accumulated
// truncation error under the Simpson error it is meant to expose.
constexpr double kQuadratureTail = 1e-18;

inline Index ix(State s) { return static_cast<Index>(s - 1); }

// Uniformized kernel I + Q / Lambda, stored sparse.
struct Uniformized {
  SparseRowMatrix kernel;
  double lambda = 0.0;
};

// lambda_scale > 1 inflates Lambda above max_i |q_ii| (adds self-loops).
Uniformized uniformize(const Eigen::MatrixXd& q, double lambda_scale = 1.0) {
  Uniformized u;
  const Index n = q.rows();
  for (Index i = 0; i < n; ++i) u.lambda = std::max(u.lambda, -q(i, i));
  u.lambda *= lambda_scale;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(3 * n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      double v = (u.lambda > 0.0) ? q(i, j) / u.lambda : 0.0;
      if (i == j) v += 1.0;
      if (v != 0.0) entries.emplace_back(i, j, v);
    }
  }
  u.kernel.resize(n, n);
  u.kernel.setFromTriplets(entries.begin(), entries.end());
  return u;
}

// Calls step(weight) for the Poisson(mean) weights k = 0, 1, ... while the
// caller advances its iterate between calls; stops once the remaining tail
// is below `tail`. Returns the accumulated weight.
template <class Accumulate, class Advance>
double poisson_series(double mean, Accumulate&& accumulate, Advance&& advance,
                      double tail = kPoissonTail) {
  const double log_mean = mean > 0.0 ? std::log(mean) : 0.0;
  double total = 0.0;
  const std::size_t hard_stop = static_cast<std::size_t>(10.0 * mean) + 1000;
  for (std::size_t k = 0;; ++k) {
    const double kd = static_cast<double>(k);
    const double w = mean > 0.0 ? std::exp(-mean + kd * log_mean - std::lgamma(kd + 1.0))
                                : (k == 0 ? 1.0 : 0.0);
    if (w > 0.0) accumulate(w);
    total += w;
    if (mean == 0.0) break;
    if (kd + 1.0 > mean) {
      const double r = mean / (kd + 1.0);
      if (w * r / (1.0 - r) < tail) break;
    }
    if (k > hard_stop) break;
    advance();
  }
  return total;
}

bool reachable_all(const std::vector<std::vector<Index>>& adj) {
  const std::size_t n = adj.size();
  std::vector<char> seen(n, 0);
  std::vector<Index> todo{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!todo.empty()) {
    const Index u = todo.back();
    todo.pop_back();
    for (Index v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++count;
        todo.push_back(v);
      }
    }
  }
  return count == n;
}

}  // namespace

// ---------------------------------------------------------------------------
// GeneratorFamily

GeneratorFamily::GeneratorFamily(GeneratorDefinition def) : def_(std::move(def)) {
  if (!def_.rate) fail(ErrorKind::invalid_argument, "generator family '" + def_.name + "' has no rate function");
  if (!def_.sup_rate) fail(ErrorKind::invalid_argument, "generator family '" + def_.name + "' has no sup_rate function");
  if (def_.state_count && *def_.state_count < 1)
    fail(ErrorKind::invalid_argument, "generator family '" + def_.name + "' has an empty state space");
  if (!is_finite()) {
    if (!def_.exit_rate) fail(ErrorKind::invalid_argument, "infinite family '" + def_.name + "' needs exit_rate");
    if (!def_.gamma) fail(ErrorKind::invalid_argument, "infinite family '" + def_.name + "' needs gamma");
    if (!def_.kappa) fail(ErrorKind::invalid_argument, "infinite family '" + def_.name + "' needs kappa");
    if (!def_.tail_sup && !def_.max_up_jump)
      fail(ErrorKind::invalid_argument, "infinite family '" + def_.name + "' needs tail_sup or max_up_jump");
  }
  if (def_.kappa) {
    kappa_ = *def_.kappa;
  } else {
    const std::size_t n = *def_.state_count;
    for (State i = 1; i <= n; ++i) {
      double row = 0.0;
      for (State j = 1; j <= n; ++j)
        if (j != i) row += def_.sup_rate(i, j);
      kappa_ = std::max(kappa_, row);
    }
  }
}

double GeneratorFamily::rate(State i, State j, const Point& x) const {
  if (i == j || !contains(i) || !contains(j)) return 0.0;
  const double q = def_.rate(i, j, x);
  if (!(q >= 0.0)) fail(ErrorKind::domain_error, "negative or non-finite rate in family '" + def_.name + "'");
  return q;
}

double GeneratorFamily::exit_rate(State i, const Point& x) const {
  if (def_.exit_rate) return def_.exit_rate(i, x);
  double total = 0.0;
  for (State j = 1; j <= *def_.state_count; ++j)
    if (j != i) total += rate(i, j, x);
  return total;
}

double GeneratorFamily::sup_rate(State i, State j) const {
  if (i == j || !contains(i) || !contains(j)) return 0.0;
  return def_.sup_rate(i, j);
}

double GeneratorFamily::gamma(State n) const {
  if (def_.gamma) return def_.gamma(n);
  double g = 0.0;
  for (State k = 1; k <= *def_.state_count; ++k)
    if (k != n) g = std::max(g, def_.sup_rate(n, k));
  return g;
}

double GeneratorFamily::tail_sup(State n, std::size_t window) const {
  if (def_.state_count && *def_.state_count <= window) return 0.0;
  if (def_.tail_sup) return def_.tail_sup(n, window);
  double total = 0.0;
  if (def_.max_up_jump) {
    for (State k = window + 1; k <= n + *def_.max_up_jump; ++k)
      if (k != n && contains(k)) total += sup_rate(n, k);
    return total;
  }
  for (State k = window + 1; k <= *def_.state_count; ++k)
    if (k != n) total += sup_rate(n, k);
  return total;
}

double GeneratorFamily::tail_rate(State n, const Point& x, std::size_t window) const {
  if (def_.state_count && *def_.state_count <= window) return 0.0;
  double total = 0.0;
  if (def_.max_up_jump) {
    for (State k = window + 1; k <= n + *def_.max_up_jump; ++k)
      if (k != n) total += rate(n, k, x);
    return total;
  }
  if (def_.state_count) {
    for (State k = window + 1; k <= *def_.state_count; ++k)
      if (k != n) total += rate(n, k, x);
    return total;
  }
  double inside = 0.0;
  for (State k = 1; k <= window; ++k)
    if (k != n) inside += rate(n, k, x);
  return std::max(0.0, exit_rate(n, x) - inside);
}

GeneratorFamily interpolated_family(std::string name, const Eigen::MatrixXd& at_zero,
                                    const Eigen::MatrixXd& at_one) {
  if (at_zero.rows() != at_zero.cols() || at_one.rows() != at_one.cols() ||
      at_zero.rows() != at_one.rows() || at_zero.rows() < 1)
    fail(ErrorKind::invalid_argument, "interpolated_family: matrices must be square and equal-sized");
  for (Index i = 0; i < at_zero.rows(); ++i)
    for (Index j = 0; j < at_zero.cols(); ++j)
      if (i != j && (at_zero(i, j) < 0.0 || at_one(i, j) < 0.0))
        fail(ErrorKind::invalid_argument, "interpolated_family: negative off-diagonal rate");
  const double k3 = [&] {
    double best = 0.0;
    for (Index i = 0; i < at_zero.rows(); ++i) {
      double row = 0.0;
      for (Index j = 0; j < at_zero.cols(); ++j)
        if (i != j) row += std::abs(at_one(i, j) - at_zero(i, j));
      best = std::max(best, row);
    }
    return best;
  }();
  GeneratorDefinition def;
  def.name = std::move(name);
  def.state_count = static_cast<std::size_t>(at_zero.rows());
  def.rate = [a = at_zero, b = at_one](State i, State j, const Point& x) {
    const double s = std::clamp(x(0), 0.0, 1.0);
    return (1.0 - s) * a(ix(i), ix(j)) + s * b(ix(i), ix(j));
  };
  def.sup_rate = [a = at_zero, b = at_one](State i, State j) {
    return std::max(a(ix(i), ix(j)), b(ix(i), ix(j)));
  };
  def.lipschitz_k3 = k3;
  return GeneratorFamily(std::move(def));
}

// ---------------------------------------------------------------------------
// TruncatedChain / ProbabilityVector

TruncatedChain::TruncatedChain(Eigen::MatrixXd rates, Point base_point, TruncationPolicy policy)
    : rates_(std::move(rates)), base_point_(std::move(base_point)), policy_(policy) {
  if (rates_.rows() != rates_.cols() || rates_.rows() < 1)
    fail(ErrorKind::invalid_argument, "TruncatedChain: rate matrix must be square and nonempty");
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(rates_.rows());
  for (Index j = 0; j < rates_.cols(); ++j)
    for (Index i = 0; i < rates_.rows(); ++i) {
      if (i == j) continue;
      if (!(rates_(i, j) >= 0.0) || !std::isfinite(rates_(i, j)))
        fail(ErrorKind::invalid_argument, "TruncatedChain: off-diagonal rates must be finite and nonnegative");
      rows(i) += rates_(i, j);
    }
  rates_.diagonal() = -rows;
}

double TruncatedChain::max_exit_rate() const noexcept {
  double m = 0.0;
  for (Index i = 0; i < rates_.rows(); ++i) m = std::max(m, -rates_(i, i));
  return m;
}

bool TruncatedChain::is_irreducible() const {
  const std::size_t n = size();
  if (n == 1) return true;
  std::vector<std::vector<Index>> fwd(n), bwd(n);
  for (Index j = 0; j < rates_.cols(); ++j)
    for (Index i = 0; i < rates_.rows(); ++i)
      if (i != j && rates_(i, j) > 0.0) {
        fwd[static_cast<std::size_t>(i)].push_back(j);
        bwd[static_cast<std::size_t>(j)].push_back(i);
      }
  return reachable_all(fwd) && reachable_all(bwd);
}

ProbabilityVector::ProbabilityVector(Eigen::VectorXd weights) : w_(std::move(weights)) {
  if (w_.size() == 0) fail(ErrorKind::invalid_argument, "ProbabilityVector: empty weight vector");
  for (Index i = 0; i < w_.size(); ++i)
    if (!(w_(i) >= 0.0)) fail(ErrorKind::invalid_argument, "ProbabilityVector: negative or non-finite weight");
  if (std::abs(w_.sum() - 1.0) > 1e-12)
    fail(ErrorKind::invalid_argument, "ProbabilityVector: weights do not sum to one");
}

ProbabilityVector ProbabilityVector::normalized(Eigen::VectorXd weights, double tol) {
  for (Index i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights(i)) || weights(i) < -tol)
      fail(ErrorKind::numerical_failure, "ProbabilityVector: weight out of range before normalization");
    weights(i) = std::max(weights(i), 0.0);
  }
  const double s = weights.sum();
  if (!(s > 0.0)) fail(ErrorKind::numerical_failure, "ProbabilityVector: zero total mass");
  weights /= s;
  return ProbabilityVector(std::move(weights));
}

ProbabilityVector ProbabilityVector::point_mass(std::size_t size, State i) {
  if (i < 1 || i > size) fail(ErrorKind::invalid_argument, "point_mass: state out of range");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Index>(size));
  w(ix(i)) = 1.0;
  return ProbabilityVector(std::move(w));
}

// ---------------------------------------------------------------------------
// Operations

const SupportTable& GeneratorFamily::support(std::size_t window) const {
  const std::size_t m = window_size(window);
  std::lock_guard lock(support_cache_->mutex);
  auto& slot = support_cache_->tables[m];
  if (!slot) {
    auto table = std::make_shared<SupportTable>(m);
    for (State i = 1; i <= m; ++i)
      for (State j = 1; j <= m; ++j)
        if (i != j && sup_rate(i, j) > 0.0) (*table)[i - 1].push_back(j);
    slot = std::move(table);
  }
  return *slot;
}

TruncatedChain truncate(const GeneratorFamily& family, const Point& x, std::size_t window) {
  if (window < 2) fail(ErrorKind::invalid_argument, "truncate: window M must be at least 2");
  if (!std::isfinite(family.kappa()))
    fail(ErrorKind::precondition_violation, "truncate: family '" + family.name() + "' has unbounded row sums");
  const std::size_t m = family.window_size(window);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Index>(m), static_cast<Index>(m));
  const SupportTable& support = family.support(m);
  for (State i = 1; i <= m; ++i) {
    for (State j : support[i - 1]) q(ix(i), ix(j)) = family.rate(i, j, x);
    if (i != m) q(ix(i), ix(m)) += family.tail_rate(i, x, m);
  }
  return TruncatedChain(std::move(q), x);
}

double ell1_distance(const GeneratorFamily& family, const Point& x, const Point& y,
                     std::size_t window) {
  return ell1_distance(family, x, y, family.support(window));
}

SupportTable support_table(const GeneratorFamily& family, std::size_t window) {
  return family.support(window);
}

double ell1_distance(const GeneratorFamily& family, const Point& x, const Point& y,
                     const SupportTable& support) {
  double best = 0.0;
  for (State i = 1; i <= support.size(); ++i) {
    double row = 0.0;
    for (State j : support[i - 1]) row += std::abs(family.rate(i, j, x) - family.rate(i, j, y));
    best = std::max(best, row);
  }
  return best;
}

ProbabilityVector invariant_measure(const TruncatedChain& chain, double tol) {
  if (!(tol > 0.0)) fail(ErrorKind::invalid_argument, "invariant_measure: tol must be positive");
  if (!chain.is_irreducible())
    fail(ErrorKind::no_unique_invariant_measure, "invariant_measure: truncated chain is reducible");
  const Eigen::MatrixXd& q = chain.rates();
  const Index n = q.rows();
  Eigen::VectorXd pi;
  bool tridiagonal = true;
  for (Index j = 0; j < n && tridiagonal; ++j)
    for (Index i = 0; i < n; ++i)
      if ((i + 1 < j || j + 1 < i) && q(i, j) != 0.0) {
        tridiagonal = false;
        break;
      }
  if (tridiagonal) {
    // Birth-death chains are reversible: pi_{i+1} q_{i+1,i} = pi_i q_{i,i+1}.
    // Accumulate in logs so long windows neither overflow nor underflow.
    Eigen::VectorXd logw(n);
    logw(0) = 0.0;
    for (Index i = 0; i + 1 < n; ++i) logw(i + 1) = logw(i) + std::log(q(i, i + 1)) - std::log(q(i + 1, i));
    pi = (logw.array() - logw.maxCoeff()).exp().matrix();
    pi /= pi.sum();
  } else if (chain.size() <= kDenseSolveLimit) {
    const Index nnz = (q.array() != 0.0).count();
    if (n >= 64 && nnz * 10 <= n * n) {
      // Sparse generators: fix pi_1 = 1 and solve the remaining balance
      // equations sum_{i >= 2} pi_i q_ij = -q_1j (j >= 2), which keeps the
      // system free of the dense normalization row.
      std::vector<Eigen::Triplet<double>> entries;
      entries.reserve(static_cast<std::size_t>(nnz));
      Eigen::VectorXd b(n - 1);
      for (Index j = 1; j < n; ++j) b(j - 1) = -q(0, j);
      for (Index i = 1; i < n; ++i)
        for (Index j = 1; j < n; ++j)
          if (q(i, j) != 0.0) entries.emplace_back(j - 1, i - 1, q(i, j));
      Eigen::SparseMatrix<double> sa(n - 1, n - 1);
      sa.setFromTriplets(entries.begin(), entries.end());
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(sa);
      if (lu.info() == Eigen::Success) {
        const Eigen::VectorXd rest = lu.solve(b);
        if (lu.info() == Eigen::Success) {
          pi.resize(n);
          pi(0) = 1.0;
          pi.tail(n - 1) = rest;
          pi /= pi.sum();
        }
      }
    }
    if (pi.size() != n || !pi.allFinite()) {
      // pi Q = 0 with the first balance equation replaced by sum(pi) = 1.
      Eigen::MatrixXd a = q.transpose();
      a.row(0).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
      rhs(0) = 1.0;
      pi = a.partialPivLu().solve(rhs);
    }
  } else {
    const Uniformized u = uniformize(q, 1.05);
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const SparseRowMatrix qs = q.sparseView();
    constexpr std::size_t kMaxIterations = 200000;
    // The residual bounds the error in pi only up to the inverse spectral
    // gap, so iterate well past the requested tolerance.
    const double target = 1e-3 * tol;
    for (std::size_t it = 0; it < kMaxIterations; ++it) {
      v = v * u.kernel;
      if (it % 50 == 49) {
        v /= v.sum();
        if ((v * qs).cwiseAbs().maxCoeff() <= target) break;
      }
    }
    pi = v.transpose();
  }
  ProbabilityVector result = ProbabilityVector::normalized(std::move(pi));
  const double residual = (result.weights().transpose() * q).cwiseAbs().maxCoeff();
  if (!(residual <= tol))
    fail(ErrorKind::convergence_failure,
         "invariant_measure: residual " + std::to_string(residual) + " exceeds tolerance");
  return result;
}

Eigen::MatrixXd propagate_rows(const TruncatedChain& chain, double t, Eigen::MatrixXd rows) {
  if (!(t >= 0.0)) fail(ErrorKind::invalid_argument, "transition kernel: t must be nonnegative");
  if (t == 0.0) return rows;
  const Uniformized u = uniformize(chain.rates());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows.rows(), rows.cols());
  const double total = poisson_series(
      u.lambda * t, [&](double w) { acc += w * rows; }, [&] { rows = rows * u.kernel; });
  acc /= total;
  return acc;
}

Eigen::MatrixXd transition_rows(const TruncatedChain& chain, double t,
                                std::span<const State> states) {
  const Index n = static_cast<Index>(chain.size());
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Index>(states.size()), n);
  for (std::size_t r = 0; r < states.size(); ++r) {
    if (states[r] < 1 || states[r] > chain.size())
      fail(ErrorKind::invalid_argument, "transition kernel: initial state out of range");
    rows(static_cast<Index>(r), ix(states[r])) = 1.0;
  }
  return propagate_rows(chain, t, std::move(rows));
}

ProbabilityVector transition_kernel(const TruncatedChain& chain, double t, State i) {
  const State s[] = {i};
  Eigen::MatrixXd row = transition_rows(chain, t, s);
  return ProbabilityVector::normalized(row.row(0).transpose(), 1e-12);
}

Eigen::VectorXd semigroup_apply(const TruncatedChain& chain, double t, const Eigen::VectorXd& h) {
  if (!(t >= 0.0)) fail(ErrorKind::invalid_argument, "semigroup_apply: t must be nonnegative");
  if (static_cast<std::size_t>(h.size()) != chain.size())
    fail(ErrorKind::invalid_argument, "semigroup_apply: vector length mismatch");
  if (t == 0.0) return h;
  const Uniformized u = uniformize(chain.rates());
  Eigen::VectorXd v = h;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(h.size());
  const double total = poisson_series(
      u.lambda * t, [&](double w) { acc += w * v; }, [&] { v = u.kernel * v; });
  acc /= total;
  return acc;
}

double total_variation(const ProbabilityVector& mu, const ProbabilityVector& nu) {
  if (mu.size() != nu.size()) fail(ErrorKind::invalid_argument, "total_variation: length mismatch");
  return (mu.weights() - nu.weights()).cwiseAbs().sum();
}

ErgodicRateFit fit_ergodic_rate(const GeneratorFamily& family, const Point& x, std::size_t window,
                                std::span<const double> times, const FitOptions& options) {
  if (times.empty()) fail(ErrorKind::invalid_argument, "fit_ergodic_rate: empty time list");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] > 0.0)) fail(ErrorKind::invalid_argument, "fit_ergodic_rate: times must be positive");
    if (k > 0 && !(times[k] > times[k - 1]))
      fail(ErrorKind::invalid_argument, "fit_ergodic_rate: times must be increasing");
  }
  const TruncatedChain chain = truncate(family, x, window);
  const ProbabilityVector pi = invariant_measure(chain, 1e-10);
  const std::size_t m = chain.size();

  ErgodicRateFit fit;
  if (!options.probe_states.empty()) {
    fit.probes = options.probe_states;
  } else {
    std::size_t k = 1;
    double tail = 1.0 - pi.prob(1);
    while (k < m && k < options.max_probes && tail > options.probe_tail_mass) {
      ++k;
      tail -= pi.prob(k);
    }
    for (State s = 1; s <= k; ++s) fit.probes.push_back(s);
  }

  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Index>(fit.probes.size()),
                                               static_cast<Index>(m));
  for (std::size_t r = 0; r < fit.probes.size(); ++r) {
    if (fit.probes[r] < 1 || fit.probes[r] > m)
      fail(ErrorKind::invalid_argument, "fit_ergodic_rate: probe state outside the window");
    rows(static_cast<Index>(r), ix(fit.probes[r])) = 1.0;
  }
  double now = 0.0;
  for (double t : times) {
    rows = propagate_rows(chain, t - now, std::move(rows));
    now = t;
    double d = 0.0;
    for (Index r = 0; r < rows.rows(); ++r)
      d = std::max(d, (rows.row(r).transpose() - pi.weights()).cwiseAbs().sum());
    bool used;
    if (options.window) {
      used = t >= options.window->first && t <= options.window->second &&
             d >= options.floor_distance && d <= options.upper_distance;
    } else {
      used = d >= options.auto_floor_distance && d <= options.upper_distance;
    }
    fit.samples.push_back({t, d, used});
  }

  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t n_used = 0;
  fit.t_lo = std::numeric_limits<double>::infinity();
  fit.t_hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : fit.samples) {
    if (!s.used) continue;
    const double y = std::log(s.distance);
    st += s.time;
    sy += y;
    stt += s.time * s.time;
    sty += s.time * y;
    ++n_used;
    fit.t_lo = std::min(fit.t_lo, s.time);
    fit.t_hi = std::max(fit.t_hi, s.time);
  }
  if (n_used < 2)
    fail(ErrorKind::insufficient_data, "fit_ergodic_rate: fewer than two usable decay samples");
  const double nd = static_cast<double>(n_used);
  const double denom = nd * stt - st * st;
  const double slope = (nd * sty - st * sy) / denom;
  const double intercept = (sy - slope * st) / nd;
  fit.lambda = -slope;
  fit.c = std::exp(intercept);
  for (const auto& s : fit.samples)
    if (s.used)
      fit.residual = std::max(fit.residual, std::abs(std::log(s.distance) - (intercept + slope * s.time)));
  if (!(fit.lambda > 0.0))
    fail(ErrorKind::insufficient_data, "fit_ergodic_rate: no decay detected over the window");
  return fit;
}

DriftCheck check_drift_condition(const GeneratorFamily& family,
                                 const std::function<double(State)>& theta, double c2, double c3,
                                 std::span<const Point> x_grid, std::size_t window, double slack) {
  DriftCheck out;
  out.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    const TruncatedChain chain = truncate(family, x_grid[g], window);
    const std::size_t m = chain.size();
    Eigen::VectorXd th(static_cast<Index>(m));
    for (State i = 1; i <= m; ++i) {
      th(ix(i)) = theta(i);
      if (!(th(ix(i)) > 0.0)) fail(ErrorKind::invalid_argument, "check_drift_condition: theta must be positive");
    }
    const Eigen::VectorXd q_theta = chain.rates() * th;
    // For finite families that fit in the window every row is exact.
    const std::size_t last = family.is_finite() && *family.state_count() <= window ? m : m - 1;
    for (State i = 1; i <= last; ++i) {
      const double margin = (-c2 * th(ix(i)) + c3) - q_theta(ix(i));
      if (margin < out.min_margin) {
        out.min_margin = margin;
        out.worst_state = i;
        out.worst_point = g;
      }
    }
  }
  out.holds = out.min_margin >= -slack;
  return out;
}

double integration_by_parts_residual(const GeneratorFamily& family, const Point& x,
                                     const Point& y, const std::function<double(State)>& h,
                                     double t, std::size_t window, std::size_t quad_steps) {
  if (quad_steps < 2) fail(ErrorKind::invalid_argument, "integration_by_parts_residual: quad_steps must be >= 2");
  if (!(t > 0.0)) fail(ErrorKind::invalid_argument, "integration_by_parts_residual: t must be positive");
  const TruncatedChain cx = truncate(family, x, window);
  const TruncatedChain cy = truncate(family, y, window);
  const std::size_t m = cx.size();
  Eigen::VectorXd hv(static_cast<Index>(m));
  for (State i = 1; i <= m; ++i) {
    hv(ix(i)) = h(i);
    if (!(std::abs(hv(ix(i))) <= 1.0))
      fail(ErrorKind::invalid_argument, "integration_by_parts_residual: |h| must be at most 1");
  }
  const Eigen::MatrixXd diff = cy.rates() - cx.rates();
  const Uniformized ux = uniformize(cx.rates());
  const Uniformized uy = uniformize(cy.rates());
  auto apply = [](const Uniformized& u, double s, Eigen::VectorXd v) -> Eigen::VectorXd {
    if (s == 0.0) return v;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(v.size());
    const double total = poisson_series(
        u.lambda * s, [&](double w) { acc += w * v; }, [&] { v = u.kernel * v; }, kQuadratureTail);
    return acc / total;
  };

  const std::size_t nodes = 2 * quad_steps + 1;
  const double step = t / static_cast<double>(2 * quad_steps);
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(static_cast<Index>(m));
  Eigen::VectorXd px_h = hv;  // P_s^x h at the current node
  for (std::size_t j = 0; j < nodes; ++j) {
    if (j > 0) px_h = apply(ux, step, px_h);
    const double s = static_cast<double>(j) * step;
    const Eigen::VectorXd g = apply(uy, std::max(0.0, t - s), diff * px_h);
    const double w = (j == 0 || j + 1 == nodes) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    integral += w * g;
  }
  integral *= step / 3.0;
  const Eigen::VectorXd lhs = apply(uy, t, hv) - apply(ux, t, hv);
  return (lhs - integral).cwiseAbs().maxCoeff();
}

}  // namespace twoscale
