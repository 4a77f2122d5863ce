#pragma once

// State-dependent Q-matrices on S = {1, 2, ...}: truncation to a finite
// window, invariant measures, the transition semigroup, total variation and
// decay-rate estimation.
//
// States are 1-based throughout the public interface. Vectors and matrices
// indexed by state use position i-1 for state i.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace twoscale {

using State = std::size_t;
using Point = Eigen::VectorXd;

/// For each state i in a window (index i-1), the states j != i (j <= M)
/// with sup_x q_ij(x) > 0.
using SupportTable = std::vector<std::vector<State>>;

/// Convenience for the one-dimensional built-ins.
inline Point point(double x) { return Point::Constant(1, x); }

/// Raw ingredients of a generator family. Functions are only ever called
/// with i != j and states inside the state space.
struct GeneratorDefinition {
  std::string name;
  /// nullopt means countably infinite.
  std::optional<std::size_t> state_count;
  std::size_t dimension = 1;
  std::function<double(State, State, const Point&)> rate;
  /// Total outgoing rate sum_{j != i} q_ij(x). Required for infinite families.
  std::function<double(State, const Point&)> exit_rate;
  /// sup_x q_ij(x).
  std::function<double(State, State)> sup_rate;
  /// gamma_n = sup_{k != n} sup_x q_nk(x). Derived from sup_rate if empty
  /// (finite families only).
  std::function<double(State)> gamma;
  /// sum_{k > M, k != n} sup_x q_nk(x). Derived for finite families; may be
  /// left empty for families that never jump upward by more than one state.
  std::function<double(State, std::size_t)> tail_sup;
  /// kappa = sup_i sum_{j != i} sup_x q_ij(x). Derived for finite families if
  /// left as nullopt.
  std::optional<double> kappa;
  /// Declared Lipschitz constant of x -> Q(x) in the l1 row norm.
  std::optional<double> lipschitz_k3;
  /// Largest upward jump k - n with a possibly nonzero rate (nullopt: any).
  std::optional<std::size_t> max_up_jump;
};

/// Immutable map x -> Q(x) with dominating-rate metadata.
class GeneratorFamily {
 public:
  explicit GeneratorFamily(GeneratorDefinition def);

  const std::string& name() const noexcept { return def_.name; }
  std::optional<std::size_t> state_count() const noexcept { return def_.state_count; }
  bool is_finite() const noexcept { return def_.state_count.has_value(); }
  std::size_t dimension() const noexcept { return def_.dimension; }

  /// True iff i is a valid state.
  bool contains(State i) const noexcept {
    return i >= 1 && (!def_.state_count || i <= *def_.state_count);
  }

  /// q_ij(x) for i != j; 0 for i == j or states outside the space.
  double rate(State i, State j, const Point& x) const;
  double exit_rate(State i, const Point& x) const;
  double sup_rate(State i, State j) const;
  double gamma(State n) const;
  double kappa() const noexcept { return kappa_; }
  std::optional<double> lipschitz_k3() const noexcept { return def_.lipschitz_k3; }

  /// Upper bound on the rate mass from n to states beyond the window M,
  /// uniformly in x.
  double tail_sup(State n, std::size_t window) const;
  /// Actual rate mass from n to states k > window at x.
  double tail_rate(State n, const Point& x, std::size_t window) const;

  /// Number of states visible through a window of size M.
  std::size_t window_size(std::size_t window) const noexcept {
    return def_.state_count ? std::min(*def_.state_count, window) : window;
  }

  /// Support pattern of the window, computed once per window size and
  /// shared by copies of the family.
  const SupportTable& support(std::size_t window) const;

 private:
  struct SupportCache {
    std::mutex mutex;
    std::map<std::size_t, std::shared_ptr<const SupportTable>> tables;
  };
  GeneratorDefinition def_;
  double kappa_ = 0.0;
  std::shared_ptr<SupportCache> support_cache_ = std::make_shared<SupportCache>();
};

/// Finite family whose rates interpolate linearly between two conservative
/// generators as x_1 moves over [0, 1] (x_1 is clamped to that interval).
GeneratorFamily interpolated_family(std::string name, const Eigen::MatrixXd& at_zero,
                                    const Eigen::MatrixXd& at_one);

enum class TruncationPolicy { reflect_to_boundary };

/// Finite conservative generator on {1, ..., M}.
class TruncatedChain {
 public:
  /// Takes off-diagonal rates from `rates` and recomputes the diagonal so
  /// that every row sums to zero. Negative off-diagonals are rejected.
  TruncatedChain(Eigen::MatrixXd rates, Point base_point,
                 TruncationPolicy policy = TruncationPolicy::reflect_to_boundary);

  std::size_t size() const noexcept { return static_cast<std::size_t>(rates_.rows()); }
  const Eigen::MatrixXd& rates() const noexcept { return rates_; }
  const Point& base_point() const noexcept { return base_point_; }
  TruncationPolicy policy() const noexcept { return policy_; }

  /// max_i |q_ii|.
  double max_exit_rate() const noexcept;
  bool is_irreducible() const;

 private:
  Eigen::MatrixXd rates_;
  Point base_point_;
  TruncationPolicy policy_;
};

/// Nonnegative weights summing to one.
class ProbabilityVector {
 public:
  /// Validates exactly: entries >= 0 and |sum - 1| <= 1e-12.
  explicit ProbabilityVector(Eigen::VectorXd weights);

  /// Clips entries in [-tol, 0) to zero and divides by the sum.
  static ProbabilityVector normalized(Eigen::VectorXd weights, double tol = 1e-9);
  static ProbabilityVector point_mass(std::size_t size, State i);

  std::size_t size() const noexcept { return static_cast<std::size_t>(w_.size()); }
  const Eigen::VectorXd& weights() const noexcept { return w_; }
  /// Probability of state i (1-based).
  double prob(State i) const { return w_(static_cast<Eigen::Index>(i - 1)); }

 private:
  Eigen::VectorXd w_;
};

/// Restricts Q(x) to {1..M}, redirecting rate mass aimed above M to M.
/// Redirected mass that lands on the source itself (row M) is dropped.
TruncatedChain truncate(const GeneratorFamily& family, const Point& x, std::size_t window);

/// sup_{i <= M} sum_{j != i, j <= M} |q_ij(x) - q_ij(y)|.
double ell1_distance(const GeneratorFamily& family, const Point& x, const Point& y,
                     std::size_t window);

SupportTable support_table(const GeneratorFamily& family, std::size_t window);

/// ell1_distance restricted to a precomputed support table.
double ell1_distance(const GeneratorFamily& family, const Point& x, const Point& y,
                     const SupportTable& support);

/// Size above which invariant_measure switches from dense LU to power
/// iteration.
inline constexpr std::size_t kDenseSolveLimit = 2000;

ProbabilityVector invariant_measure(const TruncatedChain& chain, double tol = 1e-10);

/// Row i of exp(tQ) by uniformization.
ProbabilityVector transition_kernel(const TruncatedChain& chain, double t, State i);

/// Rows of exp(tQ) for several initial states at once (row r is the law at
/// time t started from states[r]).
Eigen::MatrixXd transition_rows(const TruncatedChain& chain, double t,
                                std::span<const State> states);

/// Advances a block of row distributions by exp(tQ) (rows times exp(tQ)).
Eigen::MatrixXd propagate_rows(const TruncatedChain& chain, double t, Eigen::MatrixXd rows);

/// (P_t h)(i) for every state, i.e. exp(tQ) applied to a column vector.
Eigen::VectorXd semigroup_apply(const TruncatedChain& chain, double t, const Eigen::VectorXd& h);

/// Sum_i |mu_i - nu_i| (values in [0, 2]).
double total_variation(const ProbabilityVector& mu, const ProbabilityVector& nu);

struct DecaySample {
  double time;
  double distance;
  bool used;
};

struct ErgodicRateFit {
  double c = 0.0;
  double lambda = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  /// Max absolute deviation of log d(t) from the fitted line.
  double residual = 0.0;
  std::vector<State> probes;
  std::vector<DecaySample> samples;
};

struct FitOptions {
  /// Initial states for the sup. Empty: states 1..K where K is the smallest
  /// count whose stationary tail mass is at most probe_tail_mass, capped at
  /// max_probes and M.
  std::vector<State> probe_states;
  std::size_t max_probes = 50;
  double probe_tail_mass = 1e-6;
  /// Explicit fitting window; nullopt selects it from the data.
  std::optional<std::pair<double, double>> window;
  /// Points above this distance are pre-asymptotic and excluded.
  double upper_distance = 0.5;
  /// Lower cutoff inside an explicit window.
  double floor_distance = 1e-12;
  /// Lower cutoff for the automatically selected window.
  double auto_floor_distance = 1e-10;
};

/// Fits sup_i ||P_t(i,.) - pi||_var ~ c exp(-lambda t) by least squares in
/// the log domain.
ErgodicRateFit fit_ergodic_rate(const GeneratorFamily& family, const Point& x, std::size_t window,
                                std::span<const double> times, const FitOptions& options = {});

struct DriftCheck {
  bool holds = true;
  /// min over rows and grid points of (-c2 theta(i) + c3) - Q(x)theta(i).
  double min_margin = 0.0;
  State worst_state = 1;
  std::size_t worst_point = 0;
};

/// Tests Q(x)theta(i) <= -c2 theta(i) + c3 (+ slack) for i <= M-1 and every
/// grid point. The boundary row is excluded because truncation alters it.
DriftCheck check_drift_condition(const GeneratorFamily& family,
                                 const std::function<double(State)>& theta, double c2, double c3,
                                 std::span<const Point> x_grid, std::size_t window,
                                 double slack = 1e-9);

/// max_i |P_t^y h(i) - P_t^x h(i) - int_0^t P_{t-s}^y (Q(y)-Q(x)) P_s^x h(i) ds|
/// with the integral evaluated by composite Simpson on quad_steps panels.
double integration_by_parts_residual(const GeneratorFamily& family, const Point& x,
                                     const Point& y, const std::function<double(State)>& h,
                                     double t, std::size_t window, std::size_t quad_steps);

}  // namespace twoscale
