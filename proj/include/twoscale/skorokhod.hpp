#pragma once

// Interval-layout representation of a state-dependent jump chain and the
// synchronous coupling it induces.
//
// For a source state n the mark line is split into slots of width gamma_n:
// destination k > n owns [(k-n-1) gamma_n, (k-n) gamma_n) and k < n owns
// [(k-n) gamma_n, (k+1-n) gamma_n). Inside its slot the interval for k is
//   k > n:  [(k-n-1) gamma_n, (k-n-1) gamma_n + q_nk(x))
//   k < n:  [(k+1-n) gamma_n - q_nk(x), (k+1-n) gamma_n)
// so it grows from the slot edge nearest to n. Rate mass aimed beyond the
// window M gets one extra slot starting at (M-n) gamma_n whose destination
// is M (the truncation), mirroring chain_core::truncate.
//
// Each source state has its own Poisson stream of (time, mark) pairs with
// marks uniform on the union U_n of the x-independent sup pieces. A chain in
// state n jumps to k iff the next mark of stream n falls in its own layout.
// Two chains read the same streams, which is the coupling.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "twoscale/chain_core.hpp"

namespace twoscale {

struct LayoutEntry {
  State destination;
  double lo;
  double hi;
};

struct IntervalLayout {
  State source = 1;
  /// Sorted by lo; only strictly positive rates appear.
  std::vector<LayoutEntry> entries;
  /// m(U_n): total length of the dominating pieces.
  double dominating_measure = 0.0;

  /// Sum of entry lengths (the exit rate inside the window at x).
  double total_length() const;
};

IntervalLayout interval_layout(const GeneratorFamily& family, const Point& x, State n,
                               std::size_t window);

/// k iff mark lies in [lo, hi) of the entry for k.
std::optional<State> jump_destination(const IntervalLayout& layout, double mark);

/// Union of the sup pieces of one source state, with a sampler for the
/// uniform law on it.
struct DominatingSet {
  std::vector<std::pair<double, double>> pieces;
  /// cumulative[p] = total length of pieces[0..p].
  std::vector<double> cumulative;

  double measure() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
  /// Maps u in [0, 1) to a point of the set, preserving Lebesgue measure.
  double sample(double u) const;
};

/// Read-only mark geometry for a family viewed through a window M. Safe to
/// share between threads.
class MarkSpace {
 public:
  MarkSpace(const GeneratorFamily& family, std::size_t window);

  const GeneratorFamily& family() const noexcept { return *family_; }
  std::size_t window() const noexcept { return window_; }
  const DominatingSet& dominating(State n) const { return sets_.at(n - 1); }

  /// Same answer as jump_destination(interval_layout(family, x, n, M), mark)
  /// without materializing the layout.
  std::optional<State> locate(State n, const Point& x, double mark) const;

 private:
  const GeneratorFamily* family_;
  std::size_t window_;
  std::vector<DominatingSet> sets_;
  std::vector<double> gammas_;
};

struct MarkEvent {
  double time;
  double mark;
};

/// Per-source-state marked Poisson streams. Stream n has intensity
/// m(U_n) * time_scale and uniform marks on U_n. Events are a pure function
/// of (key, n, time), so every driver built from the same key sees the same
/// streams regardless of the order in which they are queried.
class MarkedPointDriver {
 public:
  MarkedPointDriver(const MarkSpace& space, double time_scale, std::uint64_t key);

  /// First event of stream n strictly after `after`; nullopt if the stream
  /// is empty.
  std::optional<MarkEvent> next_event(State n, double after);

  /// Expected number of events per generated block.
  static constexpr double kBlockEvents = 32.0;

 private:
  struct Block {
    std::int64_t index = -1;
    std::vector<MarkEvent> events;
  };
  const Block& block(State n, std::int64_t b);

  const MarkSpace* space_;
  double time_scale_;
  std::uint64_t key_;
  std::vector<Block> cache_;
};

struct JumpEvent {
  double time;
  State from;
  State to;
};

/// Right-continuous piecewise-constant path given by its jump skeleton.
struct JumpPath {
  State initial = 1;
  std::vector<JumpEvent> jumps;

  State state_at(double t) const;
};

/// Chain driven by a MarkedPointDriver; parameters may change between calls
/// to advance.
class DrivenChain {
 public:
  DrivenChain(const MarkSpace& space, MarkedPointDriver& driver, State initial);

  /// Processes every event strictly after the last processed one and
  /// strictly before `until`, with rates frozen at x.
  void advance(double until, const Point& x, std::vector<JumpEvent>* log);
  State state() const noexcept { return state_; }

 private:
  const MarkSpace* space_;
  MarkedPointDriver* driver_;
  State state_;
  double cursor_ = 0.0;
};

/// (1/T) * Lebesgue measure of {s in [0,T) : a(s) != b(s)}.
double occupation_statistic(const JumpPath& a, const JumpPath& b, double T);

struct CoupledChainPaths {
  JumpPath first;
  JumpPath second;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  double occupation = 0.0;
};

/// Stream key shared by every simulation of (seed, replicate).
std::uint64_t mark_stream_key(std::uint64_t seed, std::uint64_t replicate);

CoupledChainPaths simulate_frozen_coupled(const GeneratorFamily& family, const Point& x,
                                          const Point& y, State i0, double T, std::size_t window,
                                          std::uint64_t seed, std::uint64_t replicate = 0);

/// Same, reusing a prebuilt mark space (replicate loops).
CoupledChainPaths simulate_frozen_coupled(const MarkSpace& space, const Point& x, const Point& y,
                                          State i0, double T, std::uint64_t seed,
                                          std::uint64_t replicate = 0);

struct CouplingRow {
  Point x;
  Point y;
  double mean = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double bound = 0.0;
  bool flagged = false;
};

/// Width of the reported two-sided 99% normal interval in standard errors.
inline constexpr double kCi99 = 2.5758293035489004;

/// Per pair: mean occupation statistic over replicates with a 99% CI, the
/// bound T * ell1_distance(x, y), and a flag when ci_lo exceeds the bound.
/// Replicate r uses the same streams for every pair.
std::vector<CouplingRow> coupling_bound_report(const GeneratorFamily& family,
                                               std::span<const std::pair<Point, Point>> pairs,
                                               State i0, double T, std::size_t window,
                                               std::size_t replicates, std::uint64_t seed);

/// CSV with columns replicate,time,chain_id,from_state,to_state.
void write_jump_log(std::ostream& out, std::span<const CoupledChainPaths> runs);

}  // namespace twoscale
