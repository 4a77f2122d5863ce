#include "twoscale/skorokhod.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "twoscale/csv.hpp"
#include "twoscale/error.hpp"
#include "twoscale/parallel.hpp"
#include "twoscale/rng.hpp"

namespace twoscale {

namespace {

void require_source(const GeneratorFamily& family, State n, std::size_t m) {
  if (n < 1 || n > m || !family.contains(n))
    fail(ErrorKind::precondition_violation,
         "source state " + std::to_string(n) + " outside the window of size " + std::to_string(m));
}

// Left edge of the slot of k relative to n (k != n).
double slot_lo(State n, State k, double gamma) {
  return (static_cast<double>(k) - static_cast<double>(n) - (k > n ? 1.0 : 0.0)) * gamma;
}

}  // namespace

double IntervalLayout::total_length() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.hi - e.lo;
  return s;
}

IntervalLayout interval_layout(const GeneratorFamily& family, const Point& x, State n,
                               std::size_t window) {
  const std::size_t m = family.window_size(window);
  require_source(family, n, m);
  IntervalLayout layout;
  layout.source = n;
  const double g = family.gamma(n);
  double measure = 0.0;
  for (State k = 1; k <= m; ++k) {
    if (k == n) continue;
    measure += family.sup_rate(n, k);
    const double q = family.rate(n, k, x);
    if (q <= 0.0) continue;
    const double lo = slot_lo(n, k, g);
    if (k > n)
      layout.entries.push_back({k, lo, lo + q});
    else
      layout.entries.push_back({k, lo + g - q, lo + g});
  }
  if (n < m) {
    measure += family.tail_sup(n, m);
    const double tail = family.tail_rate(n, x, m);
    if (tail > 0.0) {
      const double lo = static_cast<double>(m - n) * g;
      layout.entries.push_back({m, lo, lo + tail});
    }
  }
  std::sort(layout.entries.begin(), layout.entries.end(),
            [](const LayoutEntry& a, const LayoutEntry& b) { return a.lo < b.lo; });
  layout.dominating_measure = measure;
  return layout;
}

std::optional<State> jump_destination(const IntervalLayout& layout, double mark) {
  for (const auto& e : layout.entries)
    if (mark >= e.lo && mark < e.hi) return e.destination;
  return std::nullopt;
}

double DominatingSet::sample(double u) const {
  const double total = measure();
  const double target = u * total;
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) --it;
  const auto p = static_cast<std::size_t>(it - cumulative.begin());
  const double before = p == 0 ? 0.0 : cumulative[p - 1];
  const auto& [lo, hi] = pieces[p];
  // Keep the point inside the half-open piece under rounding.
  return std::min(lo + (target - before), std::nextafter(hi, lo));
}

MarkSpace::MarkSpace(const GeneratorFamily& family, std::size_t window)
    : family_(&family), window_(family.window_size(window)) {
  if (window_ < 1) fail(ErrorKind::invalid_argument, "mark space needs a nonempty window");
  sets_.resize(window_);
  gammas_.resize(window_);
  for (State n = 1; n <= window_; ++n) {
    const double g = family.gamma(n);
    gammas_[n - 1] = g;
    DominatingSet& set = sets_[n - 1];
    auto add = [&](double lo, double len) {
      if (len <= 0.0) return;
      set.pieces.emplace_back(lo, lo + len);
    };
    for (State k = 1; k < n; ++k) {
      const double s = family.sup_rate(n, k);
      add(slot_lo(n, k, g) + g - s, s);
    }
    for (State k = n + 1; k <= window_; ++k) add(slot_lo(n, k, g), family.sup_rate(n, k));
    if (n < window_) add(static_cast<double>(window_ - n) * g, family.tail_sup(n, window_));
    double acc = 0.0;
    for (const auto& [lo, hi] : set.pieces) {
      acc += hi - lo;
      set.cumulative.push_back(acc);
    }
  }
}

std::optional<State> MarkSpace::locate(State n, const Point& x, double z) const {
  const double g = gammas_[n - 1];
  if (!(g > 0.0)) return std::nullopt;
  const double slot = std::floor(z / g);
  if (z >= 0.0) {
    const double kd = static_cast<double>(n) + 1.0 + slot;
    if (kd <= static_cast<double>(window_)) {
      const auto k = static_cast<State>(kd);
      // Same arithmetic as interval_layout so both agree at the edges.
      const double lo = slot_lo(n, k, g);
      const double q = family_->rate(n, k, x);
      if (z >= lo && z < lo + q) return k;
      return std::nullopt;
    }
    if (n >= window_) return std::nullopt;
    const double lo = static_cast<double>(window_ - n) * g;
    if (z < lo) return std::nullopt;
    if (z - lo >= family_->tail_sup(n, window_)) return std::nullopt;
    const double tail = family_->tail_rate(n, x, window_);
    if (z < lo + tail) return window_;
    return std::nullopt;
  }
  const double kd = static_cast<double>(n) + slot;
  if (kd < 1.0) return std::nullopt;
  const auto k = static_cast<State>(kd);
  if (k >= n) return std::nullopt;
  const double hi = slot_lo(n, k, g) + g;
  const double q = family_->rate(n, k, x);
  if (z >= hi - q && z < hi) return k;
  return std::nullopt;
}

MarkedPointDriver::MarkedPointDriver(const MarkSpace& space, double time_scale,
                                     std::uint64_t key)
    : space_(&space), time_scale_(time_scale), key_(key), cache_(space.window()) {
  if (!(time_scale > 0.0) || !std::isfinite(time_scale))
    fail(ErrorKind::invalid_argument, "time scale must be positive");
}

const MarkedPointDriver::Block& MarkedPointDriver::block(State n, std::int64_t b) {
  Block& blk = cache_[n - 1];
  if (blk.index == b) return blk;
  const DominatingSet& set = space_->dominating(n);
  const double rate = set.measure() * time_scale_;
  const double span = kBlockEvents / rate;
  const double start = static_cast<double>(b) * span;
  const double end = static_cast<double>(b + 1) * span;
  blk.index = b;
  blk.events.clear();
  CounterRng rng(derive_key(key_, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(b)}));
  double t = start;
  for (;;) {
    t += rng.exponential(rate);
    if (t >= end) break;
    blk.events.push_back({t, set.sample(rng.uniform())});
  }
  return blk;
}

std::optional<MarkEvent> MarkedPointDriver::next_event(State n, double after) {
  const DominatingSet& set = space_->dominating(n);
  const double rate = set.measure() * time_scale_;
  if (!(rate > 0.0)) return std::nullopt;
  const double span = kBlockEvents / rate;
  auto b = static_cast<std::int64_t>(std::floor(std::max(after, 0.0) / span));
  for (;;) {
    const Block& blk = block(n, b);
    auto it = std::upper_bound(blk.events.begin(), blk.events.end(), after,
                               [](double t, const MarkEvent& e) { return t < e.time; });
    if (it != blk.events.end()) return *it;
    ++b;
  }
}

State JumpPath::state_at(double t) const {
  State s = initial;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    s = j.to;
  }
  return s;
}

DrivenChain::DrivenChain(const MarkSpace& space, MarkedPointDriver& driver, State initial)
    : space_(&space), driver_(&driver), state_(initial) {
  require_source(space.family(), initial, space.window());
}

void DrivenChain::advance(double until, const Point& x, std::vector<JumpEvent>* log) {
  for (;;) {
    auto ev = driver_->next_event(state_, cursor_);
    if (!ev || ev->time >= until) return;
    cursor_ = ev->time;
    auto dest = space_->locate(state_, x, ev->mark);
    if (dest && *dest != state_) {
      if (log) log->push_back({ev->time, state_, *dest});
      state_ = *dest;
    }
  }
}

double occupation_statistic(const JumpPath& a, const JumpPath& b, double T) {
  if (!(T > 0.0)) fail(ErrorKind::invalid_argument, "horizon must be positive");
  std::size_t ia = 0, ib = 0;
  State sa = a.initial, sb = b.initial;
  double prev = 0.0, apart = 0.0;
  for (;;) {
    const double ta = ia < a.jumps.size() ? a.jumps[ia].time : T;
    const double tb = ib < b.jumps.size() ? b.jumps[ib].time : T;
    const double t = std::min({ta, tb, T});
    if (sa != sb) apart += t - prev;
    prev = t;
    if (t >= T) break;
    if (ta == t) sa = a.jumps[ia++].to;
    if (tb == t) sb = b.jumps[ib++].to;
  }
  return apart / T;
}

std::uint64_t mark_stream_key(std::uint64_t seed, std::uint64_t replicate) {
  return derive_key(seed, {replicate, static_cast<std::uint64_t>(StreamTag::marks)});
}

CoupledChainPaths simulate_frozen_coupled(const MarkSpace& space, const Point& x, const Point& y,
                                          State i0, double T, std::uint64_t seed,
                                          std::uint64_t replicate) {
  if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorKind::invalid_argument, "T must be positive");
  const std::uint64_t key = mark_stream_key(seed, replicate);
  MarkedPointDriver da(space, 1.0, key), db(space, 1.0, key);
  DrivenChain ca(space, da, i0), cb(space, db, i0);
  CoupledChainPaths out;
  out.first.initial = out.second.initial = i0;
  out.horizon = T;
  out.seed = seed;
  out.replicate = replicate;
  ca.advance(T, x, &out.first.jumps);
  cb.advance(T, y, &out.second.jumps);
  out.occupation = occupation_statistic(out.first, out.second, T);
  return out;
}

CoupledChainPaths simulate_frozen_coupled(const GeneratorFamily& family, const Point& x,
                                          const Point& y, State i0, double T, std::size_t window,
                                          std::uint64_t seed, std::uint64_t replicate) {
  MarkSpace space(family, window);
  return simulate_frozen_coupled(space, x, y, i0, T, seed, replicate);
}

std::vector<CouplingRow> coupling_bound_report(const GeneratorFamily& family,
                                               std::span<const std::pair<Point, Point>> pairs,
                                               State i0, double T, std::size_t window,
                                               std::size_t replicates, std::uint64_t seed) {
  if (replicates < 100)
    fail(ErrorKind::precondition_violation, "coupling report needs at least 100 replicates");
  MarkSpace space(family, window);
  require_source(family, i0, space.window());
  std::vector<CouplingRow> rows;
  for (const auto& [x, y] : pairs) {
    auto stats = parallel_map<double>(replicates, [&](std::size_t r) {
      return simulate_frozen_coupled(space, x, y, i0, T, seed, r).occupation;
    });
    double sum = 0.0;
    for (double v : stats) sum += v;
    const double n = static_cast<double>(replicates);
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : stats) ss += (v - mean) * (v - mean);
    CouplingRow row;
    row.x = x;
    row.y = y;
    row.mean = mean;
    row.std_error = std::sqrt(ss / (n - 1.0) / n);
    row.ci_lo = mean - kCi99 * row.std_error;
    row.ci_hi = mean + kCi99 * row.std_error;
    row.bound = T * ell1_distance(family, x, y, window);
    row.flagged = row.ci_lo > row.bound;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_jump_log(std::ostream& out, std::span<const CoupledChainPaths> runs) {
  CsvWriter csv(out);
  csv.header({"replicate", "time", "chain_id", "from_state", "to_state"});
  for (const auto& run : runs) {
    std::size_t ia = 0, ib = 0;
    const auto& a = run.first.jumps;
    const auto& b = run.second.jumps;
    while (ia < a.size() || ib < b.size()) {
      const bool take_a = ib >= b.size() || (ia < a.size() && a[ia].time <= b[ib].time);
      const JumpEvent& e = take_a ? a[ia++] : b[ib++];
      csv.cell(run.replicate).cell(e.time).cell(take_a ? 0 : 1);
      csv.cell(static_cast<std::uint64_t>(e.from)).cell(static_cast<std::uint64_t>(e.to));
      csv.end_row();
    }
  }
}

}  // namespace twoscale
