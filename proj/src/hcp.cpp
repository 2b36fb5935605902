#include "eastkcm/hcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "eastkcm/east_sim.hpp"
#include "eastkcm/exact_oracle.hpp"

namespace eastkcm {

std::string to_string(RateProvenance p) {
  switch (p) {
    case RateProvenance::exact:
      return "exact";
    case RateProvenance::monte_carlo:
      return "monte-carlo";
    case RateProvenance::asymptotic:
      return "asymptotic";
  }
  return "unknown";
}

void RateTable::insert(const RateEntry& entry) {
  if (class_of(entry.length) != entry.epoch) throw Error("rate entry outside its class");
  if (!(entry.lambda > 0.0) || !std::isfinite(entry.lambda)) throw Error("stored rates must be positive and finite");
  entries_[{entry.epoch, entry.length}] = entry;
}

double RateTable::lambda(int n, int d) const {
  if (class_of(d) != n) return 0.0;
  auto it = entries_.find({n, d});
  if (it == entries_.end())
    throw Error("no rate for class " + std::to_string(n) + " length " + std::to_string(d));
  return it->second.lambda;
}

double RateTable::bound_constant() const {
  double c = 1.0;
  for (const auto& [key, e] : entries_) {
    const double scaled = e.lambda * schedule_.scale[static_cast<std::size_t>(e.epoch)];
    c = std::min({c, scaled, 1.0 / scaled});
  }
  return c;
}

std::string RateTable::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, e] : entries_) {
    nlohmann::json row{{"n", e.epoch},
                       {"d", e.length},
                       {"lambda", e.lambda},
                       {"provenance", to_string(e.provenance)},
                       {"stderr", e.stderr_}};
    if (e.provenance == RateProvenance::monte_carlo) row["samples"] = e.samples;
    entries.push_back(std::move(row));
  }
  nlohmann::json out{{"q", schedule_.q},
                     {"N", schedule_.max_epoch},
                     {"epsilon", schedule_.epsilon},
                     {"bound_constant", entries_.empty() ? 0.0 : bound_constant()},
                     {"entries", std::move(entries)}};
  return out.dump(2);
}

RateEntry estimate_rate_monte_carlo(int n, int d, const EpochSchedule& schedule, long long samples,
                                    std::uint64_t seed, unsigned workers) {
  if (class_of(d) != n) throw Error("length not of the requested class");
  if (samples < 1) throw Error("sample count must be >= 1");
  const double window = schedule.window[static_cast<std::size_t>(n)];
  SimParams params{schedule.q, seed, window};
  const Configuration start = Configuration::single_zero_left(d);
  std::vector<std::uint8_t> survived(static_cast<std::size_t>(samples), 0);
  parallel_for(survived.size(), workers, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    survived[i] = hitting_time(start, params, HittingTarget::origin_filled(), rng).censored ? 1 : 0;
  });
  long long alive = 0;
  for (auto s : survived) alive += s;
  if (alive == 0) throw Error("increase samples or reduce T_n");
  const double p = static_cast<double>(alive) / static_cast<double>(samples);
  RateEntry e;
  e.epoch = n;
  e.length = d;
  e.lambda = -std::log(p) / window;
  e.provenance = RateProvenance::monte_carlo;
  e.samples = samples;
  // Delta method on -log(p)/T.
  e.stderr_ = std::sqrt((1.0 - p) / (p * static_cast<double>(samples))) / window;
  if (alive == samples) throw Error("no trajectory left the origin; increase samples or T_n");
  return e;
}

RateTable build_rate_table(const EpochSchedule& schedule, int d_max, const RateMode& mode) {
  if (d_max < 1) throw Error("d_max must be >= 1");
  RateTable table(schedule);
  for (int n = 0; n <= schedule.max_epoch; ++n) {
    const int hi = static_cast<int>(std::min<long long>(class_max(n), d_max));
    for (int d = static_cast<int>(class_min(n)); d <= hi; ++d) {
      RateEntry e;
      switch (mode.kind) {
        case RateProvenance::exact: {
          const OracleResult r = lambda_exact(n, d, schedule);
          e = {n, d, r.value, RateProvenance::exact, 0, r.error_bound};
          break;
        }
        case RateProvenance::monte_carlo:
          e = estimate_rate_monte_carlo(n, d, schedule, mode.samples,
                                        stream_seed(mode.seed, static_cast<std::uint64_t>(n * 4096 + d)),
                                        mode.workers);
          break;
        case RateProvenance::asymptotic:
          e = {n, d, 1.0 / hitting_scale_exact(d, schedule.q), RateProvenance::asymptotic, 0, 0.0};
          break;
      }
      table.insert(e);
    }
  }
  return table;
}

Configuration EpochTrace::at(double tau) const {
  Configuration c = initial;
  for (const auto& e : events) {
    if (e.time > tau) break;
    c.flip(e.position);
  }
  return c;
}

std::string HcpTrace::events_csv() const {
  std::ostringstream out;
  out.precision(12);
  out << "epoch,internal_time,killed_position\n";
  for (const auto& ep : epochs)
    for (const auto& e : ep.events) out << ep.epoch << ',' << e.time << ',' << e.position << '\n';
  return out.str();
}

namespace {

// Class-n zeros grouped by domain length; picking a group proportionally to
// count * λ and then a uniform member equals the minimum of independent
// exponential clocks.
class ClockPool {
 public:
  ClockPool(int n, const RateTable& rates, int length)
      : base_(static_cast<int>(class_min(n))), slot_(static_cast<std::size_t>(length), -1) {
    const int size = static_cast<int>(class_max(n) - class_min(n) + 1);
    groups_.resize(static_cast<std::size_t>(size));
    lambda_.resize(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) lambda_[static_cast<std::size_t>(i)] = rates.lambda(n, base_ + i);
  }

  void add(int position, int length) {
    auto& g = group(length);
    slot_[static_cast<std::size_t>(position)] = static_cast<int>(g.size());
    g.push_back(position);
  }

  void remove(int position, int length) {
    auto& g = group(length);
    const int i = slot_[static_cast<std::size_t>(position)];
    if (i < 0 || g[static_cast<std::size_t>(i)] != position) throw Error("clock pool out of sync");
    g[static_cast<std::size_t>(i)] = g.back();
    slot_[static_cast<std::size_t>(g.back())] = i;
    g.pop_back();
    slot_[static_cast<std::size_t>(position)] = -1;
  }

  double total_rate() const {
    double r = 0.0;
    for (std::size_t i = 0; i < groups_.size(); ++i) r += lambda_[i] * static_cast<double>(groups_[i].size());
    return r;
  }

  int draw(Rng& rng) const {
    std::vector<double> w(groups_.size());
    for (std::size_t i = 0; i < groups_.size(); ++i) w[i] = lambda_[i] * static_cast<double>(groups_[i].size());
    std::discrete_distribution<std::size_t> pick_group(w.begin(), w.end());
    const auto& g = groups_[pick_group(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    return g[pick(rng)];
  }

 private:
  std::vector<int>& group(int length) { return groups_[static_cast<std::size_t>(length - base_)]; }

  int base_;
  std::vector<std::vector<int>> groups_;
  std::vector<double> lambda_;
  std::vector<int> slot_;  // index of a zero inside its group
};

}  // namespace

EpochTrace run_epoch(const Configuration& config, int n, const RateTable& rates, Rng& rng) {
  EpochTrace trace;
  trace.epoch = n;
  trace.initial = config;
  Configuration state = config;
  ClockPool pool(n, rates, config.length());
  for (std::size_t j = 0; j < state.zero_count(); ++j) {
    const int d = state.domain_length(j);
    const int c = class_of(d);
    if (c < n) throw Error("epoch precondition violated");
    if (c == n) pool.add(state.zeros()[j], d);
  }

  double time = 0.0;
  for (double rate = pool.total_rate(); rate > 0.0; rate = pool.total_rate()) {
    time += std::exponential_distribution<double>(rate)(rng);
    const int x = pool.draw(rng);
    const auto& zs = state.zeros();
    const auto j = static_cast<std::size_t>(std::lower_bound(zs.begin(), zs.end(), x) - zs.begin());
    pool.remove(x, state.domain_length(j));
    if (j > 0) {
      // The left neighbor absorbs the killed domain and leaves class n.
      const int left_d = state.domain_length(j - 1);
      if (class_of(left_d) == n) pool.remove(zs[j - 1], left_d);
    }
    state.flip(x);
    trace.events.push_back({time, x});
  }
  trace.final_state = std::move(state);
  return trace;
}

HcpTrace run_hcp(const Configuration& config, const EpochSchedule& schedule, const RateTable& rates, Rng& rng) {
  HcpTrace trace;
  Configuration state = config;
  for (int n = 0; n <= schedule.max_epoch; ++n) {
    trace.epochs.push_back(run_epoch(state, n, rates, rng));
    state = trace.epochs.back().final_state;
  }
  return trace;
}

Configuration state_at_wall_time(const HcpTrace& trace, const EpochSchedule& schedule, double t) {
  const int n = schedule.epoch_at(t);
  if (trace.epochs.empty()) throw Error("empty trace");
  if (n >= static_cast<int>(trace.epochs.size())) return trace.epochs.back().final_state;
  const auto& ep = trace.epochs[static_cast<std::size_t>(n)];
  return ep.at(t - schedule.active_start[static_cast<std::size_t>(n)]);
}

}  // namespace eastkcm
