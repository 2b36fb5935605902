#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "eastkcm/configuration.hpp"

namespace eastkcm {

/// Called after every state change with (time, site, new occupation value).
using FlipObserver = std::function<void(double, int, int)>;

/// Event-driven simulator of the finite-volume East process.
///
/// Only flippable sites are tracked: x is flippable when x+1 is empty or
/// x = L-1 (frozen zero at L). Flippable sites are kept in two index sets by
/// current value, so an event costs O(1) besides the sorted zero-list update.
class EastProcess {
 public:
  EastProcess(Configuration initial, double q);

  const Configuration& configuration() const { return config_; }
  double time() const { return time_; }
  double q() const { return q_; }
  bool flippable(int x) const { return x == config_.length() - 1 || config_.empty(x + 1); }
  double total_rate() const {
    return q_ * static_cast<double>(filled_.size()) + (1.0 - q_) * static_cast<double>(empty_.size());
  }

  /// Advances to time() + duration. Events past the target are discarded,
  /// which is exact by memorylessness.
  void advance(double duration, Rng& rng, const FlipObserver& observer = {});

  /// Runs until `stop(process)` holds (checked at the start and after each
  /// event) or until absolute time `deadline`. Returns true if stopped by
  /// the predicate.
  template <typename Stop>
  bool run_until(Stop&& stop, double deadline, Rng& rng, const FlipObserver& observer = {}) {
    if (stop(*this)) return true;
    while (true) {
      const double t_next = time_ + next_waiting_time(rng);
      if (t_next > deadline) {
        time_ = deadline;
        return false;
      }
      time_ = t_next;
      const int x = fire(rng);
      if (observer) observer(time_, x, config_.filled(x) ? 1 : 0);
      if (stop(*this)) return true;
    }
  }

 private:
  struct IndexSet {
    std::vector<int> items;
    std::vector<int> pos;
    std::size_t size() const { return items.size(); }
    bool contains(int x) const { return pos[static_cast<std::size_t>(x)] >= 0; }
    void insert(int x);
    void erase(int x);
  };

  double next_waiting_time(Rng& rng);
  int fire(Rng& rng);
  void refresh(int x);

  Configuration config_;
  double q_;
  double time_ = 0.0;
  IndexSet filled_;  // flippable and filled: flip to 0 at rate q
  IndexSet empty_;   // flippable and empty: flip to 1 at rate 1-q
};

/// Samples the East process from `config` for `duration` and returns the
/// final configuration.
Configuration advance(const Configuration& config, const SimParams& params, double duration, Rng& rng,
                      const FlipObserver& observer = {});

enum class HittingEvent { origin_filled, all_filled, extra_zeros };

struct HittingTarget {
  HittingEvent event = HittingEvent::origin_filled;
  int extra_zeros = 0;  // n for extra_zeros: |Z(σ_t) \ {0}| = n

  static HittingTarget origin_filled() { return {HittingEvent::origin_filled, 0}; }
  static HittingTarget all_filled() { return {HittingEvent::all_filled, 0}; }
  static HittingTarget n_extra_zeros(int n) { return {HittingEvent::extra_zeros, n}; }
};

struct HittingSample {
  double time = 0.0;
  bool censored = false;  // horizon reached before the event; time = horizon
};

bool hit(const HittingTarget& target, const Configuration& c);

HittingSample hitting_time(const Configuration& config, const SimParams& params, HittingTarget target, Rng& rng);

/// Samples (tau_n, tau~, tau_1) on one path; each censored at params.horizon.
struct HittingTriple {
  HittingSample extra_zeros, origin_filled, all_filled;
};
HittingTriple hitting_times_on_path(const Configuration& config, const SimParams& params, int n, Rng& rng);

/// Sentinel for "fewer than k zeros": the k-th zero is reported at L.
struct ProbeRecord {
  double t = 0.0;
  int origin_empty = 0;   // σ_t(0) = 0
  int persistent = 0;     // σ_s(0) = 0 for all s <= t
  std::vector<int> first_zeros;  // x_0..x_{k-1}; L when exhausted
  int zero_count = 0;
  std::map<int, int> domain_histogram;  // length -> count
};

struct ObservableSeries {
  int length = 0;
  std::vector<ProbeRecord> probes;
  double origin_first_flip = std::numeric_limits<double>::infinity();

  /// CSV with header t,p0,persist,x0,...,x{k-1},nzeros.
  std::string to_csv() const;
};

ObservableSeries run_with_observables(const Configuration& config, const SimParams& params,
                                      std::span<const double> probes, int k, Rng& rng);

/// Smallest volume L such that, with probability >= 1 - delta under the
/// renewal law, at least k+1 complete domains of class >= N+1 lie inside
/// [0, L - 2^(N+1)].
///
/// Bound: with p = mu(class >= N+1), take the fewest gaps M such that
/// P(Bin(M, p) <= k) <= delta_1, then the (1 - delta_2)-quantile B of
/// x0 + (sum of M gaps), computed by exact convolution; L = B + 2^(N+1).
/// delta_1 + delta_2 <= delta by a union bound.
int choose_cutoff(const RenewalLaw& law, int max_epoch, int k, double delta);

}  // namespace eastkcm
