#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eastkcm/configuration.hpp"
#include "eastkcm/schedule.hpp"

namespace eastkcm {

enum class RateProvenance { exact, monte_carlo, asymptotic };

std::string to_string(RateProvenance p);

struct RateEntry {
  int epoch = 0;
  int length = 0;
  double lambda = 0.0;
  RateProvenance provenance = RateProvenance::exact;
  long long samples = 0;  // Monte Carlo only
  double stderr_ = 0.0;   // Monte Carlo: std. error of the rate estimate
};

/// Coalescence rates λ_n(d) for d in class n, n <= N.
class RateTable {
 public:
  RateTable() = default;
  explicit RateTable(EpochSchedule schedule) : schedule_(std::move(schedule)) {}

  const EpochSchedule& schedule() const { return schedule_; }
  void insert(const RateEntry& entry);

  /// λ_n(d); zero when d is not of class n. Throws if d is of class n but
  /// no entry was built for it.
  double lambda(int n, int d) const;
  const std::map<std::pair<int, int>, RateEntry>& entries() const { return entries_; }

  /// Largest c with c/t_n <= λ_n(d) <= 1/(c t_n) over all entries.
  double bound_constant() const;

  /// JSON array of {n, d, lambda, provenance, stderr}.
  std::string to_json() const;

 private:
  EpochSchedule schedule_;
  std::map<std::pair<int, int>, RateEntry> entries_;
};

struct RateMode {
  RateProvenance kind = RateProvenance::exact;
  long long samples = 0;     // Monte Carlo sample count
  std::uint64_t seed = 1;    // Monte Carlo root seed
  unsigned workers = 1;

  static RateMode exact() { return {}; }
  static RateMode monte_carlo(long long samples, std::uint64_t seed, unsigned workers = 1) {
    return {RateProvenance::monte_carlo, samples, seed, workers};
  }
  static RateMode asymptotic() { return {RateProvenance::asymptotic, 0, 1, 1}; }
};

/// Monte Carlo estimate of λ_n(d) from East trajectories on [0, d-1]
/// started at the single-zero configuration.
RateEntry estimate_rate_monte_carlo(int n, int d, const EpochSchedule& schedule, long long samples,
                                    std::uint64_t seed, unsigned workers = 1);

RateTable build_rate_table(const EpochSchedule& schedule, int d_max, const RateMode& mode);

struct EpochEvent {
  double time = 0.0;
  int position = 0;
};

struct EpochTrace {
  int epoch = 0;
  Configuration initial;
  std::vector<EpochEvent> events;
  Configuration final_state;

  /// Configuration after all events with time <= tau.
  Configuration at(double tau) const;
};

struct HcpTrace {
  std::vector<EpochTrace> epochs;

  /// CSV with header epoch,internal_time,killed_position.
  std::string events_csv() const;
};

/// One epoch of the coalescence process: every class-n zero carries an
/// Exp(λ_n(d)) clock; the earliest fires, the zero is filled and its domain
/// merges into the left neighbor's. All clocks are redrawn after each event.
EpochTrace run_epoch(const Configuration& config, int n, const RateTable& rates, Rng& rng);

HcpTrace run_hcp(const Configuration& config, const EpochSchedule& schedule, const RateTable& rates, Rng& rng);

/// Configuration at wall time t: epoch n(t) at internal time t - t_{n(t)}^-.
Configuration state_at_wall_time(const HcpTrace& trace, const EpochSchedule& schedule, double t);

}  // namespace eastkcm
