#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "eastkcm/configuration.hpp"
#include "eastkcm/hcp.hpp"
#include "eastkcm/renewal_calc.hpp"

namespace eastkcm {

inline constexpr const char* kCodeVersion = "eastkcm 1.0.0";

struct ExperimentConfig {
  std::string name;
  std::vector<double> q_values{0.1};
  int max_epoch = 2;
  std::string init = "geometric:0.5";
  int length = 0;              // 0: certified cutoff from the initial law
  double cutoff_delta = 1e-3;  // failure probability for the cutoff
  long long samples = 10000;
  int probe_count = 40;
  int k = 1;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out_dir = "out";
  int gap_truncation = 1 << 12;  // x_max of the initial gap law
  bool self_check = false;       // tv-compare: HCP against itself

  void validate() const;
};

/// Ren(mu | 0) with mu from an initial-law spec truncated to x_max.
RenewalLaw pinned_law(const InitialSpec& spec, int x_max);

/// L from the configuration: explicit, or certified by choose_cutoff.
int experiment_length(const ExperimentConfig& cfg);

std::vector<double> log_spaced(double lo, double hi, int count);

/// Total variation between two ensembles of integer tuples.
struct TvReport {
  double tv = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t cells = 0;  // after pooling
  std::size_t samples_a = 0;
  std::size_t samples_b = 0;
};

/// TV = 1/2 sum |p - q| over exact tuples; cells whose mean count over the
/// two ensembles is below 5 are pooled into one cell. 95% CI from `resamples`
/// bootstrap resamples of both ensembles (percentile interval, widened to
/// contain the point estimate).
TvReport estimate_tv(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b,
                     std::uint64_t seed, int resamples = 1000);

struct PlateauPoint {
  double t = 0.0;
  double density = 0.0;  // P(σ_t(0) = 0)
  double density_se = 0.0;
  double persistence = 0.0;  // P(σ_s(0) = 0 for all s <= t)
  double persistence_se = 0.0;
  double gap_se = 0.0;  // binomial s.e. of density - persistence
  double hcp_density = 0.0;
  double hcp_se = 0.0;
  double level = 0.0;  // (1/(2^n+1))^c0 in stalling window n, else NaN
};

struct PlateauResult {
  double q = 0.0;
  int length = 0;
  std::vector<PlateauPoint> points;
  double window_start = 0.0;  // t_1^+
  double window_end = 0.0;    // t_2^-
  double flatness = 0.0;      // max - min of persistence inside the window
  double reference = 0.0;     // persistence at the window start
  double sandwich_excess = 0.0;  // max over probes of |dens - pers| - (q + 3 s.e.)
  std::string to_csv() const;
};

PlateauResult run_plateau(double q, const ExperimentConfig& cfg);

struct AgingCell {
  double s = 0.0, t = 0.0;
  double cov = 0.0, cov_se = 0.0;
  double factorized = 0.0;  // P(σ_t=0)(1 - P(σ_s=0)) at x = 0
};

struct AgingResult {
  double q = 0.0;
  std::vector<AgingCell> cells;
  /// Pairs with equal lag t - s in different stalling windows.
  std::vector<std::pair<std::size_t, std::size_t>> equal_lag_pairs;
  bool aging_detected = false;  // some equal-lag pair differs beyond 3 s.e.
  std::string to_csv() const;
};

AgingResult run_aging(double q, const ExperimentConfig& cfg);

struct ScalingRow {
  int epoch = 0;  // n: t in [t_n^+, t_{n+1}^-]
  double t = 0.0;
  double s = 0.0;
  double lt_x_east = 0.0, lt_x_recursion = 0.0, lt_x_limit = 0.0;
  double lt_y_east = 0.0, lt_y_recursion = 0.0, lt_y_limit = 0.0;
  long long exhausted = 0;  // trajectories with fewer than two zeros
};

struct ScalingResult {
  double q = 0.0;
  std::vector<ScalingRow> rows;
  std::string to_csv() const;
};

ScalingResult run_scaling(double q, const ExperimentConfig& cfg);

struct TvRow {
  std::string label;
  double t = 0.0;
  int epoch = 0;
  double tau = 0.0;
  TvReport tv;
};

struct TvCompareResult {
  double q = 0.0;
  int length = 0;
  std::vector<TvRow> rows;
  std::string rates_json;
  std::string to_csv() const;
};

TvCompareResult run_tv_compare(double q, const ExperimentConfig& cfg);

struct ExpHittingRow {
  double q = 0.0;
  int d = 0;
  double gamma_exact = 0.0;
  double gamma_hat = 0.0;
  double ks_exact = 0.0;
  double ks_mc = 0.0;
  long long censored = 0;
};

/// KS distance between the law of τ~/γ and Exp(1), from the exact CDF.
double exact_exponential_ks(int d, double q, double gamma);
/// KS distance of the sample τ~/γ^ against Exp(1), with γ^ the empirical
/// e^-1 survival quantile.
ExpHittingRow run_exp_hitting(int d, double q, long long samples, std::uint64_t seed, unsigned workers);

/// Empirical law of the East process on [0,L-1] at time t from `start`,
/// as counts over bit-encoded states.
std::vector<long long> empirical_law(int length, double q, std::uint32_t start, double t, long long samples,
                                     std::uint64_t seed, unsigned workers);

struct ExperimentOutput {
  std::map<std::string, std::string> files;  // file name -> content
  nlohmann::json manifest;
  nlohmann::json report;  // {"checks": [{name, kind, passed, detail}]}
};

/// Runs one experiment by name and returns the files it would write.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// Writes the files plus manifest.json and report.json into cfg.out_dir.
void write_output(const ExperimentConfig& cfg, const ExperimentOutput& out);

}  // namespace eastkcm
