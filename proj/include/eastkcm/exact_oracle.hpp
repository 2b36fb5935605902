#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eastkcm/common.hpp"
#include "eastkcm/schedule.hpp"

namespace eastkcm {

/// Largest volume handled by the exact oracle.
inline constexpr int kMaxExactLength = 14;

/// Generator of the East process on [0, L-1] (frozen zero at L), indexed by
/// the bit encoding of configurations (bit x = occupation of site x).
struct GeneratorMatrix {
  int length = 0;
  double q = 0.0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> rates;

  Eigen::Index states() const { return rates.rows(); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(rates); }
  /// Product Bernoulli(1-q) measure, the reversible measure of the chain.
  Eigen::VectorXd reversible_measure() const;
};

GeneratorMatrix build_generator(int length, double q);

/// A computed quantity with the method used and a bound on its numerical error.
struct OracleResult {
  double value = 0.0;
  std::string method;
  double error_bound = 0.0;
};

/// Smallest nonzero eigenvalue of -L on the symmetrized generator.
OracleResult spectral_gap_exact(int length, double q);

/// P(σ_s(0) = 0 for all s <= T) started from the single-zero configuration
/// on [0, d-1], by uniformization of the sub-generator on {σ(0) = 0}.
OracleResult survival_probability_exact(int d, double q, double horizon);

/// Same, for a list of horizons in one uniformization pass.
std::vector<double> survival_curve_exact(int d, double q, std::span<const double> horizons,
                                         double* error_bound = nullptr);

/// Law at time t of the East process on [0, L-1] started from `start`
/// (bit encoded), by uniformization of the full generator.
Eigen::VectorXd transition_law_exact(int length, double q, std::uint32_t start, double t);

/// λ_n(d) = -log(survival(d, q, T_n)) / T_n for d in class n, else 0.
OracleResult lambda_exact(int n, int d, const EpochSchedule& schedule);

struct HittingCdf {
  std::vector<double> cdf;  // P(τ~ <= t) for each requested t
  double gamma = 0.0;       // P(τ~ > gamma) = e^-1
};

HittingCdf hitting_cdf_exact(int d, double q, std::span<const double> times);

/// Solves P(τ~ > gamma) = e^-1 by bisection.
double hitting_scale_exact(int d, double q);

struct ReachabilityResult {
  int zero_budget = 0;
  int length = 0;
  std::size_t reached = 0;
  int ell = 0;  // max over reached configurations of L - x0
};

/// Breadth-first search from the filled configuration over legal single
/// flips keeping at most `zero_budget` zeros.
ReachabilityResult reachable_sweep(int length, int zero_budget, std::size_t state_budget = 20'000'000);

}  // namespace eastkcm
