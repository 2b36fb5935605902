#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eastkcm/common.hpp"

namespace eastkcm {

/// Occupation configuration on [0, L-1] with a frozen zero at site L.
///
/// Occupation 1 means filled, 0 means empty (a zero). The sorted zero list is
/// maintained alongside the occupation bits. Domains follow the frozen-zero
/// convention: the domain of the rightmost zero u runs to site L, so its
/// length is L - u.
class Configuration {
 public:
  Configuration() = default;

  /// The completely filled configuration.
  static Configuration all_filled(int length);
  /// A single zero at the left end, everything else filled.
  static Configuration single_zero_left(int length);
  static Configuration from_zeros(int length, std::span<const int> zeros);
  /// Bit x of `bits` is the occupation of site x. Requires length <= 32.
  static Configuration decode(std::uint32_t bits, int length);

  int length() const { return static_cast<int>(occupation_.size()); }
  bool filled(int x) const { return occupation_[static_cast<std::size_t>(x)] != 0; }
  bool empty(int x) const { return !filled(x); }
  const std::vector<int>& zeros() const { return zeros_; }
  std::size_t zero_count() const { return zeros_.size(); }

  /// Length of the domain whose left end is zeros()[j].
  int domain_length(std::size_t j) const {
    const int right = j + 1 < zeros_.size() ? zeros_[j + 1] : length();
    return right - zeros_[j];
  }
  /// Domain length of the zero at site x. Requires empty(x).
  int domain_length_at(int x) const;

  void flip(int x);
  void set(int x, bool filled_value) {
    if (filled(x) != filled_value) flip(x);
  }

  std::uint32_t encode() const;

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.occupation_ == b.occupation_;
  }

 private:
  explicit Configuration(int length);

  std::vector<std::uint8_t> occupation_;
  std::vector<int> zeros_;
};

/// Renewal initial law Ren(nu, mu): first zero ~ nu on {0..x_max}, i.i.d.
/// gaps ~ mu on {1..x_max}.
///
/// Stored vectors are normalized. The probability mass lost by truncating to
/// x_max before normalization is kept in nu_tail_mass / mu_tail_mass; sampling
/// conditions on values <= x_max, so these numbers are the sampling bias.
struct RenewalLaw {
  Eigen::VectorXd nu;
  Eigen::VectorXd mu;
  double nu_tail_mass = 0.0;
  double mu_tail_mass = 0.0;

  int x_max() const { return static_cast<int>(std::max(nu.size(), mu.size())) - 1; }

  /// Normalizes the given (possibly truncated) weights and records the
  /// missing mass. Throws on negative entries, mu(0) != 0 or zero mass.
  static RenewalLaw from_weights(Eigen::VectorXd nu_weights, Eigen::VectorXd mu_weights);
  /// Ren(mu | 0): first zero pinned at the origin.
  static RenewalLaw pinned(Eigen::VectorXd mu_weights);

  /// Entries nonnegative, both vectors sum to one within 1e-12, mu(0)=0.
  void validate() const;

  std::string to_json() const;
  static RenewalLaw from_json(const std::string& text);
};

struct SimParams {
  double q = 0.1;
  std::uint64_t seed = 1;
  double horizon = 1e12;

  void validate() const;
};

/// Draws a configuration on [0, L-1] from a renewal law: x0 ~ nu conditioned
/// on x0 < L, then i.i.d. gaps ~ mu until the position reaches L.
Configuration sample_initial_config(const RenewalLaw& law, int length, Rng& rng);

}  // namespace eastkcm
