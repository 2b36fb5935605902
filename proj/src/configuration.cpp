#include "eastkcm/configuration.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace eastkcm {

Configuration::Configuration(int length) {
  if (length < 1) throw Error("configuration length must be >= 1");
  occupation_.assign(static_cast<std::size_t>(length), 1);
}

Configuration Configuration::all_filled(int length) { return Configuration(length); }

Configuration Configuration::single_zero_left(int length) {
  Configuration c(length);
  c.flip(0);
  return c;
}

Configuration Configuration::from_zeros(int length, std::span<const int> zeros) {
  Configuration c(length);
  for (int z : zeros) {
    if (z < 0 || z >= length) throw Error("zero position outside the volume");
    if (c.filled(z)) c.flip(z);
  }
  return c;
}

Configuration Configuration::decode(std::uint32_t bits, int length) {
  if (length > 32) throw Error("bit encoding supports at most 32 sites");
  Configuration c(length);
  for (int x = 0; x < length; ++x)
    if (((bits >> x) & 1u) == 0) c.flip(x);
  return c;
}

std::uint32_t Configuration::encode() const {
  if (length() > 32) throw Error("bit encoding supports at most 32 sites");
  std::uint32_t bits = 0;
  for (int x = 0; x < length(); ++x)
    if (filled(x)) bits |= 1u << x;
  return bits;
}

int Configuration::domain_length_at(int x) const {
  auto it = std::lower_bound(zeros_.begin(), zeros_.end(), x);
  if (it == zeros_.end() || *it != x) throw Error("site is not a zero");
  return domain_length(static_cast<std::size_t>(it - zeros_.begin()));
}

void Configuration::flip(int x) {
  auto& v = occupation_[static_cast<std::size_t>(x)];
  auto it = std::lower_bound(zeros_.begin(), zeros_.end(), x);
  if (v) {
    zeros_.insert(it, x);
  } else {
    zeros_.erase(it);
  }
  v ^= 1;
}

namespace {

double checked_sum(const Eigen::VectorXd& v, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!(v[i] >= 0.0)) throw Error(std::string(name) + " has a negative or NaN entry");
  return v.sum();
}

}  // namespace

RenewalLaw RenewalLaw::from_weights(Eigen::VectorXd nu_weights, Eigen::VectorXd mu_weights) {
  RenewalLaw law;
  if (mu_weights.size() < 2) throw Error("mu needs support on {1..x_max}");
  if (mu_weights[0] != 0.0) throw Error("mu(0) must be zero");
  const double nu_mass = checked_sum(nu_weights, "nu");
  const double mu_mass = checked_sum(mu_weights, "mu");
  if (nu_mass <= 0.0 || mu_mass <= 0.0) throw Error("renewal law has zero mass");
  law.nu_tail_mass = std::max(0.0, 1.0 - nu_mass);
  law.mu_tail_mass = std::max(0.0, 1.0 - mu_mass);
  law.nu = nu_weights / nu_mass;
  law.mu = mu_weights / mu_mass;
  return law;
}

RenewalLaw RenewalLaw::pinned(Eigen::VectorXd mu_weights) {
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(1);
  nu[0] = 1.0;
  return from_weights(std::move(nu), std::move(mu_weights));
}

void RenewalLaw::validate() const {
  if (mu.size() < 2 || nu.size() < 1) throw Error("renewal law is empty");
  if (mu[0] != 0.0) throw Error("mu(0) must be zero");
  if (std::abs(checked_sum(nu, "nu") - 1.0) > 1e-12) throw Error("nu is not normalized");
  if (std::abs(checked_sum(mu, "mu") - 1.0) > 1e-12) throw Error("mu is not normalized");
}

std::string RenewalLaw::to_json() const {
  nlohmann::json j;
  j["nu"] = std::vector<double>(nu.data(), nu.data() + nu.size());
  j["mu"] = std::vector<double>(mu.data(), mu.data() + mu.size());
  j["nu_tail_mass"] = nu_tail_mass;
  j["mu_tail_mass"] = mu_tail_mass;
  return j.dump();
}

RenewalLaw RenewalLaw::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto nu = j.at("nu").get<std::vector<double>>();
  const auto mu = j.at("mu").get<std::vector<double>>();
  return from_weights(Eigen::Map<const Eigen::VectorXd>(nu.data(), static_cast<Eigen::Index>(nu.size())),
                      Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size())));
}

void SimParams::validate() const {
  if (!(q > 0.0 && q <= 0.5)) throw Error("q must lie in (0, 1/2]");
  if (!(horizon >= 0.0)) throw Error("horizon must be nonnegative");
}

Configuration sample_initial_config(const RenewalLaw& law, int length, Rng& rng) {
  if (length < 1) throw Error("volume length must be >= 1");
  const Eigen::Index below = std::min<Eigen::Index>(law.nu.size(), length);
  const Eigen::VectorXd nu_head = law.nu.head(below);
  if (!(nu_head.sum() > 0.0)) throw Error("initial law incompatible with volume");

  std::discrete_distribution<int> first(nu_head.data(), nu_head.data() + nu_head.size());
  std::discrete_distribution<int> gap(law.mu.data(), law.mu.data() + law.mu.size());

  std::vector<int> zeros;
  for (int x = first(rng); x < length; x += gap(rng)) zeros.push_back(x);
  return Configuration::from_zeros(length, zeros);
}

}  // namespace eastkcm
