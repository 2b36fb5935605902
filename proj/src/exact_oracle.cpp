#include "eastkcm/exact_oracle.hpp"

#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <unordered_set>

#include <Eigen/Eigenvalues>

namespace eastkcm {

namespace {

using SparseRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

void check_length(int length) {
  if (length < 1) throw Error("volume length must be >= 1");
  if (length > kMaxExactLength) throw Error("state space too large for dense oracle");
}

void check_q(double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error("q must lie in (0, 1)");
}

bool bit(std::uint32_t s, int x) { return ((s >> x) & 1u) != 0; }

bool flippable(std::uint32_t s, int x, int length) { return x == length - 1 || !bit(s, x + 1); }

double flip_rate(std::uint32_t s, int x, double q) { return bit(s, x) ? q : 1.0 - q; }

/// Poisson(m) probabilities for k = 0..K with a bound on the omitted tail.
struct PoissonWeights {
  std::vector<double> w;
  double tail_bound = 0.0;
};

std::size_t poisson_cutoff(double m) {
  return static_cast<std::size_t>(std::ceil(m + 12.0 * std::sqrt(m) + 40.0));
}

PoissonWeights poisson_weights(double m, std::size_t K) {
  PoissonWeights p;
  p.w.resize(K + 1);
  if (m == 0.0) {
    std::fill(p.w.begin(), p.w.end(), 0.0);
    p.w[0] = 1.0;
    return p;
  }
  const double log_m = std::log(m);
  for (std::size_t k = 0; k <= K; ++k) {
    const double kk = static_cast<double>(k);
    p.w[k] = std::exp(-m + kk * log_m - std::lgamma(kk + 1.0));
  }
  // Chernoff: P(X > K) <= exp(-m) (e m / (K+1))^(K+1) for K+1 > m.
  const double k1 = static_cast<double>(K + 1);
  p.tail_bound = std::exp(-m + k1 * (1.0 + log_m - std::log(k1)));
  return p;
}

/// Row-vector iteration p_{k+1} = p_k P of the uniformized chain
/// P = I + Q / rate, with Q a (sub-)generator.
class Uniformized {
 public:
  Uniformized(const SparseRM& generator, Eigen::VectorXd start) : current_(std::move(start)) {
    rate_ = 0.0;
    for (Eigen::Index i = 0; i < generator.rows(); ++i) rate_ = std::max(rate_, -generator.coeff(i, i));
    if (rate_ <= 0.0) rate_ = 1.0;
    SparseRM identity(generator.rows(), generator.cols());
    identity.setIdentity();
    step_t_ = Eigen::SparseMatrix<double>((identity + generator / rate_).transpose());
  }

  double rate() const { return rate_; }
  const Eigen::VectorXd& current() const { return current_; }
  void step() { current_ = step_t_ * current_; }

 private:
  double rate_;
  Eigen::SparseMatrix<double> step_t_;
  Eigen::VectorXd current_;
};

/// Sub-generator of the East process on [0, d-1] restricted to {σ(0) = 0};
/// state index s encodes sites 1..d-1 (full encoding s << 1).
SparseRM origin_empty_subgenerator(int d, double q) {
  const std::uint32_t n = 1u << (d - 1);
  std::vector<Eigen::Triplet<double>> entries;
  for (std::uint32_t s = 0; s < n; ++s) {
    const std::uint32_t full = s << 1;
    double out = 0.0;
    for (int x = 0; x < d; ++x) {
      if (!flippable(full, x, d)) continue;
      const double r = flip_rate(full, x, q);
      out += r;
      if (x > 0) entries.emplace_back(s, (full ^ (1u << x)) >> 1, r);
    }
    entries.emplace_back(s, s, -out);
  }
  SparseRM m(n, n);
  m.setFromTriplets(entries.begin(), entries.end());
  return m;
}

/// Masses of p_k for k = 0..K, started at σ_{0 1}.
std::vector<double> survival_masses(int d, double q, double max_horizon, double* rate, std::size_t* cutoff) {
  const SparseRM sub = origin_empty_subgenerator(d, q);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(sub.rows());
  start[sub.rows() - 1] = 1.0;  // sites 1..d-1 filled
  Uniformized chain(sub, std::move(start));
  *rate = chain.rate();
  *cutoff = poisson_cutoff(chain.rate() * max_horizon);
  std::vector<double> masses;
  masses.reserve(*cutoff + 1);
  for (std::size_t k = 0; k <= *cutoff; ++k) {
    masses.push_back(chain.current().sum());
    chain.step();
  }
  return masses;
}

double mix(const std::vector<double>& masses, double rate, double t, double* tail) {
  const auto weights = poisson_weights(rate * t, masses.size() - 1);
  double total = 0.0;
  for (std::size_t k = 0; k < masses.size(); ++k) total += weights.w[k] * masses[k];
  if (tail) *tail = weights.tail_bound;
  return total;
}

}  // namespace

Eigen::VectorXd GeneratorMatrix::reversible_measure() const {
  Eigen::VectorXd pi(states());
  for (Eigen::Index s = 0; s < states(); ++s) {
    const int ones = std::popcount(static_cast<std::uint32_t>(s));
    pi[s] = std::pow(1.0 - q, ones) * std::pow(q, length - ones);
  }
  return pi;
}

GeneratorMatrix build_generator(int length, double q) {
  check_length(length);
  check_q(q);
  const std::uint32_t n = 1u << length;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(n) * (length + 1));
  for (std::uint32_t s = 0; s < n; ++s) {
    double out = 0.0;
    for (int x = 0; x < length; ++x) {
      if (!flippable(s, x, length)) continue;
      const double r = flip_rate(s, x, q);
      out += r;
      entries.emplace_back(s, s ^ (1u << x), r);
    }
    entries.emplace_back(s, s, -out);
  }
  GeneratorMatrix g;
  g.length = length;
  g.q = q;
  g.rates.resize(n, n);
  g.rates.setFromTriplets(entries.begin(), entries.end());
  return g;
}

namespace {

// Lanczos with full reorthogonalization on the complement of `null_vector`.
OracleResult lanczos_gap(const Eigen::SparseMatrix<double>& sym, const Eigen::VectorXd& null_vector) {
  const Eigen::Index n = sym.rows();
  const Eigen::Index max_steps = std::min<Eigen::Index>(n - 1, 2500);
  Eigen::MatrixXd basis(n, max_steps + 1);
  std::vector<double> alpha, beta;

  auto project = [&](Eigen::VectorXd& v, Eigen::Index count) {
    for (int pass = 0; pass < 2; ++pass) {
      v -= null_vector * null_vector.dot(v);
      if (count > 0) v -= basis.leftCols(count) * (basis.leftCols(count).transpose() * v);
    }
  };

  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] += 0.37 * std::sin(1.0 + static_cast<double>(i));
  project(v, 0);
  basis.col(0) = v.normalized();

  double theta = 0.0, residual = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < max_steps; ++j) {
    Eigen::VectorXd w = sym * basis.col(j);
    alpha.push_back(basis.col(j).dot(w));
    project(w, j + 1);
    const double b = w.norm();
    const Eigen::Index m = j + 1;
    if (m % 10 == 0 || b < 1e-14 || m == max_steps) {
      const Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
      const Eigen::VectorXd sub = Eigen::Map<const Eigen::VectorXd>(beta.data(), m - 1);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small;
      small.computeFromTridiagonal(diag, sub);
      theta = small.eigenvalues()[0];
      const Eigen::VectorXd y = small.eigenvectors().col(0);
      if (std::abs(b * y[m - 1]) < 1e-11 || b < 1e-14) {
        const Eigen::VectorXd ritz = basis.leftCols(m) * y;
        residual = (sym * ritz - theta * ritz).norm();
        if (residual <= 1e-10)
          return {theta, "lanczos-full-reorthogonalization", residual};
      }
    }
    if (b < 1e-14) break;
    beta.push_back(b);
    basis.col(j + 1) = w / b;
  }
  throw Error("eigensolver did not converge; residual " + std::to_string(residual));
}

}  // namespace

OracleResult spectral_gap_exact(int length, double q) {
  const GeneratorMatrix g = build_generator(length, q);
  if (length == 1) return {1.0, "two-state", 0.0};
  const Eigen::VectorXd sqrt_pi = g.reversible_measure().cwiseSqrt();
  // S = D^{1/2} (-Q) D^{-1/2}, symmetric by reversibility.
  Eigen::SparseMatrix<double> sym =
      -(sqrt_pi.asDiagonal() * Eigen::SparseMatrix<double>(g.rates) * sqrt_pi.cwiseInverse().asDiagonal());
  sym = 0.5 * (sym + Eigen::SparseMatrix<double>(sym.transpose()));

  if (length <= 10) {
    const Eigen::MatrixXd dense(sym);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    if (solver.info() != Eigen::Success) throw Error("eigensolver did not converge");
    const double gap = solver.eigenvalues()[1];
    const Eigen::VectorXd v = solver.eigenvectors().col(1);
    const double residual = (dense * v - gap * v).norm();
    if (residual > 1e-10) throw Error("eigensolver residual too large: " + std::to_string(residual));
    return {gap, "dense-symmetric-eigensolver", residual};
  }
  return lanczos_gap(sym, sqrt_pi.normalized());
}

std::vector<double> survival_curve_exact(int d, double q, std::span<const double> horizons, double* error_bound) {
  check_length(d);
  check_q(q);
  double max_t = 0.0;
  for (double t : horizons) {
    if (!(t >= 0.0)) throw Error("time must be nonnegative");
    max_t = std::max(max_t, t);
  }
  double rate = 0.0;
  std::size_t cutoff = 0;
  const auto masses = survival_masses(d, q, max_t, &rate, &cutoff);
  std::vector<double> out;
  double worst = 0.0;
  for (double t : horizons) {
    double tail = 0.0;
    out.push_back(std::min(1.0, mix(masses, rate, t, &tail)));
    worst = std::max(worst, tail);
  }
  if (error_bound) *error_bound = worst + 1e-15 * static_cast<double>(masses.size());
  return out;
}

OracleResult survival_probability_exact(int d, double q, double horizon) {
  double bound = 0.0;
  const double t[] = {horizon};
  const double value = survival_curve_exact(d, q, t, &bound).front();
  return {value, "uniformization", bound};
}

Eigen::VectorXd transition_law_exact(int length, double q, std::uint32_t start, double t) {
  if (!(t >= 0.0)) throw Error("time must be nonnegative");
  const GeneratorMatrix g = build_generator(length, q);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(g.states());
  p0[start] = 1.0;
  Uniformized chain(g.rates, p0);
  const auto weights = poisson_weights(chain.rate() * t, poisson_cutoff(chain.rate() * t));
  Eigen::VectorXd law = Eigen::VectorXd::Zero(g.states());
  for (double w : weights.w) {
    law += w * chain.current();
    chain.step();
  }
  return law;
}

OracleResult lambda_exact(int n, int d, const EpochSchedule& schedule) {
  if (n < 0 || n > schedule.max_epoch) throw Error("epoch outside the schedule");
  if (class_of(d) != n) return {0.0, "outside-class", 0.0};
  const double window = schedule.window[static_cast<std::size_t>(n)];
  const OracleResult survival = survival_probability_exact(d, schedule.q, window);
  if (!(survival.value > 0.0)) throw Error("T_n too large for exact rate");
  const double lambda = -std::log(survival.value) / window;
  return {lambda, "uniformization", survival.error_bound / (survival.value * window)};
}

double hitting_scale_exact(int d, double q) {
  check_length(d);
  check_q(q);
  const double target = std::exp(-1.0);
  double hi = 1.0;
  double rate = 0.0;
  std::size_t cutoff = 0;
  auto masses = survival_masses(d, q, hi, &rate, &cutoff);
  while (mix(masses, rate, hi, nullptr) > target) {
    hi *= 2.0;
    if (hi > 1e9) throw Error("hitting scale exceeds 1e9");
    masses = survival_masses(d, q, hi, &rate, &cutoff);
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mix(masses, rate, mid, nullptr) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

HittingCdf hitting_cdf_exact(int d, double q, std::span<const double> times) {
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    if (!(times[i] <= times[i + 1])) throw Error("times must be ascending");
  HittingCdf result;
  for (double s : survival_curve_exact(d, q, times)) result.cdf.push_back(1.0 - s);
  result.gamma = hitting_scale_exact(d, q);
  return result;
}

ReachabilityResult reachable_sweep(int length, int zero_budget, std::size_t state_budget) {
  if (length < 1 || length > 24) throw Error("reachability requires 1 <= L <= 24");
  if (zero_budget < 0 || zero_budget > 4) throw Error("reachability requires 0 <= n <= 4");
  const std::uint32_t filled = (length == 32) ? ~0u : ((1u << length) - 1u);
  std::unordered_set<std::uint32_t> seen{filled};
  std::deque<std::uint32_t> frontier{filled};
  ReachabilityResult r;
  r.zero_budget = zero_budget;
  r.length = length;
  while (!frontier.empty()) {
    const std::uint32_t s = frontier.front();
    frontier.pop_front();
    const std::uint32_t empties = ~s & filled;
    if (empties != 0) r.ell = std::max(r.ell, length - std::countr_zero(empties));
    const int zeros = std::popcount(empties);
    for (int x = 0; x < length; ++x) {
      if (!flippable(s, x, length)) continue;
      const std::uint32_t t = s ^ (1u << x);
      if (bit(s, x) && zeros + 1 > zero_budget) continue;
      if (seen.insert(t).second) {
        if (seen.size() > state_budget)
          throw Error("reachability budget exceeded after " + std::to_string(seen.size()) + " states");
        frontier.push_back(t);
      }
    }
  }
  r.reached = seen.size();
  return r;
}

}  // namespace eastkcm
