#pragma once

// Epoch-by-epoch recursion of the renewal laws seen at the start of each
// coalescence epoch. Measures live on the integers {0..x_max}; the transform
// identities become finite convolutions, so no Laplace inversion is needed.

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "eastkcm/common.hpp"
#include "eastkcm/schedule.hpp"

namespace eastkcm {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Nonnegative sequence on {0..x_max} with its signed mass defect 1 - sum.
template <typename Scalar>
struct BasicMeasure {
  Vec<Scalar> values;
  Scalar mass_defect = Scalar(0);

  BasicMeasure() = default;
  explicit BasicMeasure(Vec<Scalar> v) : values(std::move(v)) { refresh_defect(); }

  Eigen::Index x_max() const { return values.size() - 1; }
  Scalar mass() const { return values.sum(); }
  void refresh_defect() { mass_defect = Scalar(1) - values.sum(); }

  /// Smallest x with a nonzero entry, or -1 for the zero measure.
  Eigen::Index support_min() const {
    for (Eigen::Index x = 0; x < values.size(); ++x)
      if (values[x] != Scalar(0)) return x;
    return -1;
  }

  static BasicMeasure dirac(Eigen::Index at, Eigen::Index x_max) {
    Vec<Scalar> v = Vec<Scalar>::Zero(x_max + 1);
    if (at <= x_max) v[at] = Scalar(1);
    return BasicMeasure(std::move(v));
  }

  /// Sparse JSON map {"x": value} of the nonzero entries.
  std::string to_json() const {
    std::ostringstream out;
    out.precision(17);
    out << '{';
    bool first = true;
    for (Eigen::Index x = 0; x < values.size(); ++x) {
      if (values[x] == Scalar(0)) continue;
      out << (first ? "" : ", ") << '"' << x << "\": " << static_cast<double>(values[x]);
      first = false;
    }
    out << '}';
    return out.str();
  }
};

using Measure = BasicMeasure<double>;

enum class InitialKind { geometric, heavy_tail, deterministic };

struct InitialSpec {
  InitialKind kind = InitialKind::geometric;
  double parameter = 0.5;  // p, alpha or d

  /// c0 of the gap law: 1 for finite mean, alpha for the stable tail.
  double c0() const { return kind == InitialKind::heavy_tail ? parameter : 1.0; }
  /// Heavy tails keep mass beyond any finite truncation.
  bool intrinsic_tail() const { return kind == InitialKind::heavy_tail; }

  /// Parses "geometric:p", "heavy_tail:alpha" (or "heavy:alpha"), "deterministic:d".
  static InitialSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw Error("initial law spec must look like kind:parameter");
    const std::string kind = text.substr(0, colon);
    double value = 0.0;
    try {
      value = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error("initial law parameter is not a number: " + text);
    }
    InitialSpec s;
    s.parameter = value;
    if (kind == "geometric")
      s.kind = InitialKind::geometric;
    else if (kind == "heavy_tail" || kind == "heavy")
      s.kind = InitialKind::heavy_tail;
    else if (kind == "deterministic" || kind == "dirac")
      s.kind = InitialKind::deterministic;
    else
      throw Error("unknown initial law kind: " + kind);
    return s;
  }
};

/// Gap law mu on {1..x_max}: geometric(p) mu(x) = (1-p)^(x-1) p;
/// heavy_tail(a) mu(x) = x^-a - (x+1)^-a, so mu([x,inf)) = x^-a;
/// deterministic(d) = delta_d. Entries are exact, the tail beyond x_max is
/// left as mass defect.
template <typename Scalar = double>
BasicMeasure<Scalar> make_initial(const InitialSpec& spec, Eigen::Index x_max) {
  if (x_max < 1) throw Error("x_max must be >= 1");
  Vec<Scalar> v = Vec<Scalar>::Zero(x_max + 1);
  switch (spec.kind) {
    case InitialKind::geometric: {
      const Scalar p = spec.parameter;
      if (!(p > 0 && p < 1)) throw Error("geometric parameter must lie in (0,1)");
      for (Eigen::Index x = 1; x <= x_max; ++x)
        v[x] = p * std::exp(static_cast<Scalar>(x - 1) * std::log1p(-p));
      break;
    }
    case InitialKind::heavy_tail: {
      const Scalar a = spec.parameter;
      if (!(a > 0 && a < 1)) throw Error("heavy-tail exponent must lie in (0,1)");
      for (Eigen::Index x = 1; x <= x_max; ++x) {
        const Scalar xs = static_cast<Scalar>(x);
        // x^-a (1 - (1 + 1/x)^-a), written to avoid cancellation at large x.
        v[x] = std::pow(xs, -a) * -std::expm1(-a * std::log1p(Scalar(1) / xs));
      }
      break;
    }
    case InitialKind::deterministic: {
      const double d = spec.parameter;
      if (!(d >= 1 && d == std::floor(d))) throw Error("deterministic gap must be a positive integer");
      if (d > static_cast<double>(x_max)) throw Error("deterministic gap exceeds x_max");
      v[static_cast<Eigen::Index>(d)] = Scalar(1);
      break;
    }
  }
  return BasicMeasure<Scalar>(std::move(v));
}

/// Keeps only the entries with length in class n.
template <typename Scalar>
BasicMeasure<Scalar> restrict_class(const BasicMeasure<Scalar>& m, int n) {
  Vec<Scalar> v = Vec<Scalar>::Zero(m.values.size());
  const Eigen::Index lo = static_cast<Eigen::Index>(class_min(n));
  const Eigen::Index hi = std::min<Eigen::Index>(static_cast<Eigen::Index>(class_max(n)), m.x_max());
  if (lo <= hi) v.segment(lo, hi - lo + 1) = m.values.segment(lo, hi - lo + 1);
  return BasicMeasure<Scalar>(std::move(v));
}

/// E = sum_k h^{*k}/k! on {0..x_max}, through x E(x) = sum_j j h(j) E(x-j),
/// which is the coefficient form of E' = H' E. Every retained value is exact:
/// terms of the series beyond x_max never feed back into lower entries.
template <typename Scalar>
BasicMeasure<Scalar> conv_exp(const BasicMeasure<Scalar>& h, Eigen::Index x_max) {
  if (h.values.size() > 0 && h.values[0] != Scalar(0)) throw Error("conv_exp requires h(0) = 0");
  std::vector<Eigen::Index> support;
  std::vector<Scalar> weight;
  for (Eigen::Index j = 1; j < h.values.size() && j <= x_max; ++j) {
    if (h.values[j] == Scalar(0)) continue;
    support.push_back(j);
    weight.push_back(static_cast<Scalar>(j) * h.values[j]);
  }
  Vec<Scalar> e = Vec<Scalar>::Zero(x_max + 1);
  e[0] = Scalar(1);
  for (Eigen::Index x = 1; x <= x_max; ++x) {
    Scalar acc = 0;
    for (std::size_t i = 0; i < support.size() && support[i] <= x; ++i) acc += weight[i] * e[x - support[i]];
    e[x] = acc / static_cast<Scalar>(x);
  }
  BasicMeasure<Scalar> out(std::move(e));
  return out;
}

/// (a * b) on {0..x_max}. Direct summation when one factor is sparse or
/// the size is small, FFT otherwise.
template <typename Scalar>
Vec<Scalar> convolve(const Vec<Scalar>& a, const Vec<Scalar>& b, Eigen::Index x_max) {
  std::vector<Eigen::Index> nz_a, nz_b;
  for (Eigen::Index i = 0; i < a.size() && i <= x_max; ++i)
    if (a[i] != Scalar(0)) nz_a.push_back(i);
  for (Eigen::Index i = 0; i < b.size() && i <= x_max; ++i)
    if (b[i] != Scalar(0)) nz_b.push_back(i);
  Vec<Scalar> out = Vec<Scalar>::Zero(x_max + 1);
  const double direct_cost = static_cast<double>(std::min(nz_a.size(), nz_b.size())) * static_cast<double>(x_max + 1);
  if (direct_cost <= 4e7) {
    const auto& sparse = nz_a.size() <= nz_b.size() ? nz_a : nz_b;
    const Vec<Scalar>& s = nz_a.size() <= nz_b.size() ? a : b;
    const Vec<Scalar>& dense = nz_a.size() <= nz_b.size() ? b : a;
    const Eigen::Index dense_top = std::min<Eigen::Index>(dense.size() - 1, x_max);
    for (Eigen::Index i : sparse) {
      const Eigen::Index len = std::min<Eigen::Index>(dense_top, x_max - i) + 1;
      if (len > 0) out.segment(i, len) += s[i] * dense.head(len);
    }
    return out;
  }
  Eigen::Index size = 1;
  while (size < 2 * (x_max + 1)) size <<= 1;
  std::vector<Scalar> pa(static_cast<std::size_t>(size), Scalar(0)), pb(static_cast<std::size_t>(size), Scalar(0));
  for (Eigen::Index i = 0; i < a.size() && i <= x_max; ++i) pa[static_cast<std::size_t>(i)] = a[i];
  for (Eigen::Index i = 0; i < b.size() && i <= x_max; ++i) pb[static_cast<std::size_t>(i)] = b[i];
  Eigen::FFT<Scalar> fft;
  std::vector<std::complex<Scalar>> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  std::vector<Scalar> prod;
  fft.inv(prod, fa);
  for (Eigen::Index i = 0; i <= x_max; ++i) out[i] = prod[static_cast<std::size_t>(i)];
  return out;
}

namespace detail {

template <typename Scalar>
void clip_or_throw(Vec<Scalar>& v, Eigen::Index from = 0) {
  for (Eigen::Index i = from; i < v.size(); ++i) {
    if (v[i] < Scalar(-1e-9)) throw Error("recursion numerically inconsistent");
    if (v[i] < Scalar(0)) v[i] = Scalar(0);  // float noise, bounded by 1e-9 in magnitude
  }
}

}  // namespace detail

template <typename Scalar>
struct EpochLaws {
  BasicMeasure<Scalar> mu;
  BasicMeasure<Scalar> nu;
};

/// One coalescence epoch: with H = mu on C_n and E = exp*(H),
///   delta_0 - mu' = (delta_0 - mu) * E,   nu' = e^{-H(0)} (nu * E).
/// Entries of mu' on lengths <= 2^n cancel analytically; residue there is
/// checked against 1e-9 and set to zero.
template <typename Scalar>
EpochLaws<Scalar> epoch_update(const BasicMeasure<Scalar>& mu, const BasicMeasure<Scalar>& nu, int n,
                               Eigen::Index x_max) {
  if (mu.values.size() > 0 && mu.values[0] != Scalar(0)) throw Error("mu(0) must be zero");
  for (Eigen::Index x = 1; x < std::min<Eigen::Index>(class_min(n), mu.values.size()); ++x)
    if (mu.values[x] != Scalar(0)) throw Error("mu must be supported on classes >= n");
  const BasicMeasure<Scalar> h = restrict_class(mu, n);
  const Scalar h0 = h.values.sum();
  if (h0 == Scalar(0)) {
    EpochLaws<Scalar> same{mu, nu};
    same.mu.values.conservativeResize(x_max + 1);
    same.nu.values.conservativeResize(x_max + 1);
    for (Eigen::Index i = mu.values.size(); i <= x_max; ++i) same.mu.values[i] = 0;
    for (Eigen::Index i = nu.values.size(); i <= x_max; ++i) same.nu.values[i] = 0;
    same.mu.refresh_defect();
    same.nu.refresh_defect();
    return same;
  }
  const BasicMeasure<Scalar> e = conv_exp(h, x_max);

  Vec<Scalar> mu_next = convolve<Scalar>(mu.values, e.values, x_max) - e.values;
  mu_next[0] = 0;
  const Eigen::Index cancelled = std::min<Eigen::Index>(class_max(n), x_max);
  for (Eigen::Index x = 1; x <= cancelled; ++x) {
    if (std::abs(mu_next[x]) > Scalar(1e-9)) throw Error("recursion numerically inconsistent");
    mu_next[x] = 0;
  }
  detail::clip_or_throw(mu_next);

  Vec<Scalar> nu_next = std::exp(-h0) * convolve<Scalar>(nu.values, e.values, x_max);
  detail::clip_or_throw(nu_next);
  return {BasicMeasure<Scalar>(std::move(mu_next)), BasicMeasure<Scalar>(std::move(nu_next))};
}

template <typename Scalar = double>
struct RecursionResult {
  std::vector<BasicMeasure<Scalar>> mu;  // mu^(0..n_max)
  std::vector<BasicMeasure<Scalar>> nu;  // nu^(0..n_max)
  std::vector<double> mu_defect;
  std::vector<double> nu_defect;
  std::vector<Eigen::Index> support_min;  // of mu^(n)
  std::vector<double> nu_at_zero;         // nu^(n)(0)
  std::vector<double> class_mass;         // mu^(n)(C_n)
  Eigen::Index x_max = 0;
  bool truncation_limited = false;  // adaptation stopped at the size budget
};

struct RecursionOptions {
  Eigen::Index x_max = 1024;
  bool adapt = true;
  double defect_tolerance = 1e-6;
  Eigen::Index x_max_budget = Eigen::Index(1) << 20;
};

/// Runs epoch_update for n = 0..n_max-1 from mu0 = spec and nu0 = delta_0.
/// With adaptation, x_max doubles and the whole recursion is recomputed while
/// any |mass defect| exceeds the tolerance. Values on {0..x_max} are exact
/// whatever x_max is, so laws with an intrinsic tail are not adapted: their
/// defect is reported and `truncation_limited` is set.
template <typename Scalar = double>
RecursionResult<Scalar> iterate_epochs(const InitialSpec& spec, int n_max, const RecursionOptions& options = {}) {
  if (n_max < 0) throw Error("number of epochs must be >= 0");
  Eigen::Index x_max = options.x_max;
  while (true) {
    RecursionResult<Scalar> r;
    r.x_max = x_max;
    r.mu.push_back(make_initial<Scalar>(spec, x_max));
    r.nu.push_back(BasicMeasure<Scalar>::dirac(0, x_max));
    int achieved = -1;
    for (int n = 0; n <= n_max; ++n) {
      if (n > 0) {
        auto next = epoch_update(r.mu.back(), r.nu.back(), n - 1, x_max);
        r.mu.push_back(std::move(next.mu));
        r.nu.push_back(std::move(next.nu));
      }
      const auto& mu = r.mu.back();
      const auto& nu = r.nu.back();
      r.mu_defect.push_back(static_cast<double>(mu.mass_defect));
      r.nu_defect.push_back(static_cast<double>(nu.mass_defect));
      r.support_min.push_back(mu.support_min());
      r.nu_at_zero.push_back(static_cast<double>(nu.values[0]));
      r.class_mass.push_back(static_cast<double>(restrict_class(mu, n).values.sum()));
      const bool ok = std::abs(r.mu_defect.back()) <= options.defect_tolerance &&
                      std::abs(r.nu_defect.back()) <= options.defect_tolerance;
      if (ok && achieved == n - 1) achieved = n;
    }
    const bool lossy = achieved < n_max;
    if (!lossy || !options.adapt) return r;
    if (spec.intrinsic_tail()) {
      r.truncation_limited = true;
      return r;
    }
    if (2 * x_max > options.x_max_budget)
      throw Error("x_max budget exceeded; mass defect within tolerance up to epoch " + std::to_string(achieved));
    x_max *= 2;
  }
}

/// sum_x e^{-s x / scale} m(x).
template <typename Scalar>
Scalar laplace_of(const BasicMeasure<Scalar>& m, Scalar s, Scalar scale = Scalar(1)) {
  if (!(s >= 0)) throw Error("Laplace argument must be >= 0");
  Scalar total = 0;
  const Scalar step = std::exp(-s / scale);
  Scalar w = 1;
  for (Eigen::Index x = 0; x < m.values.size(); ++x) {
    total += w * m.values[x];
    w *= step;
  }
  return total;
}

/// First moment of m scaled by 1/scale.
template <typename Scalar>
Scalar scaled_mean(const BasicMeasure<Scalar>& m, Scalar scale) {
  Scalar total = 0;
  for (Eigen::Index x = 1; x < m.values.size(); ++x) total += static_cast<Scalar>(x) * m.values[x];
  return total / scale;
}

}  // namespace eastkcm
