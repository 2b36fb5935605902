#pragma once

// Scaling limits of the rescaled domain lengths: Laplace transforms built on
// the exponential integral, and the series density p_{c0}.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "eastkcm/common.hpp"

namespace eastkcm {

/// E1(s) = int_1^inf e^{-sx}/x dx. Power series below 1, Lentz continued
/// fraction above.
template <typename Scalar = double>
Scalar e1(Scalar s) {
  if (!(s > 0)) throw Error("E1 requires s > 0");
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar euler = std::numbers::egamma_v<Scalar>;
  if (s < 1) {
    // E1 = -gamma - ln s - sum_k (-s)^k / (k k!)
    Scalar term = 1, sum = 0;
    for (int k = 1; k < 200; ++k) {
      term *= -s / k;
      const Scalar add = term / k;
      sum += add;
      if (std::abs(add) < eps * std::abs(sum)) break;
    }
    return -euler - std::log(s) - sum;
  }
  const Scalar tiny = std::numeric_limits<Scalar>::min() / eps;
  Scalar b = s + 1, c = 1 / tiny, d = 1 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const Scalar an = -static_cast<Scalar>(i) * i;
    b += 2;
    d = 1 / (an * d + b);
    c = b + an / c;
    const Scalar del = c * d;
    h *= del;
    if (std::abs(del - 1) < eps) return h * std::exp(-s);
  }
  throw Error("E1 continued fraction did not converge");
}

/// Ein(s) = int_0^1 (1 - e^{-sy})/y dy = sum_k (-1)^{k+1} s^k/(k k!).
/// The alternating series is used up to s = 2; beyond, Ein = E1 + ln s + gamma.
template <typename Scalar = double>
Scalar ein(Scalar s) {
  if (!(s >= 0)) throw Error("Ein requires s >= 0");
  if (s == 0) return 0;
  if (s > 2) return e1(s) + std::log(s) + std::numbers::egamma_v<Scalar>;
  Scalar term = -1, sum = 0;
  for (int k = 1; k < 200; ++k) {
    term *= -s / k;
    const Scalar add = term / k;
    sum += add;
    if (std::abs(add) < std::numeric_limits<Scalar>::epsilon() * std::abs(sum)) break;
  }
  return sum;
}

/// Laplace transform of the limit of the rescaled domain length: 1 - e^{-c0 E1(s)}.
template <typename Scalar = double>
Scalar lt_x_inf(Scalar s, Scalar c0) {
  if (!(c0 > 0 && c0 <= 1)) throw Error("c0 must lie in (0,1]");
  return -std::expm1(-c0 * e1(s));
}

/// Laplace transform of the limit of the rescaled first-zero position:
/// exp(-c0 Ein(s)).
template <typename Scalar = double>
Scalar lt_y_inf(Scalar s, Scalar c0) {
  if (!(c0 > 0 && c0 <= 1)) throw Error("c0 must lie in (0,1]");
  return std::exp(-c0 * ein(s));
}

struct LimitLawParams {
  double c0 = 1.0;
  int k_max = 12;
  double h = 1e-3;
  double x_hi = 50.0;

  void validate() const {
    if (!(c0 > 0 && c0 <= 1)) throw Error("c0 must lie in (0,1]");
    if (k_max < 1) throw Error("k_max must be >= 1");
    if (!(h > 0 && h <= 1e-2)) throw Error("grid step must lie in (0, 1e-2]");
    if (std::abs(1.0 / h - std::round(1.0 / h)) > 1e-9) throw Error("1/h must be an integer");
    if (!(x_hi >= k_max)) throw Error("x_hi must be >= k_max");
  }
};

template <typename Scalar = double>
struct DensityGrid {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;        // 1, 1+h, ..., x_hi
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> density;  // p_{c0}(x)
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> rho;  // column k-1 holds rho_k
  Scalar last_term = 0;  // max over the grid of |last retained series term|
  bool warning = false;  // last_term > 1e-8

  /// Trapezoid integral of weight(x) p(x) over the grid.
  template <typename Weight>
  Scalar integrate(Weight&& weight) const {
    const Scalar h = x[1] - x[0];
    Scalar total = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar w = (i == 0 || i + 1 == x.size()) ? Scalar(0.5) : Scalar(1);
      total += w * weight(x[i]) * density[i];
    }
    return total * h;
  }
};

/// rho_1 = 1/x on [1, inf); rho_{k+1}(x) = int rho_k(y) / (x - y) dy over
/// x - y >= 1, on the grid with the trapezoid rule. Endpoint half weights are
/// applied at the jump of the kernel (x - y = 1) and at the left end of the
/// support of rho_k; the full sum is one FFT convolution per order.
template <typename Scalar = double>
DensityGrid<Scalar> density_p(const LimitLawParams& params) {
  params.validate();
  using VecS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Scalar h = static_cast<Scalar>(params.h);
  const Eigen::Index per_unit = static_cast<Eigen::Index>(std::llround(1.0 / params.h));
  const Eigen::Index count = static_cast<Eigen::Index>(std::llround((params.x_hi - 1.0) / params.h)) + 1;

  DensityGrid<Scalar> out;
  out.x = VecS::LinSpaced(count, Scalar(1), Scalar(1) + h * static_cast<Scalar>(count - 1));
  out.rho = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(count, params.k_max);
  out.rho.col(0) = out.x.cwiseInverse();

  // Kernel g_l = 1/(l h) for l >= per_unit (l h >= 1).
  Eigen::Index size = 1;
  while (size < 2 * count) size <<= 1;
  std::vector<Scalar> kernel(static_cast<std::size_t>(size), Scalar(0));
  for (Eigen::Index l = per_unit; l < count; ++l) kernel[static_cast<std::size_t>(l)] = 1 / (static_cast<Scalar>(l) * h);
  Eigen::FFT<Scalar> fft;
  std::vector<std::complex<Scalar>> kernel_hat;
  fft.fwd(kernel_hat, kernel);

  for (int k = 1; k < params.k_max; ++k) {
    // rho_k lives on y >= k, i.e. grid index j >= (k-1) per_unit.
    const Eigen::Index j0 = static_cast<Eigen::Index>(k - 1) * per_unit;
    std::vector<Scalar> f(static_cast<std::size_t>(size), Scalar(0));
    for (Eigen::Index j = j0; j < count; ++j) f[static_cast<std::size_t>(j)] = out.rho(j, k - 1);
    std::vector<std::complex<Scalar>> f_hat;
    fft.fwd(f_hat, f);
    for (std::size_t i = 0; i < f_hat.size(); ++i) f_hat[i] *= kernel_hat[i];
    std::vector<Scalar> conv;
    fft.inv(conv, f_hat);
    const Eigen::Index first = j0 + per_unit;  // x >= k+1
    for (Eigen::Index i = first; i < count; ++i) {
      Scalar sum = conv[static_cast<std::size_t>(i)];
      sum -= Scalar(0.5) * out.rho(j0, k - 1) * kernel[static_cast<std::size_t>(i - j0)];
      sum -= Scalar(0.5) * out.rho(i - per_unit, k - 1) * kernel[static_cast<std::size_t>(per_unit)];
      out.rho(i, k) = i == first ? Scalar(0) : h * sum;
    }
  }

  out.density = VecS::Zero(count);
  Scalar coeff = 1;
  for (int k = 1; k <= params.k_max; ++k) {
    coeff *= static_cast<Scalar>(params.c0) / k;
    const Scalar sign = (k % 2 == 1) ? Scalar(1) : Scalar(-1);
    out.density += sign * coeff * out.rho.col(k - 1);
    if (k == params.k_max) out.last_term = coeff * out.rho.col(k - 1).cwiseAbs().maxCoeff();
  }
  out.warning = out.last_term > Scalar(1e-8);
  return out;
}

}  // namespace eastkcm
