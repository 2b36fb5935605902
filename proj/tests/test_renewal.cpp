#include <doctest.h>

#include <cmath>
#include <vector>

#include "eastkcm/renewal_calc.hpp"

using namespace eastkcm;

namespace {

double factorial(int k) { return std::tgamma(k + 1.0); }

Measure point(Eigen::Index at, double weight, Eigen::Index x_max) {
  Measure m = Measure::dirac(at, x_max);
  m.values *= weight;
  m.refresh_defect();
  return m;
}

}  // namespace

TEST_CASE("initial laws") {
  const Measure g = make_initial<double>(InitialSpec::parse("geometric:0.5"), 64);
  CHECK(g.values[1] == doctest::Approx(0.5));
  CHECK(g.values[2] == doctest::Approx(0.25));
  const Measure h = make_initial<double>(InitialSpec::parse("heavy_tail:0.5"), 64);
  CHECK(1.0 - h.values.head(4).sum() == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(h.mass_defect == doctest::Approx(1.0 / std::sqrt(65.0)).epsilon(1e-12));
  const Measure d = make_initial<double>(InitialSpec::parse("deterministic:3"), 10);
  CHECK(laplace_of(d, 0.7) == doctest::Approx(std::exp(-2.1)).epsilon(1e-14));
  CHECK_THROWS(make_initial<double>(InitialSpec::parse("geometric:1.5"), 10));
  CHECK_THROWS(make_initial<double>(InitialSpec::parse("heavy_tail:1"), 10));
  CHECK_THROWS(InitialSpec::parse("poisson:1"));
  CHECK(InitialSpec::parse("heavy_tail:0.3").c0() == doctest::Approx(0.3));
}

TEST_CASE("Laplace transforms") {
  CHECK(laplace_of(Measure::dirac(1, 5), 0.0) == 1.0);
  CHECK(laplace_of(Measure::dirac(3, 5), 1.0) == doctest::Approx(std::exp(-3.0)).epsilon(1e-15));
  const Measure g = make_initial<double>(InitialSpec::parse("geometric:0.5"), 400);
  for (double s : {0.1, 0.5, 1.0, 2.0}) {
    const double z = std::exp(-s) / 2;
    CHECK(std::abs(laplace_of(g, s) - z / (1 - z)) < 1e-12);
  }
}

TEST_CASE("class restriction") {
  CHECK(restrict_class(Measure::dirac(1, 4), 0).values[1] == 1.0);
  CHECK(restrict_class(Measure::dirac(1, 4), 1).values.sum() == 0.0);
  const Measure g = restrict_class(make_initial<double>(InitialSpec::parse("geometric:0.5"), 20), 2);
  CHECK(g.values.sum() == doctest::Approx(1.0 / 8 + 1.0 / 16));
  CHECK(g.values[3] + g.values[4] == doctest::Approx(g.values.sum()));
}

TEST_CASE("convolution exponential") {
  const Measure e = conv_exp(point(2, 0.5, 10), 10);
  CHECK(e.values[0] == 1.0);
  CHECK(e.values[2] == doctest::Approx(0.5));
  CHECK(e.values[4] == doctest::Approx(0.125));
  CHECK(e.values[1] == 0.0);
  const Measure f = conv_exp(Measure::dirac(1, 12), 12);
  for (int j = 0; j <= 12; ++j) CHECK(f.values[j] == doctest::Approx(1.0 / factorial(j)).epsilon(1e-14));
  // total mass e^{h(N)} once the truncation tail is negligible
  Eigen::VectorXd hv = Eigen::VectorXd::Zero(6);
  hv[3] = 0.2;
  hv[5] = 0.3;
  const Measure big = conv_exp(Measure(hv), 400);
  CHECK(big.values.sum() == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
  CHECK_THROWS(conv_exp(Measure::dirac(0, 3), 3));
}

TEST_CASE("FFT and direct convolution agree") {
  const Eigen::Index x_max = 20000;
  Vec<double> a = Vec<double>::Zero(x_max + 1), b = Vec<double>::Zero(x_max + 1);
  for (Eigen::Index i = 1; i <= x_max; ++i) {
    a[i] = std::exp(-0.001 * i) / i;
    b[i] = 1.0 / (1.0 + i * i);
  }
  const Vec<double> fast = convolve<double>(a, b, x_max);  // dense: FFT branch
  Vec<double> slow = Vec<double>::Zero(x_max + 1);
  for (Eigen::Index i = 0; i <= x_max; i += 997)
    for (Eigen::Index j = 0; j <= i; ++j) slow[i] += a[j] * b[i - j];
  for (Eigen::Index i = 0; i <= x_max; i += 997) CHECK(std::abs(fast[i] - slow[i]) < 1e-12);
}

TEST_CASE("first epoch from unit gaps") {
  const Eigen::Index x_max = 40;
  const auto next = epoch_update(Measure::dirac(1, x_max), Measure::dirac(0, x_max), 0, x_max);
  CHECK(std::abs(next.mu.values[2] - 0.5) < 1e-12);
  CHECK(std::abs(next.mu.values[3] - 1.0 / 3) < 1e-12);
  CHECK(std::abs(next.mu.values[4] - 0.125) < 1e-12);
  for (int x = 2; x <= 15; ++x)
    CHECK(std::abs(next.mu.values[x] - (1 / factorial(x - 1) - 1 / factorial(x))) < 1e-15);
  CHECK(next.mu.values[1] == 0.0);
  CHECK(std::abs(next.mu.values.sum() - 1.0) < 1e-12);
  for (int j = 0; j <= 15; ++j) CHECK(std::abs(next.nu.values[j] - std::exp(-1.0) / factorial(j)) < 1e-15);
}

TEST_CASE("identity epoch when no mass in class n") {
  const Measure mu = Measure::dirac(7, 16);
  const Measure nu = Measure::dirac(2, 16);
  const auto next = epoch_update(mu, nu, 2, 16);
  CHECK(next.mu.values == mu.values);
  CHECK(next.nu.values == nu.values);
  CHECK_THROWS_WITH(epoch_update(Measure::dirac(2, 16), nu, 2, 16), "mu must be supported on classes >= n");
}

TEST_CASE("recursion: normalization, support and transform identities over 12 epochs") {
  const auto spec = InitialSpec::parse("geometric:0.5");
  const auto r = iterate_epochs<double>(spec, 12);
  REQUIRE(r.mu.size() == 13);
  CHECK_FALSE(r.truncation_limited);
  for (int n = 0; n <= 12; ++n) {
    CAPTURE(n);
    CHECK(std::abs(r.mu_defect[static_cast<std::size_t>(n)]) <= 1e-6);
    CHECK(std::abs(r.nu_defect[static_cast<std::size_t>(n)]) <= 1e-6);
    if (n >= 1) CHECK(r.support_min[static_cast<std::size_t>(n)] >= class_min(n));
    CHECK(r.nu[static_cast<std::size_t>(n)].values.minCoeff() >= 0.0);
  }
  for (int n = 0; n < 12; ++n) {
    const Measure& mu = r.mu[static_cast<std::size_t>(n)];
    const Measure& nu = r.nu[static_cast<std::size_t>(n)];
    const Measure h = restrict_class(mu, n);
    for (double s : {0.1, 0.5, 1.0, 2.0}) {
      const double eh = std::exp(laplace_of(h, s));
      const double lhs = 1 - laplace_of(r.mu[static_cast<std::size_t>(n) + 1], s);
      CHECK(std::abs(lhs - (1 - laplace_of(mu, s)) * eh) <= 1e-8);
      const double nu_next = laplace_of(r.nu[static_cast<std::size_t>(n) + 1], s);
      CHECK(std::abs(nu_next - laplace_of(nu, s) * eh * std::exp(-h.values.sum())) <= 1e-8);
    }
  }
  // first moments of the rescaled gap law settle down
  std::vector<double> means;
  for (int n = 7; n <= 12; ++n) {
    const Measure& mu = r.mu[static_cast<std::size_t>(n)];
    double m = 0;
    for (Eigen::Index x = 0; x < mu.values.size(); ++x) m += x * mu.values[x];
    means.push_back(m / static_cast<double>(class_min(n)));
  }
  for (std::size_t i = 2; i < means.size(); ++i)
    CHECK(std::abs(means[i] - means[i - 1]) < std::abs(means[i - 1] - means[i - 2]));
}

TEST_CASE("recursion: heavy tails report their defect instead of adapting") {
  RecursionOptions o;
  o.x_max = 256;
  const auto r = iterate_epochs<double>(InitialSpec::parse("heavy_tail:0.5"), 4, o);
  CHECK(r.truncation_limited);
  CHECK(r.x_max == 256);
  CHECK(r.mu_defect[0] == doctest::Approx(1 / std::sqrt(257.0)));
}

TEST_CASE("recursion: adaptation budget") {
  RecursionOptions o;
  o.x_max = 16;
  o.x_max_budget = 64;
  CHECK_THROWS(iterate_epochs<double>(InitialSpec::parse("geometric:0.5"), 8, o));
}

TEST_CASE("measure JSON is sparse") {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(5);
  v[1] = 0.25;
  v[4] = 0.75;
  CHECK(Measure(v).to_json() == R"({"1": 0.25, "4": 0.75})");
}
