// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eastkcm/bench.hpp"
#include "eastkcm/exact_oracle.hpp"
#include "eastkcm/hcp.hpp"
#include "eastkcm/limit_laws.hpp"
#include "eastkcm/renewal_calc.hpp"

using namespace eastkcm;

namespace {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail << "[violated: " << what << "] ";
    }
  }
};

const unsigned kWorkers = std::max(1u, std::thread::hardware_concurrency());

int failures = 0;

void criterion(int id, double time_limit_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  o.detail.precision(6);
  const auto start = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.passed = false;
    o.detail << "exception: " << e.what();
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (time_limit_s > 0 && elapsed > time_limit_s) {
    o.passed = false;
    o.detail << "[runtime " << elapsed << " s over limit " << time_limit_s << " s] ";
  }
  if (!o.passed) ++failures;
  std::printf("%s criterion %d (%.1f s): %s\n", o.passed ? "PASS" : "FAIL", id, elapsed, o.detail.str().c_str());
  std::fflush(stdout);
}

}  // namespace

int main() {
  criterion(1, 10, [](Outcome& o) {
    for (int n = 1; n <= 3; ++n) {
      const int ell = reachable_sweep(1 << n, n).ell;
      o.detail << "ell(" << n << ")=" << ell << " ";
      o.require(ell == (1 << n) - 1, "ell(n) = 2^n - 1");
    }
  });

  criterion(2, 60, [](Outcome& o) {
    const int cases[][2] = {{4, 2}, {8, 3}};
    for (const auto& c : cases)
      for (double q : {0.1, 0.3}) {
        const double gap = spectral_gap_exact(c[0], q).value, bound = std::pow(q / 2, c[1]);
        o.detail << "L=" << c[0] << ",q=" << q << ": " << gap << ">=" << bound << " ";
        o.require(gap >= bound - 1e-10, "gap bound");
      }
  });

  criterion(3, 0, [](Outcome& o) {
    for (double q : {0.1, 0.3}) {
      const double l = lambda_exact(0, 1, make_schedule(q, 2)).value;
      o.require(std::abs(l - (1 - q)) <= 1e-10, "lambda_0(1) = 1-q");
    }
    const EpochSchedule s = make_schedule(0.1, 2);
    for (int d : {2, 3, 4}) {
      const RateEntry mc = estimate_rate_monte_carlo(class_of(d), d, s, 100000, stream_seed(3, d), kWorkers);
      const double exact = lambda_exact(class_of(d), d, s).value;
      const double z = (mc.lambda - exact) / mc.stderr_;
      o.detail << "d=" << d << " z=" << z << " ";
      o.require(std::abs(z) <= 3.0, "MC within 3 s.e.");
    }
  });

  criterion(4, 300, [](Outcome& o) {
    const int length = 5;
    const double q = 0.2, t = 1.0;
    const long long n = 1000000;
    const std::uint32_t start = Configuration::single_zero_left(length).encode();
    const auto counts = empirical_law(length, q, start, t, n, 4, kWorkers);
    const Eigen::VectorXd exact = transition_law_exact(length, q, start, t);
    double tv = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i)
      tv += std::abs(static_cast<double>(counts[i]) / n - exact[static_cast<Eigen::Index>(i)]);
    tv *= 0.5;
    o.detail << "TV=" << tv;
    o.require(tv <= 0.005, "TV <= 0.005");
  });

  criterion(5, 0, [](Outcome& o) {
    const auto next = epoch_update(Measure::dirac(1, 64), Measure::dirac(0, 64), 0, 64);
    o.require(std::abs(next.mu.values[2] - 0.5) <= 1e-12, "mu(2) = 1/2");
    o.require(std::abs(next.mu.values[3] - 1.0 / 3) <= 1e-12, "mu(3) = 1/3");
    o.require(std::abs(next.mu.values[4] - 0.125) <= 1e-12, "mu(4) = 1/8");
    o.require(std::abs(next.nu.values[0] - std::exp(-1.0)) <= 1e-12, "nu(0) = 1/e");
    o.detail << "mu(2..4)=" << next.mu.values[2] << "," << next.mu.values[3] << "," << next.mu.values[4]
             << " nu(0)=" << next.nu.values[0];
  });

  criterion(6, 120, [](Outcome& o) {
    const auto r = iterate_epochs<double>(InitialSpec::parse("geometric:0.5"), 12);
    double worst_defect = 0, worst_identity = 0;
    for (std::size_t n = 0; n < r.mu.size(); ++n) {
      worst_defect = std::max({worst_defect, std::abs(r.mu_defect[n]), std::abs(r.nu_defect[n])});
      if (n >= 1) o.require(r.support_min[n] >= class_min(static_cast<int>(n)), "support of mu^(n)");
      if (n + 1 < r.mu.size()) {
        const Measure h = restrict_class(r.mu[n], static_cast<int>(n));
        for (double s : {0.1, 0.5, 1.0, 2.0}) {
          const double eh = std::exp(laplace_of(h, s));
          worst_identity = std::max(worst_identity, std::abs((1 - laplace_of(r.mu[n + 1], s)) - (1 - laplace_of(r.mu[n], s)) * eh));
          worst_identity = std::max(worst_identity, std::abs(laplace_of(r.nu[n + 1], s) -
                                                             laplace_of(r.nu[n], s) * eh * std::exp(-h.values.sum())));
        }
      }
    }
    o.detail << "max|defect|=" << worst_defect << " max identity error=" << worst_identity << " x_max=" << r.x_max;
    o.require(worst_defect <= 1e-6, "mass defect <= 1e-6");
    o.require(worst_identity <= 1e-8, "Laplace identities to 1e-8");
  });

  criterion(7, 300, [](Outcome& o) {
    const double scale = static_cast<double>(class_min(12));
    const auto geo = iterate_epochs<double>(InitialSpec::parse("geometric:0.5"), 12);
    RecursionOptions heavy_opts;
    heavy_opts.x_max = 1 << 16;
    const auto heavy = iterate_epochs<double>(InitialSpec::parse("heavy_tail:0.5"), 12, heavy_opts);
    for (double s : {0.5, 1.0, 2.0}) {
      const double g = laplace_of(geo.mu[12], s, scale), gl = lt_x_inf(s, 1.0);
      const double h = laplace_of(heavy.mu[12], s, scale), hl = lt_x_inf(s, 0.5);
      o.detail << "s=" << s << ": " << g << " vs " << gl << ", " << h << " vs " << hl << "; ";
      o.require(std::abs(g - gl) <= 0.02, "geometric within 0.02");
      o.require(std::abs(h - hl) <= 0.04, "heavy tail within 0.04");
    }
  });

  criterion(8, 0, [](Outcome& o) {
    const auto geo = iterate_epochs<double>(InitialSpec::parse("geometric:0.5"), 14);
    RecursionOptions heavy_opts;
    heavy_opts.x_max = 1 << 16;
    const auto heavy = iterate_epochs<double>(InitialSpec::parse("heavy_tail:0.5"), 14, heavy_opts);
    const double denom = std::log(static_cast<double>(class_min(14)));
    const double eg = -std::log(geo.nu_at_zero[14]) / denom, eh = -std::log(heavy.nu_at_zero[14]) / denom;
    o.detail << "geometric " << eg << ", heavy_tail(0.5) " << eh;
    o.require(eg >= 0.9 && eg <= 1.1, "geometric exponent in [0.9,1.1]");
    o.require(eh >= 0.35 && eh <= 0.65, "heavy-tail exponent in [0.35,0.65]");
  });

  criterion(9, 0, [](Outcome& o) {
    const auto grid = density_p<double>(LimitLawParams{});
    const double mass = grid.integrate([](double) { return 1.0; });
    const double lt = grid.integrate([](double x) { return std::exp(-x); });
    const double rho2 = grid.rho(std::llround(2.0 / 1e-3), 1);
    o.detail << "mass=" << mass << " transform(1)=" << lt << " vs " << lt_x_inf(1.0, 1.0) << " rho2(3)=" << rho2;
    o.require(mass >= 0.99 && mass <= 1.01, "normalization");
    o.require(std::abs(lt - lt_x_inf(1.0, 1.0)) <= 5e-3, "transform at s=1");
    o.require(std::abs(rho2 - 2.0 / 3 * std::log(2.0)) <= 1e-6, "rho_2(3)");
  });

  criterion(10, 0, [](Outcome& o) {
    double prev = 1.0;
    for (double q : {0.3, 0.2, 0.1}) {
      const ExpHittingRow r = run_exp_hitting(4, q, 100000, stream_seed(10, static_cast<std::uint64_t>(q * 100)), kWorkers);
      o.detail << "q=" << q << ": KS exact " << r.ks_exact << ", MC " << r.ks_mc << "; ";
      o.require(r.ks_exact < prev, "exact KS strictly decreasing as q decreases");
      o.require(std::abs(r.ks_mc - r.ks_exact) <= 0.01, "MC reproduces exact KS within 0.01");
      o.require(r.censored == 0, "no censored samples");
      prev = r.ks_exact;
    }
  });

  criterion(11, 0, [](Outcome& o) {
    ExperimentConfig cfg;
    cfg.name = "plateau";
    cfg.init = "geometric:0.5";
    cfg.samples = 10000;
    cfg.seed = 11;
    cfg.workers = kWorkers;
    double rel[2] = {0, 0};
    const double qs[2] = {0.2, 0.1};
    for (int i = 0; i < 2; ++i) {
      const PlateauResult r = run_plateau(qs[i], cfg);
      rel[i] = r.flatness / r.reference;
      o.detail << "q=" << qs[i] << ": L=" << r.length << " sandwich excess " << r.sandwich_excess << ", flatness "
               << r.flatness << " of " << r.reference << " (" << rel[i] << "); ";
      o.require(r.sandwich_excess <= 0.0, "|density - persistence| <= q + 3 s.e.");
      if (qs[i] == 0.1) o.require(r.flatness <= 0.15 * r.reference, "flatness <= 0.15 x start value at q=0.1");
    }
    o.require(rel[1] < rel[0], "flatness shrinks from q=0.2 to q=0.1");
  });

  criterion(12, 1800, [](Outcome& o) {
    ExperimentConfig cfg;
    cfg.name = "tv-compare";
    cfg.samples = 10000;
    cfg.k = 1;
    cfg.seed = 12;
    cfg.workers = kWorkers;
    const TvCompareResult a = run_tv_compare(0.1, cfg);
    const TvCompareResult b = run_tv_compare(0.2, cfg);
    const TvReport& x = a.rows.front().tv;
    const TvReport& y = b.rows.front().tv;
    o.detail << "t1+: TV(0.1)=" << x.tv << " [" << x.ci_low << "," << x.ci_high << "], TV(0.2)=" << y.tv << " ["
             << y.ci_low << "," << y.ci_high << "]; other times:";
    for (const auto* r : {&a, &b})
      for (std::size_t i = 1; i < r->rows.size(); ++i) o.detail << " q=" << r->q << " " << r->rows[i].label << " " << r->rows[i].tv.tv;
    o.require(x.tv < y.tv, "TV(0.1) < TV(0.2)");
    o.require(x.ci_high < y.ci_low, "non-overlapping CIs");
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
