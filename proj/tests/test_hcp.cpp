#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "eastkcm/bench.hpp"
#include "eastkcm/exact_oracle.hpp"
#include "eastkcm/hcp.hpp"
#include "eastkcm/schedule.hpp"

using namespace eastkcm;

TEST_CASE("class of a domain length") {
  CHECK(class_of(1) == 0);
  CHECK(class_of(2) == 1);
  CHECK(class_of(3) == 2);
  CHECK(class_of(4) == 2);
  CHECK(class_of(5) == 3);
  CHECK(class_of(8) == 3);
  CHECK(class_of(9) == 4);
  CHECK_THROWS(class_of(0));
}

TEST_CASE("merging two class-n lengths always leaves class n") {
  for (int n = 0; n <= 10; ++n)
    for (long long a = class_min(n); a <= class_max(n); ++a)
      for (long long b = class_min(n); b <= class_max(n); ++b) REQUIRE(class_of(a + b) > n);
}

TEST_CASE("schedule at q=0.1, N=2") {
  const EpochSchedule s = make_schedule(0.1, 2);
  CHECK(s.epsilon == doctest::Approx(0.0625));
  CHECK(s.active_start[1] == doctest::Approx(std::pow(10.0, 0.9375)).epsilon(1e-12));
  CHECK(s.active_end[1] == doctest::Approx(std::pow(10.0, 1.0625)).epsilon(1e-12));
  CHECK(s.window[0] == doctest::Approx(std::pow(10.0, -0.46875)).epsilon(1e-12));
  CHECK(s.window[1] == doctest::Approx(std::pow(10.0, 0.1875)).epsilon(1e-12));
  CHECK(s.window[2] == doctest::Approx(std::pow(10.0, 1.1875)).epsilon(1e-12));
  CHECK(s.active_start[0] == 0.0);
  CHECK(s.active_end[0] == doctest::Approx(std::pow(10.0, 0.0625)));
  CHECK(s.epoch_at(9.0) == 1);
  CHECK(s.epoch_at(0.0) == 0);
  // with eps = 1/(8N) consecutive windows never overlap, even at q close to 1/2
  const EpochSchedule loose = make_schedule(0.4, 3);
  for (int n = 1; n <= 3; ++n) CHECK(loose.active_end[n - 1] < loose.active_start[n]);
  CHECK_THROWS(make_schedule(0.6, 2));
}

TEST_CASE("rate table: exact entries, zero off class, bound constant") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  CHECK(t.lambda(0, 1) == doctest::Approx(0.9).epsilon(1e-10));
  CHECK(t.lambda(1, 3) == 0.0);
  CHECK(t.lambda(2, 2) == 0.0);
  const double c = t.bound_constant();
  CHECK(c > 0.0);
  CHECK(c <= 1.0);
  for (const auto& [key, e] : t.entries()) {
    const double tn = s.scale[static_cast<std::size_t>(e.epoch)];
    CHECK(e.lambda >= c / tn * (1 - 1e-12));
    CHECK(e.lambda <= 1.0 / (c * tn) * (1 + 1e-12));
  }
  const auto j = nlohmann::json::parse(t.to_json());
  REQUIRE(j["entries"].size() == 4);
  CHECK(j["entries"][0]["provenance"] == "exact");
  for (const char* field : {"n", "d", "lambda", "provenance", "stderr"}) CHECK(j["entries"][0].contains(field));
}

TEST_CASE("rate table: Monte Carlo agrees with exact within 3 s.e.") {
  const EpochSchedule s = make_schedule(0.1, 2);
  for (int d : {2, 3}) {
    const RateEntry mc = estimate_rate_monte_carlo(class_of(d), d, s, 100000, 71, 1);
    const double exact = lambda_exact(class_of(d), d, s).value;
    CAPTURE(d);
    CHECK(std::abs(mc.lambda - exact) <= 3.0 * mc.stderr_);
    CHECK(mc.provenance == RateProvenance::monte_carlo);
  }
  RateTable bad(s);
  CHECK_THROWS(bad.insert({1, 3, 0.5, RateProvenance::exact, 0, 0.0}));
  CHECK_THROWS(bad.insert({2, 3, 0.0, RateProvenance::exact, 0, 0.0}));
}

TEST_CASE("epoch without class-n zeros is the identity") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  std::vector<int> zeros{0, 5, 10};
  const Configuration c = Configuration::from_zeros(16, zeros);
  Rng rng = make_stream(1, 0);
  const EpochTrace e = run_epoch(c, 2, t, rng);
  CHECK(e.events.empty());
  CHECK(e.final_state == c);
  std::vector<int> low{0, 1};
  CHECK_THROWS_WITH(run_epoch(Configuration::from_zeros(8, low), 2, t, rng), "epoch precondition violated");
}

TEST_CASE("two-clock race") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  const int d0 = 3, d1 = 4;
  std::vector<int> zeros{0, d0};
  const Configuration c = Configuration::from_zeros(d0 + d1, zeros);
  const long long n = 100000;
  long long one = 0;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(n); ++i) {
    Rng rng = make_stream(73, i);
    const EpochTrace e = run_epoch(c, 2, t, rng);
    one += e.final_state.zero_count() == 1;
  }
  // one zero survives iff the right clock rings first
  const double p = t.lambda(2, d1) / (t.lambda(2, d0) + t.lambda(2, d1));
  CHECK(std::abs(static_cast<double>(one) / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("HCP trace: support progression, chaining and wall-time map") {
  const EpochSchedule s = make_schedule(0.1, 3);
  const RateTable t = build_rate_table(s, 8, RateMode::exact());
  const RenewalLaw law = pinned_law(InitialSpec::parse("geometric:0.5"), 512);
  for (std::uint64_t i = 0; i < 50; ++i) {
    Rng rng = make_stream(79, i);
    const Configuration c = sample_initial_config(law, 300, rng);
    const HcpTrace trace = run_hcp(c, s, t, rng);
    REQUIRE(trace.epochs.size() == 4);
    CHECK(trace.epochs[0].initial == c);
    for (std::size_t n = 0; n < trace.epochs.size(); ++n) {
      const auto& ep = trace.epochs[n];
      if (n > 0) CHECK(ep.initial == trace.epochs[n - 1].final_state);
      for (std::size_t j = 0; j < ep.final_state.zero_count(); ++j)
        CHECK(ep.final_state.domain_length(j) >= (1 << n) + 1);
      for (std::size_t k = 1; k < ep.events.size(); ++k) CHECK(ep.events[k].time > ep.events[k - 1].time);
    }
    CHECK(state_at_wall_time(trace, s, 0.0) == c);
    const double t12 = 12.0;
    CHECK(state_at_wall_time(trace, s, t12) == trace.epochs[1].at(t12 - s.active_start[1]));
  }
  const EpochSchedule s2 = make_schedule(0.1, 2);
  CHECK(s2.epoch_at(9.0) == 1);
  CHECK(9.0 - s2.active_start[1] == doctest::Approx(0.34).epsilon(0.01));
}

TEST_CASE("HCP with all domains above class N never fires") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  std::vector<int> zeros{0, 6, 12};
  const Configuration c = Configuration::from_zeros(18, zeros);
  Rng rng = make_stream(83, 0);
  const HcpTrace trace = run_hcp(c, s, t, rng);
  for (const auto& ep : trace.epochs) CHECK(ep.events.empty());
  CHECK(trace.events_csv() == "epoch,internal_time,killed_position\n");
}

TEST_CASE("first HCP epoch from unit gaps produces gaps of length 2 with probability 1/2") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  const int length = 1 << 14;
  std::vector<int> zeros(length);
  std::iota(zeros.begin(), zeros.end(), 0);
  const Configuration c = Configuration::from_zeros(length, zeros);
  long long total = 0, twos = 0;
  for (std::uint64_t i = 0; i < 4; ++i) {
    Rng rng = make_stream(89, i);
    const EpochTrace e = run_epoch(c, 0, t, rng);
    const auto& f = e.final_state;
    // interior gaps only; the last domain touches the boundary
    for (std::size_t j = 0; j + 1 < f.zero_count(); ++j) {
      ++total;
      twos += f.domain_length(j) == 2;
    }
  }
  const double p = static_cast<double>(twos) / total;
  CHECK(std::abs(p - 0.5) <= 3.0 * std::sqrt(0.25 / total));
}

TEST_CASE("two kills in a short window are quadratically rare") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  std::vector<int> zeros{0, 3, 6};
  const Configuration c = Configuration::from_zeros(10, zeros);
  const long long n = 400000;
  std::vector<double> second(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(n); ++i) {
    Rng rng = make_stream(97, i);
    const EpochTrace e = run_epoch(c, 2, t, rng);
    second[i] = e.events.size() >= 2 ? e.events[1].time : std::numeric_limits<double>::infinity();
  }
  std::sort(second.begin(), second.end());
  const double tn = s.scale[2];
  std::vector<double> lx, ly;
  for (double f : {0.04, 0.08, 0.16, 0.32}) {
    const double w = f * tn;
    const auto k = std::upper_bound(second.begin(), second.end(), w) - second.begin();
    REQUIRE(k > 20);
    lx.push_back(std::log(w));
    ly.push_back(std::log(static_cast<double>(k) / n));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(sxy / sxx >= 1.8);
}

TEST_CASE("epoch-start gaps show no serial correlation") {
  const EpochSchedule s = make_schedule(0.1, 2);
  const RateTable t = build_rate_table(s, 4, RateMode::exact());
  const RenewalLaw law = pinned_law(InitialSpec::parse("geometric:0.5"), 512);
  Rng rng = make_stream(101, 0);
  const HcpTrace trace = run_hcp(sample_initial_config(law, 1 << 15, rng), s, t, rng);
  for (std::size_t n = 1; n < trace.epochs.size(); ++n) {
    const Configuration& c = trace.epochs[n].initial;
    std::vector<double> g;
    for (std::size_t j = 0; j + 1 < c.zero_count(); ++j) g.push_back(c.domain_length(j));
    auto lag1 = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double num = 0, den = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        den += (v[i] - m) * (v[i] - m);
        if (i + 1 < v.size()) num += (v[i] - m) * (v[i + 1] - m);
      }
      return num / den;
    };
    const double observed = std::abs(lag1(g));
    Rng perm = make_stream(103, n);
    int extreme = 0;
    const int rounds = 999;
    for (int r = 0; r < rounds; ++r) {
      std::shuffle(g.begin(), g.end(), perm);
      extreme += std::abs(lag1(g)) >= observed;
    }
    CAPTURE(n);
    CHECK((1.0 + extreme) / (1.0 + rounds) > 0.01);
  }
}
