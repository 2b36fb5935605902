#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "eastkcm/bench.hpp"
#include "eastkcm/exact_oracle.hpp"

using namespace eastkcm;

namespace {

std::vector<std::vector<int>> bernoulli(double p, int n, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  std::bernoulli_distribution b(p);
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) out.push_back({b(rng) ? 1 : 0});
  return out;
}

}  // namespace

TEST_CASE("TV estimator: identical, disjoint, Bernoulli pair") {
  const auto a = bernoulli(0.5, 1000, 1);
  const TvReport same = estimate_tv(a, a, 2, 200);
  CHECK(same.tv == 0.0);
  CHECK(same.ci_low <= same.tv);
  CHECK(same.ci_high >= same.tv);

  std::vector<std::vector<int>> x(500, {1, 2}), y(700, {3, 4});
  CHECK(estimate_tv(x, y, 3, 200).tv == doctest::Approx(1.0));

  const TvReport r = estimate_tv(bernoulli(0.5, 100000, 4), bernoulli(0.6, 100000, 5), 6);
  CHECK(r.ci_low <= 0.1);
  CHECK(r.ci_high >= 0.1);
  CHECK(r.ci_low <= r.tv);
  CHECK(r.tv <= r.ci_high);

  std::vector<std::vector<int>> wide(3, {1, 2});
  CHECK_THROWS(estimate_tv(a, wide, 1, 10));
}

TEST_CASE("TV estimator pools rare tuples") {
  std::vector<std::vector<int>> a, b;
  for (int i = 0; i < 100; ++i) {
    a.push_back({i % 2});
    b.push_back({i % 2});
  }
  a.push_back({7});
  b.push_back({8});
  const TvReport r = estimate_tv(a, b, 1, 50);
  CHECK(r.tv == 0.0);  // 7 and 8 share the pooled cell
  CHECK(r.cells == 3);
}

TEST_CASE("log-spaced grid") {
  const auto g = log_spaced(1.0, 1000.0, 4);
  CHECK(g.front() == 1.0);
  CHECK(g.back() == 1000.0);
  CHECK(g[1] == doctest::Approx(10.0));
  CHECK_THROWS(log_spaced(0.0, 1.0, 3));
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  c.name = "plateau";
  c.samples = 0;
  CHECK_THROWS(c.validate());
  c.samples = 10;
  c.q_values = {0.7};
  CHECK_THROWS(c.validate());
  c.q_values = {0.1};
  c.init = "nonsense";
  CHECK_THROWS(c.validate());
}

TEST_CASE("plateau output does not depend on the worker count") {
  ExperimentConfig c;
  c.name = "plateau";
  c.samples = 200;
  c.probe_count = 10;
  c.seed = 9;
  c.workers = 1;
  const auto one = run_experiment(c);
  c.workers = 3;
  const auto three = run_experiment(c);
  CHECK(one.files == three.files);
  CHECK(one.manifest["L"] == three.manifest["L"]);
  CHECK(one.manifest["code_version"] == kCodeVersion);
}

TEST_CASE("plateau with class N+1 gaps keeps every HCP zero") {
  ExperimentConfig c;
  c.name = "plateau";
  c.init = "deterministic:5";
  c.samples = 100;
  c.probe_count = 8;
  const PlateauResult r = run_plateau(0.1, c);
  for (const auto& p : r.points) CHECK(p.hcp_density == 1.0);
  CHECK(r.length == 2 * 5 + 8);
}

TEST_CASE("tv-compare of the HCP against itself is zero") {
  ExperimentConfig c;
  c.name = "tv-compare";
  c.samples = 300;
  c.self_check = true;
  const auto out = run_experiment(c);
  bool found = false;
  for (const auto& chk : out.report["checks"])
    if (chk["name"].get<std::string>().rfind("tv-self-zero", 0) == 0) {
      found = true;
      CHECK(chk["passed"].get<bool>());
    }
  CHECK(found);
}

TEST_CASE("validate-oracles writes the reachability table and all files") {
  ExperimentConfig c;
  c.name = "validate-oracles";
  c.samples = 20000;
  c.out_dir = (std::filesystem::temp_directory_path() / "eastkcm_validate_test").string();
  const auto out = run_experiment(c);
  write_output(c, out);
  const std::string& reach = out.files.at("reachability.csv");
  CHECK(reach.rfind("n,L,ell,expected,reached\n", 0) == 0);
  for (const char* row : {"\n1,2,1,1,", "\n2,4,3,3,", "\n3,8,7,7,"}) CHECK(reach.find(row) != std::string::npos);
  for (const char* f : {"manifest.json", "report.json", "rates.csv", "gap.csv", "transition_law.csv"})
    CHECK(std::filesystem::exists(std::filesystem::path(c.out_dir) / f));
  for (const auto& chk : out.report["checks"]) {
    CAPTURE(chk.dump());
    CHECK(chk["passed"].get<bool>());
  }
}

TEST_CASE("exact exponentiality of the origin hitting time improves as q decreases") {
  double prev = 1.0;
  for (double q : {0.3, 0.2, 0.1}) {
    const double ks = exact_exponential_ks(4, q, hitting_scale_exact(4, q));
    CHECK(ks < prev);
    prev = ks;
  }
}
