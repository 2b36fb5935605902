#include "eastkcm/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "eastkcm/east_sim.hpp"
#include "eastkcm/exact_oracle.hpp"
#include "eastkcm/limit_laws.hpp"

namespace eastkcm {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream layout: 2i seeds the initial configuration of trajectory i, 2i+1
// drives its East dynamics, and a separate root drives the HCP dynamics.
Rng init_stream(std::uint64_t seed, std::size_t i) { return make_stream(seed, 2 * i); }
Rng east_stream(std::uint64_t seed, std::size_t i) { return make_stream(seed, 2 * i + 1); }
Rng hcp_stream(std::uint64_t seed, std::size_t i) { return make_stream(stream_seed(seed, 0x484350), i); }

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

std::string q_tag(double q) {
  std::ostringstream out;
  out << "q" << q;
  return out.str();
}

double binomial_se(double p, std::size_t n) { return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

json check(const std::string& name, const std::string& kind, bool passed, json detail) {
  return json{{"name", name}, {"kind", kind}, {"passed", passed}, {"detail", std::move(detail)}};
}

int stalling_window(const EpochSchedule& s, double t) {
  for (int n = 0; n <= s.max_epoch; ++n)
    if (t >= s.active_end[static_cast<std::size_t>(n)] && t <= s.active_start[static_cast<std::size_t>(n) + 1]) return n;
  return -1;
}

bool hcp_available(const EpochSchedule& s) { return class_max(s.max_epoch) <= kMaxExactLength; }

}  // namespace

void ExperimentConfig::validate() const {
  if (samples < 1) throw Error("sample count must be >= 1");
  if (q_values.empty()) throw Error("at least one q is required");
  for (double q : q_values)
    if (!(q > 0.0 && q <= 0.5)) throw Error("q values must lie in (0, 1/2]");
  if (max_epoch < 1) throw Error("N must be >= 1");
  if (probe_count < 2) throw Error("probe grid needs at least two points");
  if (k < 0) throw Error("k must be >= 0");
  if (length < 0) throw Error("L must be >= 0");
  InitialSpec::parse(init);
}

RenewalLaw pinned_law(const InitialSpec& spec, int x_max) {
  const Measure mu = make_initial<double>(spec, x_max);
  return RenewalLaw::pinned(mu.values);
}

int experiment_length(const ExperimentConfig& cfg) {
  if (cfg.length > 0) return cfg.length;
  const RenewalLaw law = pinned_law(InitialSpec::parse(cfg.init), cfg.gap_truncation);
  return choose_cutoff(law, cfg.max_epoch, cfg.k, cfg.cutoff_delta);
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 2) throw Error("invalid log grid");
  std::vector<double> out(static_cast<std::size_t>(count));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

TvReport estimate_tv(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b,
                     std::uint64_t seed, int resamples) {
  if (a.empty() || b.empty()) throw Error("TV needs two nonempty ensembles");
  const std::size_t arity = a.front().size();
  for (const auto* ens : {&a, &b})
    for (const auto& t : *ens)
      if (t.size() != arity) throw Error("ensembles of different tuple arity");

  std::map<std::vector<int>, std::pair<long long, long long>> counts;
  for (const auto& t : a) ++counts[t].first;
  for (const auto& t : b) ++counts[t].second;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());

  // Cell ids after pooling; the pooled cell is id 0.
  std::map<std::vector<int>, int> cell_of;
  int cells = 1;
  bool pooled_used = false;
  for (const auto& [tuple, c] : counts) {
    if (0.5 * static_cast<double>(c.first + c.second) < 5.0) {
      cell_of[tuple] = 0;
      pooled_used = true;
    } else {
      cell_of[tuple] = cells++;
    }
  }
  std::vector<int> ids_a, ids_b;
  ids_a.reserve(a.size());
  ids_b.reserve(b.size());
  for (const auto& t : a) ids_a.push_back(cell_of[t]);
  for (const auto& t : b) ids_b.push_back(cell_of[t]);

  auto tv_of = [&](const std::vector<long long>& ca, const std::vector<long long>& cb) {
    double s = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i)
      s += std::abs(static_cast<double>(ca[i]) / na - static_cast<double>(cb[i]) / nb);
    return 0.5 * s;
  };
  std::vector<long long> ca(static_cast<std::size_t>(cells), 0), cb(static_cast<std::size_t>(cells), 0);
  for (int id : ids_a) ++ca[static_cast<std::size_t>(id)];
  for (int id : ids_b) ++cb[static_cast<std::size_t>(id)];

  TvReport r;
  r.tv = tv_of(ca, cb);
  r.cells = static_cast<std::size_t>(cells) - (pooled_used ? 0 : 1);
  r.samples_a = a.size();
  r.samples_b = b.size();

  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(resamples));
  Rng rng = make_stream(seed, 0);
  std::uniform_int_distribution<std::size_t> pick_a(0, a.size() - 1), pick_b(0, b.size() - 1);
  for (int rep = 0; rep < resamples; ++rep) {
    std::fill(ca.begin(), ca.end(), 0);
    std::fill(cb.begin(), cb.end(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) ++ca[static_cast<std::size_t>(ids_a[pick_a(rng)])];
    for (std::size_t i = 0; i < b.size(); ++i) ++cb[static_cast<std::size_t>(ids_b[pick_b(rng)])];
    boot.push_back(tv_of(ca, cb));
  }
  std::sort(boot.begin(), boot.end());
  if (boot.empty()) {
    r.ci_low = r.ci_high = r.tv;
  } else {
    auto quantile = [&](double p) {
      const auto i = static_cast<std::size_t>(std::clamp(p * static_cast<double>(boot.size() - 1), 0.0,
                                                         static_cast<double>(boot.size() - 1)));
      return boot[i];
    };
    r.ci_low = std::min(quantile(0.025), r.tv);
    r.ci_high = std::max(quantile(0.975), r.tv);
  }
  return r;
}

// ---------------------------------------------------------------- plateau

std::string PlateauResult::to_csv() const {
  std::ostringstream out;
  out << "t,density,density_se,persistence,persistence_se,gap_se,hcp_density,hcp_se,level\n";
  for (const auto& p : points)
    out << num(p.t) << ',' << num(p.density) << ',' << num(p.density_se) << ',' << num(p.persistence) << ','
        << num(p.persistence_se) << ',' << num(p.gap_se) << ',' << num(p.hcp_density) << ',' << num(p.hcp_se) << ','
        << num(p.level) << '\n';
  return out.str();
}

PlateauResult run_plateau(double q, const ExperimentConfig& cfg) {
  cfg.validate();
  const EpochSchedule schedule = make_schedule(q, cfg.max_epoch);
  const InitialSpec spec = InitialSpec::parse(cfg.init);
  const RenewalLaw law = pinned_law(spec, cfg.gap_truncation);
  const int length = experiment_length(cfg);
  const int window = cfg.max_epoch >= 2 ? 1 : 0;

  PlateauResult result;
  result.q = q;
  result.length = length;
  result.window_start = schedule.active_end[static_cast<std::size_t>(window)];
  result.window_end = schedule.active_start[static_cast<std::size_t>(window) + 1];

  std::vector<double> probes = log_spaced(1.0, schedule.active_end[static_cast<std::size_t>(cfg.max_epoch)], cfg.probe_count);
  probes.push_back(result.window_start);
  probes.push_back(result.window_end);
  std::sort(probes.begin(), probes.end());
  probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
  const std::size_t np = probes.size();
  const auto n = static_cast<std::size_t>(cfg.samples);

  std::vector<std::uint8_t> empty(n * np), persist(n * np);
  const SimParams params{q, cfg.seed, 1e12};
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    Rng init = init_stream(cfg.seed, i);
    const Configuration c = sample_initial_config(law, length, init);
    Rng rng = east_stream(cfg.seed, i);
    const ObservableSeries s = run_with_observables(c, params, probes, 0, rng);
    for (std::size_t p = 0; p < np; ++p) {
      empty[i * np + p] = static_cast<std::uint8_t>(s.probes[p].origin_empty);
      persist[i * np + p] = static_cast<std::uint8_t>(s.probes[p].persistent);
    }
  });

  std::vector<std::uint8_t> hcp_empty;
  const bool with_hcp = hcp_available(schedule);
  if (with_hcp) {
    const RateTable rates = build_rate_table(schedule, static_cast<int>(class_max(cfg.max_epoch)), RateMode::exact());
    hcp_empty.assign(n * np, 0);
    const double last = schedule.active_start.back();
    parallel_for(n, cfg.workers, [&](std::size_t i) {
      Rng init = init_stream(cfg.seed, i);
      const Configuration c = sample_initial_config(law, length, init);
      Rng rng = hcp_stream(cfg.seed, i);
      const HcpTrace trace = run_hcp(c, schedule, rates, rng);
      for (std::size_t p = 0; p < np; ++p)
        hcp_empty[i * np + p] =
            state_at_wall_time(trace, schedule, std::min(probes[p], last)).empty(0) ? 1 : 0;
    });
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  result.sandwich_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < np; ++p) {
    PlateauPoint pt;
    pt.t = probes[p];
    double de = 0, pe = 0, he = 0;
    for (std::size_t i = 0; i < n; ++i) {
      de += empty[i * np + p];
      pe += persist[i * np + p];
      if (with_hcp) he += hcp_empty[i * np + p];
    }
    pt.density = de / static_cast<double>(n);
    pt.persistence = pe / static_cast<double>(n);
    pt.density_se = binomial_se(pt.density, n);
    pt.persistence_se = binomial_se(pt.persistence, n);
    // persistence implies emptiness, so the difference is itself a frequency
    pt.gap_se = binomial_se(pt.density - pt.persistence, n);
    pt.hcp_density = with_hcp ? he / static_cast<double>(n) : kNaN;
    pt.hcp_se = with_hcp ? binomial_se(pt.hcp_density, n) : kNaN;
    const int w = stalling_window(schedule, pt.t);
    pt.level = w >= 0 ? std::pow(1.0 / (std::ldexp(1.0, w) + 1.0), spec.c0()) : kNaN;
    result.sandwich_excess =
        std::max(result.sandwich_excess, std::abs(pt.density - pt.persistence) - (q + 3.0 * pt.gap_se));
    if (pt.t >= result.window_start && pt.t <= result.window_end) {
      lo = std::min(lo, pt.persistence);
      hi = std::max(hi, pt.persistence);
    }
    if (pt.t == result.window_start) result.reference = pt.persistence;
    result.points.push_back(pt);
  }
  result.flatness = hi - lo;
  return result;
}

// ------------------------------------------------------------------ aging

std::string AgingResult::to_csv() const {
  std::ostringstream out;
  out << "s,t,cov,cov_se,factorized\n";
  for (const auto& c : cells)
    out << num(c.s) << ',' << num(c.t) << ',' << num(c.cov) << ',' << num(c.cov_se) << ',' << num(c.factorized) << '\n';
  return out.str();
}

AgingResult run_aging(double q, const ExperimentConfig& cfg) {
  cfg.validate();
  const EpochSchedule schedule = make_schedule(q, cfg.max_epoch);
  const RenewalLaw law = pinned_law(InitialSpec::parse(cfg.init), cfg.gap_truncation);
  const int length = experiment_length(cfg);

  // One time per stalling window, plus a lag-shifted partner for each
  // consecutive pair so that equal lags are sampled in different windows.
  std::vector<double> mids;
  for (int m = 0; m < cfg.max_epoch; ++m)
    mids.push_back(std::sqrt(schedule.active_end[static_cast<std::size_t>(m)] *
                             schedule.active_start[static_cast<std::size_t>(m) + 1]));
  std::vector<double> times = mids;
  for (std::size_t m = 1; m < mids.size(); ++m) times.push_back(2.0 * mids[m] - mids[m - 1]);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const std::size_t nt = times.size();
  const auto n = static_cast<std::size_t>(cfg.samples);

  std::vector<std::uint8_t> zero(n * nt);
  const SimParams params{q, cfg.seed, 1e12};
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    Rng init = init_stream(cfg.seed, i);
    const Configuration c = sample_initial_config(law, length, init);
    Rng rng = east_stream(cfg.seed, i);
    const ObservableSeries s = run_with_observables(c, params, times, 0, rng);
    for (std::size_t p = 0; p < nt; ++p) zero[i * nt + p] = static_cast<std::uint8_t>(s.probes[p].origin_empty);
  });

  std::vector<double> dens(nt, 0.0);
  for (std::size_t p = 0; p < nt; ++p) {
    for (std::size_t i = 0; i < n; ++i) dens[p] += zero[i * nt + p];
    dens[p] /= static_cast<double>(n);
  }
  AgingResult result;
  result.q = q;
  std::map<std::pair<double, double>, std::size_t> index;
  for (std::size_t a = 0; a < nt; ++a) {
    for (std::size_t b = a + 1; b < nt; ++b) {
      double sum = 0, sum2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = (zero[i * nt + a] - dens[a]) * (zero[i * nt + b] - dens[b]);
        sum += c;
        sum2 += c * c;
      }
      AgingCell cell;
      cell.s = times[a];
      cell.t = times[b];
      cell.cov = sum / static_cast<double>(n);
      const double var = std::max(0.0, sum2 / static_cast<double>(n) - cell.cov * cell.cov);
      cell.cov_se = std::sqrt(var / static_cast<double>(n));
      cell.factorized = dens[b] * (1.0 - dens[a]);
      index[{cell.s, cell.t}] = result.cells.size();
      result.cells.push_back(cell);
    }
  }
  for (std::size_t m = 1; m < mids.size(); ++m) {
    const auto first = index.find({mids[m - 1], mids[m]});
    const auto second = index.find({mids[m], 2.0 * mids[m] - mids[m - 1]});
    if (first == index.end() || second == index.end()) continue;
    result.equal_lag_pairs.emplace_back(first->second, second->second);
    const auto& x = result.cells[first->second];
    const auto& y = result.cells[second->second];
    if (std::abs(x.cov - y.cov) > 3.0 * std::hypot(x.cov_se, y.cov_se)) result.aging_detected = true;
  }
  return result;
}

// ---------------------------------------------------------------- scaling

std::string ScalingResult::to_csv() const {
  std::ostringstream out;
  out << "n,t,s,lt_x_east,lt_x_recursion,lt_x_limit,lt_y_east,lt_y_recursion,lt_y_limit,exhausted\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << num(r.t) << ',' << num(r.s) << ',' << num(r.lt_x_east) << ',' << num(r.lt_x_recursion)
        << ',' << num(r.lt_x_limit) << ',' << num(r.lt_y_east) << ',' << num(r.lt_y_recursion) << ','
        << num(r.lt_y_limit) << ',' << r.exhausted << '\n';
  return out.str();
}

ScalingResult run_scaling(double q, const ExperimentConfig& cfg) {
  cfg.validate();
  const EpochSchedule schedule = make_schedule(q, cfg.max_epoch);
  const InitialSpec spec = InitialSpec::parse(cfg.init);
  const RenewalLaw law = pinned_law(spec, cfg.gap_truncation);
  const int length = experiment_length(cfg);
  const RecursionResult<double> recursion = iterate_epochs(spec, cfg.max_epoch);

  std::vector<double> times;
  for (int m = 0; m < cfg.max_epoch; ++m)
    times.push_back(std::sqrt(schedule.active_end[static_cast<std::size_t>(m)] *
                              schedule.active_start[static_cast<std::size_t>(m) + 1]));
  const std::size_t nt = times.size();
  const auto n = static_cast<std::size_t>(cfg.samples);
  std::vector<int> x0(n * nt), x1(n * nt);
  const SimParams params{q, cfg.seed, 1e12};
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    Rng init = init_stream(cfg.seed, i);
    const Configuration c = sample_initial_config(law, length, init);
    Rng rng = east_stream(cfg.seed, i);
    const ObservableSeries s = run_with_observables(c, params, times, 2, rng);
    for (std::size_t p = 0; p < nt; ++p) {
      x0[i * nt + p] = s.probes[p].first_zeros[0];
      x1[i * nt + p] = s.probes[p].first_zeros[1];
    }
  });

  ScalingResult result;
  result.q = q;
  for (std::size_t p = 0; p < nt; ++p) {
    const int epoch = static_cast<int>(p);
    const double scale = std::ldexp(1.0, epoch) + 1.0;
    for (double s : {0.5, 1.0, 2.0}) {
      ScalingRow row;
      row.epoch = epoch;
      row.t = times[p];
      row.s = s;
      double lx = 0, ly = 0;
      long long used_x = 0, used_y = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const int a = x0[i * nt + p], b = x1[i * nt + p];
        if (a < length) {
          ly += std::exp(-s * a / scale);
          ++used_y;
        }
        if (b < length) {
          lx += std::exp(-s * (b - a) / scale);
          ++used_x;
        } else {
          ++row.exhausted;
        }
      }
      row.lt_x_east = used_x ? lx / static_cast<double>(used_x) : kNaN;
      row.lt_y_east = used_y ? ly / static_cast<double>(used_y) : kNaN;
      row.lt_x_recursion = laplace_of(recursion.mu[p + 1], s, scale);
      row.lt_y_recursion = laplace_of(recursion.nu[p + 1], s, scale);
      row.lt_x_limit = lt_x_inf(s, spec.c0());
      row.lt_y_limit = lt_y_inf(s, spec.c0());
      result.rows.push_back(row);
    }
  }
  return result;
}

// ------------------------------------------------------------- tv-compare

std::string TvCompareResult::to_csv() const {
  std::ostringstream out;
  out << "label,t,epoch,tau,tv,ci_low,ci_high,cells,samples_east,samples_hcp\n";
  for (const auto& r : rows)
    out << r.label << ',' << num(r.t) << ',' << r.epoch << ',' << num(r.tau) << ',' << num(r.tv.tv) << ','
        << num(r.tv.ci_low) << ',' << num(r.tv.ci_high) << ',' << r.tv.cells << ',' << r.tv.samples_a << ','
        << r.tv.samples_b << '\n';
  return out.str();
}

TvCompareResult run_tv_compare(double q, const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.max_epoch < 2) throw Error("tv-compare needs N >= 2");
  const EpochSchedule schedule = make_schedule(q, cfg.max_epoch);
  if (!hcp_available(schedule)) throw Error("tv-compare needs exact rates: 2^N must be <= 14");
  const RenewalLaw law = pinned_law(InitialSpec::parse(cfg.init), cfg.gap_truncation);
  const int length = experiment_length(cfg);
  const RateTable rates = build_rate_table(schedule, static_cast<int>(class_max(cfg.max_epoch)), RateMode::exact());

  const std::vector<std::pair<std::string, double>> marks = {
      {"t1+", schedule.active_end[1]}, {"t2-", schedule.active_start[2]}, {"t2+", schedule.active_end[2]}};
  std::vector<double> times;
  for (const auto& m : marks) times.push_back(m.second);
  const std::size_t nt = times.size();
  const auto n = static_cast<std::size_t>(cfg.samples);
  const std::size_t arity = static_cast<std::size_t>(cfg.k) + 1;

  auto hcp_tuples = [&](std::size_t i, std::vector<std::vector<int>>& out) {
    Rng init = init_stream(cfg.seed, i);
    const Configuration c = sample_initial_config(law, length, init);
    Rng rng = hcp_stream(cfg.seed, i);
    const HcpTrace trace = run_hcp(c, schedule, rates, rng);
    for (std::size_t p = 0; p < nt; ++p) {
      const Configuration s = state_at_wall_time(trace, schedule, times[p]);
      std::vector<int> t(arity, length);
      for (std::size_t j = 0; j < arity && j < s.zero_count(); ++j) t[j] = s.zeros()[j];
      out[p * n + i] = std::move(t);
    }
  };

  std::vector<std::vector<int>> east(nt * n), hcp(nt * n);
  const SimParams params{q, cfg.seed, 1e12};
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    if (cfg.self_check) {
      hcp_tuples(i, east);
    } else {
      Rng init = init_stream(cfg.seed, i);
      const Configuration c = sample_initial_config(law, length, init);
      Rng rng = east_stream(cfg.seed, i);
      const ObservableSeries s = run_with_observables(c, params, times, static_cast<int>(arity), rng);
      for (std::size_t p = 0; p < nt; ++p) east[p * n + i] = s.probes[p].first_zeros;
    }
    hcp_tuples(i, hcp);
  });

  TvCompareResult result;
  result.q = q;
  result.length = length;
  result.rates_json = rates.to_json();
  for (std::size_t p = 0; p < nt; ++p) {
    TvRow row;
    row.label = marks[p].first;
    row.t = times[p];
    row.epoch = schedule.epoch_at(row.t);
    row.tau = row.t - schedule.active_start[static_cast<std::size_t>(row.epoch)];
    const std::vector<std::vector<int>> a(east.begin() + static_cast<std::ptrdiff_t>(p * n),
                                          east.begin() + static_cast<std::ptrdiff_t>((p + 1) * n));
    const std::vector<std::vector<int>> b(hcp.begin() + static_cast<std::ptrdiff_t>(p * n),
                                          hcp.begin() + static_cast<std::ptrdiff_t>((p + 1) * n));
    row.tv = estimate_tv(a, b, stream_seed(cfg.seed, 0x5456 + p));
    result.rows.push_back(row);
  }
  return result;
}

// ------------------------------------------------------------ exp-hitting

double exact_exponential_ks(int d, double q, double gamma) {
  std::vector<double> s_grid, t_grid;
  for (int i = 0; i <= 6000; ++i) {
    s_grid.push_back(12.0 * i / 6000.0);
    t_grid.push_back(gamma * s_grid.back());
  }
  const std::vector<double> survival = survival_curve_exact(d, q, t_grid);
  double ks = 0.0;
  for (std::size_t i = 0; i < s_grid.size(); ++i) ks = std::max(ks, std::abs(survival[i] - std::exp(-s_grid[i])));
  return ks;
}

ExpHittingRow run_exp_hitting(int d, double q, long long samples, std::uint64_t seed, unsigned workers) {
  if (samples < 10) throw Error("exp-hitting needs at least 10 samples");
  ExpHittingRow row;
  row.q = q;
  row.d = d;
  row.gamma_exact = hitting_scale_exact(d, q);
  row.ks_exact = exact_exponential_ks(d, q, row.gamma_exact);

  const SimParams params{q, seed, 60.0 * row.gamma_exact};
  const Configuration start = Configuration::single_zero_left(d);
  std::vector<double> tau(static_cast<std::size_t>(samples));
  std::vector<std::uint8_t> censored(tau.size());
  parallel_for(tau.size(), workers, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    const HittingSample h = hitting_time(start, params, HittingTarget::origin_filled(), rng);
    tau[i] = h.censored ? std::numeric_limits<double>::infinity() : h.time;
    censored[i] = h.censored ? 1 : 0;
  });
  row.censored = std::accumulate(censored.begin(), censored.end(), 0LL);
  std::sort(tau.begin(), tau.end());
  const double nn = static_cast<double>(tau.size());
  // Empirical survival at tau[j] (just after) is (n - j - 1)/n; take the first
  // order statistic where it drops to e^-1 or below.
  const auto j = static_cast<std::size_t>(std::ceil(nn * (1.0 - std::exp(-1.0)))) - 1;
  row.gamma_hat = tau[std::min(j, tau.size() - 1)];
  double ks = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double g = std::isinf(tau[i]) ? 1.0 : -std::expm1(-tau[i] / row.gamma_hat);
    ks = std::max({ks, static_cast<double>(i + 1) / nn - g, g - static_cast<double>(i) / nn});
  }
  row.ks_mc = ks;
  return row;
}

std::vector<long long> empirical_law(int length, double q, std::uint32_t start, double t, long long samples,
                                     std::uint64_t seed, unsigned workers) {
  if (length > kMaxExactLength) throw Error("empirical law limited to exact-oracle volumes");
  const Configuration c = Configuration::decode(start, length);
  std::vector<std::uint32_t> states(static_cast<std::size_t>(samples));
  const SimParams params{q, seed, 1e12};
  parallel_for(states.size(), workers, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    states[i] = advance(c, params, t, rng).encode();
  });
  std::vector<long long> counts(std::size_t{1} << length, 0);
  for (auto s : states) ++counts[s];
  return counts;
}

// ------------------------------------------------------------ dispatcher

namespace {

void plateau_experiment(const ExperimentConfig& cfg, ExperimentOutput& out) {
  const InitialSpec spec = InitialSpec::parse(cfg.init);
  std::vector<double> qs = cfg.q_values;
  std::sort(qs.begin(), qs.end(), std::greater<>());
  std::vector<double> flatness;
  for (double q : qs) {
    const PlateauResult r = run_plateau(q, cfg);
    out.files["plateau_" + q_tag(q) + ".csv"] = r.to_csv();
    out.manifest["L"][q_tag(q)] = r.length;
    const double rel = r.reference > 0 ? r.flatness / r.reference : kNaN;
    flatness.push_back(rel);
    out.report["checks"].push_back(check("persistence-sandwich " + q_tag(q), "statistical", r.sandwich_excess <= 0.0,
                                         {{"max_excess", r.sandwich_excess}}));
    out.report["checks"].push_back(check("plateau-flatness " + q_tag(q), "asymptotic-consistency", rel <= 0.15,
                                         {{"window", {r.window_start, r.window_end}},
                                          {"max_minus_min", r.flatness},
                                          {"value_at_start", r.reference},
                                          {"relative", rel}}));
    if (spec.kind == InitialKind::deterministic && class_of(static_cast<long long>(spec.parameter)) > cfg.max_epoch) {
      bool all_one = true;
      for (const auto& p : r.points)
        if (!std::isnan(p.hcp_density) && p.hcp_density != 1.0) all_one = false;
      out.report["checks"].push_back(check("hcp-persistence-constant " + q_tag(q), "exact", all_one, json::object()));
    }
  }
  if (qs.size() >= 2) {
    bool shrinking = true;
    for (std::size_t i = 1; i < flatness.size(); ++i) shrinking = shrinking && flatness[i] < flatness[i - 1];
    out.report["checks"].push_back(
        check("plateau-flatness-trend", "asymptotic-consistency", shrinking, {{"q", qs}, {"relative_flatness", flatness}}));
  }
}

void aging_experiment(const ExperimentConfig& cfg, ExperimentOutput& out) {
  for (double q : cfg.q_values) {
    const AgingResult r = run_aging(q, cfg);
    out.files["aging_" + q_tag(q) + ".csv"] = r.to_csv();
    double worst = 0.0;
    for (const auto& c : r.cells) worst = std::max(worst, std::abs(c.cov - c.factorized) - 3.0 * c.cov_se);
    out.report["checks"].push_back(check("aging-signature " + q_tag(q), "asymptotic-consistency", r.aging_detected,
                                         {{"equal_lag_pairs", r.equal_lag_pairs.size()}}));
    out.report["checks"].push_back(check("aging-factorized " + q_tag(q), "asymptotic-consistency", worst <= 0.05,
                                         {{"max_excess_over_3se", worst}}));
  }
}

void scaling_experiment(const ExperimentConfig& cfg, ExperimentOutput& out) {
  // No absolute tolerance: finite-q corrections are not small at desk scale.
  // Report the discrepancy per q and require it to shrink as q decreases.
  std::vector<double> qs = cfg.q_values;
  std::sort(qs.begin(), qs.end(), std::greater<>());
  std::vector<double> gaps;
  for (double q : qs) {
    const ScalingResult r = run_scaling(q, cfg);
    out.files["scaling_" + q_tag(q) + ".csv"] = r.to_csv();
    double worst = 0.0;
    for (const auto& row : r.rows)
      if (!std::isnan(row.lt_x_east)) worst = std::max(worst, std::abs(row.lt_x_east - row.lt_x_recursion));
    gaps.push_back(worst);
    out.report["metrics"]["scaling_east_vs_recursion_max_abs"][q_tag(q)] = worst;
  }
  if (qs.size() >= 2) {
    bool shrinking = true;
    for (std::size_t i = 1; i < gaps.size(); ++i) shrinking = shrinking && gaps[i] < gaps[i - 1];
    out.report["checks"].push_back(check("scaling-east-vs-recursion-trend", "asymptotic-consistency", shrinking,
                                         {{"q", qs}, {"max_abs_difference", gaps}}));
  }
}

void tv_experiment(const ExperimentConfig& cfg, ExperimentOutput& out) {
  std::vector<double> qs = cfg.q_values;
  std::sort(qs.begin(), qs.end());
  std::vector<TvReport> at_t1;
  for (double q : qs) {
    const TvCompareResult r = run_tv_compare(q, cfg);
    out.files["tv_" + q_tag(q) + ".csv"] = r.to_csv();
    out.files["rates_" + q_tag(q) + ".json"] = r.rates_json;
    out.manifest["L"][q_tag(q)] = r.length;
    at_t1.push_back(r.rows.front().tv);
    if (cfg.self_check) {
      bool zero = true;
      for (const auto& row : r.rows) zero = zero && row.tv.tv == 0.0;
      out.report["checks"].push_back(check("tv-self-zero " + q_tag(q), "exact", zero, json::object()));
    }
  }
  for (std::size_t i = 1; i < qs.size(); ++i) {
    const bool trend = at_t1[i - 1].tv < at_t1[i].tv && at_t1[i - 1].ci_high < at_t1[i].ci_low;
    out.report["checks"].push_back(check("tv-trend " + q_tag(qs[i - 1]) + " vs " + q_tag(qs[i]), "asymptotic-consistency",
                                         trend,
                                         {{"tv_small_q", at_t1[i - 1].tv},
                                          {"ci_small_q", {at_t1[i - 1].ci_low, at_t1[i - 1].ci_high}},
                                          {"tv_large_q", at_t1[i].tv},
                                          {"ci_large_q", {at_t1[i].ci_low, at_t1[i].ci_high}}}));
  }
}

void exp_hitting_experiment(const ExperimentConfig& cfg, ExperimentOutput& out) {
  std::vector<int> lengths;
  if (cfg.length > 0) {
    lengths.push_back(cfg.length);
  } else {
    for (long long d = class_min(cfg.max_epoch); d <= std::min<long long>(class_max(cfg.max_epoch), kMaxExactLength); ++d)
      lengths.push_back(static_cast<int>(d));
  }
  std::vector<double> qs = cfg.q_values;
  std::sort(qs.begin(), qs.end(), std::greater<>());
  std::ostringstream csv;
  csv << "d,q,gamma_exact,gamma_hat,ks_exact,ks_mc,censored\n";
  for (int d : lengths) {
    std::vector<double> ks;
    double worst = 0.0;
    for (double q : qs) {
      const ExpHittingRow r = run_exp_hitting(d, q, cfg.samples, stream_seed(cfg.seed, static_cast<std::uint64_t>(d)), cfg.workers);
      csv << d << ',' << num(q) << ',' << num(r.gamma_exact) << ',' << num(r.gamma_hat) << ',' << num(r.ks_exact) << ','
          << num(r.ks_mc) << ',' << r.censored << '\n';
      ks.push_back(r.ks_exact);
      worst = std::max(worst, std::abs(r.ks_mc - r.ks_exact));
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < ks.size(); ++i) decreasing = decreasing && ks[i] < ks[i - 1];
    out.report["checks"].push_back(check("exponentiality-trend d=" + std::to_string(d), "asymptotic-consistency",
                                         decreasing, {{"q", qs}, {"ks_exact", ks}}));
    out.report["checks"].push_back(check("exponentiality-mc-vs-exact d=" + std::to_string(d), "statistical",
                                         worst <= 0.01, {{"max_abs_difference", worst}}));
  }
  out.files["exp_hitting.csv"] = csv.str();
}

void validate_oracles_experiment(const ExperimentConfig& cfg, ExperimentOutput& out) {
  std::ostringstream rates_csv, law_csv, reach_csv, gap_csv;
  rates_csv << "q,n,d,lambda_exact,lambda_mc,stderr,z\n";
  law_csv << "q,L,t,tv\n";
  reach_csv << "n,L,ell,expected,reached\n";
  gap_csv << "L,n,q,gap,bound,method\n";
  bool rates_ok = true, law_ok = true, reach_ok = true, gap_ok = true;
  for (double q : cfg.q_values) {
    const EpochSchedule schedule = make_schedule(q, cfg.max_epoch);
    for (int n = 0; n <= cfg.max_epoch; ++n) {
      for (long long d = class_min(n); d <= std::min<long long>(class_max(n), kMaxExactLength); ++d) {
        const double exact = lambda_exact(n, static_cast<int>(d), schedule).value;
        const RateEntry mc = estimate_rate_monte_carlo(n, static_cast<int>(d), schedule, cfg.samples,
                                                       stream_seed(cfg.seed, static_cast<std::uint64_t>(n * 64 + d)),
                                                       cfg.workers);
        const double z = (mc.lambda - exact) / mc.stderr_;
        rates_ok = rates_ok && std::abs(z) <= 3.0;
        rates_csv << num(q) << ',' << n << ',' << d << ',' << num(exact) << ',' << num(mc.lambda) << ','
                  << num(mc.stderr_) << ',' << num(z) << '\n';
      }
    }
    const int volume = 5;
    const std::uint32_t start = (1u << volume) - 2u;  // single zero at the origin
    for (double t : {0.5, 2.0}) {
      const Eigen::VectorXd exact = transition_law_exact(volume, q, start, t);
      const auto counts = empirical_law(volume, q, start, t, cfg.samples, stream_seed(cfg.seed, 0x4C41), cfg.workers);
      double tv = 0.0;
      for (std::size_t s = 0; s < counts.size(); ++s)
        tv += std::abs(static_cast<double>(counts[s]) / static_cast<double>(cfg.samples) - exact[static_cast<Eigen::Index>(s)]);
      tv *= 0.5;
      law_ok = law_ok && tv <= 0.005 * std::max(1.0, std::sqrt(1e6 / static_cast<double>(cfg.samples)));
      law_csv << num(q) << ',' << volume << ',' << num(t) << ',' << num(tv) << '\n';
    }
    for (int n = 2; n <= 3; ++n) {
      const int volume_gap = 1 << (n - 1 + 1);  // L = 2^n
      const OracleResult g = spectral_gap_exact(volume_gap, q);
      const double bound = std::pow(q / 2.0, n);
      gap_ok = gap_ok && g.value >= bound - 1e-10;
      gap_csv << volume_gap << ',' << n << ',' << num(q) << ',' << num(g.value) << ',' << num(bound) << ',' << g.method
              << '\n';
    }
  }
  for (int n = 1; n <= 3; ++n) {
    const ReachabilityResult r = reachable_sweep(1 << n, n);
    reach_ok = reach_ok && r.ell == (1 << n) - 1;
    reach_csv << n << ',' << (1 << n) << ',' << r.ell << ',' << (1 << n) - 1 << ',' << r.reached << '\n';
  }
  out.files["rates.csv"] = rates_csv.str();
  out.files["transition_law.csv"] = law_csv.str();
  out.files["reachability.csv"] = reach_csv.str();
  out.files["gap.csv"] = gap_csv.str();
  out.report["checks"].push_back(check("rates-mc-vs-exact", "statistical", rates_ok, json::object()));
  out.report["checks"].push_back(check("transition-law-tv", "statistical", law_ok, json::object()));
  out.report["checks"].push_back(check("reachability-ell", "exact", reach_ok, json::object()));
  out.report["checks"].push_back(check("gap-bound", "exact", gap_ok, json::object()));
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentOutput out;
  json eps = json::object();
  for (double q : cfg.q_values) eps[q_tag(q)] = make_schedule(q, cfg.max_epoch).epsilon;
  out.manifest = json{{"experiment", cfg.name},
                      {"code_version", kCodeVersion},
                      {"q", cfg.q_values},
                      {"N", cfg.max_epoch},
                      {"epsilon", eps},
                      {"init", cfg.init},
                      {"L", json::object()},
                      {"L_policy", cfg.length > 0 ? "explicit" : "certified-cutoff"},
                      {"cutoff_delta", cfg.cutoff_delta},
                      {"samples", cfg.samples},
                      {"k", cfg.k},
                      {"seed", cfg.seed},
                      {"stream_split", "splitmix64 counter split of the root seed"},
                      {"workers", cfg.workers},
                      {"rate_provenance", "exact"}};
  out.report = json{{"experiment", cfg.name}, {"checks", json::array()}};

  if (cfg.name == "plateau")
    plateau_experiment(cfg, out);
  else if (cfg.name == "aging")
    aging_experiment(cfg, out);
  else if (cfg.name == "scaling")
    scaling_experiment(cfg, out);
  else if (cfg.name == "tv-compare")
    tv_experiment(cfg, out);
  else if (cfg.name == "exp-hitting")
    exp_hitting_experiment(cfg, out);
  else if (cfg.name == "validate-oracles")
    validate_oracles_experiment(cfg, out);
  else
    throw Error("unknown experiment: " + cfg.name);

  if (out.manifest["L"].empty() && cfg.name != "exp-hitting" && cfg.name != "validate-oracles") {
    for (double q : cfg.q_values) out.manifest["L"][q_tag(q)] = experiment_length(cfg);
  }
  bool all = true;
  for (const auto& c : out.report["checks"]) all = all && c["passed"].get<bool>();
  out.report["all_passed"] = all;
  return out;
}

void write_output(const ExperimentConfig& cfg, const ExperimentOutput& out) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream f(fs::path(cfg.out_dir) / name, std::ios::binary);
    if (!f) throw Error("cannot write " + name);
    f << content;
  };
  for (const auto& [name, content] : out.files) write(name, content);
  write("manifest.json", out.manifest.dump(2) + "\n");
  write("report.json", out.report.dump(2) + "\n");
}

}  // namespace eastkcm
