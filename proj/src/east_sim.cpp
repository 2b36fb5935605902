#include "eastkcm/east_sim.hpp"

#include <cmath>
#include <sstream>

namespace eastkcm {

void EastProcess::IndexSet::insert(int x) {
  auto& p = pos[static_cast<std::size_t>(x)];
  if (p >= 0) return;
  p = static_cast<int>(items.size());
  items.push_back(x);
}

void EastProcess::IndexSet::erase(int x) {
  auto& p = pos[static_cast<std::size_t>(x)];
  if (p < 0) return;
  const int last = items.back();
  items[static_cast<std::size_t>(p)] = last;
  pos[static_cast<std::size_t>(last)] = p;
  items.pop_back();
  p = -1;
}

EastProcess::EastProcess(Configuration initial, double q) : config_(std::move(initial)), q_(q) {
  if (!(q > 0.0 && q <= 0.5)) throw Error("q must lie in (0, 1/2]");
  const auto n = static_cast<std::size_t>(config_.length());
  filled_.pos.assign(n, -1);
  empty_.pos.assign(n, -1);
  refresh(config_.length() - 1);
  for (int z : config_.zeros()) refresh(z - 1);
}

void EastProcess::refresh(int x) {
  if (x < 0) return;
  filled_.erase(x);
  empty_.erase(x);
  if (!flippable(x)) return;
  if (config_.filled(x))
    filled_.insert(x);
  else
    empty_.insert(x);
}

double EastProcess::next_waiting_time(Rng& rng) {
  std::exponential_distribution<double> wait(total_rate());
  return wait(rng);
}

int EastProcess::fire(Rng& rng) {
  const double to_zero = q_ * static_cast<double>(filled_.size());
  std::uniform_real_distribution<double> u(0.0, total_rate());
  const double r = u(rng);
  const IndexSet& pool = (r < to_zero && filled_.size() > 0) || empty_.size() == 0 ? filled_ : empty_;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const int x = pool.items[pick(rng)];
  config_.flip(x);
  refresh(x);
  refresh(x - 1);
  return x;
}

void EastProcess::advance(double duration, Rng& rng, const FlipObserver& observer) {
  if (!(duration >= 0.0)) throw Error("duration must be nonnegative");
  run_until([](const EastProcess&) { return false; }, time_ + duration, rng, observer);
}

Configuration advance(const Configuration& config, const SimParams& params, double duration, Rng& rng,
                      const FlipObserver& observer) {
  params.validate();
  EastProcess process(config, params.q);
  process.advance(duration, rng, observer);
  return process.configuration();
}

bool hit(const HittingTarget& target, const Configuration& c) {
  switch (target.event) {
    case HittingEvent::origin_filled:
      return c.filled(0);
    case HittingEvent::all_filled:
      return c.zero_count() == 0;
    case HittingEvent::extra_zeros: {
      const auto extra = static_cast<int>(c.zero_count()) - (c.empty(0) ? 1 : 0);
      return extra == target.extra_zeros;
    }
  }
  return false;
}

HittingSample hitting_time(const Configuration& config, const SimParams& params, HittingTarget target, Rng& rng) {
  params.validate();
  if (target.event == HittingEvent::origin_filled && config.filled(0))
    throw Error("origin must be empty initially");
  EastProcess process(config, params.q);
  const bool reached =
      process.run_until([&](const EastProcess& p) { return hit(target, p.configuration()); }, params.horizon, rng);
  return {process.time(), !reached};
}

HittingTriple hitting_times_on_path(const Configuration& config, const SimParams& params, int n, Rng& rng) {
  params.validate();
  EastProcess process(config, params.q);
  const auto extra = HittingTarget::n_extra_zeros(n);
  std::optional<double> t_extra, t_origin, t_all;
  auto record = [&](const EastProcess& p) {
    const auto& c = p.configuration();
    if (!t_extra && hit(extra, c)) t_extra = p.time();
    if (!t_origin && c.filled(0)) t_origin = p.time();
    if (!t_all && c.zero_count() == 0) t_all = p.time();
    return t_extra && t_origin && t_all;
  };
  process.run_until(record, params.horizon, rng);
  auto as_sample = [&](const std::optional<double>& t) {
    return t ? HittingSample{*t, false} : HittingSample{params.horizon, true};
  };
  return {as_sample(t_extra), as_sample(t_origin), as_sample(t_all)};
}

std::string ObservableSeries::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  const std::size_t k = probes.empty() ? 0 : probes.front().first_zeros.size();
  out << "t,p0,persist";
  for (std::size_t i = 0; i < k; ++i) out << ",x" << i;
  out << ",nzeros\n";
  for (const auto& p : probes) {
    out << p.t << ',' << p.origin_empty << ',' << p.persistent;
    for (int x : p.first_zeros) out << ',' << x;
    out << ',' << p.zero_count << '\n';
  }
  return out.str();
}

namespace {

ProbeRecord observe(const Configuration& c, double t, bool persistent, int k) {
  ProbeRecord r;
  r.t = t;
  r.origin_empty = c.empty(0) ? 1 : 0;
  r.persistent = persistent ? 1 : 0;
  r.zero_count = static_cast<int>(c.zero_count());
  r.first_zeros.assign(static_cast<std::size_t>(k), c.length());
  for (std::size_t i = 0; i < static_cast<std::size_t>(k) && i < c.zero_count(); ++i) r.first_zeros[i] = c.zeros()[i];
  for (std::size_t j = 0; j < c.zero_count(); ++j) ++r.domain_histogram[c.domain_length(j)];
  return r;
}

}  // namespace

ObservableSeries run_with_observables(const Configuration& config, const SimParams& params,
                                      std::span<const double> probes, int k, Rng& rng) {
  params.validate();
  if (k < 0) throw Error("k must be nonnegative");
  for (std::size_t i = 0; i + 1 < probes.size(); ++i)
    if (!(probes[i] <= probes[i + 1])) throw Error("probe times must be ascending");
  if (!probes.empty() && probes.front() < 0.0) throw Error("probe times must be nonnegative");

  ObservableSeries series;
  series.length = config.length();
  if (config.filled(0)) series.origin_first_flip = 0.0;
  EastProcess process(config, params.q);
  auto watch_origin = [&](double t, int x, int value) {
    if (x == 0 && value == 1 && t < series.origin_first_flip) series.origin_first_flip = t;
  };
  for (double t : probes) {
    process.advance(t - process.time(), rng, watch_origin);
    const bool persistent = series.origin_first_flip > t;
    series.probes.push_back(observe(process.configuration(), t, persistent, k));
  }
  return series;
}

namespace {

// P(Bin(m, p) <= k), summed in log space.
double binomial_cdf(int m, double p, int k) {
  if (p >= 1.0) return m > k ? 0.0 : 1.0;
  double total = 0.0;
  for (int j = 0; j <= std::min(k, m); ++j) {
    const double log_term = std::lgamma(m + 1.0) - std::lgamma(j + 1.0) - std::lgamma(m - j + 1.0) +
                            j * std::log(p) + (m - j) * std::log1p(-p);
    total += std::exp(log_term);
  }
  return std::min(total, 1.0);
}

}  // namespace

int choose_cutoff(const RenewalLaw& law, int max_epoch, int k, double delta) {
  law.validate();
  if (max_epoch < 0 || k < 0) throw Error("max_epoch and k must be nonnegative");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0,1)");
  const int min_gap = (1 << max_epoch) + 1;  // smallest length of class N+1
  const int margin = 1 << (max_epoch + 1);
  if (law.mu.size() <= min_gap) throw Error("tail too light for cutoff guarantee");
  const double p = law.mu.tail(law.mu.size() - min_gap).sum();
  if (!(p > 0.0)) throw Error("tail too light for cutoff guarantee");

  // Fewest gaps M so that k+1 qualifying gaps are missing with prob <= delta/2.
  int gaps = k + 1;
  double miss = binomial_cdf(gaps, p, k);
  while (miss > 0.5 * delta) {
    ++gaps;
    miss = binomial_cdf(gaps, p, k);
    if (gaps > 10'000'000) throw Error("tail too light for cutoff guarantee");
  }
  // Gap and first-zero laws are cut where their tails are negligible; the
  // discarded mass (at most M+1 tails) is charged to the failure budget.
  const double tail_cut = 1e-3 * delta / (gaps + 1);
  auto effective_size = [&](const Eigen::VectorXd& v) {
    Eigen::Index size = v.size();
    double tail = 0.0;
    while (size > 1 && tail + v[size - 1] <= tail_cut) tail += v[--size];
    return std::pair{size, tail};
  };
  const auto [mu_size, mu_tail] = effective_size(law.mu);
  const auto [nu_size, nu_tail] = effective_size(law.nu);
  const double position_budget = delta - miss - gaps * mu_tail - nu_tail;
  if (!(position_budget > 0.0)) throw Error("tail too light for cutoff guarantee");

  const Eigen::Index support = nu_size + static_cast<Eigen::Index>(gaps) * (mu_size - 1);
  if (static_cast<double>(support) * static_cast<double>(mu_size) * gaps > 5e10)
    throw Error("cutoff computation too large; pass an explicit volume");

  // Law of x0 + S_M by repeated convolution.
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(support);
  dist.head(nu_size) = law.nu.head(nu_size);
  Eigen::Index top = nu_size;
  for (int g = 0; g < gaps; ++g) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(support);
    for (Eigen::Index x = 0; x < top; ++x) {
      if (dist[x] == 0.0) continue;
      for (Eigen::Index y = 1; y < mu_size; ++y) next[x + y] += dist[x] * law.mu[y];
    }
    top += mu_size - 1;
    dist.swap(next);
  }
  // Smallest B with P(x0 + S_M > B) <= position_budget.
  double upper_tail = dist.head(top).sum();
  Eigen::Index bound = 0;
  for (; bound < top; ++bound) {
    upper_tail -= dist[bound];
    if (upper_tail <= position_budget) break;
  }
  return static_cast<int>(bound) + margin;
}

}  // namespace eastkcm
