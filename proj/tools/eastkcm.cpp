#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "eastkcm/bench.hpp"
#include "eastkcm/east_sim.hpp"
#include "eastkcm/exact_oracle.hpp"
#include "eastkcm/hcp.hpp"
#include "eastkcm/limit_laws.hpp"
#include "eastkcm/renewal_calc.hpp"
#include "eastkcm/schedule.hpp"

using namespace eastkcm;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

// q may come from --q or --beta; --beta wins when both are given.
struct Temperature {
  double q = 0.1;
  double beta = 0.0;
  CLI::Option* beta_opt = nullptr;
  double value() const { return beta_opt && beta_opt->count() ? q_from_beta(beta) : q; }
};

void add_temperature(CLI::App* app, Temperature& t) {
  app->add_option("--q", t.q, "vacancy probability in (0, 1/2]");
  t.beta_opt = app->add_option("--beta", t.beta, "inverse temperature, q = e^-b/(1+e^-b)");
}

json oracle_json(const OracleResult& r) { return {{"value", r.value}, {"method", r.method}, {"error_bound", r.error_bound}}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"East model, hierarchical coalescence and renewal recursions"};
  app.require_subcommand(1);

  // ---- simulate
  auto* sim = app.add_subcommand("simulate", "East (or HCP) trajectories from a renewal initial law");
  Temperature sim_t;
  add_temperature(sim, sim_t);
  int sim_length = 256, sim_k = 2, sim_probes = 40, sim_epochs = 2;
  long long sim_samples = 1;
  std::uint64_t sim_seed = 1;
  unsigned sim_threads = 1;
  double sim_tmax = 100.0;
  std::string sim_law, sim_init = "geometric:0.5", sim_out;
  bool sim_hcp = false;
  sim->add_option("--L", sim_length, "volume")->check(CLI::PositiveNumber);
  sim->add_option("--samples", sim_samples, "number of trajectories")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed);
  sim->add_option("--threads", sim_threads);
  sim->add_option("--law", sim_law, "RenewalLaw JSON file");
  sim->add_option("--init", sim_init, "initial gap law for Ren(mu|0)");
  sim->add_option("--k", sim_k, "zeros tracked");
  sim->add_option("--probes", sim_probes, "log-spaced probe count over [1, t-max]");
  sim->add_option("--t-max", sim_tmax);
  sim->add_option("--N", sim_epochs, "max epoch (HCP)");
  sim->add_flag("--hcp", sim_hcp, "run the HCP and emit its kill trace");
  sim->add_option("--out", sim_out, "directory for per-trajectory files");

  // ---- rates
  auto* rates = app.add_subcommand("rates", "rate table lambda_n(d) as JSON");
  Temperature rates_t;
  add_temperature(rates, rates_t);
  int rates_n = 2, rates_dmax = 0;
  std::string rates_mode = "exact";
  long long rates_samples = 100000;
  std::uint64_t rates_seed = 1;
  unsigned rates_threads = 1;
  rates->add_option("--N", rates_n);
  rates->add_option("--d-max", rates_dmax, "largest length (default 2^N)");
  rates->add_option("--mode", rates_mode)->check(CLI::IsMember({"exact", "monte-carlo", "asymptotic"}));
  rates->add_option("--samples", rates_samples);
  rates->add_option("--seed", rates_seed);
  rates->add_option("--threads", rates_threads);

  // ---- oracle
  auto* oracle = app.add_subcommand("oracle", "exact finite-state computations");
  std::string verb;
  Temperature or_t;
  add_temperature(oracle, or_t);
  int or_length = 4, or_d = 2, or_n = 1, or_epochs = 2;
  double or_time = 1.0;
  oracle->add_option("verb", verb)->required()->check(CLI::IsMember({"gap", "survival", "rate", "cdf", "reach"}));
  oracle->add_option("--L", or_length);
  oracle->add_option("--d", or_d);
  oracle->add_option("--n", or_n);
  oracle->add_option("--N", or_epochs);
  oracle->add_option("--t", or_time, "horizon");

  // ---- recursion
  auto* rec = app.add_subcommand("recursion", "renewal recursion across coalescence epochs");
  std::string rec_init = "geometric:0.5";
  int rec_epochs = 10;
  long long rec_xmax = 1024;
  bool rec_full = false;
  rec->add_option("--init", rec_init);
  rec->add_option("--epochs", rec_epochs)->check(CLI::NonNegativeNumber);
  rec->add_option("--x-max", rec_xmax);
  rec->add_flag("--measures", rec_full, "include every mu^(n), nu^(n) as sparse maps");

  // ---- limits
  auto* lim = app.add_subcommand("limits", "limit laws: density p_c0 or Laplace transforms");
  LimitLawParams lim_params;
  std::string lim_what = "density";
  std::vector<double> lim_s{0.1, 0.5, 1.0, 2.0, 5.0};
  int lim_stride = 10;
  lim->add_option("what", lim_what)->check(CLI::IsMember({"density", "laplace"}));
  lim->add_option("--c0", lim_params.c0);
  lim->add_option("--k-max", lim_params.k_max);
  lim->add_option("--step", lim_params.h, "grid step");
  lim->add_option("--x-hi", lim_params.x_hi);
  lim->add_option("--s", lim_s)->delimiter(',');
  lim->add_option("--stride", lim_stride, "print every stride-th grid point");

  // ---- experiment
  auto* exp = app.add_subcommand("experiment", "experiments writing CSV, manifest.json and report.json");
  ExperimentConfig cfg;
  double exp_beta = 0.0;
  exp->add_option("name", cfg.name)
      ->required()
      ->check(CLI::IsMember({"plateau", "aging", "scaling", "tv-compare", "exp-hitting", "validate-oracles"}));
  exp->add_option("--q", cfg.q_values, "comma-separated q list")->delimiter(',');
  auto* exp_beta_opt = exp->add_option("--beta", exp_beta, "single inverse temperature instead of --q");
  exp->add_option("--N", cfg.max_epoch);
  exp->add_option("--L", cfg.length, "volume (default: certified cutoff)");
  exp->add_option("--samples", cfg.samples);
  exp->add_option("--seed", cfg.seed);
  exp->add_option("--threads", cfg.workers);
  exp->add_option("--out", cfg.out_dir);
  exp->add_option("--init", cfg.init);
  exp->add_option("--k", cfg.k);
  exp->add_option("--probes", cfg.probe_count);
  exp->add_option("--delta", cfg.cutoff_delta, "cutoff failure probability");
  exp->add_flag("--self-check", cfg.self_check, "tv-compare: HCP against itself");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const double q = sim_t.value();
      const RenewalLaw law = sim_law.empty() ? pinned_law(InitialSpec::parse(sim_init), 1 << 12)
                                             : RenewalLaw::from_json(read_file(sim_law));
      const std::vector<double> probes = log_spaced(1.0, sim_tmax, sim_probes);
      const auto n = static_cast<std::size_t>(sim_samples);
      std::vector<std::string> outputs(n);
      std::unique_ptr<RateTable> table;
      EpochSchedule schedule;
      if (sim_hcp) {
        schedule = make_schedule(q, sim_epochs);
        table = std::make_unique<RateTable>(
            build_rate_table(schedule, static_cast<int>(class_max(sim_epochs)), RateMode::exact()));
      }
      parallel_for(n, sim_threads, [&](std::size_t i) {
        Rng init = make_stream(sim_seed, 2 * i);
        const Configuration c = sample_initial_config(law, sim_length, init);
        Rng rng = make_stream(sim_seed, 2 * i + 1);
        if (sim_hcp)
          outputs[i] = run_hcp(c, schedule, *table, rng).events_csv();
        else
          outputs[i] = run_with_observables(c, SimParams{q, sim_seed, 1e12}, probes, sim_k, rng).to_csv();
      });
      if (sim_out.empty()) {
        if (n != 1) throw Error("several trajectories need --out");
        std::cout << outputs.front();
      } else {
        std::filesystem::create_directories(sim_out);
        for (std::size_t i = 0; i < n; ++i)
          write_file(std::filesystem::path(sim_out) / ((sim_hcp ? "hcp_" : "series_") + std::to_string(i) + ".csv"),
                     outputs[i]);
      }
    } else if (*rates) {
      const EpochSchedule schedule = make_schedule(rates_t.value(), rates_n);
      const int d_max = rates_dmax > 0 ? rates_dmax : static_cast<int>(class_max(rates_n));
      RateMode mode = RateMode::exact();
      if (rates_mode == "monte-carlo") mode = RateMode::monte_carlo(rates_samples, rates_seed, rates_threads);
      if (rates_mode == "asymptotic") mode = RateMode::asymptotic();
      std::cout << build_rate_table(schedule, d_max, mode).to_json() << '\n';
    } else if (*oracle) {
      const double q = or_t.value();
      json out;
      if (verb == "gap") {
        out = oracle_json(spectral_gap_exact(or_length, q));
      } else if (verb == "survival") {
        out = oracle_json(survival_probability_exact(or_d, q, or_time));
      } else if (verb == "rate") {
        out = oracle_json(lambda_exact(or_n, or_d, make_schedule(q, or_epochs)));
      } else if (verb == "cdf") {
        double err = 0.0;
        const std::vector<double> t{or_time};
        const double survival = survival_curve_exact(or_d, q, t, &err).front();
        out = {{"value", 1.0 - survival}, {"method", "uniformization"}, {"error_bound", err}};
      } else {
        const ReachabilityResult r = reachable_sweep(or_length, or_n);
        out = {{"value", r.ell}, {"method", "breadth-first search"}, {"error_bound", 0.0}, {"reached", r.reached}};
      }
      std::cout << out.dump(2) << '\n';
    } else if (*rec) {
      RecursionOptions options;
      options.x_max = rec_xmax;
      const auto r = iterate_epochs<double>(InitialSpec::parse(rec_init), rec_epochs, options);
      json out{{"init", rec_init}, {"x_max", r.x_max}, {"truncation_limited", r.truncation_limited}, {"epochs", json::array()}};
      for (std::size_t n = 0; n < r.mu.size(); ++n) {
        json e{{"n", n},
               {"mu_defect", r.mu_defect[n]},
               {"nu_defect", r.nu_defect[n]},
               {"support_min", r.support_min[n]},
               {"nu_at_zero", r.nu_at_zero[n]},
               {"class_mass", r.class_mass[n]}};
        if (rec_full) {
          e["mu"] = json::parse(r.mu[n].to_json());
          e["nu"] = json::parse(r.nu[n].to_json());
        }
        out["epochs"].push_back(e);
      }
      std::cout << out.dump(2) << '\n';
    } else if (*lim) {
      std::cout.precision(12);
      if (lim_what == "density") {
        const auto grid = density_p<double>(lim_params);
        if (grid.warning) std::cerr << "warning: last series term " << grid.last_term << " exceeds 1e-8\n";
        std::cout << "x,p\n";
        for (Eigen::Index i = 0; i < grid.x.size(); i += std::max(1, lim_stride))
          std::cout << grid.x[i] << ',' << grid.density[i] << '\n';
      } else {
        std::cout << "s,lt_x,lt_y\n";
        for (double s : lim_s)
          std::cout << s << ',' << lt_x_inf(s, lim_params.c0) << ',' << lt_y_inf(s, lim_params.c0) << '\n';
      }
    } else if (*exp) {
      if (exp_beta_opt->count()) cfg.q_values = {q_from_beta(exp_beta)};
      const ExperimentOutput out = run_experiment(cfg);
      write_output(cfg, out);
      std::cout << out.report.dump(2) << '\n';
      return out.report.value("all_passed", false) ? 0 : 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
