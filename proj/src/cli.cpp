#include "m3t/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <random>
#include <ostream>

#include <CLI11.hpp>

#include "m3t/forecast.hpp"
#include "m3t/sim.hpp"
#include "m3t/solver.hpp"

namespace m3t {

namespace fs = std::filesystem;

std::vector<ModeRow> compare_modes(const Scenario& s, int granularity) {
  std::vector<ModeRow> rows;
  for (ServiceMode m : {ServiceMode::o2o, ServiceMode::o2m, ServiceMode::m2o, ServiceMode::m2m}) {
    ModeRow row;
    row.mode = std::string(to_string(m));
    SolveResult r = brute_force_oracle(s, granularity, m);
    row.feasible = r.plan.has_value();
    row.mean_delay_s = r.plan ? r.metrics.mean_delay_s : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string mode_rows_csv(const std::vector<ModeRow>& rows) {
  std::string out = "mode,feasible,mean_delay_s\n";
  for (const auto& r : rows)
    out += r.mode + "," + (r.feasible ? "1" : "0") + "," + (r.feasible ? format_number(r.mean_delay_s) : "") + "\n";
  return out;
}

namespace {

struct Common {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string policy = "greedy_plus_local_search";
  std::string mode;
  std::optional<int> k;
};

Scenario load_with_overrides(const Common& c) {
  if (c.scenario.empty()) throw InputError("--scenario is required");
  Scenario s = load_scenario(c.scenario);
  if (c.seed) s.seed = *c.seed;
  if (c.k) {
    if (*c.k < 1) throw InputError("--k: must be >= 1");
    s.split_granularity = *c.k;
  }
  return s;
}

// Output directory, created on demand; empty when --out was not given.
std::optional<fs::path> out_dir(const Common& c, bool required) {
  if (c.out.empty()) {
    if (required) throw InputError("--out is required");
    return std::nullopt;
  }
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InputError("cannot create " + p.string() + ": " + ec.message());
  return p;
}

ServiceMode mode_or_m2m(const Common& c) {
  if (c.mode.empty()) return ServiceMode::m2m;
  auto m = parse_mode(c.mode);
  if (!m) throw InputError("--mode: unknown mode '" + c.mode + "' (expected o2o, o2m, m2o or m2m)");
  return *m;
}

std::string plan_metrics_csv(const PlanMetrics& m) { return task_rows_csv(m) + "\n" + uav_rows_csv(m); }

double total_energy(const PlanMetrics& m) {
  double e = 0.0;
  for (const auto& u : m.uavs) e += u.total_j;
  return e;
}

std::string summary(double mean, int failed, double energy) {
  return "mean_delay_s=" + format_number(mean) + " failed_tasks=" + std::to_string(failed) +
         " total_energy_j=" + format_number(energy);
}

int report_solve(const SolveResult& r, const Common& c, std::ostream& out, std::ostream& err) {
  if (auto dir = out_dir(c, false)) {
    write_text(*dir / "plan.json", solve_result_json(r));
    if (r.plan) write_text(*dir / "metrics.csv", plan_metrics_csv(r.metrics));
  }
  if (!r.plan) {
    err << "infeasible: " << r.message << "\n";
    out << "status=" << to_string(r.status) << " " << summary(0.0, 0, 0.0) << "\n";
    return kExitInfeasible;
  }
  out << "status=" << to_string(r.status) << " tasks=" << r.metrics.tasks.size() << " "
      << summary(r.metrics.mean_delay_s, 0, total_energy(r.metrics)) << " iterations=" << r.iterations << "\n";
  return kExitOk;
}

int cmd_run(const Common& c, const std::string& loads, const std::string& requests, std::ostream& out) {
  const Scenario s = load_with_overrides(c);
  const auto dir = *out_dir(c, true);
  RunOptions o;
  o.policy = parse_policy(c.policy);
  if (!loads.empty()) o.load_history = load_series_csv(loads);
  if (!requests.empty()) o.request_history = load_request_log(requests);
  const SimResult r = run(s, o);
  write_text(dir / "metrics.csv", metrics_csv(r.aggregate));
  write_text(dir / "trace.jsonl", trace_to_jsonl(r.trace));
  write_text(dir / "loads.csv", series_to_csv(r.loads));
  if (!requests.empty()) write_text(dir / "placements.csv", placements_to_csv(r.preplaced));
  out << "policy=" << to_string(o.policy) << " tasks=" << r.aggregate.metrics.tasks.size() << " "
      << summary(r.aggregate.metrics.mean_delay_s, r.aggregate.failed_tasks, r.aggregate.total_energy_j) << "\n";
  return kExitOk;
}

int cmd_solve(const Common& c, std::ostream& out, std::ostream& err) {
  if (!c.mode.empty()) throw InputError("--mode applies to the oracle and compare subcommands");
  const Scenario s = load_with_overrides(c);
  SolverConfig cfg;
  cfg.rng_seed = s.seed;
  return report_solve(solve(s, cfg), c, out, err);
}

int cmd_oracle(const Common& c, std::ostream& out, std::ostream& err) {
  const Scenario s = load_with_overrides(c);
  return report_solve(brute_force_oracle(s, s.split_granularity, mode_or_m2m(c)), c, out, err);
}

int cmd_compare(const Common& c, std::ostream& out) {
  const Scenario s = load_with_overrides(c);
  const auto rows = compare_modes(s, s.split_granularity);
  if (auto dir = out_dir(c, false)) write_text(*dir / "modes.csv", mode_rows_csv(rows));
  out << mode_rows_csv(rows);
  return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.feasible; }) ? kExitOk : kExitInfeasible;
}

struct ForecastFlags {
  std::string series;
  ForecastConfig cfg;
};

int cmd_forecast(const Common& c, const ForecastFlags& f, std::ostream& out) {
  if (f.series.empty()) throw InputError("--series is required");
  ForecastConfig cfg = f.cfg;
  if (c.seed) cfg.seed = *c.seed;
  const auto series = load_series_csv(f.series);
  if (series.empty()) throw InputError(f.series + ": no samples");
  const auto dir = out_dir(c, false);

  // Hold out the last `horizon` samples of each series; train on the rest.
  std::string csv = "uav_id,step,actual,lstm,persistence,ar2\n";
  std::vector<double> all_actual, all_lstm, all_persist, all_ar;
  const std::size_t L = static_cast<std::size_t>(cfg.horizon), W = static_cast<std::size_t>(cfg.window);
  for (const auto& s : series) {
    if (s.size() < W + 2 * L)
      throw InputError("series " + std::to_string(s.uav_id) + ": need at least window + 2 * horizon samples");
    LoadSeries head = s;
    head.t.resize(s.size() - L);
    head.load.resize(s.size() - L);
    ForecastConfig per = cfg;
    per.seed = cfg.seed + static_cast<std::uint64_t>(s.uav_id);
    const LstmModel m = train(head, per);
    const std::span<const double> hist(head.load.end() - static_cast<long>(W), head.load.end());
    const auto lstm = forecast(m, hist, cfg.horizon);
    const auto persist = baseline_forecast(hist, cfg.horizon, {});
    const auto ar = baseline_forecast(hist, cfg.horizon, {BaselineKind::linear_ar, 2});
    for (std::size_t k = 0; k < L; ++k) {
      const double actual = s.load[s.size() - L + k];
      csv += std::to_string(s.uav_id) + "," + std::to_string(k + 1) + "," + format_number(actual) + "," +
             format_number(lstm[k]) + "," + format_number(persist[k]) + "," + format_number(ar[k]) + "\n";
      all_actual.push_back(actual);
      all_lstm.push_back(lstm[k]);
      all_persist.push_back(persist[k]);
      all_ar.push_back(ar[k]);
    }
    if (dir) write_text(*dir / ("model_" + std::to_string(s.uav_id) + ".json"), model_to_json(m));
  }
  if (dir) write_text(*dir / "forecast.csv", csv);
  out << "series=" << series.size() << " lstm_rmse=" << format_number(rmse(all_lstm, all_actual))
      << " persistence_rmse=" << format_number(rmse(all_persist, all_actual))
      << " ar2_rmse=" << format_number(rmse(all_ar, all_actual)) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Common& c, int hidden, int window, std::ostream& out) {
  if (hidden < 1 || window < 2) throw InputError("--hidden must be >= 1 and --window >= 2");
  const std::uint64_t seed = c.seed.value_or(0);
  const LstmModel m = random_model(hidden, seed, 0.5);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(window));
  for (auto& v : w) v = u(rng);
  const double e = gradient_check(m, w);
  const bool ok = e < 1e-4;
  out << "max_relative_error=" << format_number(e) << " threshold=0.0001 " << (ok ? "pass" : "fail") << "\n";
  return ok ? kExitOk : kExitInput;
}

struct GenFlags {
  int uavs = 3;
  double duration = 4200.0;
  double period = 30.0;
  SyntheticLoadSpec spec;
  double shift_at = 250.0;
  int shift_uav = 1;
  double shift_to = 0.8;
};

int cmd_genload(const Common& c, GenFlags g, std::ostream& out) {
  const auto dir = *out_dir(c, true);
  g.spec.seed = c.seed.value_or(0);
  if (g.shift_uav > 0) g.spec.shifts.push_back({g.shift_at, g.shift_uav, g.shift_to});
  const auto series = generate_loads(g.spec, g.uavs, g.duration, g.period);
  write_text(dir / "loads.csv", series_to_csv(series));
  out << "series=" << series.size() << " samples=" << series.front().size() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"UAV-cluster multi-task offloading simulator and optimizer", "m3t"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub, bool scenario) {
    if (scenario) sub->add_option("--scenario", c.scenario, "Scenario JSON path");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--seed", c.seed, "Seed override");
  };

  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario under a policy");
  common(run_cmd, true);
  run_cmd->add_option("--policy", c.policy, "static_greedy | greedy_plus_local_search | forecast_driven");
  run_cmd->add_option("--k", c.k, "Split granularity override");
  std::string loads, requests;
  run_cmd->add_option("--loads", loads, "Load history CSV (t,uav_id,load), ending at t = 0");
  run_cmd->add_option("--requests", requests, "Request log CSV for cache pre-deployment");

  auto* solve_cmd = app.add_subcommand("solve", "Greedy + local search at t = 0");
  common(solve_cmd, true);
  solve_cmd->add_option("--k", c.k, "Split granularity override");
  solve_cmd->add_option("--mode", c.mode, "Not supported; see oracle");

  auto* oracle_cmd = app.add_subcommand("oracle", "Exhaustive optimum on a tiny scenario");
  common(oracle_cmd, true);
  oracle_cmd->add_option("--k", c.k, "Split granularity override");
  oracle_cmd->add_option("--mode", c.mode, "Restrict to o2o | o2m | m2o | m2m");

  auto* compare_cmd = app.add_subcommand("compare", "Oracle optimum per service mode");
  common(compare_cmd, true);
  compare_cmd->add_option("--k", c.k, "Split granularity override");

  ForecastFlags ff;
  auto* fc_cmd = app.add_subcommand("forecast", "Train per-UAV LSTMs and score held-out forecasts");
  common(fc_cmd, false);
  fc_cmd->add_option("--series", ff.series, "Load CSV (t,uav_id,load)");
  fc_cmd->add_option("--window", ff.cfg.window, "History window W");
  fc_cmd->add_option("--horizon", ff.cfg.horizon, "Forecast horizon L");
  fc_cmd->add_option("--hidden", ff.cfg.hidden_size, "Hidden size");
  fc_cmd->add_option("--epochs", ff.cfg.epochs, "Training epochs");
  fc_cmd->add_option("--lr", ff.cfg.learning_rate, "Learning rate");
  fc_cmd->add_option("--stride", ff.cfg.window_stride, "Training window stride");

  int gc_hidden = 4, gc_window = 8;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the LSTM gradient");
  common(gc_cmd, false);
  gc_cmd->add_option("--hidden", gc_hidden, "Hidden size");
  gc_cmd->add_option("--window", gc_window, "Window length");

  GenFlags gf;
  gf.spec.base = {0.35, 0.3, 0.3};
  gf.spec.amplitude = 0.15;
  gf.spec.cycle_period = 900.0;
  gf.spec.noise_sigma = 0.02;
  gf.spec.start_time = -3600.0;
  auto* gen_cmd = app.add_subcommand("genload", "Write synthetic per-UAV load series");
  common(gen_cmd, false);
  gen_cmd->add_option("--uavs", gf.uavs, "Number of UAVs");
  gen_cmd->add_option("--duration", gf.duration, "Seconds covered");
  gen_cmd->add_option("--period", gf.period, "Sample period (s)");
  gen_cmd->add_option("--start", gf.spec.start_time, "Time of the first sample (s)");
  gen_cmd->add_option("--amplitude", gf.spec.amplitude, "Sinusoid amplitude");
  gen_cmd->add_option("--cycle", gf.spec.cycle_period, "Sinusoid period (s)");
  gen_cmd->add_option("--noise", gf.spec.noise_sigma, "Gaussian noise sigma");
  gen_cmd->add_option("--shift-at", gf.shift_at, "Regime shift time (s)");
  gen_cmd->add_option("--shift-uav", gf.shift_uav, "UAV whose base shifts (0 = none)");
  gen_cmd->add_option("--shift-to", gf.shift_to, "Base after the shift");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitInput;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(c, loads, requests, out);
    if (solve_cmd->parsed()) return cmd_solve(c, out, err);
    if (oracle_cmd->parsed()) return cmd_oracle(c, out, err);
    if (compare_cmd->parsed()) return cmd_compare(c, out);
    if (fc_cmd->parsed()) return cmd_forecast(c, ff, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(c, gc_hidden, gc_window, out);
    if (gen_cmd->parsed()) return cmd_genload(c, gf, out);
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace m3t
