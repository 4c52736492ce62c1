// Acceptance harness: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "m3t/cli.hpp"
#include "m3t/forecast.hpp"
#include "m3t/netmodel.hpp"
#include "m3t/sim.hpp"
#include "m3t/solver.hpp"

using namespace m3t;
using namespace m3t::testing;

namespace fs = std::filesystem;

namespace {

const std::string kScenarios = M3T_SCENARIO_DIR;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) { return format_number(v); }

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v) {
  std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

void guarded(int id, const std::string& name, const std::function<Verdict()>& body) {
  try {
    report(id, name, body());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("exception: ") + e.what()});
  }
}

double delay_or_inf(const SolveResult& r) {
  return r.plan ? r.metrics.mean_delay_s : std::numeric_limits<double>::infinity();
}

// Delay components must add up to the total with no rounding slack.
int bad_decompositions = 0;
long decompositions_checked = 0;

void check_decomposition(const PlanMetrics& m) {
  for (const auto& d : m.tasks) {
    ++decompositions_checked;
    if (d.upload_s + d.setup_s + d.compute_s + d.collect_s + d.download_s != d.total_s) ++bad_decompositions;
  }
}

// Energy is audited in trace order against the budgets; replay must
// reproduce the engine aggregate exactly, also after a JSONL round trip.
long runs_audited = 0;
std::string energy_problem;

void audit_run(const Scenario& s, const SimResult& r, const std::string& label) {
  ++runs_audited;
  std::map<int, double> spent, budget;
  for (const auto& u : s.uavs) {
    spent[u.id] = u.energy_spent;
    budget[u.id] = u.energy_budget;
  }
  for (const auto& x : r.trace) {
    if (x.kind != "transfer_done" && x.kind != "compute_done") continue;
    spent[x.uav_id] += x.joules;
    if (spent[x.uav_id] > budget[x.uav_id] && energy_problem.empty())
      energy_problem = label + ": uav " + std::to_string(x.uav_id) + " at t=" + num(x.time) + " spent " +
                       num(spent[x.uav_id]) + " > " + num(budget[x.uav_id]);
  }
  if (!(replay_trace(r.trace) == r.aggregate) && energy_problem.empty())
    energy_problem = label + ": replay differs from engine aggregate";
  if (!(replay_trace(trace_from_jsonl(trace_to_jsonl(r.trace))) == r.aggregate) && energy_problem.empty())
    energy_problem = label + ": replay after JSONL round trip differs";
  check_decomposition(r.aggregate.metrics);
}

Verdict oracle_equivalence() {
  const auto t0 = Clock::now();
  int instances = 0, within = 0, below = 0, skipped = 0;
  double worst = 0.0;
  std::uint64_t seed = 1000;
  for (; instances < 50; ++seed) {
    const Scenario s = random_small_scenario(seed);
    const SolveResult best = brute_force_oracle(s, s.split_granularity);
    if (!best.plan) {
      ++skipped;  // no feasible plan exists; nothing to compare
      continue;
    }
    ++instances;
    SolverConfig cfg;
    cfg.rng_seed = seed;
    const SolveResult h = solve(s, cfg);
    check_decomposition(best.metrics);
    if (h.plan) check_decomposition(h.metrics);
    const double o = best.metrics.mean_delay_s, v = delay_or_inf(h);
    if (v < o) ++below;
    const double gap = o > 0.0 ? (v - o) / o : (v == o ? 0.0 : std::numeric_limits<double>::infinity());
    if (gap <= 0.10) ++within;
    worst = std::max(worst, gap);
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = within >= 45 && below == 0 && secs < 60.0;
  v.detail = std::to_string(within) + "/50 within 10% (need >= 45), " + std::to_string(below) +
             " below the optimum, worst gap " + num(worst * 100.0) + "%, " + std::to_string(skipped) +
             " infeasible seeds skipped, " + num(secs) + " s (limit 60 s)";
  return v;
}

Verdict mode_monotonicity() {
  int violations = 0, m2m_strictly_better = 0;
  std::string first;
  for (std::uint64_t seed = 2000; seed < 2100; ++seed) {
    const Scenario s = random_small_scenario(seed);
    const double m2m = delay_or_inf(brute_force_oracle(s, s.split_granularity, ServiceMode::m2m));
    double best_other = std::numeric_limits<double>::infinity();
    for (ServiceMode m : {ServiceMode::o2o, ServiceMode::o2m, ServiceMode::m2o}) {
      const double d = delay_or_inf(brute_force_oracle(s, s.split_granularity, m));
      best_other = std::min(best_other, d);
      if (!(m2m <= d)) {
        ++violations;
        if (first.empty()) first = " (first: seed " + std::to_string(seed) + " " + std::string(to_string(m)) + ")";
      }
    }
    if (m2m < best_other) ++m2m_strictly_better;
  }
  Verdict v;
  v.pass = violations == 0;
  v.detail = "100 instances, " + std::to_string(violations) + " violations" + first + "; M2M strictly better on " +
             std::to_string(m2m_strictly_better);
  return v;
}

double executed_cycles(const OffloadPlan& plan, const Scenario& s) {
  double c = 0.0;
  for (const auto& tp : plan.tasks)
    if (!tp.reuse_source) c += s.tasks.at(static_cast<std::size_t>(tp.task_id - 1)).compute_cycles;
  return c;
}

double compute_energy(const PlanMetrics& m) {
  double e = 0.0;
  for (const auto& u : m.uavs) e += u.compute_j;
  return e;
}

Verdict reuse_dominance() {
  const Scenario s = load_scenario(kScenarios + "/adam_bob.json");
  const double C = s.tasks.at(0).compute_cycles;

  OffloadPlan o2o_pair;
  o2o_pair.upsert(TaskPlan{.task_id = 1, .master_uav = 1});
  o2o_pair.upsert(TaskPlan{.task_id = 2, .master_uav = 2});
  OffloadPlan o2m;
  o2m.upsert(TaskPlan{.task_id = 1, .master_uav = 1});
  o2m.upsert(TaskPlan{.task_id = 2, .master_uav = 1, .reuse_source = s.tasks.at(1).content_id});
  normalize_plan(o2o_pair, s);
  normalize_plan(o2m, s);

  Verdict v;
  for (const auto* p : {&o2o_pair, &o2m})
    if (const auto errs = check_feasibility(*p, s); !errs.empty()) return {false, "hand plan infeasible: " + errs[0]};
  const PlanMetrics mp = evaluate_plan(o2o_pair, s, 0.0), mr = evaluate_plan(o2m, s, 0.0);
  check_decomposition(mp);
  check_decomposition(mr);
  const double cyc_pair = executed_cycles(o2o_pair, s), cyc_reuse = executed_cycles(o2m, s);
  const double e_pair = compute_energy(mp), e_reuse = compute_energy(mr);
  const bool labelled = mr.tasks.at(1).mode == ServiceMode::o2m;

  const SolveResult best = brute_force_oracle(s, s.split_granularity);
  int reused = 0;
  if (best.plan)
    for (const auto& tp : best.plan->tasks) reused += tp.reuse_source ? 1 : 0;

  v.pass = cyc_reuse == C && cyc_pair == 2.0 * C && 2.0 * e_reuse == e_pair && labelled && reused >= 1;
  v.detail = "cycles " + num(cyc_reuse) + " vs " + num(cyc_pair) + " (C=" + num(C) + "), compute energy " +
             num(e_reuse) + " J vs " + num(e_pair) + " J, reusing task labelled " +
             std::string(to_string(mr.tasks.at(1).mode)) + ", oracle plan reuses " + std::to_string(reused) +
             " task(s), mean delay " + num(best.metrics.mean_delay_s) + " s";
  return v;
}

Verdict energy_soundness() {
  // Corpus instances under every policy, with budgets as drawn.
  for (std::uint64_t seed = 1000; seed < 1050; ++seed) {
    Scenario s = random_small_scenario(seed);
    s.horizon = 30.0;
    for (Policy p : {Policy::static_greedy, Policy::greedy_plus_local_search, Policy::forecast_driven}) {
      RunOptions o;
      o.policy = p;
      audit_run(s, run(s, o), "seed " + std::to_string(seed) + " " + std::string(to_string(p)));
    }
  }
  // The cluster demo at its own budgets and at budgets tight enough to fail tasks.
  int failed_under_tight = 0;
  for (double scale : {1.0, 0.1}) {
    Scenario s = load_scenario(kScenarios + "/cluster_demo.json");
    for (auto& u : s.uavs) u.energy_budget *= scale;
    for (Policy p : {Policy::static_greedy, Policy::greedy_plus_local_search, Policy::forecast_driven}) {
      RunOptions o;
      o.policy = p;
      const SimResult r = run(s, o);
      if (scale < 1.0) failed_under_tight += r.aggregate.failed_tasks;
      audit_run(s, r, "cluster_demo x" + num(scale) + " " + std::string(to_string(p)));
    }
  }
  Verdict v;
  v.pass = energy_problem.empty() && runs_audited > 0;
  v.detail = std::to_string(runs_audited) + " runs audited record by record; " +
             (energy_problem.empty() ? "budgets never exceeded, replay identical to engine"
                                     : energy_problem) +
             "; " + std::to_string(failed_under_tight) + " tasks rejected under tight budgets";
  return v;
}

Verdict delay_decomposition() {
  const Scenario s = worked_scenario();
  const auto g = connectivity_at(s, 0.0);
  const TaskRequest& t = s.tasks.at(0);
  const double r = s.link_params.bandwidth;  // every hop in the worked geometry has SNR 1
  const double tau = s.d2d_setup_latency;

  TaskPlan o2o{.task_id = 1, .master_uav = 1};
  const TaskDelay d1 = task_delay(o2o, t, g, s);
  const double closed_o2o = t.input_bits / r + t.compute_cycles / 1e9 + t.output_bits / r;

  TaskPlan m2o{.task_id = 1, .master_uav = 1};
  m2o.splits[2] = t.compute_cycles / 2.0;
  m2o.mode = ServiceMode::m2o;
  const TaskDelay d2 = task_delay(m2o, t, g, s);
  // Slave leg: setup, dispatch half the input, compute half, setup, return half the output.
  const double leg = tau + (t.input_bits / 2.0) / r + (t.compute_cycles / 2.0) / 1e9 + tau + (t.output_bits / 2.0) / r;
  const double closed_m2o = t.input_bits / r + std::max((t.compute_cycles / 2.0) / 1e9, leg) + t.output_bits / r;

  TaskDelay both[] = {d1, d2};
  for (const auto& d : both) {
    ++decompositions_checked;
    if (d.upload_s + d.setup_s + d.compute_s + d.collect_s + d.download_s != d.total_s) ++bad_decompositions;
  }
  const double tol = 1e-12;
  const bool o2o_ok = std::abs(d1.total_s - 2.1) <= tol && std::abs(d1.total_s - closed_o2o) <= tol;
  const bool m2o_ok = std::abs(d2.total_s - 2.35) <= tol && std::abs(d2.total_s - closed_m2o) <= tol;
  Verdict v;
  v.pass = o2o_ok && m2o_ok && bad_decompositions == 0 && decompositions_checked > 2;
  v.detail = "O2O " + num(d1.total_s) + " s (closed form " + num(closed_o2o) + "), M2O " + num(d2.total_s) +
             " s (closed form " + num(closed_m2o) + "), " + std::to_string(bad_decompositions) + "/" +
             std::to_string(decompositions_checked) + " task delays whose components do not sum exactly";
  return v;
}

Verdict gradient_check_corpus() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int H = 1 + static_cast<int>(seed % 8);
    const std::size_t len = 2 + seed % 15;
    const LstmModel m = random_model(H, seed, 0.5);
    std::mt19937_64 rng(seed + 500);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(len);
    for (auto& x : w) x = u(rng);
    worst = std::max(worst, gradient_check(m, w));
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = worst < 1e-4 && secs < 10.0;
  v.detail = "20 models (H 1..8, windows 2..16), max relative error " + num(worst) + " (limit 1e-4), " + num(secs) +
             " s (limit 10 s)";
  return v;
}

// Forecasting experiment. Samples every 30 s, so the one-hour window is
// W = 120 and the horizon is L = 60 samples. Each UAV has six hours of
// history whose base level changes every half hour, then its nominal base
// from t = -3600 s; UAV 1's base jumps to 0.8 at t = 250 s. Models train on
// t < 0 only. Forecasts are issued from the 20 origins t = 0, 30, ..., 570 s.
// These settings were fixed on data seeds 1..4; this run uses seed 7.
Verdict forecasting_experiment() {
  constexpr double kPeriod = 30.0, kHours = 6.0, kShiftAt = 250.0;
  constexpr int kW = 120, kL = 60, kOrigins = 20;
  constexpr std::uint64_t kDataSeed = 7;

  SyntheticLoadSpec spec;
  spec.base = {0.35, 0.3, 0.3};
  spec.amplitude = 0.1;
  spec.cycle_period = 900.0;
  spec.noise_sigma = 0.02;
  spec.seed = kDataSeed;
  spec.start_time = -kHours * 3600.0;
  std::mt19937_64 rng(kDataSeed + 99);
  std::uniform_real_distribution<double> level(0.15, 0.85);
  for (int id = 1; id <= 3; ++id)
    for (double t = spec.start_time + 1800.0; t < -3600.0; t += 1800.0) spec.shifts.push_back({t, id, level(rng)});
  for (int id = 1; id <= 3; ++id) spec.shifts.push_back({-3600.0, id, spec.base[static_cast<std::size_t>(id - 1)]});
  spec.shifts.push_back({kShiftAt, 1, 0.8});
  const auto series = generate_loads(spec, 3, kHours * 3600.0 + (kOrigins + kL) * kPeriod, kPeriod);

  ForecastConfig cfg;
  cfg.window = kW;
  cfg.horizon = kL;
  cfg.hidden_size = 8;
  cfg.learning_rate = 0.3;
  cfg.epochs = 600;
  cfg.window_stride = 4;

  std::vector<double> actual, lstm, persist;
  std::string per_uav;
  bool monotone = true;
  std::map<int, std::vector<double>> before, after;  // forecasts from the first and last origin
  for (const auto& s : series) {
    std::size_t n0 = 0;
    while (s.t[n0] < 0.0) ++n0;
    LoadSeries head = s;
    head.t.resize(n0);
    head.load.resize(n0);
    ForecastConfig per = cfg;
    per.seed = 100 + static_cast<std::uint64_t>(s.uav_id);
    TrainLog log;
    const LstmModel m = train(head, per, &log);
    monotone = monotone && log.final_loss() <= log.initial_loss();

    std::vector<double> a, l, p;
    for (int o = 0; o < kOrigins; ++o) {
      const std::size_t at = n0 + static_cast<std::size_t>(o);
      const std::span<const double> hist(s.load.data() + at - kW, kW);
      const auto fl = forecast(m, hist, kL);
      const auto fp = baseline_forecast(hist, kL, {});
      for (int k = 0; k < kL; ++k) {
        a.push_back(s.load[at + static_cast<std::size_t>(k)]);
        l.push_back(fl[static_cast<std::size_t>(k)]);
        p.push_back(fp[static_cast<std::size_t>(k)]);
      }
      if (o == 0) before[s.uav_id] = fl;
      if (o == kOrigins - 1) after[s.uav_id] = fl;
    }
    per_uav += " uav" + std::to_string(s.uav_id) + " " + num(rmse(l, a)) + "/" + num(rmse(p, a));
    actual.insert(actual.end(), a.begin(), a.end());
    lstm.insert(lstm.end(), l.begin(), l.end());
    persist.insert(persist.end(), p.begin(), p.end());
  }
  const double r_lstm = rmse(lstm, actual), r_persist = rmse(persist, actual);

  TaskRequest task = make_task(1, 1, 0.0, "x", 4e6, 1.2e9, 4e5);
  const ForecastSplit sb = split_by_forecast(task, before, 12), sa = split_by_forecast(task, after, 12);
  const double w_before = sb.weights.at(1), w_after = sa.weights.at(1);

  Verdict v;
  v.pass = r_lstm <= r_persist && w_after < w_before;
  v.detail = "held-out RMSE lstm " + num(r_lstm) + " vs persistence " + num(r_persist) + " (per UAV lstm/persistence:" +
             per_uav + "); UAV 1 split share " + num(w_before) + " -> " + num(w_after) + " after its load rises" +
             "; training loss non-increasing on every series: " + (monotone ? "yes" : "no");
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "m3t_acceptance_determinism";
  fs::remove_all(root);
  int identical = 0, compared = 0;
  std::string problem;
  for (const char* policy : {"static_greedy", "greedy_plus_local_search", "forecast_driven"}) {
    for (const char* tag : {"a", "b"}) {
      std::ostringstream out, err;
      const int code = run_cli({"run", "--scenario", kScenarios + "/cluster_demo.json", "--policy", policy, "--seed",
                                "11", "--out", (root / policy / tag).string()},
                               out, err);
      if (code != kExitOk && problem.empty()) problem = std::string(policy) + ": exit " + std::to_string(code);
    }
    for (const char* f : {"metrics.csv", "trace.jsonl"}) {
      ++compared;
      const auto a = slurp(root / policy / "a" / f), b = slurp(root / policy / "b" / f);
      if (!a.empty() && a == b) ++identical;
    }
  }
  Verdict v;
  v.pass = problem.empty() && identical == compared;
  v.detail = std::to_string(identical) + "/" + std::to_string(compared) +
             " output files byte-identical across repeated runs (3 policies)" + (problem.empty() ? "" : "; " + problem);
  return v;
}

}  // namespace

int main() {
  guarded(1, "oracle equivalence", oracle_equivalence);
  guarded(2, "mode monotonicity", mode_monotonicity);
  guarded(3, "reuse dominance", reuse_dominance);
  guarded(4, "energy soundness and replay", energy_soundness);
  guarded(5, "delay decomposition", delay_decomposition);
  guarded(6, "LSTM gradient check", gradient_check_corpus);
  guarded(7, "forecasting experiment", forecasting_experiment);
  guarded(8, "run determinism", determinism);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
