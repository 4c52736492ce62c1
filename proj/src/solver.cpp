#include "m3t/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace m3t {

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal_oracle: return "optimal_oracle";
    case SolveStatus::local_optimum: return "local_optimum";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

namespace {

constexpr double kLatticeTol = 1e-9;

double chunk_size(const TaskRequest& t, int k) { return t.compute_cycles / static_cast<double>(k); }

long chunks_of(double cycles, double chunk) { return std::lround(cycles / chunk); }

bool on_lattice(double cycles, double chunk) {
  const double ratio = cycles / chunk;
  return std::abs(ratio - std::round(ratio)) <= kLatticeTol * std::max(1.0, ratio);
}

std::string uav_label(int id) { return "uav " + std::to_string(id); }

}  // namespace

std::vector<std::string> check_feasibility(const OffloadPlan& plan, const Scenario& s) {
  return check_feasibility(plan, s, connectivity_at(s, 0.0));
}

std::vector<std::string> check_feasibility(const OffloadPlan& plan, const Scenario& s,
                                           const ConnectivityGraph& graph) {
  std::vector<std::string> out;
  for (const auto& task : s.tasks)
    if (!plan.find(task.id)) out.push_back("task " + std::to_string(task.id) + ": not covered by plan");

  bool links_ok = true;
  for (const auto& tp : plan.tasks) {
    const std::string where = "task " + std::to_string(tp.task_id) + ": ";
    const TaskRequest* task = s.find_task(tp.task_id);
    if (!task) {
      out.push_back(where + "unknown task");
      links_ok = false;
      continue;
    }
    if (!s.find_uav(tp.master_uav)) {
      out.push_back(where + "unknown master " + uav_label(tp.master_uav));
      links_ok = false;
      continue;
    }
    const NodeRef master = NodeRef::uav(tp.master_uav);
    if (!graph.connected(NodeRef::user(task->user_id), master)) {
      out.push_back(where + "link user " + std::to_string(task->user_id) + " <-> " + uav_label(tp.master_uav) +
                    " is down");
      links_ok = false;
    }

    if (tp.reuse_source) {
      if (!tp.splits.empty()) out.push_back(where + "reuse task must not split cycles");
      if (*tp.reuse_source != task->content_id) out.push_back(where + "reuse source does not match content id");
      if (!find_reuse_holder(plan, s, *task, tp.master_uav))
        out.push_back(where + "reuse source " + *tp.reuse_source + " is not available");
    } else {
      const double chunk = chunk_size(*task, s.split_granularity);
      for (const auto& [slave, cycles] : tp.splits) {
        if (slave == tp.master_uav) out.push_back(where + "master listed as its own slave");
        if (!s.find_uav(slave)) {
          out.push_back(where + "unknown slave " + uav_label(slave));
          links_ok = false;
          continue;
        }
        if (!(cycles > 0)) out.push_back(where + "split to " + uav_label(slave) + " must be > 0 cycles");
        if (!on_lattice(cycles, chunk))
          out.push_back(where + "granularity: split to " + uav_label(slave) + " is not a multiple of C/K");
        if (!graph.connected(master, NodeRef::uav(slave))) {
          out.push_back(where + "link " + uav_label(tp.master_uav) + " <-> " + uav_label(slave) + " is down");
          links_ok = false;
        }
      }
      const double offloaded = tp.offloaded_cycles();
      if (offloaded > task->compute_cycles * (1.0 + kLatticeTol))
        out.push_back(where + "conservation: offloaded cycles exceed compute_cycles");
    }
    for (const auto& mv : tp.cache_moves) {
      if (!s.find_uav(mv.from_uav) || !s.find_uav(mv.to_uav) ||
          !graph.connected(NodeRef::uav(mv.from_uav), NodeRef::uav(mv.to_uav))) {
        out.push_back(where + "cache move " + uav_label(mv.from_uav) + " -> " + uav_label(mv.to_uav) +
                      " has no link");
        links_ok = false;
      }
    }
  }

  if (links_ok) {
    for (const auto& e : plan_energy(plan, s, graph)) {
      if (e.violated) {
        std::ostringstream os;
        os << "energy: " << uav_label(e.uav_id) << " needs " << e.total_j << " J, "
           << s.find_uav(e.uav_id)->energy_remaining() << " J remaining";
        out.push_back(os.str());
      }
    }
  }
  return out;
}

OffloadPlan greedy_construct(const Scenario& s, const ConnectivityGraph& graph, ReuseLedger& ledger) {
  double t0 = 0.0;
  if (!s.tasks.empty()) {
    t0 = s.tasks.front().arrival_time;
    for (const auto& t : s.tasks) t0 = std::min(t0, t.arrival_time);
  }
  auto [annotated, next_ledger] = apply_reuse(s.tasks, ledger, t0, s.reuse_ttl);

  OffloadPlan plan;
  std::map<int, double> committed;

  // Candidate evaluated against what this plan has already committed.
  auto fits = [&](const TaskTimeline& tl) {
    for (const auto& [uav, e] : task_energy(tl, s)) {
      const double need = committed[uav] + e.first + e.second;
      if (need > s.find_uav(uav)->energy_remaining()) return false;
    }
    return true;
  };
  // Energy beyond budget summed over UAVs; zero means the task fits.
  auto excess = [&](const TaskTimeline& tl) {
    double over = 0.0;
    for (const auto& [uav, e] : task_energy(tl, s))
      over += std::max(0.0, committed[uav] + e.first + e.second - s.find_uav(uav)->energy_remaining());
    return over;
  };
  auto commit = [&](const TaskTimeline& tl) {
    for (const auto& [uav, e] : task_energy(tl, s)) committed[uav] += e.first + e.second;
  };

  for (const auto& a : annotated) {
    const TaskRequest& task = a.task;
    const NodeRef user = NodeRef::user(task.user_id);
    std::optional<TaskPlan> best;
    std::optional<TaskTimeline> best_tl;

    bool cached_somewhere = false;
    for (const auto& u : s.uavs) cached_somewhere |= u.cached(task.content_id, task.arrival_time) != nullptr;

    if (a.reuse_source || cached_somewhere) {
      for (const auto& u : s.uavs) {
        if (!graph.connected(user, NodeRef::uav(u.id))) continue;
        auto holder = find_reuse_holder(plan, s, task, u.id);
        if (!holder) continue;
        TaskPlan tp;
        tp.task_id = task.id;
        tp.master_uav = u.id;
        tp.reuse_source = task.content_id;
        if (holder->uav != u.id) {
          if (!graph.connected(NodeRef::uav(holder->uav), NodeRef::uav(u.id))) continue;
          tp.cache_moves.push_back(CacheMove{holder->uav, u.id, task.content_id, holder->bits});
        }
        auto tl = task_timeline(tp, task, graph, s);
        if (!fits(tl)) continue;
        if (!best_tl || tl.delay.total_s < best_tl->delay.total_s) {
          best = tp;
          best_tl = tl;
        }
      }
    }

    if (!best) {
      for (const auto& u : s.uavs) {
        if (!graph.connected(user, NodeRef::uav(u.id))) continue;
        TaskPlan tp;
        tp.task_id = task.id;
        tp.master_uav = u.id;
        auto tl = task_timeline(tp, task, graph, s);
        if (!fits(tl)) continue;
        if (!best_tl || tl.delay.total_s < best_tl->delay.total_s) {
          best = tp;
          best_tl = tl;
        }
      }
    }

    // No single UAV can carry it: shed chunks off each master until the
    // budgets hold, always to the slave that cuts the excess most.
    if (!best) {
      const double chunk = chunk_size(task, s.split_granularity);
      for (const auto& u : s.uavs) {
        if (!graph.connected(user, NodeRef::uav(u.id))) continue;
        TaskPlan tp;
        tp.task_id = task.id;
        tp.master_uav = u.id;
        auto tl = task_timeline(tp, task, graph, s);
        double over = excess(tl);
        while (over > 0.0 && tp.master_cycles(task) >= chunk * (1.0 - kLatticeTol)) {
          std::optional<TaskPlan> step;
          std::optional<TaskTimeline> step_tl;
          double step_over = over;
          for (const auto& v : s.uavs) {
            if (v.id == u.id || !graph.connected(NodeRef::uav(u.id), NodeRef::uav(v.id))) continue;
            TaskPlan next = tp;
            next.splits[v.id] += chunk;
            auto ntl = task_timeline(next, task, graph, s);
            const double o = excess(ntl);
            if (o < step_over) {
              step = std::move(next);
              step_tl = std::move(ntl);
              step_over = o;
            }
          }
          if (!step) break;
          tp = std::move(*step);
          tl = std::move(*step_tl);
          over = step_over;
        }
        if (over > 0.0) continue;
        if (!best_tl || tl.delay.total_s < best_tl->delay.total_s) {
          best = tp;
          best_tl = tl;
        }
      }
    }

    if (!best) throw InfeasibleError("task " + std::to_string(task.id) + ": no energy-feasible reachable UAV");

    commit(*best_tl);
    if (!best->reuse_source) {
      auto it = next_ledger.entries.find(task.content_id);
      if (it != next_ledger.entries.end() && it->second.producer_task_id == task.id)
        it->second.holder_uav = best->master_uav;
    }
    plan.upsert(std::move(*best));
  }

  normalize_plan(plan, s);
  ledger = std::move(next_ledger);
  return plan;
}

namespace {

std::optional<OffloadPlan> apply_move(const OffloadPlan& plan, const Scenario& s, std::size_t index, MoveKind kind,
                                      int target) {
  OffloadPlan next = plan;
  TaskPlan& tp = next.tasks[index];
  const TaskRequest& task = *s.find_task(tp.task_id);
  const double chunk = chunk_size(task, s.split_granularity);

  switch (kind) {
    case MoveKind::reassign_master:
      if (target == tp.master_uav) return std::nullopt;
      tp.splits.erase(target);
      tp.master_uav = target;
      break;
    case MoveKind::add_chunk: {
      if (tp.reuse_source || target == tp.master_uav) return std::nullopt;
      if (tp.master_cycles(task) < chunk * (1.0 - kLatticeTol)) return std::nullopt;
      auto it = tp.splits.find(target);
      const long n = it == tp.splits.end() ? 0 : chunks_of(it->second, chunk);
      tp.splits[target] = static_cast<double>(n + 1) * chunk;
      break;
    }
    case MoveKind::remove_chunk: {
      auto it = tp.splits.find(target);
      if (tp.reuse_source || it == tp.splits.end()) return std::nullopt;
      const long n = chunks_of(it->second, chunk);
      if (n <= 1)
        tp.splits.erase(it);
      else
        it->second = static_cast<double>(n - 1) * chunk;
      break;
    }
    case MoveKind::pair_reuse:
      if (tp.reuse_source) return std::nullopt;
      tp.reuse_source = task.content_id;
      tp.splits.clear();
      tp.master_uav = target;
      break;
  }
  normalize_plan(next, s);
  return next;
}

bool improves(double candidate, double current) {
  if (!std::isfinite(current)) return candidate < current;
  return candidate < current - 1e-12 * std::max(1.0, std::abs(current));
}

// Steepest chunk-level descent over every task's splits: add, remove, or
// shift one chunk between UAVs. A bare master change rarely pays off on its
// own; the new master, and its neighbours, usually want a different split.
void rebalance_splits(OffloadPlan& plan, PlanMetrics& metrics, const Scenario& s, const ConnectivityGraph& graph) {
  while (true) {
    std::optional<OffloadPlan> best;
    PlanMetrics best_m = metrics;
    auto consider = [&](std::optional<OffloadPlan> cand) {
      if (!cand || !check_feasibility(*cand, s, graph).empty()) return;
      PlanMetrics m = evaluate_plan(*cand, s, graph);
      if (improves(m.mean_delay_s, best_m.mean_delay_s)) {
        best = std::move(cand);
        best_m = std::move(m);
      }
    };
    for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
      for (const auto& u : s.uavs) {
        consider(apply_move(plan, s, i, MoveKind::add_chunk, u.id));
        auto removed = apply_move(plan, s, i, MoveKind::remove_chunk, u.id);
        if (!removed) continue;
        consider(removed);
        for (const auto& v : s.uavs)
          if (v.id != u.id) consider(apply_move(*removed, s, i, MoveKind::add_chunk, v.id));
      }
    }
    if (!best) return;
    plan = std::move(*best);
    metrics = std::move(best_m);
  }
}

Scenario with_granularity(const Scenario& s, int k) {
  Scenario out = s;
  if (k > 0) out.split_granularity = k;
  return out;
}

SolveResult run_local_search(OffloadPlan cur, const Scenario& s, const ConnectivityGraph& graph,
                             const SolverConfig& cfg) {
  SolveResult res;
  normalize_plan(cur, s);
  if (auto v = check_feasibility(cur, s, graph); !v.empty()) {
    res.status = SolveStatus::infeasible;
    res.message = v.front();
    return res;
  }
  PlanMetrics cur_m = evaluate_plan(cur, s, graph);

  while (res.iterations < cfg.max_local_search_iters) {
    bool accepted = false;
    for (std::size_t i = 0; i < cur.tasks.size() && !accepted; ++i) {
      for (MoveKind kind : cfg.neighborhood) {
        for (const auto& u : s.uavs) {
          auto cand = apply_move(cur, s, i, kind, u.id);
          if (!cand) continue;
          const bool feasible = check_feasibility(*cand, s, graph).empty();
          // A move whose bare form breaks the energy budget can become
          // feasible once the splits move, so only link/lattice failures
          // are final.
          PlanMetrics m;
          if (feasible) {
            m = evaluate_plan(*cand, s, graph);
          } else {
            try {
              m = evaluate_plan(*cand, s, graph);
            } catch (const InfeasibleError&) {
              continue;
            }
            m.mean_delay_s = std::numeric_limits<double>::infinity();
          }
          if (!feasible || kind == MoveKind::reassign_master || kind == MoveKind::pair_reuse) {
            rebalance_splits(*cand, m, s, graph);
            if (!check_feasibility(*cand, s, graph).empty()) continue;
          }
          if (improves(m.mean_delay_s, cur_m.mean_delay_s)) {
            cur = std::move(*cand);
            cur_m = std::move(m);
            accepted = true;
            break;
          }
        }
        if (accepted) break;
      }
    }
    if (!accepted) break;
    ++res.iterations;
  }

  res.plan = std::move(cur);
  res.metrics = std::move(cur_m);
  res.status = SolveStatus::local_optimum;
  return res;
}

}  // namespace

SolveResult local_search(const OffloadPlan& start, const Scenario& s, const SolverConfig& cfg) {
  const Scenario sk = with_granularity(s, cfg.split_granularity);
  return local_search(start, sk, connectivity_at(sk, 0.0), cfg);
}

SolveResult local_search(const OffloadPlan& start, const Scenario& s, const ConnectivityGraph& graph,
                         const SolverConfig& cfg) {
  const Scenario sk = with_granularity(s, cfg.split_granularity);
  SolveResult best = run_local_search(start, sk, graph, cfg);
  if (cfg.restarts <= 0 || !best.plan || sk.uavs.empty()) return best;

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, sk.uavs.size() - 1);
  for (int r = 0; r < cfg.restarts; ++r) {
    OffloadPlan perturbed = *best.plan;
    for (auto& tp : perturbed.tasks) {
      tp.master_uav = sk.uavs[pick(rng)].id;
      tp.splits.clear();
    }
    normalize_plan(perturbed, sk);
    if (!check_feasibility(perturbed, sk, graph).empty()) continue;
    SolveResult trial = run_local_search(std::move(perturbed), sk, graph, cfg);
    trial.iterations += best.iterations;
    if (trial.plan && improves(trial.metrics.mean_delay_s, best.metrics.mean_delay_s))
      best = std::move(trial);
  }
  return best;
}

SolveResult solve(const Scenario& s, const SolverConfig& cfg) {
  const Scenario sk = with_granularity(s, cfg.split_granularity);
  const ConnectivityGraph graph = connectivity_at(sk, 0.0);
  ReuseLedger ledger;
  OffloadPlan start;
  try {
    start = greedy_construct(sk, graph, ledger);
  } catch (const InfeasibleError& e) {
    SolveResult r;
    r.status = SolveStatus::infeasible;
    r.message = e.what();
    return r;
  }
  return local_search(start, sk, graph, cfg);
}

SolveResult brute_force_oracle(const Scenario& s, int granularity, ServiceMode allowed) {
  if (s.uavs.size() > OracleLimits::max_uavs || s.tasks.size() > OracleLimits::max_tasks ||
      granularity > OracleLimits::max_granularity || granularity < 1) {
    std::ostringstream os;
    os << "oracle caps exceeded: " << s.uavs.size() << " UAVs (max " << OracleLimits::max_uavs << "), "
       << s.tasks.size() << " tasks (max " << OracleLimits::max_tasks << "), K=" << granularity << " (max "
       << OracleLimits::max_granularity << ")";
    throw CapExceededError(os.str());
  }

  Scenario sk = s;
  sk.split_granularity = granularity;
  const ConnectivityGraph graph = connectivity_at(sk, 0.0);
  const bool splits_ok = allowed == ServiceMode::m2o || allowed == ServiceMode::m2m;
  const bool reuse_ok = allowed == ServiceMode::o2m || allowed == ServiceMode::m2m;

  std::vector<const TaskRequest*> tasks;
  for (const auto& t : sk.tasks) tasks.push_back(&t);
  std::sort(tasks.begin(), tasks.end(), [](auto* a, auto* b) { return a->id < b->id; });

  // Per-task option lists in lexicographic encoding order:
  // master id, then split chunk vector, then the reuse variant.
  std::vector<std::vector<TaskPlan>> options;
  for (const TaskRequest* task : tasks) {
    std::vector<TaskPlan> opts;
    const double chunk = chunk_size(*task, granularity);
    for (const auto& m : sk.uavs) {
      std::vector<int> others;
      for (const auto& u : sk.uavs)
        if (u.id != m.id) others.push_back(u.id);
      std::vector<int> counts(others.size(), 0);
      while (true) {
        int used = 0;
        for (int c : counts) used += c;
        if (used <= granularity) {
          TaskPlan tp;
          tp.task_id = task->id;
          tp.master_uav = m.id;
          for (std::size_t i = 0; i < others.size(); ++i)
            if (counts[i] > 0) tp.splits[others[i]] = static_cast<double>(counts[i]) * chunk;
          opts.push_back(std::move(tp));
        }
        if (!splits_ok) break;
        // Odometer with the last slave as the fastest digit.
        std::size_t d = counts.size();
        while (d > 0 && counts[d - 1] == granularity) counts[--d] = 0;
        if (d == 0) break;
        ++counts[d - 1];
      }
      if (reuse_ok) {
        TaskPlan tp;
        tp.task_id = task->id;
        tp.master_uav = m.id;
        tp.reuse_source = task->content_id;
        opts.push_back(std::move(tp));
      }
    }
    options.push_back(std::move(opts));
  }

  SolveResult best;
  best.status = SolveStatus::infeasible;
  best.message = "no energy-feasible plan";
  if (tasks.empty()) {
    best.plan = OffloadPlan{};
    best.metrics = evaluate_plan(*best.plan, sk, graph);
    best.status = SolveStatus::optimal_oracle;
    best.message.clear();
    return best;
  }

  std::vector<std::size_t> idx(options.size(), 0);
  while (true) {
    OffloadPlan plan;
    for (std::size_t i = 0; i < options.size(); ++i) plan.tasks.push_back(options[i][idx[i]]);
    normalize_plan(plan, sk);
    if (check_feasibility(plan, sk, graph).empty()) {
      PlanMetrics m = evaluate_plan(plan, sk, graph);
      if (!best.plan || m.mean_delay_s < best.metrics.mean_delay_s) {
        best.plan = std::move(plan);
        best.metrics = std::move(m);
      }
    }
    std::size_t d = idx.size();
    while (d > 0 && idx[d - 1] + 1 == options[d - 1].size()) idx[--d] = 0;
    if (d == 0) break;
    ++idx[d - 1];
  }
  if (best.plan) {
    best.status = SolveStatus::optimal_oracle;
    best.message.clear();
  }
  return best;
}

std::string solve_result_json(const SolveResult& r) {
  using nlohmann::json;
  json j;
  j["status"] = std::string(to_string(r.status));
  j["iterations"] = r.iterations;
  if (!r.message.empty()) j["message"] = r.message;
  if (r.plan) {
    json tasks = json::array();
    for (const auto& tp : r.plan->tasks) {
      json splits = json::array();
      for (const auto& [uav, cycles] : tp.splits) splits.push_back({{"uav", uav}, {"cycles", cycles}});
      json moves = json::array();
      for (const auto& mv : tp.cache_moves)
        moves.push_back({{"from", mv.from_uav}, {"to", mv.to_uav}, {"content_id", mv.content_id}, {"bits", mv.bits}});
      json t{{"task_id", tp.task_id},
             {"master_uav", tp.master_uav},
             {"mode", std::string(to_string(tp.mode))},
             {"splits", splits},
             {"cache_moves", moves}};
      t["reuse_source"] = tp.reuse_source ? json(*tp.reuse_source) : json(nullptr);
      tasks.push_back(std::move(t));
    }
    j["plan"] = {{"tasks", tasks}};
    json td = json::array();
    for (const auto& d : r.metrics.tasks)
      td.push_back({{"task_id", d.task_id},
                    {"mode", std::string(to_string(d.mode))},
                    {"upload_s", d.upload_s},
                    {"setup_s", d.setup_s},
                    {"compute_s", d.compute_s},
                    {"collect_s", d.collect_s},
                    {"download_s", d.download_s},
                    {"total_s", d.total_s}});
    json ue = json::array();
    for (const auto& e : r.metrics.uavs)
      ue.push_back({{"uav_id", e.uav_id},
                    {"compute_j", e.compute_j},
                    {"tx_j", e.tx_j},
                    {"total_j", e.total_j},
                    {"budget_j", e.budget_j},
                    {"violated", e.violated}});
    j["metrics"] = {{"mean_delay_s", r.metrics.mean_delay_s}, {"tasks", td}, {"uavs", ue}};
  } else {
    j["plan"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace m3t
