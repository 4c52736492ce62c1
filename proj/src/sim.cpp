#include "m3t/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "m3t/netmodel.hpp"
#include "m3t/solver.hpp"

namespace m3t {

using nlohmann::ordered_json;

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::task_arrival: return "task_arrival";
    case EventKind::transfer_done: return "transfer_done";
    case EventKind::compute_done: return "compute_done";
    case EventKind::mobility_tick: return "mobility_tick";
    case EventKind::forecast_tick: return "forecast_tick";
    case EventKind::redeploy_tick: return "redeploy_tick";
    case EventKind::sim_end: return "sim_end";
  }
  return "?";
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::static_greedy: return "static_greedy";
    case Policy::greedy_plus_local_search: return "greedy_plus_local_search";
    case Policy::forecast_driven: return "forecast_driven";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  if (name == "static_greedy") return Policy::static_greedy;
  if (name == "greedy_plus_local_search") return Policy::greedy_plus_local_search;
  if (name == "forecast_driven") return Policy::forecast_driven;
  throw InputError("unknown policy '" + std::string(name) +
                   "' (expected static_greedy, greedy_plus_local_search or forecast_driven)");
}

namespace {

bool later(const Event& a, const Event& b) { return a.time != b.time ? a.time > b.time : a.seq > b.seq; }

}  // namespace

void EventQueue::push(double time, EventKind kind, int task_id, int step) {
  heap_.push_back(Event{time, next_seq_++, kind, task_id, step});
  std::push_heap(heap_.begin(), heap_.end(), later);
}

Event EventQueue::pop() {
  std::pop_heap(heap_.begin(), heap_.end(), later);
  Event e = heap_.back();
  heap_.pop_back();
  return e;
}

bool operator==(const SimAggregate& a, const SimAggregate& b) {
  if (a.failed_tasks != b.failed_tasks || a.total_energy_j != b.total_energy_j ||
      a.metrics.mean_delay_s != b.metrics.mean_delay_s || a.metrics.tasks.size() != b.metrics.tasks.size() ||
      a.metrics.uavs.size() != b.metrics.uavs.size())
    return false;
  for (std::size_t k = 0; k < a.metrics.tasks.size(); ++k) {
    const auto &x = a.metrics.tasks[k], &y = b.metrics.tasks[k];
    if (x.task_id != y.task_id || x.mode != y.mode || x.upload_s != y.upload_s || x.setup_s != y.setup_s ||
        x.compute_s != y.compute_s || x.collect_s != y.collect_s || x.download_s != y.download_s ||
        x.total_s != y.total_s)
      return false;
  }
  for (std::size_t k = 0; k < a.metrics.uavs.size(); ++k) {
    const auto &x = a.metrics.uavs[k], &y = b.metrics.uavs[k];
    if (x.uav_id != y.uav_id || x.compute_j != y.compute_j || x.tx_j != y.tx_j || x.total_j != y.total_j ||
        x.budget_j != y.budget_j || x.violated != y.violated)
      return false;
  }
  return true;
}

namespace {

ordered_json delay_json(const TaskDelay& d) {
  return {{"mode", std::string(to_string(d.mode))}, {"upload_s", d.upload_s},   {"setup_s", d.setup_s},
          {"compute_s", d.compute_s},               {"collect_s", d.collect_s}, {"download_s", d.download_s},
          {"total_s", d.total_s}};
}

// Folds trace records into an aggregate. The engine and replay share it, so
// both sides add the same numbers in the same order.
class Accumulator {
 public:
  void feed(const TraceRecord& r) {
    if (r.kind == "transfer_done" || r.kind == "compute_done") {
      UavEnergy& e = uav(r.uav_id);
      (r.kind == "compute_done" ? e.compute_j : e.tx_j) += r.joules;
      e.total_j += r.joules;
    } else if (r.kind == "task_done") {
      const auto d = nlohmann::json::parse(r.detail_json);
      TaskDelay t;
      t.task_id = r.task_id;
      const auto mode = parse_mode(d.at("mode").get<std::string>());
      if (!mode) throw InputError("unknown mode " + d.at("mode").dump());
      t.mode = *mode;
      t.upload_s = d.at("upload_s").get<double>();
      t.setup_s = d.at("setup_s").get<double>();
      t.compute_s = d.at("compute_s").get<double>();
      t.collect_s = d.at("collect_s").get<double>();
      t.download_s = d.at("download_s").get<double>();
      t.total_s = d.at("total_s").get<double>();
      delay_sum_ += t.total_s;
      done_.push_back(t);
    } else if (r.kind == "task_failed") {
      ++failed_;
    }
  }

  void set_budget(int uav_id, double budget) { uav(uav_id).budget_j = budget; }

  SimAggregate result() const {
    SimAggregate a;
    a.failed_tasks = failed_;
    a.metrics.tasks = done_;
    std::sort(a.metrics.tasks.begin(), a.metrics.tasks.end(),
              [](const auto& x, const auto& y) { return x.task_id < y.task_id; });
    a.metrics.mean_delay_s = done_.empty() ? 0.0 : delay_sum_ / static_cast<double>(done_.size());
    for (const auto& [id, e] : uavs_) {
      UavEnergy out = e;
      out.violated = out.total_j > out.budget_j;
      a.metrics.uavs.push_back(out);
      a.total_energy_j += out.total_j;
    }
    return a;
  }

 private:
  UavEnergy& uav(int id) {
    auto [it, fresh] = uavs_.try_emplace(id);
    if (fresh) it->second.uav_id = id;
    return it->second;
  }

  std::map<int, UavEnergy> uavs_;
  std::vector<TaskDelay> done_;
  double delay_sum_ = 0.0;
  int failed_ = 0;
};

ordered_json summary_json(const SimAggregate& a) {
  ordered_json uavs = ordered_json::array();
  for (const auto& e : a.metrics.uavs)
    uavs.push_back({{"id", e.uav_id},
                    {"budget_j", e.budget_j},
                    {"compute_j", e.compute_j},
                    {"tx_j", e.tx_j},
                    {"total_j", e.total_j},
                    {"violated", e.violated}});
  return {{"tasks_done", a.metrics.tasks.size()},
          {"failed_tasks", a.failed_tasks},
          {"mean_delay_s", a.metrics.mean_delay_s},
          {"total_energy_j", a.total_energy_j},
          {"uavs", uavs}};
}

// A scheduled piece of a task: a transfer or a computation that completes at
// `time` and debits `joules` from `uav`.
struct Step {
  EventKind kind = EventKind::transfer_done;
  double time = 0.0;
  double duration = 0.0;
  int uav = 0;
  int peer = -1;  // -1 = user terminal
  double bits = 0.0;
  double cycles = 0.0;
  double joules = 0.0;
};

struct ActiveTask {
  TaskRequest task;
  TaskDelay delay;
  std::vector<Step> steps;
  std::map<int, double> reserved;
  std::map<int, double> debited;
};

class Engine {
 public:
  Engine(const Scenario& s, const RunOptions& opt) : world_(s), opt_(opt) {
    for (const auto& u : world_.uavs) {
      LoadSeries ls;
      ls.uav_id = u.id;
      ls.sample_period = world_.sim.forecast_period > 0 ? world_.sim.forecast_period : 1.0;
      loads_[u.id] = ls;
    }
    for (const auto& h : opt_.load_history) {
      auto it = loads_.find(h.uav_id);
      if (it == loads_.end()) throw InputError("load history references unknown uav " + std::to_string(h.uav_id));
      validate_series(h);
      const double period = world_.sim.forecast_period;
      if (!h.t.empty() && (std::abs(h.sample_period - period) > 1e-9 * period || std::abs(h.t.back()) > 1e-9 * period))
        throw InputError("load history for uav " + std::to_string(h.uav_id) +
                         ": must be sampled every forecast_period and end at t = 0");
      it->second.t = h.t;
      it->second.load = h.load;
    }
    for (const auto& u : world_.uavs) acc_.set_budget(u.id, u.energy_budget);
  }

  SimResult run() {
    preplace();

    std::vector<const TaskRequest*> order;
    for (const auto& t : world_.tasks)
      if (t.arrival_time <= world_.horizon) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
      return a->arrival_time != b->arrival_time ? a->arrival_time < b->arrival_time : a->id < b->id;
    });
    for (const auto* t : order) queue_.push(t->arrival_time, EventKind::task_arrival, t->id);
    schedule_ticks(world_.sim.mobility_period, EventKind::mobility_tick);
    schedule_ticks(world_.sim.forecast_period, EventKind::forecast_tick);
    schedule_ticks(world_.sim.redeploy_period, EventKind::redeploy_tick);

    double now = 0.0;
    while (!queue_.empty()) {
      const Event e = queue_.pop();
      now = e.time;
      switch (e.kind) {
        case EventKind::task_arrival: on_arrival(e); break;
        case EventKind::transfer_done:
        case EventKind::compute_done: on_step(e); break;
        case EventKind::mobility_tick:
          advance(e.time);
          emit(e.time, "mobility_tick");
          break;
        case EventKind::forecast_tick: on_forecast(e.time); break;
        case EventKind::redeploy_tick: on_redeploy(e.time); break;
        case EventKind::sim_end: break;
      }
    }

    SimResult res;
    res.aggregate = acc_.result();
    emit(std::max(now, world_.horizon), "sim_end", 0, 0, -1, 0, 0, 0, summary_json(res.aggregate).dump());
    res.trace = std::move(trace_);
    res.preplaced = std::move(preplaced_);
    for (auto& [id, ls] : loads_) res.loads.push_back(std::move(ls));
    return res;
  }

 private:
  void schedule_ticks(double period, EventKind kind) {
    if (!(period > 0.0)) return;
    for (long k = 1;; ++k) {
      const double t = static_cast<double>(k) * period;
      if (t > world_.horizon) break;
      queue_.push(t, kind);
    }
  }

  void emit(double t, std::string kind, int task = 0, int uav = 0, int peer = -1, double bits = 0.0,
            double cycles = 0.0, double joules = 0.0, std::string detail = {}) {
    TraceRecord r;
    r.index = trace_.size();
    r.time = t;
    r.kind = std::move(kind);
    r.task_id = task;
    r.uav_id = uav;
    r.peer_uav = peer;
    r.bits = bits;
    r.cycles = cycles;
    r.joules = joules;
    r.detail_json = std::move(detail);
    acc_.feed(r);
    trace_.push_back(std::move(r));
  }

  // Positions are exact kinematics between velocity changes.
  void advance(double t) {
    const double dt = t - world_time_;
    if (dt <= 0.0) return;
    for (auto& u : world_.uavs) u.position = u.position + u.velocity * dt;
    for (auto& u : world_.users) u.position = u.position + u.velocity * dt;
    world_time_ = t;
  }

  void preplace() {
    if (opt_.request_history.entries.empty()) return;
    opt_.request_history.validate();
    const double window = world_.reuse_ttl > 0 ? world_.reuse_ttl : world_.horizon;
    std::map<std::string, double> sizes;
    for (const auto& t : world_.tasks) sizes.try_emplace(t.content_id, t.output_bits);
    std::vector<PopularContent> popular;
    for (auto& p : mine_popular_contents(opt_.request_history, std::max(window, 1e-9), opt_.preplace_top))
      if (sizes.count(p.content_id)) popular.push_back(p);
    preplaced_ = preplace_cache(world_.uavs, popular, sizes, request_centroids(opt_.request_history, window));
    apply_placements(world_.uavs, preplaced_, world_.horizon);
    for (const auto& p : preplaced_.placements)
      emit(0.0, "cache_preplaced", 0, p.uav_id, -1, p.bits, 0.0, 0.0,
           ordered_json{{"content_id", p.content_id}}.dump());
  }

  // The world as the solver should see it at time t for one task.
  Scenario snapshot(const TaskRequest& task, double t) const {
    Scenario s = world_;
    s.tasks = {task};
    for (auto& u : s.uavs) {
      u.energy_spent += outstanding(u.id);
      std::erase_if(u.cache_contents, [&](const CachedContent& c) { return c.expiry_time < t; });
    }
    for (const auto& [content, e] : ledger_.entries) {
      if (!e.holder_uav || e.ready_at > t || e.expiry < t) continue;
      UavNode* u = s.find_uav(*e.holder_uav);
      if (u && !u->cached(content, t)) u->cache_contents.push_back({content, e.result_bits, e.expiry});
    }
    return s;
  }

  double outstanding(int uav) const {
    double r = 0.0;
    for (const auto& [id, a] : active_) {
      auto it = a.reserved.find(uav);
      if (it == a.reserved.end()) continue;
      auto d = a.debited.find(uav);
      r += std::max(0.0, it->second - (d == a.debited.end() ? 0.0 : d->second));
    }
    return r;
  }

  std::optional<OffloadPlan> forecast_plan(const Scenario& s, const ConnectivityGraph& g, const TaskRequest& task) {
    if (forecasts_.empty()) return std::nullopt;
    ForecastSplit split;
    try {
      split = split_by_forecast(task, forecasts_, s.split_granularity);
    } catch (const InfeasibleError&) {
      return std::nullopt;
    }
    const NodeRef user = NodeRef::user(task.user_id);
    std::optional<int> master;
    for (const auto& [id, n] : split.chunks)
      if (g.connected(user, NodeRef::uav(id)) && (!master || n > split.chunks[*master])) master = id;
    if (!master) return std::nullopt;
    const double chunk = task.compute_cycles / static_cast<double>(s.split_granularity);
    TaskPlan tp;
    tp.task_id = task.id;
    tp.master_uav = *master;
    for (const auto& [id, n] : split.chunks)
      if (id != *master && n > 0 && g.connected(NodeRef::uav(*master), NodeRef::uav(id)))
        tp.splits[id] = static_cast<double>(n) * chunk;
    OffloadPlan plan;
    plan.tasks.push_back(tp);
    normalize_plan(plan, s);
    if (!check_feasibility(plan, s, g).empty()) return std::nullopt;
    return plan;
  }

  // Returns the plan and which route produced it.
  std::pair<OffloadPlan, std::string> choose(const Scenario& s, const ConnectivityGraph& g, const TaskRequest& task) {
    SolverConfig cfg;
    cfg.rng_seed = s.seed;
    ReuseLedger scratch;
    switch (opt_.policy) {
      case Policy::static_greedy: {
        OffloadPlan p = greedy_construct(s, g, scratch);
        if (auto v = check_feasibility(p, s, g); !v.empty()) throw InfeasibleError(v.front());
        return {p, "greedy"};
      }
      case Policy::forecast_driven: {
        OffloadPlan greedy = greedy_construct(s, g, scratch);
        if (greedy.tasks.front().reuse_source) return {greedy, "reuse"};
        if (auto p = forecast_plan(s, g, task)) return {*p, "forecast_split"};
        [[fallthrough]];
      }
      case Policy::greedy_plus_local_search: {
        OffloadPlan start = greedy_construct(s, g, scratch);
        SolveResult r = local_search(start, s, g, cfg);
        if (!r.plan) throw InfeasibleError(r.message);
        return {*r.plan, opt_.policy == Policy::forecast_driven ? "fallback_local_search" : "local_search"};
      }
    }
    throw InfeasibleError("no policy");
  }

  void on_arrival(const Event& e) {
    const double t = e.time;
    advance(t);
    const TaskRequest& task = *world_.find_task(e.task_id);
    ledger_.purge(t);
    auto [annotated, next] = apply_reuse({task}, ledger_, t, world_.reuse_ttl);
    ledger_ = std::move(next);

    const Scenario s = snapshot(task, t);
    const ConnectivityGraph g = connectivity_at(s, 0.0);
    OffloadPlan plan;
    std::string route;
    try {
      std::tie(plan, route) = choose(s, g, task);
    } catch (const InfeasibleError& err) {
      auto it = ledger_.entries.find(task.content_id);
      if (it != ledger_.entries.end() && it->second.producer_task_id == task.id) ledger_.entries.erase(it);
      emit(t, "task_failed", task.id, 0, -1, 0, 0, 0, ordered_json{{"reason", err.what()}}.dump());
      return;
    }

    const TaskPlan& tp = plan.tasks.front();
    const TaskTimeline tl = task_timeline(tp, task, g, s);
    ActiveTask a;
    a.task = task;
    a.delay = tl.delay;
    for (const auto& [uav, en] : task_energy(tl, s)) a.reserved[uav] = en.first + en.second;
    build_steps(a, tl, s, t);

    auto it = ledger_.entries.find(task.content_id);
    if (it != ledger_.entries.end() && it->second.producer_task_id == task.id) {
      it->second.holder_uav = tp.master_uav;
      it->second.ready_at = t + (tl.delay.total_s - tl.delay.download_s);
    }

    ordered_json splits = ordered_json::object();
    for (const auto& [id, c] : tp.splits) splits[std::to_string(id)] = c;
    ordered_json detail{{"route", route},
                        {"master", tp.master_uav},
                        {"mode", std::string(to_string(tp.mode))},
                        {"splits", splits},
                        {"reuse", tp.reuse_source.has_value()},
                        {"planned_total_s", tl.delay.total_s}};
    emit(t, "task_arrival", task.id, tp.master_uav, -1, task.input_bits, task.compute_cycles, 0.0, detail.dump());
    arrivals_.entries.push_back({t, task.user_id, task.content_id, world_.find_user(task.user_id)->position});

    for (std::size_t k = 0; k < a.steps.size(); ++k) {
      const Step& st = a.steps[k];
      queue_.push(st.time, st.kind, task.id, static_cast<int>(k));
      busy_[st.uav].push_back({st.time - st.duration, st.time});
      if (st.peer >= 0 && st.kind == EventKind::transfer_done) busy_[st.peer].push_back({st.time - st.duration, st.time});
    }
    active_.emplace(task.id, std::move(a));
  }

  void build_steps(ActiveTask& a, const TaskTimeline& tl, const Scenario& s, double t0) {
    const double done = t0 + tl.delay.total_s;
    auto tx = [&](const Transfer& x, double end) {
      Step st;
      st.kind = EventKind::transfer_done;
      st.time = std::min(end, done);
      st.duration = x.seconds();
      st.uav = x.from_uav >= 0 ? x.from_uav : x.to_uav;
      st.peer = x.from_uav >= 0 ? x.to_uav : -1;
      st.bits = x.bits;
      // Senders pay; the user's own upload is free.
      st.joules = x.from_uav >= 0 ? s.find_uav(x.from_uav)->tx_power * x.airtime() : 0.0;
      return st;
    };
    auto cpu = [&](int uav, double cycles, double seconds, double end) {
      Step st;
      st.kind = EventKind::compute_done;
      st.time = std::min(end, done);
      st.duration = seconds;
      st.uav = uav;
      st.cycles = cycles;
      st.joules = s.find_uav(uav)->comp_energy_per_cycle * cycles;
      return st;
    };

    double t = t0;
    for (const auto& mv : tl.moves) {
      t += mv.seconds();
      a.steps.push_back(tx(mv, t));
    }
    if (tl.upload) {
      const double landed = t0 + tl.upload->seconds();
      a.steps.push_back(tx(*tl.upload, landed));
      if (tl.master_cycles > 0.0)
        a.steps.push_back(cpu(tl.master_uav, tl.master_cycles, tl.master_compute_s, landed + tl.master_compute_s));
      for (const auto& leg : tl.slaves) {
        const double arrived = landed + leg.dispatch.seconds();
        a.steps.push_back(tx(leg.dispatch, arrived));
        const double computed = arrived + leg.compute_s;
        a.steps.push_back(cpu(leg.uav, leg.cycles, leg.compute_s, computed));
        a.steps.push_back(tx(leg.result, computed + leg.result.seconds()));
      }
    }
    Step down = tx(tl.download, done);
    down.time = done;
    a.steps.push_back(down);
  }

  void on_step(const Event& e) {
    auto it = active_.find(e.task_id);
    ActiveTask& a = it->second;
    const Step& st = a.steps[static_cast<std::size_t>(e.step)];
    UavNode* u = world_.find_uav(st.uav);
    u->energy_spent += st.joules;
    a.debited[st.uav] += st.joules;
    emit(e.time, std::string(to_string(st.kind)), a.task.id, st.uav, st.peer, st.bits, st.cycles, st.joules);
    if (static_cast<std::size_t>(e.step) + 1 == a.steps.size()) {
      emit(e.time, "task_done", a.task.id, 0, -1, 0, 0, 0, delay_json(a.delay).dump());
      active_.erase(it);
    }
  }

  double sample_load(int uav, double t, double period) {
    auto& iv = busy_[uav];
    double busy = 0.0;
    for (const auto& [s, e] : iv) busy += std::max(0.0, std::min(e, t) - std::max(s, t - period));
    std::erase_if(iv, [&](const auto& x) { return x.second <= t - period; });
    return std::clamp(busy / period, 0.0, 1.0);
  }

  void on_forecast(double t) {
    const double period = world_.sim.forecast_period;
    const auto& p = world_.sim;
    ordered_json detail = ordered_json::object();
    forecasts_.clear();
    for (auto& [id, ls] : loads_) {
      const double load = sample_load(id, t, period);
      ls.t.push_back(t);
      ls.load.push_back(load);
      ordered_json row{{"load", load}};
      if (opt_.policy == Policy::forecast_driven) {
        const std::size_t need = static_cast<std::size_t>(p.forecast_window + p.forecast_horizon);
        std::vector<double> f;
        if (ls.size() >= need && p.forecast_epochs > 0) {
          // Train on a bounded tail so tick cost stays flat over long runs.
          const std::size_t keep = std::min(ls.size(), 4 * need);
          LoadSeries tail;
          tail.uav_id = id;
          tail.sample_period = ls.sample_period;
          tail.t.assign(ls.t.end() - static_cast<long>(keep), ls.t.end());
          tail.load.assign(ls.load.end() - static_cast<long>(keep), ls.load.end());
          ForecastConfig cfg;
          cfg.window = p.forecast_window;
          cfg.horizon = p.forecast_horizon;
          cfg.hidden_size = p.forecast_hidden;
          cfg.epochs = p.forecast_epochs;
          cfg.seed = world_.seed + 1000 + static_cast<std::uint64_t>(id);
          const LstmModel m = train(tail, cfg);
          const std::span<const double> all(ls.load);
          f = forecast(m, all.subspan(all.size() - static_cast<std::size_t>(p.forecast_window)), p.forecast_horizon);
          row["model"] = "lstm";
        } else {
          f = baseline_forecast(ls.load, p.forecast_horizon, {});
          row["model"] = "persistence";
        }
        double mean = 0.0;
        for (double v : f) mean += v;
        row["forecast_mean"] = mean / static_cast<double>(f.size());
        forecasts_[id] = std::move(f);
      }
      detail[std::to_string(id)] = row;
    }
    emit(t, "forecast_tick", 0, 0, -1, 0, 0, 0, detail.dump());
  }

  void on_redeploy(double t) {
    advance(t);
    const auto& p = world_.sim;
    const DemandMap map = DemandMap::from_log(arrivals_, t, p.demand_window, p.cell_size);
    if (map.total() == 0) {
      emit(t, "redeploy_tick", 0, 0, -1, 0, 0, 0, ordered_json{{"hotspots", ordered_json::array()}}.dump());
      return;
    }
    const auto hot = detect_hotspots(map, p.hotspots);
    std::set<int> busy;
    for (const auto& [id, a] : active_)
      for (const auto& st : a.steps) {
        busy.insert(st.uav);
        if (st.peer >= 0) busy.insert(st.peer);
      }
    const auto vel = reposition(world_.uavs, hot, p.redeploy_period, p.max_speed, busy);
    ordered_json spots = ordered_json::array();
    for (auto c : hot) spots.push_back({c.x, c.y});
    ordered_json moves = ordered_json::object();
    for (auto& u : world_.uavs) {
      u.velocity = vel.at(u.id);
      moves[std::to_string(u.id)] = {u.velocity.x, u.velocity.y, u.velocity.z};
    }
    emit(t, "redeploy_tick", 0, 0, -1, 0, 0, 0, ordered_json{{"hotspots", spots}, {"velocities", moves}}.dump());
  }

  Scenario world_;
  RunOptions opt_;
  double world_time_ = 0.0;
  EventQueue queue_;
  ReuseLedger ledger_;
  std::map<int, ActiveTask> active_;
  std::map<int, std::vector<std::pair<double, double>>> busy_;
  std::map<int, LoadSeries> loads_;
  std::map<int, std::vector<double>> forecasts_;
  RequestLog arrivals_;
  PlacementReport preplaced_;
  std::vector<TraceRecord> trace_;
  Accumulator acc_;
};

}  // namespace

SimResult run(const Scenario& scenario, const RunOptions& options) {
  if (auto v = validate_scenario(scenario); !v.empty()) throw InputError(v.front());
  return Engine(scenario, options).run();
}

SimAggregate replay_trace(const std::vector<TraceRecord>& trace) {
  if (trace.empty()) return {};
  Accumulator acc;
  const std::size_t last = trace.size() - 1;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& r = trace[k];
    const std::string at = "record " + std::to_string(k);
    if (r.index != k) throw TraceError(at + ": index " + std::to_string(r.index) + " out of sequence");
    if (k > 0 && r.time < trace[k - 1].time) throw TraceError(at + ": time goes backwards");
    if ((r.kind == "sim_end") != (k == last)) throw TraceError(at + ": sim_end must be the final record");
    try {
      acc.feed(r);
    } catch (const std::exception& e) {
      throw TraceError(at + ": " + e.what());
    }
  }

  ordered_json claim;
  try {
    claim = ordered_json::parse(trace[last].detail_json);
    for (const auto& u : claim.at("uavs")) acc.set_budget(u.at("id").get<int>(), u.at("budget_j").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw TraceError("record " + std::to_string(last) + ": malformed summary: " + e.what());
  }
  SimAggregate got = acc.result();
  const std::string expected = summary_json(got).dump();
  if (claim.dump() != expected)
    throw TraceError("record " + std::to_string(last) + ": summary mismatch; trace implies " + expected);
  return got;
}

std::string trace_to_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    ordered_json j{{"i", r.index},      {"t", r.time},           {"kind", r.kind},     {"task", r.task_id},
                   {"uav", r.uav_id},   {"peer", r.peer_uav},    {"bits", r.bits},     {"cycles", r.cycles},
                   {"joules", r.joules}};
    if (!r.detail_json.empty()) j["detail"] = ordered_json::parse(r.detail_json);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TraceRecord> trace_from_jsonl(const std::string& text) {
  std::vector<TraceRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string at = "record " + std::to_string(out.size());
    try {
      const auto j = ordered_json::parse(line);
      TraceRecord r;
      r.index = j.at("i").get<std::uint64_t>();
      r.time = j.at("t").get<double>();
      r.kind = j.at("kind").get<std::string>();
      r.task_id = j.at("task").get<int>();
      r.uav_id = j.at("uav").get<int>();
      r.peer_uav = j.at("peer").get<int>();
      r.bits = j.at("bits").get<double>();
      r.cycles = j.at("cycles").get<double>();
      r.joules = j.at("joules").get<double>();
      if (j.contains("detail")) r.detail_json = j.at("detail").dump();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(at + ": " + e.what());
    }
  }
  return out;
}

std::string metrics_csv(const SimAggregate& a) {
  return task_rows_csv(a.metrics) + "\n" + uav_rows_csv(a.metrics) + "\nmean_delay_s,failed_tasks,total_energy_j\n" +
         format_number(a.metrics.mean_delay_s) + "," + std::to_string(a.failed_tasks) + "," +
         format_number(a.total_energy_j) + "\n";
}

std::vector<LoadSeries> generate_loads(const SyntheticLoadSpec& spec, int n_uavs, double duration, double period) {
  if (n_uavs < 1) throw InputError("n_uavs: must be >= 1");
  if (!(period > 0.0)) throw InputError("period: must be > 0");
  if (!(duration >= period)) throw InputError("duration: must be >= period");
  if (spec.base.empty()) throw InputError("base: need at least one value");
  if (!(spec.cycle_period > 0.0)) throw InputError("cycle_period: must be > 0");
  if (!(spec.noise_sigma >= 0.0)) throw InputError("noise_sigma: must be >= 0");

  std::vector<RegimeShift> shifts = spec.shifts;
  std::stable_sort(shifts.begin(), shifts.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  const long n = static_cast<long>(std::floor(duration / period + 1e-9));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<LoadSeries> out;
  for (int id = 1; id <= n_uavs; ++id) {
    LoadSeries s;
    s.uav_id = id;
    s.sample_period = period;
    const double phase = 2.0 * std::numbers::pi * (id - 1) / n_uavs;
    for (long k = 0; k < n; ++k) {
      const double t = spec.start_time + static_cast<double>(k) * period;
      double base = spec.base[std::min(static_cast<std::size_t>(id - 1), spec.base.size() - 1)];
      for (const auto& sh : shifts)
        if (sh.uav_id == id && t >= sh.t) base = sh.new_base;
      const double eps = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(rng) : 0.0;
      const double v = base + spec.amplitude * std::sin(2.0 * std::numbers::pi * t / spec.cycle_period + phase) + eps;
      s.t.push_back(t);
      s.load.push_back(std::clamp(v, 0.0, 1.0));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> poisson_arrivals(double rate, double horizon, std::uint64_t seed) {
  if (!(rate > 0.0)) throw InputError("rate: must be > 0");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  std::vector<double> out;
  for (double t = gap(rng); t < horizon; t += gap(rng)) out.push_back(t);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace m3t
