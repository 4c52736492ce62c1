#include "m3t/offload.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <sstream>

namespace m3t {

std::string_view to_string(ServiceMode m) {
  switch (m) {
    case ServiceMode::o2o: return "O2O";
    case ServiceMode::o2m: return "O2M";
    case ServiceMode::m2o: return "M2O";
    case ServiceMode::m2m: return "M2M";
  }
  return "?";
}

std::optional<ServiceMode> parse_mode(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "o2o") return ServiceMode::o2o;
  if (lower == "o2m") return ServiceMode::o2m;
  if (lower == "m2o") return ServiceMode::m2o;
  if (lower == "m2m") return ServiceMode::m2m;
  return std::nullopt;
}

double TaskPlan::offloaded_cycles() const {
  double total = 0.0;
  for (const auto& [uav, cycles] : splits) total += cycles;
  return total;
}

double TaskPlan::master_cycles(const TaskRequest& task) const {
  if (reuse_source) return 0.0;
  if (splits.empty()) return task.compute_cycles;
  return task.compute_cycles - offloaded_cycles();
}

const TaskPlan* OffloadPlan::find(int task_id) const {
  auto it = std::lower_bound(tasks.begin(), tasks.end(), task_id,
                             [](const TaskPlan& tp, int id) { return tp.task_id < id; });
  return it != tasks.end() && it->task_id == task_id ? &*it : nullptr;
}

TaskPlan* OffloadPlan::find(int task_id) {
  return const_cast<TaskPlan*>(static_cast<const OffloadPlan*>(this)->find(task_id));
}

void OffloadPlan::upsert(TaskPlan tp) {
  auto it = std::lower_bound(tasks.begin(), tasks.end(), tp.task_id,
                             [](const TaskPlan& p, int id) { return p.task_id < id; });
  if (it != tasks.end() && it->task_id == tp.task_id)
    *it = std::move(tp);
  else
    tasks.insert(it, std::move(tp));
}

bool PlanMetrics::energy_violation() const {
  return std::any_of(uavs.begin(), uavs.end(), [](const UavEnergy& e) { return e.violated; });
}

namespace {

std::string describe(NodeRef n) {
  return (n.kind == NodeRef::Kind::uav ? "uav " : "user ") + std::to_string(n.id);
}

double require_rate(const ConnectivityGraph& g, NodeRef a, NodeRef b, int task_id) {
  auto r = g.rate(a, b);
  if (!r || !(*r > 0.0))
    throw InfeasiblePlanError("task " + std::to_string(task_id) + ": link " + describe(a) + " <-> " +
                              describe(b) + " is down");
  return *r;
}

const UavNode& require_uav(const Scenario& s, int id, int task_id) {
  const UavNode* u = s.find_uav(id);
  if (!u) throw InfeasiblePlanError("task " + std::to_string(task_id) + ": unknown uav " + std::to_string(id));
  return *u;
}

}  // namespace

TaskTimeline task_timeline(const TaskPlan& tp, const TaskRequest& task, const ConnectivityGraph& graph,
                           const Scenario& s) {
  TaskTimeline tl;
  tl.task_id = task.id;
  tl.master_uav = tp.master_uav;
  tl.reuse = tp.reuse_source.has_value();

  const UavNode& master = require_uav(s, tp.master_uav, task.id);
  const NodeRef m = NodeRef::uav(master.id);
  const NodeRef user = NodeRef::user(task.user_id);
  const double setup = s.d2d_setup_latency;

  tl.download = Transfer{master.id, -1, task.output_bits, require_rate(graph, m, user, task.id), 0.0};

  for (const auto& mv : tp.cache_moves) {
    require_uav(s, mv.from_uav, task.id);
    require_uav(s, mv.to_uav, task.id);
    const double r = require_rate(graph, NodeRef::uav(mv.from_uav), NodeRef::uav(mv.to_uav), task.id);
    tl.moves.push_back(Transfer{mv.from_uav, mv.to_uav, mv.bits, r, setup});
  }

  TaskDelay& d = tl.delay;
  d.task_id = task.id;
  d.mode = tp.mode;

  if (tl.reuse) {
    if (!tl.moves.empty()) {
      d.setup_s = setup;
      for (const auto& mv : tl.moves) d.collect_s = std::max(d.collect_s, mv.airtime());
    }
  } else {
    tl.upload = Transfer{-1, master.id, task.input_bits, require_rate(graph, user, m, task.id), 0.0};
    d.upload_s = tl.upload->seconds();

    tl.master_cycles = tp.master_cycles(task);
    tl.master_compute_s = tl.master_cycles / master.cpu_rate;

    const double rho = task.bits_per_cycle();
    for (const auto& [slave_id, cycles] : tp.splits) {
      const UavNode& slave = require_uav(s, slave_id, task.id);
      const double r = require_rate(graph, m, NodeRef::uav(slave_id), task.id);
      SlaveLeg leg;
      leg.uav = slave_id;
      leg.cycles = cycles;
      leg.dispatch = Transfer{master.id, slave_id, cycles * rho, r, setup};
      leg.compute_s = cycles / slave.cpu_rate;
      leg.result = Transfer{slave_id, master.id, task.output_bits * cycles / task.compute_cycles, r, setup};
      tl.slaves.push_back(leg);
    }

    // Critical path measured from the end of the upload.
    double critical = tl.master_compute_s;
    d.setup_s = tl.slaves.empty() ? 0.0 : setup;
    d.compute_s = tl.master_compute_s - d.setup_s;
    d.collect_s = 0.0;
    for (const auto& leg : tl.slaves) {
      const double path = leg.dispatch.seconds() + leg.compute_s + leg.result.seconds();
      if (path > critical) {
        critical = path;
        d.compute_s = leg.dispatch.airtime() + leg.compute_s;
        d.collect_s = leg.result.seconds();
      }
    }
    d.compute_s = std::max(0.0, d.compute_s);
  }

  d.download_s = tl.download.seconds();
  d.total_s = d.upload_s + d.setup_s + d.compute_s + d.collect_s + d.download_s;
  return tl;
}

TaskDelay task_delay(const TaskPlan& tp, const TaskRequest& task, const ConnectivityGraph& graph,
                     const Scenario& s) {
  return task_timeline(tp, task, graph, s).delay;
}

std::map<int, std::pair<double, double>> task_energy(const TaskTimeline& tl, const Scenario& s) {
  std::map<int, std::pair<double, double>> out;
  auto compute = [&](int uav, double cycles) {
    out[uav].first += s.find_uav(uav)->comp_energy_per_cycle * cycles;
  };
  auto transmit = [&](const Transfer& x) {
    if (x.from_uav < 0) return;
    out[x.from_uav].second += s.find_uav(x.from_uav)->tx_power * x.airtime();
  };

  if (!tl.reuse) compute(tl.master_uav, tl.master_cycles);
  for (const auto& leg : tl.slaves) {
    compute(leg.uav, leg.cycles);
    transmit(leg.dispatch);
    transmit(leg.result);
  }
  for (const auto& mv : tl.moves) transmit(mv);
  transmit(tl.download);
  return out;
}

std::vector<UavEnergy> plan_energy(const OffloadPlan& plan, const Scenario& s, const ConnectivityGraph& graph) {
  std::map<int, UavEnergy> acc;
  for (const auto& u : s.uavs) acc[u.id] = UavEnergy{u.id, 0.0, 0.0, 0.0, u.energy_budget, false};

  for (const auto& tp : plan.tasks) {
    const TaskRequest* task = s.find_task(tp.task_id);
    if (!task) throw InfeasiblePlanError("plan references unknown task " + std::to_string(tp.task_id));
    const auto tl = task_timeline(tp, *task, graph, s);
    for (const auto& [uav, e] : task_energy(tl, s)) {
      acc[uav].compute_j += e.first;
      acc[uav].tx_j += e.second;
    }
  }

  std::vector<UavEnergy> out;
  for (const auto& u : s.uavs) {
    UavEnergy e = acc[u.id];
    e.total_j = e.compute_j + e.tx_j;
    e.violated = e.total_j > u.energy_remaining();
    out.push_back(e);
  }
  return out;
}

PlanMetrics evaluate_plan(const OffloadPlan& plan, const Scenario& s, const ConnectivityGraph& graph) {
  PlanMetrics m;
  double sum = 0.0;
  for (const auto& task : s.tasks) {
    const TaskPlan* tp = plan.find(task.id);
    if (!tp) throw InfeasiblePlanError("plan does not cover task " + std::to_string(task.id));
  }
  for (const auto& tp : plan.tasks) {
    const TaskRequest* task = s.find_task(tp.task_id);
    if (!task) throw InfeasiblePlanError("plan references unknown task " + std::to_string(tp.task_id));
    m.tasks.push_back(task_delay(tp, *task, graph, s));
    sum += m.tasks.back().total_s;
  }
  m.mean_delay_s = m.tasks.empty() ? 0.0 : sum / static_cast<double>(m.tasks.size());
  m.uavs = plan_energy(plan, s, graph);
  return m;
}

PlanMetrics evaluate_plan(const OffloadPlan& plan, const Scenario& s, double t) {
  return evaluate_plan(plan, s, connectivity_at(s, t));
}

std::optional<ReuseHolder> find_reuse_holder(const OffloadPlan& plan, const Scenario& s, const TaskRequest& consumer,
                                             int master_uav) {
  auto earlier = [](const TaskRequest* a, const TaskRequest* b) {
    return a->arrival_time < b->arrival_time || (a->arrival_time == b->arrival_time && a->id < b->id);
  };

  std::vector<std::pair<const TaskRequest*, int>> producers;  // (task, its master)
  for (const auto& tp : plan.tasks) {
    if (tp.reuse_source || tp.task_id == consumer.id) continue;
    const TaskRequest* p = s.find_task(tp.task_id);
    if (!p || p->content_id != consumer.content_id) continue;
    if (!earlier(p, &consumer) || consumer.arrival_time - p->arrival_time > s.reuse_ttl) continue;
    producers.emplace_back(p, tp.master_uav);
  }
  std::sort(producers.begin(), producers.end(), [&](const auto& a, const auto& b) { return earlier(a.first, b.first); });

  for (const auto& [p, m] : producers)
    if (m == master_uav) return ReuseHolder{m, p->output_bits, p->id};
  if (const UavNode* m = s.find_uav(master_uav)) {
    if (const CachedContent* c = m->cached(consumer.content_id, consumer.arrival_time))
      return ReuseHolder{master_uav, c->bits, std::nullopt};
  }
  if (!producers.empty())
    return ReuseHolder{producers.front().second, producers.front().first->output_bits, producers.front().first->id};
  for (const auto& u : s.uavs) {
    if (const CachedContent* c = u.cached(consumer.content_id, consumer.arrival_time))
      return ReuseHolder{u.id, c->bits, std::nullopt};
  }
  return std::nullopt;
}

ServiceMode classify_mode(const OffloadPlan& plan, const TaskRequest& task, const Scenario& s) {
  const TaskPlan* tp = plan.find(task.id);
  if (!tp) return ServiceMode::o2o;
  const bool split = !tp->splits.empty();
  bool shared = tp->reuse_source.has_value();
  if (!shared) {
    for (const auto& other : plan.tasks) {
      if (!other.reuse_source || other.task_id == task.id) continue;
      const TaskRequest* consumer = s.find_task(other.task_id);
      if (!consumer) continue;
      auto h = find_reuse_holder(plan, s, *consumer, other.master_uav);
      if (h && h->producer_task == task.id) {
        shared = true;
        break;
      }
    }
  }
  if (split && shared) return ServiceMode::m2m;
  if (split) return ServiceMode::m2o;
  if (shared) return ServiceMode::o2m;
  return ServiceMode::o2o;
}

void normalize_plan(OffloadPlan& plan, const Scenario& s) {
  std::sort(plan.tasks.begin(), plan.tasks.end(),
            [](const TaskPlan& a, const TaskPlan& b) { return a.task_id < b.task_id; });
  for (auto& tp : plan.tasks) {
    if (!tp.reuse_source) continue;
    tp.splits.clear();
    tp.cache_moves.clear();
    const TaskRequest* task = s.find_task(tp.task_id);
    if (!task) continue;
    if (auto h = find_reuse_holder(plan, s, *task, tp.master_uav); h && h->uav != tp.master_uav)
      tp.cache_moves.push_back(CacheMove{h->uav, tp.master_uav, task->content_id, h->bits});
  }
  for (auto& tp : plan.tasks) {
    if (const TaskRequest* task = s.find_task(tp.task_id)) tp.mode = classify_mode(plan, *task, s);
  }
}

const LedgerEntry* ReuseLedger::live(const std::string& content_id, double t) const {
  auto it = entries.find(content_id);
  if (it == entries.end() || it->second.expiry < t || it->second.produced_at > t) return nullptr;
  return &it->second;
}

void ReuseLedger::purge(double t) {
  std::erase_if(entries, [t](const auto& kv) { return kv.second.expiry < t; });
}

std::pair<std::vector<AnnotatedTask>, ReuseLedger> apply_reuse(const std::vector<TaskRequest>& tasks,
                                                               ReuseLedger ledger, double t, double ttl) {
  ledger.purge(t);
  std::vector<TaskRequest> ordered = tasks;
  std::stable_sort(ordered.begin(), ordered.end(), [](const TaskRequest& a, const TaskRequest& b) {
    return a.arrival_time < b.arrival_time || (a.arrival_time == b.arrival_time && a.id < b.id);
  });

  std::vector<AnnotatedTask> out;
  for (const auto& task : ordered) {
    AnnotatedTask a{task, std::nullopt, task.id};
    if (const LedgerEntry* e = ledger.live(task.content_id, task.arrival_time)) {
      a.reuse_source = task.content_id;
      a.producer_task_id = e->producer_task_id;
    } else {
      LedgerEntry entry;
      entry.producer_task_id = task.id;
      entry.result_bits = task.output_bits;
      entry.produced_at = task.arrival_time;
      entry.expiry = task.arrival_time + ttl;
      ledger.entries[task.content_id] = entry;
    }
    out.push_back(std::move(a));
  }
  return {std::move(out), std::move(ledger)};
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string task_rows_csv(const PlanMetrics& m) {
  std::ostringstream os;
  os << "task_id,mode,upload_s,setup_s,compute_s,collect_s,download_s,total_s\n";
  for (const auto& d : m.tasks) {
    os << d.task_id << ',' << to_string(d.mode) << ',' << format_number(d.upload_s) << ','
       << format_number(d.setup_s) << ',' << format_number(d.compute_s) << ',' << format_number(d.collect_s)
       << ',' << format_number(d.download_s) << ',' << format_number(d.total_s) << '\n';
  }
  return os.str();
}

std::string uav_rows_csv(const PlanMetrics& m) {
  std::ostringstream os;
  os << "uav_id,compute_j,tx_j,total_j,budget_j,violated\n";
  for (const auto& e : m.uavs) {
    os << e.uav_id << ',' << format_number(e.compute_j) << ',' << format_number(e.tx_j) << ','
       << format_number(e.total_j) << ',' << format_number(e.budget_j) << ',' << (e.violated ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace m3t
