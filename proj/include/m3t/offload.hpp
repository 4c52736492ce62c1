#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "m3t/domain.hpp"
#include "m3t/netmodel.hpp"

namespace m3t {

// Service modes:
//   o2o  one UAV computes one task alone
//   o2m  one computation serves several tasks through result reuse
//   m2o  several UAVs split one task
//   m2m  both at once
enum class ServiceMode { o2o, o2m, m2o, m2m };

std::string_view to_string(ServiceMode m);
std::optional<ServiceMode> parse_mode(std::string_view name);

struct InfeasiblePlanError : InfeasibleError {
  using InfeasibleError::InfeasibleError;
};

// kappa: content bits moved between two UAVs.
struct CacheMove {
  int from_uav = 0;
  int to_uav = 0;
  std::string content_id;
  double bits = 0.0;

  friend bool operator==(const CacheMove&, const CacheMove&) = default;
};

struct TaskPlan {
  int task_id = 0;
  int master_uav = 0;
  // beta: slave uav id -> cycles offloaded by the master. Entries are > 0.
  std::map<int, double> splits;
  std::vector<CacheMove> cache_moves;
  // Set when the result is served from a cache instead of being computed.
  std::optional<std::string> reuse_source;
  ServiceMode mode = ServiceMode::o2o;

  double offloaded_cycles() const;
  double master_cycles(const TaskRequest& task) const;

  friend bool operator==(const TaskPlan&, const TaskPlan&) = default;
};

struct OffloadPlan {
  // Kept sorted by task id.
  std::vector<TaskPlan> tasks;

  const TaskPlan* find(int task_id) const;
  TaskPlan* find(int task_id);
  void upsert(TaskPlan tp);

  friend bool operator==(const OffloadPlan&, const OffloadPlan&) = default;
};

struct TaskDelay {
  int task_id = 0;
  ServiceMode mode = ServiceMode::o2o;
  double upload_s = 0.0;
  double setup_s = 0.0;
  double compute_s = 0.0;
  double collect_s = 0.0;
  double download_s = 0.0;
  double total_s = 0.0;
};

struct UavEnergy {
  int uav_id = 0;
  double compute_j = 0.0;
  double tx_j = 0.0;
  double total_j = 0.0;
  double budget_j = 0.0;
  bool violated = false;
};

struct PlanMetrics {
  std::vector<TaskDelay> tasks;
  double mean_delay_s = 0.0;
  std::vector<UavEnergy> uavs;

  bool energy_violation() const;
};

// One transfer or computation in a task's fork-join execution.
struct Transfer {
  int from_uav = -1;  // -1 when the sender is the user terminal
  int to_uav = -1;    // -1 when the receiver is the user terminal
  double bits = 0.0;
  double rate = 0.0;
  double setup_s = 0.0;
  double seconds() const { return setup_s + bits / rate; }
  double airtime() const { return bits / rate; }
};

struct SlaveLeg {
  int uav = 0;
  double cycles = 0.0;
  Transfer dispatch;
  double compute_s = 0.0;
  Transfer result;
};

// Stage-by-stage execution of one task under a plan, at fixed link rates.
//
// Fork-join semantics:
//   upload      user -> master, input_bits
//   master      computes its retained cycles as soon as the upload lands
//   slave j     D2D setup, then beta_j * rho bits master -> j, compute beta_j,
//               D2D setup, then output_bits * beta_j / C bits j -> master
//   download    master -> user once every path has finished
// A reuse task skips upload and compute; any cache move is a single D2D
// exchange (setup + transfer) that precedes the download.
struct TaskTimeline {
  int task_id = 0;
  int master_uav = 0;
  bool reuse = false;
  std::optional<Transfer> upload;
  double master_cycles = 0.0;
  double master_compute_s = 0.0;
  std::vector<SlaveLeg> slaves;
  std::vector<Transfer> moves;
  Transfer download;
  TaskDelay delay;
};

TaskTimeline task_timeline(const TaskPlan& tp, const TaskRequest& task, const ConnectivityGraph& graph,
                           const Scenario& s);

TaskDelay task_delay(const TaskPlan& tp, const TaskRequest& task, const ConnectivityGraph& graph,
                     const Scenario& s);

// Per-UAV (compute_j, tx_j) contributed by one task. Transmissions are
// charged to the sending UAV; the user terminal's own upload is free.
std::map<int, std::pair<double, double>> task_energy(const TaskTimeline& tl, const Scenario& s);

// E_i for every UAV in the scenario. `violated` compares against the budget
// left after energy already spent.
std::vector<UavEnergy> plan_energy(const OffloadPlan& plan, const Scenario& s, const ConnectivityGraph& graph);

PlanMetrics evaluate_plan(const OffloadPlan& plan, const Scenario& s, const ConnectivityGraph& graph);
PlanMetrics evaluate_plan(const OffloadPlan& plan, const Scenario& s, double t);

// Where a reuse task can fetch its result from, if anywhere.
struct ReuseHolder {
  int uav = 0;
  double bits = 0.0;
  std::optional<int> producer_task;  // nullopt when served from a UAV cache
};

// Producers are computed tasks with the same content that arrived earlier
// (ties broken by lower task id) within the reuse TTL; UAV caches must be
// live at the consumer's arrival. Prefers a holder equal to the consumer's
// master, then the earliest producer, then the lowest-id caching UAV.
std::optional<ReuseHolder> find_reuse_holder(const OffloadPlan& plan, const Scenario& s, const TaskRequest& consumer,
                                             int master_uav);

// Recomputes cache moves for reuse tasks and the mode tag of every task.
void normalize_plan(OffloadPlan& plan, const Scenario& s);

ServiceMode classify_mode(const OffloadPlan& plan, const TaskRequest& task, const Scenario& s);

struct LedgerEntry {
  int producer_task_id = 0;
  double result_bits = 0.0;
  double produced_at = 0.0;
  double expiry = 0.0;
  // UAV holding the result once the producer has been placed.
  std::optional<int> holder_uav;
  // Time the result becomes available at the holder.
  double ready_at = 0.0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct ReuseLedger {
  std::map<std::string, LedgerEntry> entries;

  const LedgerEntry* live(const std::string& content_id, double t) const;
  void purge(double t);

  friend bool operator==(const ReuseLedger&, const ReuseLedger&) = default;
};

struct AnnotatedTask {
  TaskRequest task;
  std::optional<std::string> reuse_source;
  int producer_task_id = 0;
};

// Tasks are processed in (arrival, id) order. Entries expired before t are
// dropped first.
std::pair<std::vector<AnnotatedTask>, ReuseLedger> apply_reuse(const std::vector<TaskRequest>& tasks,
                                                               ReuseLedger ledger, double t, double ttl);

// CSV rendering of metrics, one block per record type.
std::string task_rows_csv(const PlanMetrics& m);
std::string uav_rows_csv(const PlanMetrics& m);

// Shortest round-trip decimal form of a double.
std::string format_number(double v);

}  // namespace m3t
