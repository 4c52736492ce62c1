#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "m3t/deploy.hpp"
#include "m3t/forecast.hpp"
#include "m3t/offload.hpp"

namespace m3t {

struct TraceError : InputError {
  using InputError::InputError;
};

enum class EventKind { task_arrival, transfer_done, compute_done, mobility_tick, forecast_tick, redeploy_tick, sim_end };

std::string_view to_string(EventKind k);

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::sim_end;
  int task_id = 0;
  // Index into the task's staged steps for transfer/compute events.
  int step = -1;
};

// Min-queue on (time, seq).
class EventQueue {
 public:
  void push(double time, EventKind kind, int task_id = 0, int step = -1);
  Event pop();
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  std::vector<Event> heap_;
  std::uint64_t next_seq_ = 0;
};

// One line of the trace. Numeric fields that do not apply stay at zero.
struct TraceRecord {
  std::uint64_t index = 0;
  double time = 0.0;
  std::string kind;
  int task_id = 0;
  int uav_id = 0;
  int peer_uav = 0;
  double bits = 0.0;
  double cycles = 0.0;
  double joules = 0.0;
  // Free-form details (delay components, assignments, summaries).
  std::string detail_json;
};

enum class Policy { static_greedy, greedy_plus_local_search, forecast_driven };

std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);

struct SimAggregate {
  PlanMetrics metrics;
  int failed_tasks = 0;
  double total_energy_j = 0.0;

  friend bool operator==(const SimAggregate& a, const SimAggregate& b);
};

struct RunOptions {
  Policy policy = Policy::greedy_plus_local_search;
  // Optional load samples per UAV, spaced by forecast_period, ending at t = 0.
  std::vector<LoadSeries> load_history;
  // Optional request history for cache pre-deployment at t = 0.
  RequestLog request_history;
  int preplace_top = 8;
};

struct SimResult {
  SimAggregate aggregate;
  std::vector<TraceRecord> trace;
  PlacementReport preplaced;
  // Per-UAV samples observed at forecast ticks (history included).
  std::vector<LoadSeries> loads;
};

SimResult run(const Scenario& scenario, const RunOptions& options);

// Recomputes the aggregate from trace records alone and checks it against
// the summary carried by the final record. Throws TraceError naming the
// offending record index.
SimAggregate replay_trace(const std::vector<TraceRecord>& trace);

std::string trace_to_jsonl(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> trace_from_jsonl(const std::string& text);

// Task rows, blank line, UAV rows, blank line, aggregate row.
std::string metrics_csv(const SimAggregate& a);

struct RegimeShift {
  double t = 0.0;
  int uav_id = 0;
  double new_base = 0.0;
};

struct SyntheticLoadSpec {
  // Per-UAV base, indexed by uav id - 1; the last value repeats.
  std::vector<double> base{0.4};
  double amplitude = 0.1;
  double cycle_period = 600.0;
  std::vector<RegimeShift> shifts;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  double start_time = 0.0;
};

// UAV ids 1..n. Sample k sits at start_time + k * period, k < duration/period.
std::vector<LoadSeries> generate_loads(const SyntheticLoadSpec& spec, int n_uavs, double duration, double period);

// Seeded Poisson arrival times in [0, horizon).
std::vector<double> poisson_arrivals(double rate, double horizon, std::uint64_t seed);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace m3t
