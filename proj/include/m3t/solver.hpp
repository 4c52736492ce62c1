#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "m3t/offload.hpp"

namespace m3t {

struct CapExceededError : InputError {
  using InputError::InputError;
};

enum class MoveKind { reassign_master, add_chunk, remove_chunk, pair_reuse };

struct SolverConfig {
  // 0 means "use the scenario's split granularity".
  int split_granularity = 0;
  int max_local_search_iters = 1000;
  std::vector<MoveKind> neighborhood{MoveKind::reassign_master, MoveKind::add_chunk, MoveKind::remove_chunk,
                                     MoveKind::pair_reuse};
  std::uint64_t rng_seed = 0;
  // Randomized restarts on top of the deterministic pass; off by default.
  int restarts = 0;
};

enum class SolveStatus { optimal_oracle, local_optimum, infeasible };

std::string_view to_string(SolveStatus s);

struct SolveResult {
  std::optional<OffloadPlan> plan;
  PlanMetrics metrics;
  SolveStatus status = SolveStatus::infeasible;
  int iterations = 0;
  std::string message;
};

// Every violation of energy budgets, cycle conservation, the C/K lattice,
// link availability and reuse availability; empty means feasible.
std::vector<std::string> check_feasibility(const OffloadPlan& plan, const Scenario& s);
std::vector<std::string> check_feasibility(const OffloadPlan& plan, const Scenario& s,
                                           const ConnectivityGraph& graph);

// Arrival-order construction: reuse first, otherwise the whole task goes to
// the reachable, energy-feasible UAV with the smallest standalone delay.
// `ledger` is updated with the contents produced by this plan. Throws
// InfeasibleError when some task has no candidate UAV.
OffloadPlan greedy_construct(const Scenario& s, const ConnectivityGraph& graph, ReuseLedger& ledger);

SolveResult local_search(const OffloadPlan& start, const Scenario& s, const SolverConfig& cfg);
SolveResult local_search(const OffloadPlan& start, const Scenario& s, const ConnectivityGraph& graph,
                         const SolverConfig& cfg);

// Greedy followed by local search at time 0 of the scenario.
SolveResult solve(const Scenario& s, const SolverConfig& cfg);

struct OracleLimits {
  static constexpr std::size_t max_uavs = 3;
  static constexpr std::size_t max_tasks = 3;
  static constexpr int max_granularity = 2;
};

// Exhaustive search over master assignment, lattice splits and reuse for
// tiny instances. `allowed` restricts the plans to the given service mode:
// O2O forbids both splits and reuse, O2M forbids splits, M2O forbids reuse.
// Throws CapExceededError beyond OracleLimits.
SolveResult brute_force_oracle(const Scenario& s, int granularity, ServiceMode allowed = ServiceMode::m2m);

std::string solve_result_json(const SolveResult& r);

}  // namespace m3t
