#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace m3t {

// Error categories map one-to-one onto CLI exit codes.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(Vec3 a, Vec3 b) { return (a - b).norm(); }

struct CachedContent {
  std::string content_id;
  double bits = 0.0;
  double expiry_time = 0.0;

  friend bool operator==(const CachedContent&, const CachedContent&) = default;
};

// One UAV. All quantities SI: cycles/s, bits, joules, watts.
struct UavNode {
  int id = 0;
  Vec3 position;
  Vec3 velocity;
  double cpu_rate = 0.0;
  double cache_capacity = 0.0;
  std::vector<CachedContent> cache_contents;
  double energy_budget = 0.0;
  double energy_spent = 0.0;
  double comp_energy_per_cycle = 1e-9;
  double tx_power = 0.5;

  double cached_bits() const;
  double energy_remaining() const { return energy_budget - energy_spent; }
  // Live cache entry for `content_id` at time t, if any.
  const CachedContent* cached(const std::string& content_id, double t) const;

  friend bool operator==(const UavNode&, const UavNode&) = default;
};

struct UserTerminal {
  int id = 0;
  Vec3 position;
  Vec3 velocity;

  friend bool operator==(const UserTerminal&, const UserTerminal&) = default;
};

struct TaskRequest {
  int id = 0;
  int user_id = 0;
  double arrival_time = 0.0;
  double input_bits = 0.0;
  double compute_cycles = 0.0;
  double output_bits = 0.0;
  // Equal content ids mean the results are interchangeable.
  std::string content_id;
  std::optional<double> deadline;

  // Input bits shipped per offloaded cycle.
  double bits_per_cycle() const { return input_bits / compute_cycles; }

  friend bool operator==(const TaskRequest&, const TaskRequest&) = default;
};

struct LinkParams {
  double bandwidth = 1e6;
  // P * g0 / (N0 * B) at one meter.
  double ref_snr_at_1m = 1e10;
  double pathloss_exponent = 2.0;
  double max_range = 2000.0;
  double min_rate = 0.0;

  friend bool operator==(const LinkParams&, const LinkParams&) = default;
};

// Engine knobs beyond the core problem data. Periods of 0 disable a tick.
struct SimParams {
  double mobility_period = 1.0;
  double forecast_period = 10.0;
  double redeploy_period = 0.0;
  double max_speed = 20.0;
  double cell_size = 100.0;
  double demand_window = 60.0;
  int hotspots = 1;
  int forecast_window = 12;
  int forecast_horizon = 6;
  int forecast_hidden = 8;
  int forecast_epochs = 30;

  friend bool operator==(const SimParams&, const SimParams&) = default;
};

struct Scenario {
  std::vector<UavNode> uavs;
  std::vector<UserTerminal> users;
  std::vector<TaskRequest> tasks;
  LinkParams link_params;
  double d2d_setup_latency = 0.1;
  int split_granularity = 4;
  double reuse_ttl = 60.0;
  double horizon = 1000.0;
  std::uint64_t seed = 0;
  SimParams sim;

  const UavNode* find_uav(int id) const;
  UavNode* find_uav(int id);
  const UserTerminal* find_user(int id) const;
  const TaskRequest* find_task(int id) const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// Every invariant breach, each prefixed with a path such as "uavs[0].cpu_rate".
std::vector<std::string> validate_scenario(const Scenario& s);

// Parses the JSON scenario document. Throws InputError on malformed input,
// unknown keys, missing required keys, or validation failures.
Scenario scenario_from_document(const std::string& text);
std::string scenario_to_document(const Scenario& s);

Scenario load_scenario(const std::string& path);

}  // namespace m3t
