#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "m3t/domain.hpp"

namespace m3t::testing {

inline UavNode make_uav(int id, Vec3 pos, double cpu = 1e9, double budget = 100.0) {
  UavNode u;
  u.id = id;
  u.position = pos;
  u.cpu_rate = cpu;
  u.energy_budget = budget;
  u.comp_energy_per_cycle = 1e-9;
  u.tx_power = 0.5;
  return u;
}

inline TaskRequest make_task(int id, int user, double arrival, std::string content, double input = 8e6,
                             double cycles = 1e9, double output = 8e5) {
  TaskRequest t;
  t.id = id;
  t.user_id = user;
  t.arrival_time = arrival;
  t.input_bits = input;
  t.compute_cycles = cycles;
  t.output_bits = output;
  t.content_id = std::move(content);
  return t;
}

// Link parameters where a 1000 m hop carries exactly 8e6 b/s (SNR = 1).
inline LinkParams unit_snr_link() {
  LinkParams p;
  p.bandwidth = 8e6;
  p.ref_snr_at_1m = 1e6;
  p.pathloss_exponent = 2.0;
  p.max_range = 5000.0;
  p.min_rate = 0.0;
  return p;
}

// User at the origin, UAV 1 straight above at 1000 m, UAV 2 1000 m east of UAV 1.
inline Scenario worked_scenario() {
  Scenario s;
  s.link_params = unit_snr_link();
  s.uavs.push_back(make_uav(1, {0, 0, 1000}));
  s.uavs.push_back(make_uav(2, {1000, 0, 1000}));
  s.users.push_back(UserTerminal{1, {0, 0, 0}, {}});
  s.tasks.push_back(make_task(1, 1, 0.0, "x"));
  s.d2d_setup_latency = 0.1;
  return s;
}

// Random instance inside the oracle caps. Geometry keeps every node within
// range; heterogeneity in CPU and task sizes makes splitting and master
// choice matter.
inline Scenario random_small_scenario(std::uint64_t seed, int max_uavs = 3, int max_tasks = 3, int k = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> n_uavs(1, max_uavs);
  std::uniform_int_distribution<int> n_tasks(1, max_tasks);

  Scenario s;
  s.link_params.bandwidth = 2e6;
  s.link_params.ref_snr_at_1m = 1e8;
  s.link_params.pathloss_exponent = 2.0;
  s.link_params.max_range = 3000.0;
  s.d2d_setup_latency = 0.05 + 0.1 * unit(rng);
  s.split_granularity = k;
  s.reuse_ttl = 60.0;

  const int nu = n_uavs(rng);
  for (int i = 0; i < nu; ++i) {
    UavNode u = make_uav(i + 1, {400.0 * unit(rng), 400.0 * unit(rng), 100.0 + 50.0 * unit(rng)},
                         5e8 + 2e9 * unit(rng), 1.0 + 6.0 * unit(rng));
    u.comp_energy_per_cycle = 5e-10 + 1e-9 * unit(rng);
    u.tx_power = 0.2 + 0.6 * unit(rng);
    s.uavs.push_back(u);
  }
  const int nusers = 1 + static_cast<int>(unit(rng) * 2.0);
  for (int i = 0; i < nusers; ++i) s.users.push_back(UserTerminal{i + 1, {400.0 * unit(rng), 400.0 * unit(rng), 0}, {}});

  const int nt = n_tasks(rng);
  for (int i = 0; i < nt; ++i) {
    const std::string content = unit(rng) < 0.35 ? "shared" : "c" + std::to_string(i);
    const int user = 1 + static_cast<int>(unit(rng) * nusers) % nusers;
    s.tasks.push_back(make_task(i + 1, user, 10.0 * unit(rng), content, 1e6 + 4e6 * unit(rng),
                                5e8 + 2e9 * unit(rng), 1e5 + 5e5 * unit(rng)));
  }
  return s;
}

}  // namespace m3t::testing
