#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "m3t/domain.hpp"

namespace m3t {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitInfeasible = 2;

struct ModeRow {
  std::string mode;
  bool feasible = false;
  double mean_delay_s = 0.0;
};

// Oracle optimum under each mode restriction, in O2O, O2M, M2O, M2M order.
// Throws CapExceededError beyond the oracle caps.
std::vector<ModeRow> compare_modes(const Scenario& s, int granularity);
std::string mode_rows_csv(const std::vector<ModeRow>& rows);

// Entry point behind the m3t tool. Summaries go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace m3t
