#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "m3t/domain.hpp"

namespace m3t {

struct RequestEntry {
  double t = 0.0;
  int user_id = 0;
  std::string content_id;
  Vec3 position;

  friend bool operator==(const RequestEntry&, const RequestEntry&) = default;
};

// Historical requests, timestamps nondecreasing.
struct RequestLog {
  std::vector<RequestEntry> entries;

  void validate() const;
};

struct PopularContent {
  std::string content_id;
  int count = 0;

  friend bool operator==(const PopularContent&, const PopularContent&) = default;
};

// Counts within (now - window, now], now = last entry time. Sorted by count
// descending, ties by content id; at most top_c entries.
std::vector<PopularContent> mine_popular_contents(const RequestLog& log, double window, int top_c);

// Mean request position per content over the same trailing window.
std::map<std::string, Vec3> request_centroids(const RequestLog& log, double window);

struct Placement {
  int uav_id = 0;
  std::string content_id;
  double bits = 0.0;

  friend bool operator==(const Placement&, const Placement&) = default;
};

struct PlacementReport {
  std::vector<Placement> placements;
  // Contents that fit in no cache.
  std::vector<std::string> skipped;
};

// Rank order; each content goes to the UAV nearest its request centroid that
// still has room (ties to the lower id). Capacity counts existing cache bits.
PlacementReport preplace_cache(const std::vector<UavNode>& uavs, const std::vector<PopularContent>& popular,
                               const std::map<std::string, double>& result_sizes,
                               const std::map<std::string, Vec3>& centroids);

// Installs placements as cache entries expiring at `expiry`.
void apply_placements(std::vector<UavNode>& uavs, const PlacementReport& report, double expiry);

std::string placements_to_csv(const PlacementReport& report);

// Request counts on a square grid in the x-y plane.
class DemandMap {
 public:
  using Cell = std::pair<long, long>;

  DemandMap(double cell_size, double window);

  // Requests in (now - window, now].
  static DemandMap from_log(const RequestLog& log, double now, double window, double cell_size);

  void add(Vec3 position);
  Cell cell_of(Vec3 position) const;
  int count(Cell c) const;
  int total() const;
  double cell_size() const { return cell_size_; }
  double window() const { return window_; }
  // Count-weighted centre of the requests in a cell; z = 0.
  Vec3 centroid(Cell c) const;
  std::vector<Cell> cells() const;

 private:
  double cell_size_;
  double window_;
  std::map<Cell, std::vector<std::pair<double, double>>> points_;
};

// Centroids of the k busiest cells, ties by cell index. Fewer than k are
// returned when fewer cells have demand. Throws InputError without demand.
std::vector<Vec3> detect_hotspots(const DemandMap& map, int k);

// New velocities for every UAV. Idle UAVs are matched greedily to the
// nearest unclaimed centroid (at their own altitude) and fly toward it at
// min(vmax, distance / dt); unmatched idle UAVs hover; busy ones keep theirs.
std::map<int, Vec3> reposition(const std::vector<UavNode>& uavs, const std::vector<Vec3>& centroids, double dt,
                               double vmax, const std::set<int>& busy = {});

// CSV `t,user_id,content_id,x,y,z`.
std::string request_log_to_csv(const RequestLog& log);
RequestLog request_log_from_csv(const std::string& text);
RequestLog load_request_log(const std::filesystem::path& path);

}  // namespace m3t
