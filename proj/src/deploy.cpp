#include "m3t/deploy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "m3t/offload.hpp"

namespace m3t {

namespace {

bool in_window(double t, double now, double window) { return t > now - window && t <= now; }

void require_window(double window) {
  if (!(window > 0.0)) throw InputError("window: must be > 0");
}

}  // namespace

void RequestLog::validate() const {
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const std::string at = "requests[" + std::to_string(k) + "]";
    if (!std::isfinite(entries[k].t)) throw InputError(at + ".t: must be finite");
    if (!entries[k].position.finite()) throw InputError(at + ".position: must be finite");
    if (k > 0 && entries[k].t < entries[k - 1].t) throw InputError(at + ".t: timestamps must be nondecreasing");
  }
}

std::vector<PopularContent> mine_popular_contents(const RequestLog& log, double window, int top_c) {
  require_window(window);
  std::vector<PopularContent> out;
  if (log.entries.empty() || top_c <= 0) return out;
  const double now = log.entries.back().t;
  std::map<std::string, int> counts;
  for (const auto& e : log.entries)
    if (in_window(e.t, now, window)) ++counts[e.content_id];
  for (const auto& [id, n] : counts) out.push_back({id, n});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
  if (out.size() > static_cast<std::size_t>(top_c)) out.resize(static_cast<std::size_t>(top_c));
  return out;
}

std::map<std::string, Vec3> request_centroids(const RequestLog& log, double window) {
  require_window(window);
  std::map<std::string, Vec3> out;
  if (log.entries.empty()) return out;
  const double now = log.entries.back().t;
  std::map<std::string, int> n;
  for (const auto& e : log.entries) {
    if (!in_window(e.t, now, window)) continue;
    out[e.content_id] = out[e.content_id] + e.position;
    ++n[e.content_id];
  }
  for (auto& [id, sum] : out) sum = sum * (1.0 / n[id]);
  return out;
}

PlacementReport preplace_cache(const std::vector<UavNode>& uavs, const std::vector<PopularContent>& popular,
                               const std::map<std::string, double>& result_sizes,
                               const std::map<std::string, Vec3>& centroids) {
  PlacementReport report;
  std::map<int, double> room;
  for (const auto& u : uavs) room[u.id] = u.cache_capacity - u.cached_bits();

  for (const auto& p : popular) {
    auto size = result_sizes.find(p.content_id);
    if (size == result_sizes.end()) throw InputError("content " + p.content_id + ": unknown result size");
    auto where = centroids.find(p.content_id);
    if (where == centroids.end()) throw InputError("content " + p.content_id + ": no request centroid");

    const UavNode* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& u : uavs) {
      if (size->second > room[u.id]) continue;
      const double d = distance(u.position, where->second);
      if (d < best_d || (d == best_d && best && u.id < best->id)) {
        best = &u;
        best_d = d;
      }
    }
    if (!best) {
      report.skipped.push_back(p.content_id);
      continue;
    }
    room[best->id] -= size->second;
    report.placements.push_back({best->id, p.content_id, size->second});
  }
  return report;
}

void apply_placements(std::vector<UavNode>& uavs, const PlacementReport& report, double expiry) {
  for (const auto& p : report.placements)
    for (auto& u : uavs)
      if (u.id == p.uav_id) u.cache_contents.push_back({p.content_id, p.bits, expiry});
}

std::string placements_to_csv(const PlacementReport& report) {
  std::string out = "uav_id,content_id,bits\n";
  for (const auto& p : report.placements)
    out += std::to_string(p.uav_id) + "," + p.content_id + "," + format_number(p.bits) + "\n";
  return out;
}

DemandMap::DemandMap(double cell_size, double window) : cell_size_(cell_size), window_(window) {
  if (!(cell_size > 0.0)) throw InputError("cell_size: must be > 0");
  require_window(window);
}

DemandMap DemandMap::from_log(const RequestLog& log, double now, double window, double cell_size) {
  DemandMap m(cell_size, window);
  for (const auto& e : log.entries)
    if (in_window(e.t, now, window)) m.add(e.position);
  return m;
}

void DemandMap::add(Vec3 position) {
  if (!position.finite()) throw InputError("demand position: must be finite");
  auto& pts = points_[cell_of(position)];
  // Kept sorted so sums do not depend on insertion order.
  const std::pair<double, double> p{position.x, position.y};
  pts.insert(std::upper_bound(pts.begin(), pts.end(), p), p);
}

DemandMap::Cell DemandMap::cell_of(Vec3 p) const {
  return {static_cast<long>(std::floor(p.x / cell_size_)), static_cast<long>(std::floor(p.y / cell_size_))};
}

int DemandMap::count(Cell c) const {
  auto it = points_.find(c);
  return it == points_.end() ? 0 : static_cast<int>(it->second.size());
}

int DemandMap::total() const {
  int n = 0;
  for (const auto& [c, pts] : points_) n += static_cast<int>(pts.size());
  return n;
}

Vec3 DemandMap::centroid(Cell c) const {
  auto it = points_.find(c);
  if (it == points_.end() || it->second.empty()) throw InputError("cell has no demand");
  double x = 0.0, y = 0.0;
  for (const auto& [px, py] : it->second) {
    x += px;
    y += py;
  }
  const double n = static_cast<double>(it->second.size());
  return {x / n, y / n, 0.0};
}

std::vector<DemandMap::Cell> DemandMap::cells() const {
  std::vector<Cell> out;
  for (const auto& [c, pts] : points_)
    if (!pts.empty()) out.push_back(c);
  return out;
}

std::vector<Vec3> detect_hotspots(const DemandMap& map, int k) {
  if (k < 1) throw InputError("hotspots: k must be >= 1");
  auto cells = map.cells();  // ascending cell index
  if (cells.empty()) throw InputError("hotspots: demand map is all zero");
  std::stable_sort(cells.begin(), cells.end(),
                   [&](const auto& a, const auto& b) { return map.count(a) > map.count(b); });
  if (cells.size() > static_cast<std::size_t>(k)) cells.resize(static_cast<std::size_t>(k));
  std::vector<Vec3> out;
  for (const auto& c : cells) out.push_back(map.centroid(c));
  return out;
}

std::map<int, Vec3> reposition(const std::vector<UavNode>& uavs, const std::vector<Vec3>& centroids, double dt,
                               double vmax, const std::set<int>& busy) {
  if (!(vmax > 0.0)) throw InputError("vmax: must be > 0");
  if (!(dt > 0.0)) throw InputError("dt: must be > 0");
  std::map<int, Vec3> out;
  std::vector<const UavNode*> idle;
  for (const auto& u : uavs) {
    if (busy.count(u.id)) {
      out[u.id] = u.velocity;
    } else {
      out[u.id] = Vec3{};
      idle.push_back(&u);
    }
  }
  std::sort(idle.begin(), idle.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  auto target = [&](const UavNode& u, std::size_t c) { return Vec3{centroids[c].x, centroids[c].y, u.position.z}; };
  std::vector<bool> uav_taken(idle.size(), false), cen_taken(centroids.size(), false);
  // Repeatedly take the closest remaining (uav, centroid) pair; scan order
  // breaks ties by uav id, then centroid index.
  for (std::size_t round = 0; round < std::min(idle.size(), centroids.size()); ++round) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bu = 0, bc = 0;
    for (std::size_t i = 0; i < idle.size(); ++i) {
      if (uav_taken[i]) continue;
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (cen_taken[c]) continue;
        const double d = distance(idle[i]->position, target(*idle[i], c));
        if (d < best) {
          best = d;
          bu = i;
          bc = c;
        }
      }
    }
    uav_taken[bu] = cen_taken[bc] = true;
    if (best == 0.0) continue;
    const Vec3 dir = (target(*idle[bu], bc) - idle[bu]->position) * (1.0 / best);
    out[idle[bu]->id] = dir * std::min(vmax, best / dt);
  }
  return out;
}

std::string request_log_to_csv(const RequestLog& log) {
  std::string out = "t,user_id,content_id,x,y,z\n";
  for (const auto& e : log.entries)
    out += format_number(e.t) + "," + std::to_string(e.user_id) + "," + e.content_id + "," +
           format_number(e.position.x) + "," + format_number(e.position.y) + "," + format_number(e.position.z) + "\n";
  return out;
}

RequestLog request_log_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "t,user_id,content_id,x,y,z")
    throw InputError("request csv: expected header t,user_id,content_id,x,y,z");
  RequestLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string at = "request csv line " + std::to_string(lineno);
    std::vector<std::string> col;
    std::istringstream row(line);
    for (std::string f; std::getline(row, f, ',');) col.push_back(f);
    if (col.size() != 6) throw InputError(at + ": expected 6 columns");
    auto num = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (s.empty() || used != s.size()) throw InputError(at + ": malformed number '" + s + "'");
      return v;
    };
    RequestEntry e;
    e.t = num(col[0]);
    const double uid = num(col[1]);
    if (uid != std::floor(uid)) throw InputError(at + ": user_id must be an integer");
    e.user_id = static_cast<int>(uid);
    if (col[2].empty()) throw InputError(at + ": empty content_id");
    e.content_id = col[2];
    e.position = {num(col[3]), num(col[4]), num(col[5])};
    log.entries.push_back(std::move(e));
  }
  log.validate();
  return log;
}

RequestLog load_request_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return request_log_from_csv(ss.str());
}

}  // namespace m3t
