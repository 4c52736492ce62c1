#include "m3t/domain.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace m3t {

using nlohmann::json;

double UavNode::cached_bits() const {
  double total = 0.0;
  for (const auto& c : cache_contents) total += c.bits;
  return total;
}

const CachedContent* UavNode::cached(const std::string& content_id, double t) const {
  for (const auto& c : cache_contents)
    if (c.content_id == content_id && c.expiry_time >= t) return &c;
  return nullptr;
}

const UavNode* Scenario::find_uav(int id) const {
  for (const auto& u : uavs)
    if (u.id == id) return &u;
  return nullptr;
}

UavNode* Scenario::find_uav(int id) {
  for (auto& u : uavs)
    if (u.id == id) return &u;
  return nullptr;
}

const UserTerminal* Scenario::find_user(int id) const {
  for (const auto& u : users)
    if (u.id == id) return &u;
  return nullptr;
}

const TaskRequest* Scenario::find_task(int id) const {
  for (const auto& t : tasks)
    if (t.id == id) return &t;
  return nullptr;
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  auto at = [](const char* list, std::size_t i, const char* field) {
    std::ostringstream os;
    os << list << '[' << i << "]." << field << ": ";
    return os.str();
  };

  if (s.uavs.empty()) out.push_back("uavs: at least one UAV required");
  std::set<int> uav_ids;
  for (std::size_t i = 0; i < s.uavs.size(); ++i) {
    const auto& u = s.uavs[i];
    if (!uav_ids.insert(u.id).second) out.push_back(at("uavs", i, "id") + "duplicate id");
    if (!u.position.finite()) out.push_back(at("uavs", i, "pos") + "must be finite");
    if (!u.velocity.finite()) out.push_back(at("uavs", i, "vel") + "must be finite");
    if (!(u.cpu_rate > 0)) out.push_back(at("uavs", i, "cpu_rate") + "must be > 0");
    if (!(u.cache_capacity >= 0)) out.push_back(at("uavs", i, "cache_capacity") + "must be >= 0");
    if (!(u.energy_budget > 0)) out.push_back(at("uavs", i, "energy_budget") + "must be > 0");
    if (!(u.energy_spent >= 0 && u.energy_spent <= u.energy_budget))
      out.push_back(at("uavs", i, "energy_spent") + "must lie in [0, energy_budget]");
    if (!(u.comp_energy_per_cycle >= 0))
      out.push_back(at("uavs", i, "comp_energy_per_cycle") + "must be >= 0");
    if (!(u.tx_power >= 0)) out.push_back(at("uavs", i, "tx_power") + "must be >= 0");
    if (u.cached_bits() > u.cache_capacity)
      out.push_back(at("uavs", i, "cache") + "cached bits exceed cache_capacity");
  }

  std::set<int> user_ids;
  for (std::size_t i = 0; i < s.users.size(); ++i) {
    const auto& u = s.users[i];
    if (!user_ids.insert(u.id).second) out.push_back(at("users", i, "id") + "duplicate id");
    if (!u.position.finite()) out.push_back(at("users", i, "pos") + "must be finite");
    if (!u.velocity.finite()) out.push_back(at("users", i, "vel") + "must be finite");
  }

  std::set<int> task_ids;
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    const auto& t = s.tasks[i];
    if (!task_ids.insert(t.id).second) out.push_back(at("tasks", i, "id") + "duplicate id");
    if (!user_ids.count(t.user_id))
      out.push_back(at("tasks", i, "user") + "references unknown user " + std::to_string(t.user_id));
    if (!(t.arrival_time >= 0)) out.push_back(at("tasks", i, "arrival") + "must be >= 0");
    if (!(t.input_bits > 0)) out.push_back(at("tasks", i, "input_bits") + "must be > 0");
    if (!(t.compute_cycles > 0)) out.push_back(at("tasks", i, "cycles") + "must be > 0");
    if (!(t.output_bits > 0)) out.push_back(at("tasks", i, "output_bits") + "must be > 0");
  }

  const auto& l = s.link_params;
  if (!(l.bandwidth > 0)) out.push_back("link.bandwidth: must be > 0");
  if (!(l.ref_snr_at_1m > 0)) out.push_back("link.ref_snr_at_1m: must be > 0");
  if (!(l.pathloss_exponent >= 2)) out.push_back("link.pathloss_exp: must be >= 2");
  if (!(l.max_range > 0)) out.push_back("link.max_range: must be > 0");
  if (!(l.min_rate >= 0)) out.push_back("link.min_rate: must be >= 0");

  if (s.split_granularity < 1) out.push_back("sim.split_granularity: must be >= 1");
  if (!(s.d2d_setup_latency >= 0)) out.push_back("sim.d2d_setup_latency: must be >= 0");
  if (!(s.reuse_ttl >= 0)) out.push_back("sim.reuse_ttl: must be >= 0");
  if (!(s.horizon >= 0)) out.push_back("sim.horizon: must be >= 0");
  const auto& p = s.sim;
  if (!(p.mobility_period >= 0)) out.push_back("sim.mobility_period: must be >= 0");
  if (!(p.forecast_period >= 0)) out.push_back("sim.forecast_period: must be >= 0");
  if (!(p.redeploy_period >= 0)) out.push_back("sim.redeploy_period: must be >= 0");
  if (!(p.max_speed > 0)) out.push_back("sim.max_speed: must be > 0");
  if (!(p.cell_size > 0)) out.push_back("sim.cell_size: must be > 0");
  if (!(p.demand_window > 0)) out.push_back("sim.demand_window: must be > 0");
  if (p.hotspots < 1) out.push_back("sim.hotspots: must be >= 1");
  if (p.forecast_window < 1) out.push_back("sim.forecast_window: must be >= 1");
  if (p.forecast_horizon < 1) out.push_back("sim.forecast_horizon: must be >= 1");
  if (p.forecast_hidden < 1) out.push_back("sim.forecast_hidden: must be >= 1");
  if (p.forecast_epochs < 0) out.push_back("sim.forecast_epochs: must be >= 0");
  return out;
}

namespace {

// Strict object reader: every key must be consumed, required keys must exist.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(path_ + ": expected an object");
  }

  template <typename T>
  T req(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw InputError(path_ + "." + key + ": missing required field");
    return convert<T>(*it, key);
  }

  template <typename T>
  T opt(const char* key, T fallback) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return fallback;
    return convert<T>(*it, key);
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InputError(path_ + "." + it.key() + ": unknown field");
  }

 private:
  template <typename T>
  T convert(const json& v, const char* key) const {
    try {
      if constexpr (std::is_same_v<T, Vec3>) {
        if (!v.is_array() || v.size() != 3) throw InputError("expected [x,y,z]");
        return Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        return v.get<std::string>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw InputError("expected an integer");
        return v.get<T>();
      } else {
        if (!v.is_number()) throw InputError("expected a number");
        return v.get<T>();
      }
    } catch (const std::exception& e) {
      throw InputError(path_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string indexed(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

const json& require_array(const json* j, const std::string& path) {
  if (!j || !j->is_array()) throw InputError(path + ": expected an array");
  return *j;
}

json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

Scenario scenario_from_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }

  Scenario s;
  Reader top(doc, "scenario");

  const json& uavs = require_array(top.sub("uavs"), "uavs");
  for (std::size_t i = 0; i < uavs.size(); ++i) {
    Reader r(uavs[i], indexed("uavs", i));
    UavNode u;
    u.id = r.req<int>("id");
    u.position = r.req<Vec3>("pos");
    u.velocity = r.opt<Vec3>("vel", {});
    u.cpu_rate = r.req<double>("cpu_rate");
    u.cache_capacity = r.opt<double>("cache_capacity", 0.0);
    u.energy_budget = r.req<double>("energy_budget");
    u.energy_spent = r.opt<double>("energy_spent", 0.0);
    u.comp_energy_per_cycle = r.opt<double>("comp_energy_per_cycle", 1e-9);
    u.tx_power = r.opt<double>("tx_power", 0.5);
    if (const json* cache = r.sub("cache")) {
      const json& arr = require_array(cache, r.field("cache"));
      for (std::size_t k = 0; k < arr.size(); ++k) {
        Reader c(arr[k], indexed(r.field("cache"), k));
        CachedContent cc;
        cc.content_id = c.req<std::string>("content_id");
        cc.bits = c.req<double>("bits");
        cc.expiry_time = c.req<double>("expiry");
        c.finish();
        u.cache_contents.push_back(std::move(cc));
      }
    }
    r.finish();
    s.uavs.push_back(std::move(u));
  }

  if (const json* users = top.sub("users")) {
    const json& arr = require_array(users, "users");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader r(arr[i], indexed("users", i));
      UserTerminal u;
      u.id = r.req<int>("id");
      u.position = r.req<Vec3>("pos");
      u.velocity = r.opt<Vec3>("vel", {});
      r.finish();
      s.users.push_back(u);
    }
  }

  if (const json* tasks = top.sub("tasks")) {
    const json& arr = require_array(tasks, "tasks");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader r(arr[i], indexed("tasks", i));
      TaskRequest t;
      t.id = r.req<int>("id");
      t.user_id = r.req<int>("user");
      t.arrival_time = r.opt<double>("arrival", 0.0);
      t.input_bits = r.req<double>("input_bits");
      t.compute_cycles = r.req<double>("cycles");
      t.output_bits = r.req<double>("output_bits");
      t.content_id = r.opt<std::string>("content_id", "task-" + std::to_string(t.id));
      if (const json* d = r.sub("deadline"); d && !d->is_null()) {
        if (!d->is_number()) throw InputError(r.field("deadline") + ": expected a number");
        t.deadline = d->get<double>();
      }
      r.finish();
      s.tasks.push_back(std::move(t));
    }
  }

  if (const json* link = top.sub("link")) {
    Reader r(*link, "link");
    LinkParams d;
    s.link_params.bandwidth = r.opt<double>("bandwidth", d.bandwidth);
    s.link_params.ref_snr_at_1m = r.opt<double>("ref_snr_at_1m", d.ref_snr_at_1m);
    s.link_params.pathloss_exponent = r.opt<double>("pathloss_exp", d.pathloss_exponent);
    s.link_params.max_range = r.opt<double>("max_range", d.max_range);
    s.link_params.min_rate = r.opt<double>("min_rate", d.min_rate);
    r.finish();
  }

  if (const json* sim = top.sub("sim")) {
    Reader r(*sim, "sim");
    const Scenario d;
    s.horizon = r.opt<double>("horizon", d.horizon);
    s.seed = r.opt<std::uint64_t>("seed", d.seed);
    s.d2d_setup_latency = r.opt<double>("d2d_setup_latency", d.d2d_setup_latency);
    s.split_granularity = r.opt<int>("split_granularity", d.split_granularity);
    s.reuse_ttl = r.opt<double>("reuse_ttl", d.reuse_ttl);
    auto& p = s.sim;
    p.mobility_period = r.opt<double>("mobility_period", p.mobility_period);
    p.forecast_period = r.opt<double>("forecast_period", p.forecast_period);
    p.redeploy_period = r.opt<double>("redeploy_period", p.redeploy_period);
    p.max_speed = r.opt<double>("max_speed", p.max_speed);
    p.cell_size = r.opt<double>("cell_size", p.cell_size);
    p.demand_window = r.opt<double>("demand_window", p.demand_window);
    p.hotspots = r.opt<int>("hotspots", p.hotspots);
    p.forecast_window = r.opt<int>("forecast_window", p.forecast_window);
    p.forecast_horizon = r.opt<int>("forecast_horizon", p.forecast_horizon);
    p.forecast_hidden = r.opt<int>("forecast_hidden", p.forecast_hidden);
    p.forecast_epochs = r.opt<int>("forecast_epochs", p.forecast_epochs);
    r.finish();
  }
  top.finish();

  auto violations = validate_scenario(s);
  if (!violations.empty()) {
    std::string msg = "scenario invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw InputError(msg);
  }
  return s;
}

std::string scenario_to_document(const Scenario& s) {
  json doc;
  doc["uavs"] = json::array();
  for (const auto& u : s.uavs) {
    json j{{"id", u.id},
           {"pos", vec_json(u.position)},
           {"vel", vec_json(u.velocity)},
           {"cpu_rate", u.cpu_rate},
           {"cache_capacity", u.cache_capacity},
           {"energy_budget", u.energy_budget},
           {"energy_spent", u.energy_spent},
           {"comp_energy_per_cycle", u.comp_energy_per_cycle},
           {"tx_power", u.tx_power}};
    if (!u.cache_contents.empty()) {
      json cache = json::array();
      for (const auto& c : u.cache_contents)
        cache.push_back({{"content_id", c.content_id}, {"bits", c.bits}, {"expiry", c.expiry_time}});
      j["cache"] = std::move(cache);
    }
    doc["uavs"].push_back(std::move(j));
  }
  doc["users"] = json::array();
  for (const auto& u : s.users)
    doc["users"].push_back({{"id", u.id}, {"pos", vec_json(u.position)}, {"vel", vec_json(u.velocity)}});
  doc["tasks"] = json::array();
  for (const auto& t : s.tasks) {
    json j{{"id", t.id},
           {"user", t.user_id},
           {"arrival", t.arrival_time},
           {"input_bits", t.input_bits},
           {"cycles", t.compute_cycles},
           {"output_bits", t.output_bits},
           {"content_id", t.content_id}};
    if (t.deadline) j["deadline"] = *t.deadline;
    doc["tasks"].push_back(std::move(j));
  }
  const auto& l = s.link_params;
  doc["link"] = {{"bandwidth", l.bandwidth},
                 {"ref_snr_at_1m", l.ref_snr_at_1m},
                 {"pathloss_exp", l.pathloss_exponent},
                 {"max_range", l.max_range},
                 {"min_rate", l.min_rate}};
  const auto& p = s.sim;
  doc["sim"] = {{"horizon", s.horizon},
                {"seed", s.seed},
                {"d2d_setup_latency", s.d2d_setup_latency},
                {"split_granularity", s.split_granularity},
                {"reuse_ttl", s.reuse_ttl},
                {"mobility_period", p.mobility_period},
                {"forecast_period", p.forecast_period},
                {"redeploy_period", p.redeploy_period},
                {"max_speed", p.max_speed},
                {"cell_size", p.cell_size},
                {"demand_window", p.demand_window},
                {"hotspots", p.hotspots},
                {"forecast_window", p.forecast_window},
                {"forecast_horizon", p.forecast_horizon},
                {"forecast_hidden", p.forecast_hidden},
                {"forecast_epochs", p.forecast_epochs}};
  return doc.dump(2);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_document(buf.str());
}

}  // namespace m3t
