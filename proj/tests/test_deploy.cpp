#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "m3t/deploy.hpp"

using namespace m3t;
using namespace m3t::testing;

namespace {

RequestEntry req(double t, std::string content, Vec3 p = {}, int user = 1) { return {t, user, std::move(content), p}; }

}  // namespace

TEST_CASE("mine_popular_contents counts within the trailing window") {
  RequestLog log;
  for (int k = 0; k < 5; ++k) log.entries.push_back(req(10.0 + k, "x"));
  for (int k = 0; k < 2; ++k) log.entries.push_back(req(20.0 + k, "y"));
  CHECK(mine_popular_contents(log, 100.0, 5) == std::vector<PopularContent>{{"x", 5}, {"y", 2}});
  CHECK(mine_popular_contents(log, 100.0, 1) == std::vector<PopularContent>{{"x", 5}});
  CHECK(mine_popular_contents(RequestLog{}, 10.0, 3).empty());

  // Last entry at 21: a 9 s window keeps (12, 21].
  CHECK(mine_popular_contents(log, 9.0, 5) == std::vector<PopularContent>{{"x", 2}, {"y", 2}});
  CHECK_THROWS_AS(mine_popular_contents(log, 0.0, 5), InputError);
}

TEST_CASE("request centroids average positions per content") {
  RequestLog log;
  log.entries = {req(0, "a", {0, 0, 0}), req(1, "a", {10, 20, 0}), req(2, "b", {5, 5, 5})};
  auto c = request_centroids(log, 100.0);
  CHECK(c["a"] == Vec3{5, 10, 0});
  CHECK(c["b"] == Vec3{5, 5, 5});
}

TEST_CASE("preplace_cache") {
  std::vector<UavNode> uavs{make_uav(1, {0, 0, 100}), make_uav(2, {1000, 0, 100})};
  for (auto& u : uavs) u.cache_capacity = 1e6;

  SUBCASE("singleton") {
    auto r = preplace_cache({uavs[0]}, {{"a", 3}}, {{"a", 5e5}}, {{"a", {0, 0, 0}}});
    CHECK(r.placements == std::vector<Placement>{{1, "a", 5e5}});
    CHECK(r.skipped.empty());
  }
  SUBCASE("oversized content is skipped") {
    auto r = preplace_cache(uavs, {{"a", 3}}, {{"a", 2e6}}, {{"a", {0, 0, 0}}});
    CHECK(r.placements.empty());
    CHECK(r.skipped == std::vector<std::string>{"a"});
  }
  SUBCASE("capacity forces the second content onto the farther UAV") {
    // By hand: a's centroid (100,0,0) is 141 m from UAV 1 and 906 m from
    // UAV 2, so a takes UAV 1 and fills it. b sits even closer to UAV 1
    // (50 m away) but must go to UAV 2.
    auto r = preplace_cache(uavs, {{"a", 9}, {"b", 4}}, {{"a", 1e6}, {"b", 1e6}},
                            {{"a", {100, 0, 0}}, {"b", {0, 0, 50}}});
    CHECK(r.placements == std::vector<Placement>{{1, "a", 1e6}, {2, "b", 1e6}});
  }
  SUBCASE("existing cache contents count against capacity") {
    uavs[0].cache_contents.push_back({"old", 8e5, 1e9});
    auto r = preplace_cache(uavs, {{"a", 1}}, {{"a", 5e5}}, {{"a", {0, 0, 0}}});
    CHECK(r.placements == std::vector<Placement>{{2, "a", 5e5}});
  }
  SUBCASE("unknown size") {
    CHECK_THROWS_AS(preplace_cache(uavs, {{"a", 1}}, {}, {{"a", {0, 0, 0}}}), InputError);
  }
}

TEST_CASE("preplace_cache never exceeds capacity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<UavNode> uavs;
    for (int id = 1; id <= 4; ++id) {
      uavs.push_back(make_uav(id, {1000 * u(rng), 1000 * u(rng), 100}));
      uavs.back().cache_capacity = 3e6 * u(rng);
    }
    std::vector<PopularContent> pop;
    std::map<std::string, double> sizes;
    std::map<std::string, Vec3> where;
    for (int c = 0; c < 10; ++c) {
      const std::string id = "c" + std::to_string(c);
      pop.push_back({id, 10 - c});
      sizes[id] = 1e6 * u(rng);
      where[id] = {1000 * u(rng), 1000 * u(rng), 0};
    }
    auto r = preplace_cache(uavs, pop, sizes, where);
    CHECK(r.placements.size() + r.skipped.size() == pop.size());
    apply_placements(uavs, r, 100.0);
    for (const auto& x : uavs) CHECK(x.cached_bits() <= x.cache_capacity);
  }
}

TEST_CASE("placement CSV") {
  PlacementReport r;
  r.placements = {{1, "a", 1e6}, {2, "b", 250000}};
  CHECK(placements_to_csv(r) == "uav_id,content_id,bits\n1,a,1e+06\n2,b,250000\n");
}

TEST_CASE("detect_hotspots") {
  SUBCASE("single cell") {
    DemandMap m(100.0, 60.0);
    m.add({10, 10, 0});
    m.add({30, 50, 0});
    CHECK(detect_hotspots(m, 1) == std::vector<Vec3>{{20, 30, 0}});
    CHECK(detect_hotspots(m, 3).size() == 1);
  }
  SUBCASE("two equal clusters") {
    DemandMap m(100.0, 60.0);
    for (int k = 0; k < 3; ++k) {
      m.add({550, 550, 0});
      m.add({50, 50, 0});
    }
    CHECK(detect_hotspots(m, 2) == std::vector<Vec3>{{50, 50, 0}, {550, 550, 0}});
  }
  SUBCASE("uniform demand picks the lowest cell index") {
    DemandMap m(100.0, 60.0);
    for (double x : {250.0, 50.0, -150.0}) m.add({x, 50, 0});
    CHECK(detect_hotspots(m, 1) == std::vector<Vec3>{{-150, 50, 0}});
  }
  SUBCASE("no demand") {
    DemandMap m(100.0, 60.0);
    CHECK_THROWS_AS(detect_hotspots(m, 1), InputError);
    m.add({0, 0, 0});
    CHECK_THROWS_AS(detect_hotspots(m, 0), InputError);
  }
}

TEST_CASE("detect_hotspots is permutation-stable") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 80.0);
  std::vector<Vec3> pts;
  for (Vec3 c : {Vec3{0, 0, 0}, Vec3{400, 300, 0}, Vec3{-500, 200, 0}})
    for (int k = 0; k < 40; ++k) pts.push_back({c.x + n(rng), c.y + n(rng), 0});
  DemandMap ref(100.0, 60.0);
  for (auto p : pts) ref.add(p);
  const auto expect = detect_hotspots(ref, 4);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(pts.begin(), pts.end(), rng);
    DemandMap m(100.0, 60.0);
    for (auto p : pts) m.add(p);
    CHECK(detect_hotspots(m, 4) == expect);
  }
}

TEST_CASE("DemandMap::from_log applies the window") {
  RequestLog log;
  log.entries = {req(0, "a", {10, 10, 0}), req(50, "a", {20, 20, 0}), req(100, "a", {30, 30, 0})};
  CHECK(DemandMap::from_log(log, 100.0, 60.0, 100.0).total() == 2);
  CHECK(DemandMap::from_log(log, 100.0, 200.0, 100.0).total() == 3);
}

TEST_CASE("reposition") {
  UavNode a = make_uav(1, {0, 0, 100});
  SUBCASE("speed limited by distance over dt") {
    auto v = reposition({a}, {{100, 0, 0}}, 10.0, 20.0);
    CHECK(v[1] == Vec3{10, 0, 0});
  }
  SUBCASE("speed capped at vmax") {
    auto v = reposition({a}, {{0, 1000, 0}}, 10.0, 20.0);
    CHECK(v[1] == Vec3{0, 20, 0});
  }
  SUBCASE("already there") {
    auto v = reposition({a}, {{0, 0, 0}}, 10.0, 20.0);
    CHECK(v[1] == Vec3{});
  }
  SUBCASE("busy UAV keeps its velocity") {
    a.velocity = {1, 2, 3};
    auto v = reposition({a}, {{500, 0, 0}}, 10.0, 20.0, {1});
    CHECK(v[1] == Vec3{1, 2, 3});
  }
  SUBCASE("greedy nearest pair, extra UAV hovers") {
    UavNode b = make_uav(2, {1000, 0, 100});
    UavNode c = make_uav(3, {5000, 0, 100});
    c.velocity = {5, 0, 0};
    auto v = reposition({a, b, c}, {{1100, 0, 0}, {-100, 0, 0}}, 10.0, 20.0);
    CHECK(v[1] == Vec3{-10, 0, 0});
    CHECK(v[2] == Vec3{10, 0, 0});
    CHECK(v[3] == Vec3{});
  }
  CHECK_THROWS_AS(reposition({a}, {}, 10.0, 0.0), InputError);
}

TEST_CASE("repeated repositioning converges without exceeding vmax") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  std::vector<UavNode> uavs;
  for (int id = 1; id <= 3; ++id) uavs.push_back(make_uav(id, {u(rng), u(rng), 100.0 + id}));
  const std::vector<Vec3> cen{{u(rng), u(rng), 0}, {u(rng), u(rng), 0}, {u(rng), u(rng), 0}};
  const double dt = 5.0, vmax = 15.0;

  auto gap = [&](const std::vector<UavNode>& us) {
    // Sum over UAVs of distance to the nearest centroid at their altitude.
    double s = 0.0;
    for (const auto& x : us) {
      double best = 1e18;
      for (auto c : cen) best = std::min(best, distance(x.position, {c.x, c.y, x.position.z}));
      s += best;
    }
    return s;
  };
  double prev = gap(uavs);
  bool arrived = false;
  for (int step = 0; step < 400 && !arrived; ++step) {
    auto v = reposition(uavs, cen, dt, vmax);
    for (auto& x : uavs) {
      CHECK(v[x.id].norm() <= vmax * (1 + 1e-12));
      x.position = x.position + v[x.id] * dt;
    }
    const double g = gap(uavs);
    arrived = g < 1e-6;
    if (!arrived) CHECK(g < prev);
    prev = g;
  }
  CHECK(arrived);
}

TEST_CASE("request log CSV round-trips") {
  RequestLog log;
  log.entries = {req(0.5, "a", {1, 2, 3}, 7), req(1.5, "b-2", {-4, 5.25, 0}, 8)};
  CHECK(request_log_from_csv(request_log_to_csv(log)).entries == log.entries);
  CHECK_THROWS_AS(request_log_from_csv("t,user_id,content_id,x,y,z\n2,1,a,0,0,0\n1,1,a,0,0,0\n"), InputError);
  CHECK_THROWS_AS(request_log_from_csv("t,user_id,content_id,x,y,z\n2,1,a,0,0\n"), InputError);
  CHECK_THROWS_AS(request_log_from_csv("wrong\n"), InputError);
}
