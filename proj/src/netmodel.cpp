#include "m3t/netmodel.hpp"

#include <cmath>

namespace m3t {

Vec3 position_at(Vec3 position, Vec3 velocity, double t) {
  if (t == 0.0) return position;
  return position + velocity * t;
}

Vec3 position_at(const UavNode& node, double t) { return position_at(node.position, node.velocity, t); }

Vec3 position_at(const UserTerminal& node, double t) {
  return position_at(node.position, node.velocity, t);
}

double link_rate(Vec3 a, Vec3 b, const LinkParams& p) {
  if (!a.finite() || !b.finite()) throw GeometryError("link_rate: non-finite position");
  const double d = distance(a, b);
  if (d == 0.0) throw GeometryError("link_rate: coincident endpoints");
  if (d > p.max_range) return 0.0;
  const double snr = p.ref_snr_at_1m / std::pow(d, p.pathloss_exponent);
  const double r = p.bandwidth * std::log2(1.0 + snr);
  return r < p.min_rate ? 0.0 : r;
}

void ConnectivityGraph::add_edge(NodeRef a, NodeRef b, double rate) {
  edges_[{a, b}] = rate;
  edges_[{b, a}] = rate;
}

std::optional<double> ConnectivityGraph::rate(NodeRef a, NodeRef b) const {
  auto it = edges_.find({a, b});
  if (it == edges_.end()) return std::nullopt;
  return it->second;
}

ConnectivityGraph connectivity_at(const Scenario& s, double t) {
  ConnectivityGraph g;
  std::vector<std::pair<NodeRef, Vec3>> nodes;
  for (const auto& u : s.uavs) nodes.emplace_back(NodeRef::uav(u.id), position_at(u, t));
  for (const auto& u : s.users) nodes.emplace_back(NodeRef::user(u.id), position_at(u, t));
  for (const auto& [ref, pos] : nodes) g.add_node(ref);

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      // Terminals never talk to each other directly.
      if (nodes[i].first.kind == NodeRef::Kind::user && nodes[j].first.kind == NodeRef::Kind::user)
        continue;
      const double r = link_rate(nodes[i].second, nodes[j].second, s.link_params);
      if (r > 0.0) g.add_edge(nodes[i].first, nodes[j].first, r);
    }
  }
  return g;
}

}  // namespace m3t
