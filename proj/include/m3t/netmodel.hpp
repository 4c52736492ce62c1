#pragma once

#include <compare>
#include <map>
#include <optional>
#include <vector>

#include "m3t/domain.hpp"

namespace m3t {

struct GeometryError : InputError {
  using InputError::InputError;
};

// UAV and user ids live in separate namespaces; a node names one of them.
struct NodeRef {
  enum class Kind { uav, user };
  Kind kind = Kind::uav;
  int id = 0;

  static NodeRef uav(int id) { return {Kind::uav, id}; }
  static NodeRef user(int id) { return {Kind::user, id}; }

  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

// Constant-velocity kinematics.
Vec3 position_at(Vec3 position, Vec3 velocity, double t);
Vec3 position_at(const UavNode& node, double t);
Vec3 position_at(const UserTerminal& node, double t);

// Shannon rate over a distance power-law SNR:
//   r = B log2(1 + snr0 / d^alpha), zero beyond max_range or below min_rate.
// Throws GeometryError for coincident endpoints.
double link_rate(Vec3 a, Vec3 b, const LinkParams& p);

class ConnectivityGraph {
 public:
  void add_edge(NodeRef a, NodeRef b, double rate);
  // Rate of the a-b link, nullopt when the link is down.
  std::optional<double> rate(NodeRef a, NodeRef b) const;
  bool connected(NodeRef a, NodeRef b) const { return rate(a, b).has_value(); }

  const std::vector<NodeRef>& nodes() const { return nodes_; }
  // Ordered (a, b, rate) triples; both directions are stored.
  const std::map<std::pair<NodeRef, NodeRef>, double>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }

  void add_node(NodeRef n) { nodes_.push_back(n); }

 private:
  std::vector<NodeRef> nodes_;
  std::map<std::pair<NodeRef, NodeRef>, double> edges_;
};

ConnectivityGraph connectivity_at(const Scenario& s, double t);

}  // namespace m3t
