#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace rsscm {

using Edge = std::pair<std::string, std::string>;
using VarSet = std::vector<std::string>;

/// Canonical node names shared by every module.
namespace var {
inline const std::string kEnv = "E";
inline const std::string kLabel = "Y";
inline const std::string kCausal = "Z_c";
inline const std::string kSpurious = "Z_s";
inline const std::string kFake = "Z_F";
inline const std::string kObs = "X";
}  // namespace var

/**
 * Directed acyclic graph over named variables.
 *
 * Edges belonging to a switch group are present in the graph but only
 * participate in queries while the group is active. Deactivating a group
 * removes edges, never nodes.
 */
class CausalGraph {
 public:
  CausalGraph() = default;

  void add_node(const std::string& name);
  void add_edge(const std::string& parent, const std::string& child);
  /// Registers `edges` as switch group `group`; endpoints must already be nodes.
  void add_switch_group(const std::string& group, const std::vector<Edge>& edges,
                        bool active);
  void set_group_active(const std::string& group, bool active);
  /// Drops every edge into `child`, fixed or switchable.
  void remove_edges_into(const std::string& child);

  bool has_node(const std::string& name) const { return nodes_.count(name) > 0; }
  const std::set<std::string>& nodes() const { return nodes_; }
  const std::set<Edge>& fixed_edges() const { return edges_; }
  const std::map<std::string, std::set<Edge>>& switch_groups() const { return groups_; }
  bool group_active(const std::string& group) const;

  /// Edges that currently take part in d-separation and sampling.
  std::set<Edge> active_edges() const;
  std::vector<std::string> parents(const std::string& node) const;
  std::vector<std::string> children(const std::string& node) const;
  /// Kahn order over active edges; ties broken by name.
  std::vector<std::string> topological_order() const;

  /// Subgraph keeping only `keep`; edges touching dropped nodes disappear.
  CausalGraph induced(const std::set<std::string>& keep) const;

  nlohmann::json to_json() const;
  static CausalGraph from_json(const nlohmann::json& doc);

 private:
  void check_acyclic() const;

  std::set<std::string> nodes_;
  std::set<Edge> edges_;
  std::map<std::string, std::set<Edge>> groups_;
  std::set<std::string> inactive_groups_;
};

struct IndependenceQuery {
  VarSet left;
  VarSet right;
  VarSet given;

  std::string to_string() const;
};

enum class AssumptionKind { kPiif, kFiif, kRsScm };

/// Name of the switch group carrying the fake-invariant branch.
inline const std::string kFakeGroup = "fake";

CausalGraph assumption_graph(AssumptionKind kind, bool fake_branch_active = true);

/// Bayes-ball reachability over the active edges.
bool d_separated(const CausalGraph& graph, const IndependenceQuery& query);

struct ProfileEntry {
  IndependenceQuery query;
  bool separated;
};

/// Verdicts for every (Y ⊥ E | C) with C drawn from the latent nodes present.
std::vector<ProfileEntry> independence_profile(const CausalGraph& graph);

}  // namespace rsscm
