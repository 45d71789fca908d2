#include "rsscm/causal_graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace rsscm {

void CausalGraph::add_node(const std::string& name) {
  if (name.empty()) throw std::invalid_argument("node name must be nonempty");
  nodes_.insert(name);
}

void CausalGraph::add_edge(const std::string& parent, const std::string& child) {
  if (!has_node(parent) || !has_node(child)) {
    throw std::invalid_argument("edge " + parent + "->" + child + " references an undeclared node");
  }
  if (parent == child) throw std::invalid_argument("self loop on " + parent);
  const bool added = edges_.emplace(parent, child).second;
  try {
    check_acyclic();
  } catch (...) {
    if (added) edges_.erase({parent, child});
    throw;
  }
}

void CausalGraph::add_switch_group(const std::string& group, const std::vector<Edge>& edges,
                                   bool active) {
  for (const auto& [p, c] : edges) {
    if (!has_node(p) || !has_node(c)) {
      throw std::invalid_argument("switch group " + group + " references an undeclared node");
    }
  }
  const auto saved_groups = groups_;
  const auto saved_inactive = inactive_groups_;
  groups_[group].insert(edges.begin(), edges.end());
  if (active) {
    inactive_groups_.erase(group);
  } else {
    inactive_groups_.insert(group);
  }
  try {
    check_acyclic();
  } catch (...) {
    groups_ = saved_groups;
    inactive_groups_ = saved_inactive;
    throw;
  }
}

void CausalGraph::set_group_active(const std::string& group, bool active) {
  if (!groups_.count(group)) throw std::invalid_argument("unknown switch group " + group);
  if (active) {
    const bool was_inactive = inactive_groups_.erase(group) > 0;
    try {
      check_acyclic();
    } catch (...) {
      if (was_inactive) inactive_groups_.insert(group);
      throw;
    }
  } else {
    inactive_groups_.insert(group);
  }
}

void CausalGraph::remove_edges_into(const std::string& child) {
  auto drop = [&](std::set<Edge>& edges) {
    std::erase_if(edges, [&](const Edge& e) { return e.second == child; });
  };
  drop(edges_);
  for (auto& [name, group] : groups_) drop(group);
}

bool CausalGraph::group_active(const std::string& group) const {
  return groups_.count(group) && !inactive_groups_.count(group);
}

std::set<Edge> CausalGraph::active_edges() const {
  std::set<Edge> out = edges_;
  for (const auto& [name, group] : groups_) {
    if (!inactive_groups_.count(name)) out.insert(group.begin(), group.end());
  }
  return out;
}

std::vector<std::string> CausalGraph::parents(const std::string& node) const {
  std::vector<std::string> out;
  for (const auto& [p, c] : active_edges()) {
    if (c == node) out.push_back(p);
  }
  return out;
}

std::vector<std::string> CausalGraph::children(const std::string& node) const {
  std::vector<std::string> out;
  for (const auto& [p, c] : active_edges()) {
    if (p == node) out.push_back(c);
  }
  return out;
}

std::vector<std::string> CausalGraph::topological_order() const {
  const auto edges = active_edges();
  std::map<std::string, int> indegree;
  for (const auto& n : nodes_) indegree[n] = 0;
  for (const auto& [p, c] : edges) ++indegree[c];
  std::set<std::string> ready;
  for (const auto& [n, d] : indegree) {
    if (d == 0) ready.insert(n);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    const std::string n = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(n);
    for (const auto& [p, c] : edges) {
      if (p == n && --indegree[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != nodes_.size()) throw std::invalid_argument("graph has a directed cycle");
  return order;
}

void CausalGraph::check_acyclic() const { (void)topological_order(); }

CausalGraph CausalGraph::induced(const std::set<std::string>& keep) const {
  CausalGraph out;
  for (const auto& n : nodes_) {
    if (keep.count(n)) out.add_node(n);
  }
  for (const auto& [p, c] : edges_) {
    if (keep.count(p) && keep.count(c)) out.add_edge(p, c);
  }
  for (const auto& [name, group] : groups_) {
    std::vector<Edge> kept;
    for (const auto& [p, c] : group) {
      if (keep.count(p) && keep.count(c)) kept.emplace_back(p, c);
    }
    out.add_switch_group(name, kept, group_active(name));
  }
  return out;
}

namespace {

nlohmann::json edges_json(const std::set<Edge>& edges) {
  auto arr = nlohmann::json::array();
  for (const auto& [p, c] : edges) arr.push_back({p, c});
  return arr;
}

}  // namespace

nlohmann::json CausalGraph::to_json() const {
  nlohmann::json doc;
  doc["nodes"] = std::vector<std::string>(nodes_.begin(), nodes_.end());
  doc["edges"] = edges_json(edges_);
  doc["switch_groups"] = nlohmann::json::object();
  for (const auto& [name, group] : groups_) doc["switch_groups"][name] = edges_json(group);
  if (!inactive_groups_.empty()) {
    doc["inactive_groups"] =
        std::vector<std::string>(inactive_groups_.begin(), inactive_groups_.end());
  }
  return doc;
}

CausalGraph CausalGraph::from_json(const nlohmann::json& doc) {
  CausalGraph g;
  for (const auto& n : doc.at("nodes")) g.add_node(n.get<std::string>());
  for (const auto& e : doc.at("edges")) {
    g.add_edge(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  }
  std::set<std::string> inactive;
  if (doc.contains("inactive_groups")) {
    for (const auto& n : doc["inactive_groups"]) inactive.insert(n.get<std::string>());
  }
  if (doc.contains("switch_groups")) {
    for (const auto& [name, edges] : doc["switch_groups"].items()) {
      std::vector<Edge> group;
      for (const auto& e : edges) {
        group.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
      }
      g.add_switch_group(name, group, !inactive.count(name));
    }
  }
  return g;
}

std::string IndependenceQuery::to_string() const {
  auto join = [](const VarSet& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + s[i];
    return out;
  };
  return "(" + join(left) + " _||_ " + join(right) + " | " + join(given) + ")";
}

CausalGraph assumption_graph(AssumptionKind kind, bool fake_branch_active) {
  using namespace var;
  CausalGraph g;
  for (const auto& n : {kEnv, kCausal, kLabel, kSpurious, kObs}) g.add_node(n);
  g.add_edge(kEnv, kCausal);
  g.add_edge(kCausal, kLabel);
  g.add_edge(kEnv, kSpurious);
  g.add_edge(kCausal, kObs);
  g.add_edge(kSpurious, kObs);
  switch (kind) {
    case AssumptionKind::kPiif:
      g.add_edge(kLabel, kSpurious);
      break;
    case AssumptionKind::kFiif:
      // Acyclic orientation of the mutual Z_c/Z_s dependence.
      g.add_edge(kCausal, kSpurious);
      break;
    case AssumptionKind::kRsScm:
      g.add_edge(kLabel, kSpurious);
      g.add_node(kFake);
      g.add_switch_group(kFakeGroup, {{kEnv, kFake}, {kCausal, kFake}, {kFake, kObs}},
                         fake_branch_active);
      break;
  }
  return g;
}

namespace {

VarSet dedup(const VarSet& s) {
  VarSet out = s;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void validate_query(const CausalGraph& graph, const VarSet& left, const VarSet& right,
                    const VarSet& given) {
  for (const VarSet* s : {&left, &right, &given}) {
    for (const auto& v : *s) {
      if (!graph.has_node(v)) throw std::invalid_argument("unknown variable " + v);
    }
  }
  auto overlaps = [](const VarSet& a, const VarSet& b) {
    return std::any_of(a.begin(), a.end(),
                       [&](const std::string& v) { return std::count(b.begin(), b.end(), v); });
  };
  if (overlaps(left, right) || overlaps(left, given) || overlaps(right, given)) {
    throw std::invalid_argument("query sets must be pairwise disjoint");
  }
}

}  // namespace

bool d_separated(const CausalGraph& graph, const IndependenceQuery& query) {
  const VarSet left = dedup(query.left);
  const VarSet right = dedup(query.right);
  const VarSet given = dedup(query.given);
  validate_query(graph, left, right, given);
  if (left.empty() || right.empty()) return true;

  const std::set<std::string> observed(given.begin(), given.end());
  std::map<std::string, std::vector<std::string>> parents;
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& [p, c] : graph.active_edges()) {
    children[p].push_back(c);
    parents[c].push_back(p);
  }

  // Observed nodes and their ancestors: colliders here are open.
  std::set<std::string> ancestors_of_observed;
  std::deque<std::string> frontier(given.begin(), given.end());
  while (!frontier.empty()) {
    const std::string n = frontier.front();
    frontier.pop_front();
    if (!ancestors_of_observed.insert(n).second) continue;
    for (const auto& p : parents[n]) frontier.push_back(p);
  }

  enum Dir { kUp, kDown };  // kUp: arrived from a child, kDown: from a parent
  std::set<std::pair<std::string, Dir>> visited;
  std::deque<std::pair<std::string, Dir>> queue;
  for (const auto& v : left) queue.emplace_back(v, kUp);
  const std::set<std::string> targets(right.begin(), right.end());

  while (!queue.empty()) {
    const auto [node, dir] = queue.front();
    queue.pop_front();
    if (!visited.insert({node, dir}).second) continue;
    const bool is_observed = observed.count(node) > 0;
    if (!is_observed && targets.count(node)) return false;
    if (dir == kUp && !is_observed) {
      for (const auto& p : parents[node]) queue.emplace_back(p, kUp);
      for (const auto& c : children[node]) queue.emplace_back(c, kDown);
    } else if (dir == kDown) {
      if (!is_observed) {
        for (const auto& c : children[node]) queue.emplace_back(c, kDown);
      }
      if (ancestors_of_observed.count(node)) {
        for (const auto& p : parents[node]) queue.emplace_back(p, kUp);
      }
    }
  }
  return true;
}

std::vector<ProfileEntry> independence_profile(const CausalGraph& graph) {
  using namespace var;
  if (!graph.has_node(kLabel) || !graph.has_node(kEnv)) {
    throw std::invalid_argument("independence profile needs Y and E nodes");
  }
  VarSet candidates;
  for (const auto& n : {kCausal, kSpurious, kFake}) {
    if (graph.has_node(n)) candidates.push_back(n);
  }
  std::vector<ProfileEntry> out;
  const std::size_t n = candidates.size();
  for (std::size_t size = 0; size <= n; ++size) {
    for (unsigned bits = 0; bits < (1u << n); ++bits) {
      if (static_cast<std::size_t>(__builtin_popcount(bits)) != size) continue;
      IndependenceQuery q{{kLabel}, {kEnv}, {}};
      for (std::size_t i = 0; i < n; ++i) {
        if (bits & (1u << i)) q.given.push_back(candidates[i]);
      }
      out.push_back({q, d_separated(graph, q)});
    }
  }
  return out;
}

}  // namespace rsscm
