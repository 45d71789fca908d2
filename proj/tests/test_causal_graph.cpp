#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "rsscm/causal_graph.hpp"

using namespace rsscm;
using namespace rsscm::var;

namespace {

bool profile_value(const std::vector<ProfileEntry>& profile, const VarSet& given) {
  for (const auto& e : profile) {
    VarSet a = e.query.given, b = given;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a == b) return e.separated;
  }
  throw std::runtime_error("conditioning set missing from profile");
}

}  // namespace

TEST(CausalGraph, PiifHasSixEdgesAndNoSwitchGroup) {
  const CausalGraph g = assumption_graph(AssumptionKind::kPiif);
  EXPECT_EQ(g.active_edges().size(), 6u);
  EXPECT_TRUE(g.switch_groups().empty());
  const std::set<Edge> expected{{kEnv, kCausal}, {kCausal, kLabel}, {kEnv, kSpurious},
                                {kLabel, kSpurious}, {kCausal, kObs}, {kSpurious, kObs}};
  EXPECT_EQ(g.active_edges(), expected);
}

TEST(CausalGraph, FiifEdges) {
  const std::set<Edge> expected{{kEnv, kCausal}, {kCausal, kLabel}, {kCausal, kSpurious},
                                {kEnv, kSpurious}, {kCausal, kObs}, {kSpurious, kObs}};
  EXPECT_EQ(assumption_graph(AssumptionKind::kFiif).active_edges(), expected);
}

TEST(CausalGraph, RsScmInactiveMatchesPiifActiveEdges) {
  const CausalGraph rs = assumption_graph(AssumptionKind::kRsScm, false);
  EXPECT_EQ(rs.active_edges(), assumption_graph(AssumptionKind::kPiif).active_edges());
  EXPECT_TRUE(rs.has_node(kFake));
}

TEST(CausalGraph, RsScmActiveAddsThreeEdges) {
  const CausalGraph rs = assumption_graph(AssumptionKind::kRsScm, true);
  EXPECT_EQ(rs.active_edges().size(), assumption_graph(AssumptionKind::kPiif).active_edges().size() + 3);
  const std::set<Edge> fake{{kEnv, kFake}, {kCausal, kFake}, {kFake, kObs}};
  EXPECT_EQ(rs.switch_groups().at(kFakeGroup), fake);
}

TEST(CausalGraph, DeactivatingGroupKeepsNodes) {
  CausalGraph g = assumption_graph(AssumptionKind::kRsScm, true);
  const auto nodes = g.nodes();
  g.set_group_active(kFakeGroup, false);
  EXPECT_EQ(g.nodes(), nodes);
  EXPECT_FALSE(g.group_active(kFakeGroup));
  EXPECT_TRUE(g.parents(kFake).empty());
}

TEST(CausalGraph, RejectsCyclesAndUnknownNodes) {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  g.add_edge("A", "B");
  EXPECT_THROW(g.add_edge("B", "A"), std::invalid_argument);
  EXPECT_THROW(g.add_edge("A", "C"), std::invalid_argument);
  EXPECT_THROW(g.add_edge("A", "A"), std::invalid_argument);
  EXPECT_THROW(g.add_switch_group("s", {{"A", "Q"}}, true), std::invalid_argument);
  EXPECT_THROW(g.set_group_active("nope", true), std::invalid_argument);
}

TEST(CausalGraph, SwitchGroupCycleOnlyWhenActive) {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  g.add_edge("A", "B");
  EXPECT_THROW(g.add_switch_group("back", {{"B", "A"}}, true), std::invalid_argument);
}

TEST(CausalGraph, TopologicalOrderRespectsEdges) {
  const CausalGraph g = assumption_graph(AssumptionKind::kRsScm, true);
  const auto order = g.topological_order();
  auto pos = [&](const std::string& n) { return std::find(order.begin(), order.end(), n) - order.begin(); };
  for (const auto& [p, c] : g.active_edges()) EXPECT_LT(pos(p), pos(c)) << p << "->" << c;
}

TEST(CausalGraph, JsonRoundTrip) {
  CausalGraph g = assumption_graph(AssumptionKind::kRsScm, false);
  const CausalGraph back = CausalGraph::from_json(g.to_json());
  EXPECT_EQ(back.nodes(), g.nodes());
  EXPECT_EQ(back.active_edges(), g.active_edges());
  EXPECT_EQ(back.group_active(kFakeGroup), false);
}

TEST(CausalGraph, InducedDropsTouchingEdges) {
  const CausalGraph g = assumption_graph(AssumptionKind::kPiif).induced({kEnv, kCausal, kLabel});
  const std::set<Edge> expected{{kEnv, kCausal}, {kCausal, kLabel}};
  EXPECT_EQ(g.active_edges(), expected);
}

TEST(DSeparation, AssumptionGraphQueries) {
  const CausalGraph piif = assumption_graph(AssumptionKind::kPiif);
  const CausalGraph fiif = assumption_graph(AssumptionKind::kFiif);
  EXPECT_TRUE(d_separated(piif, {{kLabel}, {kEnv}, {kCausal}}));
  EXPECT_FALSE(d_separated(piif, {{kLabel}, {kEnv}, {kCausal, kSpurious}}));
  EXPECT_TRUE(d_separated(fiif, {{kLabel}, {kEnv}, {kCausal, kSpurious}}));
}

TEST(DSeparation, DisconnectedNodesAreSeparated) {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  EXPECT_TRUE(d_separated(g, {{"A"}, {"B"}, {}}));
}

TEST(DSeparation, ColliderAndDescendant) {
  CausalGraph g;
  for (const char* n : {"A", "B", "C", "D"}) g.add_node(n);
  g.add_edge("A", "C");
  g.add_edge("B", "C");
  g.add_edge("C", "D");
  EXPECT_TRUE(d_separated(g, {{"A"}, {"B"}, {}}));
  EXPECT_FALSE(d_separated(g, {{"A"}, {"B"}, {"C"}}));
  EXPECT_FALSE(d_separated(g, {{"A"}, {"B"}, {"D"}}));
}

TEST(DSeparation, RejectsBadQueries) {
  const CausalGraph g = assumption_graph(AssumptionKind::kPiif);
  EXPECT_THROW(d_separated(g, {{"Q"}, {kEnv}, {}}), std::invalid_argument);
  EXPECT_THROW(d_separated(g, {{kLabel}, {kEnv}, {kLabel}}), std::invalid_argument);
}

TEST(DSeparation, SymmetricOnRandomQueries) {
  std::mt19937_64 rng(17);
  for (auto kind : {AssumptionKind::kPiif, AssumptionKind::kFiif, AssumptionKind::kRsScm}) {
    const CausalGraph g = assumption_graph(kind, true);
    const std::vector<std::string> nodes(g.nodes().begin(), g.nodes().end());
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<int> role(nodes.size());
      std::uniform_int_distribution<int> pick(0, 3);
      for (auto& r : role) r = pick(rng);
      IndependenceQuery q;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (role[i] == 0) q.left.push_back(nodes[i]);
        if (role[i] == 1) q.right.push_back(nodes[i]);
        if (role[i] == 2) q.given.push_back(nodes[i]);
      }
      if (q.left.empty() || q.right.empty()) continue;
      EXPECT_EQ(d_separated(g, q), d_separated(g, {q.right, q.left, q.given})) << q.to_string();
    }
  }
}

TEST(IndependenceProfile, PiifMarginalDependence) {
  EXPECT_FALSE(profile_value(independence_profile(assumption_graph(AssumptionKind::kPiif)), {}));
}

TEST(IndependenceProfile, RsScmFakeInvariance) {
  const auto p = independence_profile(assumption_graph(AssumptionKind::kRsScm, true));
  EXPECT_TRUE(profile_value(p, {kCausal, kFake}));
  EXPECT_FALSE(profile_value(p, {kFake}));
  EXPECT_TRUE(profile_value(p, {kCausal}));
}

TEST(IndependenceProfile, FiifBullets) {
  const auto p = independence_profile(assumption_graph(AssumptionKind::kFiif));
  EXPECT_FALSE(profile_value(p, {}));
  EXPECT_TRUE(profile_value(p, {kCausal}));
  EXPECT_FALSE(profile_value(p, {kSpurious}));
  EXPECT_TRUE(profile_value(p, {kCausal, kSpurious}));
}

TEST(IndependenceProfile, InactiveSwitchRestrictsToPiif) {
  const auto rs = independence_profile(assumption_graph(AssumptionKind::kRsScm, false));
  const auto piif = independence_profile(assumption_graph(AssumptionKind::kPiif));
  for (const auto& e : piif) EXPECT_EQ(profile_value(rs, e.query.given), e.separated) << e.query.to_string();
}

TEST(CausalGraph, FailedEdgeLeavesGraphUnchanged) {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  g.add_edge("A", "B");
  EXPECT_THROW(g.add_edge("B", "A"), std::invalid_argument);
  EXPECT_EQ(g.active_edges().size(), 1u);
  EXPECT_THROW(g.add_switch_group("back", {{"B", "A"}}, true), std::invalid_argument);
  EXPECT_TRUE(g.switch_groups().empty());
  g.add_switch_group("back", {{"B", "A"}}, false);
  EXPECT_THROW(g.set_group_active("back", true), std::invalid_argument);
  EXPECT_FALSE(g.group_active("back"));
  EXPECT_EQ(g.topological_order().size(), 2u);
}
