#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsscm/info_metrics.hpp"
#include "rsscm/rectifier.hpp"

using namespace rsscm;
using namespace rsscm::var;

namespace {

const DeskInstance& desk() {
  static const DeskInstance d = make_desk_instance(true);
  return d;
}

VarSet all_of(const DeskInstance& d) { return d.universe; }

bool contains(const std::vector<ObjectiveReport>& reports, const FeatureMask& m) {
  return std::any_of(reports.begin(), reports.end(), [&](const ObjectiveReport& r) { return r.mask == m; });
}

}  // namespace

TEST(FeatureMask, ComplementAndIndex) {
  const VarSet u{"a", "b", "c"};
  for (std::uint64_t i = 0; i < 8; ++i) {
    const FeatureMask m = FeatureMask::from_index(u, i);
    EXPECT_EQ(m.index(), i);
    EXPECT_EQ(m.complement().complement(), m);
    EXPECT_EQ(m.count() + m.complement().count(), 3u);
    EXPECT_EQ(m.selected().size(), u.size());
  }
  EXPECT_EQ(FeatureMask::of(u, {"c", "a"}).index(), 5u);
  EXPECT_EQ(FeatureMask::of(u, {"a", "c"}).to_string(), "{a,c}");
  EXPECT_THROW(FeatureMask::of(u, {"d"}), std::invalid_argument);
  EXPECT_THROW(FeatureMask(u, {true}), std::invalid_argument);
}

TEST(JointCmiObjective, FullAndEmptyMasks) {
  const DeskInstance& d = desk();
  const double info = mi(d.table, {kLabel}, all_of(d));
  const ObjectiveReport full = joint_cmi_objective(d.table, FeatureMask::of(d.universe, d.universe), 0.1);
  EXPECT_EQ(full.first_term_bits, 0.0);
  EXPECT_NEAR(full.second_term_bits, info, 1e-12);
  const ObjectiveReport none = joint_cmi_objective(d.table, FeatureMask::of(d.universe, {}), 0.1);
  EXPECT_EQ(none.second_term_bits, 0.0);
  EXPECT_NEAR(none.first_term_bits, info, 1e-12);
}

TEST(JointCmiObjective, CausalMaskOnDesk) {
  const DeskInstance& d = desk();
  const ObjectiveReport r = joint_cmi_objective(d.table, FeatureMask::of(d.universe, d.causal), 0.1);
  EXPECT_LT(r.first_term_bits, 1e-9);
  EXPECT_GT(r.second_term_bits, 1e-3);
  EXPECT_NEAR(r.combined, r.first_term_bits - 0.1 * r.second_term_bits, 1e-15);
}

TEST(JointCmiObjective, ComponentsNonnegative) {
  const DeskInstance& d = desk();
  for (std::uint64_t i = 0; i < 16; ++i) {
    const ObjectiveReport r = joint_cmi_objective(d.table, FeatureMask::from_index(d.universe, i), 0.5);
    EXPECT_GE(r.first_term_bits, 0.0);
    EXPECT_GE(r.second_term_bits, 0.0);
    EXPECT_GE(r.anti_collapse_bits, 0.0);
  }
}

TEST(EntropyForm, MatchesJointCmiOnEveryMask) {
  const DeskInstance& d = desk();
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    for (std::uint64_t i = 0; i < 16; ++i) {
      const FeatureMask m = FeatureMask::from_index(d.universe, i);
      EXPECT_LE(std::abs(entropy_form_objective(d.table, m, lambda) - joint_cmi_objective(d.table, m, lambda).combined),
                1e-10)
          << m.to_string() << " lambda " << lambda;
    }
  }
}

TEST(EntropyForm, ConstantVanishesAtLambdaOne) {
  const DeskInstance& d = desk();
  const FeatureMask m = FeatureMask::of(d.universe, d.causal);
  const double expected = conditional_entropy(d.table, {kLabel}, m.chosen()) - conditional_entropy(d.table, {kLabel}, m.rest());
  EXPECT_NEAR(entropy_form_objective(d.table, m, 1.0), expected, 1e-15);
}

TEST(EntropyForm, DirectEvaluationAtLambdaPointOne) {
  const DeskInstance& d = desk();
  const FeatureMask m = FeatureMask::of(d.universe, d.causal);
  const double expected = conditional_entropy(d.table, {kLabel}, d.causal) -
                          0.1 * conditional_entropy(d.table, {kLabel}, d.fake) +
                          (0.1 - 1.0) * conditional_entropy(d.table, {kLabel}, d.universe);
  EXPECT_NEAR(entropy_form_objective(d.table, m, 0.1), expected, 1e-12);
}

TEST(Prop2Oracle, KeepsCausalAndFullMasks) {
  const DeskInstance& d = desk();
  const auto survivors = prop2_oracle(d.table, d.universe);
  EXPECT_TRUE(contains(survivors, FeatureMask::of(d.universe, d.causal)));
  EXPECT_TRUE(contains(survivors, FeatureMask::of(d.universe, d.universe)));
  for (const auto& r : survivors) {
    for (const auto& c : d.causal) EXPECT_TRUE(r.mask.selected()[std::find(d.universe.begin(), d.universe.end(), c) - d.universe.begin()]);
  }
}

// At coordinate granularity any subset of the fake bits can join Z_c: Y is
// independent of the rest given Z_c, and Z_c itself always stays in the
// selection. The oracle therefore returns four masks, not two.
TEST(Prop2Oracle, DeskSurvivorsAtCoordinateGranularity) {
  const DeskInstance& d = desk();
  const auto survivors = prop2_oracle(d.table, d.universe);
  EXPECT_EQ(survivors.size(), 4u);
  const DeskInstance shifted = make_desk_instance(true, Shift::kZfRandom);
  const auto after_shift = prop2_oracle(shifted.table, shifted.universe);
  EXPECT_TRUE(contains(after_shift, FeatureMask::of(shifted.universe, shifted.causal)));
  EXPECT_EQ(after_shift.size(), 4u);
}

TEST(Prop2Oracle, InfiniteToleranceReturnsNothing) {
  const DeskInstance& d = desk();
  EXPECT_TRUE(prop2_oracle(d.table, d.universe, {1e-9, std::numeric_limits<double>::infinity()}).empty());
}

TEST(Prop2Oracle, InvariantToUniversePermutation) {
  const DeskInstance& d = desk();
  auto names = [](const std::vector<ObjectiveReport>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) {
      VarSet c = r.mask.chosen();
      std::sort(c.begin(), c.end());
      std::string s;
      for (const auto& v : c) s += v + ",";
      out.push_back(s);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  VarSet perm = d.universe;
  std::reverse(perm.begin(), perm.end());
  EXPECT_EQ(names(prop2_oracle(d.table, perm)), names(prop2_oracle(d.table, d.universe)));
  std::rotate(perm.begin(), perm.begin() + 1, perm.end());
  EXPECT_EQ(names(prop2_oracle(d.table, perm)), names(prop2_oracle(d.table, d.universe)));
}

TEST(CollapseOrdering, CausalMaskScoresAboveFullMask) {
  const DeskInstance& d = desk();
  EXPECT_GT(joint_cmi_objective(d.table, FeatureMask::of(d.universe, d.causal), 0.1).combined,
            joint_cmi_objective(d.table, FeatureMask::of(d.universe, d.universe), 0.1).combined);
}

TEST(AntiCollapse, PicksCausalMaskOverFullMask) {
  const DeskInstance& d = desk();
  const FeatureMask causal = FeatureMask::of(d.universe, d.causal);
  const AntiCollapseResult r = anti_collapse_select(d.table, {FeatureMask::of(d.universe, d.universe), causal});
  ASSERT_TRUE(r.selected.has_value());
  EXPECT_EQ(*r.selected, causal);
  EXPECT_NEAR(r.score, mi(d.table, d.causal, d.fake), 1e-12);
  EXPECT_GT(r.score, 0.0);
}

TEST(AntiCollapse, PicksCausalMaskAmongAllSurvivors) {
  const DeskInstance& d = desk();
  std::vector<FeatureMask> candidates;
  for (const auto& r : prop2_oracle(d.table, d.universe)) candidates.push_back(r.mask);
  const AntiCollapseResult r = anti_collapse_select(d.table, candidates);
  ASSERT_TRUE(r.selected.has_value());
  EXPECT_EQ(*r.selected, FeatureMask::of(d.universe, d.causal));
}

TEST(AntiCollapse, FullMaskAloneSelectsNothing) {
  const DeskInstance& d = desk();
  const AntiCollapseResult r = anti_collapse_select(d.table, {FeatureMask::of(d.universe, d.universe)});
  EXPECT_FALSE(r.selected.has_value());
  EXPECT_THROW(anti_collapse_select(d.table, {}), std::invalid_argument);
}

TEST(AntiCollapse, TiesGoToLowestIndex) {
  const JointTable t({{"A", 2}, {"B", 2}}, Eigen::Vector4d(0.5, 0, 0, 0.5));
  const VarSet u{"A", "B"};
  const AntiCollapseResult r = anti_collapse_select(t, {FeatureMask::of(u, {"B"}), FeatureMask::of(u, {"A"})});
  ASSERT_TRUE(r.selected.has_value());
  EXPECT_EQ(*r.selected, FeatureMask::of(u, {"A"}));
}

TEST(IibObjective, DegenerateCases) {
  const DeskInstance& d = desk();
  const FeatureMask none = FeatureMask::of(d.universe, {});
  EXPECT_NEAR(iib_objective(d.table, none, 0.7, 3.0, d.observation), 0.7 * mi(d.table, {kLabel}, {kEnv}), 1e-12);
  const FeatureMask causal = FeatureMask::of(d.universe, d.causal);
  EXPECT_NEAR(iib_objective(d.table, causal, 2.0, 0.0, d.observation), 2.0 * cmi(d.table, {kLabel}, {kEnv}, d.causal),
              1e-12);
  const FeatureMask full = FeatureMask::of(d.universe, d.universe);
  EXPECT_LE(iib_objective(d.table, full, 1.0, 0.0, d.observation), 1e-9);
}

TEST(Prop1Witness, FoundAtUnitWeights) {
  const DeskInstance& d = desk();
  const Prop1Result r = prop1_witness(d.table, 1.0, 1.0, d.causal, d.fake, d.observation);
  ASSERT_TRUE(r.found);
  ASSERT_TRUE(r.witness.has_value());
  EXPECT_EQ(r.witness->count(), d.causal.size());
  const VarSet chosen = r.witness->chosen();
  EXPECT_TRUE(std::any_of(chosen.begin(), chosen.end(),
                          [&](const std::string& v) { return std::count(d.fake.begin(), d.fake.end(), v) > 0; }));
  EXPECT_LE(r.witness_value, r.reference_value);
}

TEST(Prop1Witness, FoundForEveryWeightPair) {
  const DeskInstance& d = desk();
  for (double lambda : {0.1, 1.0, 10.0}) {
    for (double beta : {0.1, 1.0, 10.0}) {
      EXPECT_TRUE(prop1_witness(d.table, lambda, beta, d.causal, d.fake, d.observation).found)
          << lambda << "," << beta;
    }
  }
}

TEST(Prop1Witness, ZeroBetaOnlyNeedsVanishingFirstTerm) {
  const DeskInstance& d = desk();
  const Prop1Result r = prop1_witness(d.table, 1.0, 0.0, d.causal, d.fake, d.observation);
  ASSERT_TRUE(r.found);
  EXPECT_LE(r.witness_value, 1e-9);
}

TEST(Prop1Witness, PremiseAbsentWithoutFakeBranch) {
  const DeskInstance off = make_desk_instance(false);
  EXPECT_TRUE(off.fake.empty());
  const Prop1Result r = prop1_witness(off.table, 1.0, 1.0, off.causal, off.fake, off.observation);
  EXPECT_FALSE(r.premise_present);
  EXPECT_FALSE(r.found);
}
