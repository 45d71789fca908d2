#include "rsscm/claims.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>

#include "rsscm/causal_graph.hpp"
#include "rsscm/info_metrics.hpp"
#include "rsscm/rectifier.hpp"
#include "rsscm/scm.hpp"

namespace rsscm {

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kPremiseAbsent: return "premise_absent";
  }
  return "";
}

nlohmann::json ClaimResult::to_json() const {
  nlohmann::json doc{{"claim", claim}, {"verdict", verdict_name(verdict)}};
  doc["detail"] = detail;
  return doc;
}

nlohmann::json VerifyOptions::to_json() const {
  return {{"fake_branch", fake_branch},
          {"zero_tol", zero_tol},
          {"positive_tol", positive_tol},
          {"seed", seed},
          {"identity_tables", identity_tables},
          {"random_instances", random_instances},
          {"faithful_fraction", faithful_fraction},
          {"identity_tol", identity_tol},
          {"equivalence_tol", equivalence_tol}};
}

namespace {

Verdict verdict_of(bool ok) { return ok ? Verdict::kPass : Verdict::kFail; }

std::string kind_name(AssumptionKind k) {
  switch (k) {
    case AssumptionKind::kPiif: return "piif";
    case AssumptionKind::kFiif: return "fiif";
    case AssumptionKind::kRsScm: return "rs_scm";
  }
  return "";
}

std::string given_key(const VarSet& given) {
  std::string s = "{";
  for (std::size_t i = 0; i < given.size(); ++i) s += (i ? "," : "") + given[i];
  return s + "}";
}

nlohmann::json profile_json(const std::vector<ProfileEntry>& profile) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& e : profile) doc[given_key(e.query.given)] = e.separated;
  return doc;
}

ClaimResult premise_absent(const std::string& claim, const std::string& why) {
  return {claim, Verdict::kPremiseAbsent, {{"reason", why}}};
}

const char* kNoFake = "fake branch deactivated";

std::string number_key(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

// ------------------------------------------------------------ d-separation

ClaimResult claim_dsep_profiles(const VerifyOptions& opt) {
  using namespace var;
  // Y ⊥ E | C verdicts the assumption diagrams must reproduce.
  const std::map<std::string, bool> piif{
      {"{}", false}, {"{Z_c}", true}, {"{Z_s}", false}, {"{Z_c,Z_s}", false}};
  const std::map<std::string, bool> fiif{
      {"{}", false}, {"{Z_c}", true}, {"{Z_s}", false}, {"{Z_c,Z_s}", true}};
  const std::map<std::string, bool> rs_fake{
      {"{Z_c,Z_F}", true}, {"{Z_F}", false}, {"{Z_c}", true}};

  ClaimResult r{"dsep_profiles", Verdict::kPass, {}};
  bool ok = true;
  auto check = [&](const std::string& name, const CausalGraph& g,
                   const std::map<std::string, bool>& expected) {
    const auto profile = independence_profile(g);
    const nlohmann::json got = profile_json(profile);
    nlohmann::json mismatches = nlohmann::json::array();
    for (const auto& [key, want] : expected) {
      if (!got.contains(key) || got[key].get<bool>() != want) mismatches.push_back(key);
    }
    ok = ok && mismatches.empty();
    r.detail[name] = {{"profile", got}, {"mismatches", mismatches}};
  };
  check("piif", assumption_graph(AssumptionKind::kPiif), piif);
  check("fiif", assumption_graph(AssumptionKind::kFiif), fiif);
  const CausalGraph rs = assumption_graph(AssumptionKind::kRsScm, opt.fake_branch);
  if (opt.fake_branch) {
    check("rs_scm", rs, rs_fake);
  } else {
    // Without the switch group the profile must match PIIF's exactly.
    std::map<std::string, bool> expected;
    for (const auto& e : independence_profile(assumption_graph(AssumptionKind::kPiif))) {
      expected[given_key(e.query.given)] = e.separated;
    }
    check("rs_scm", rs, expected);
  }
  r.verdict = verdict_of(ok);
  return r;
}

ClaimResult claim_dsep_soundness(const VerifyOptions& opt) {
  ClaimResult r{"dsep_soundness", Verdict::kPass, {}};
  std::mt19937_64 rng(derive_seed(opt.seed, "verify/soundness"));
  bool ok = true;
  for (AssumptionKind kind : {AssumptionKind::kPiif, AssumptionKind::kFiif, AssumptionKind::kRsScm}) {
    const CausalGraph g = assumption_graph(kind, opt.fake_branch);
    std::map<std::string, int> supports;
    for (const auto& n : g.nodes()) supports[n] = n == var::kObs ? 2 : 3;
    const auto profile = independence_profile(g);
    std::vector<int> positive(profile.size(), 0);
    double max_separated = 0.0;
    for (int i = 0; i < opt.random_instances; ++i) {
      const DiscreteScm scm = random_parameterization(g, supports, rng);
      const JointTable joint = exact_joint(scm, true);
      for (std::size_t q = 0; q < profile.size(); ++q) {
        const auto& query = profile[q].query;
        const double v = cmi(joint, query.left, query.right, query.given);
        if (profile[q].separated) {
          max_separated = std::max(max_separated, v);
        } else if (v > opt.positive_tol) {
          ++positive[q];
        }
      }
    }
    double min_fraction = 1.0;
    nlohmann::json connected = nlohmann::json::object();
    for (std::size_t q = 0; q < profile.size(); ++q) {
      if (profile[q].separated) continue;
      const double frac = static_cast<double>(positive[q]) / opt.random_instances;
      connected[given_key(profile[q].query.given)] = frac;
      min_fraction = std::min(min_fraction, frac);
    }
    const bool kind_ok = max_separated < opt.zero_tol && min_fraction >= opt.faithful_fraction;
    ok = ok && kind_ok;
    r.detail[kind_name(kind)] = {{"instances", opt.random_instances},
                                 {"max_separated_cmi_bits", max_separated},
                                 {"connected_positive_fraction", connected},
                                 {"min_connected_fraction", min_fraction},
                                 {"holds", kind_ok}};
  }
  r.verdict = verdict_of(ok);
  return r;
}

// ------------------------------------------------------------ identities

namespace {

JointTable random_table(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nvars(3, 5), card(2, 4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<std::string> names{var::kLabel, var::kEnv, var::kSpurious, "V3", "V4"};
  std::vector<TableVariable> vars;
  const int n = nvars(rng);
  Eigen::Index cells = 1;
  for (int i = 0; i < n; ++i) {
    vars.push_back({names[i], card(rng)});
    cells *= vars.back().cardinality;
  }
  Eigen::VectorXd w(cells);
  // Some empty cells so zero-mass conditioning slices get exercised.
  for (Eigen::Index c = 0; c < cells; ++c) w(c) = unif(rng) < 0.2 ? 0.0 : -std::log(unif(rng) + 1e-300);
  if (w.sum() == 0.0) w(0) = 1.0;
  return JointTable::from_weights(std::move(vars), std::move(w));
}

PhiMap random_phi(const JointTable& t, std::mt19937_64& rng) {
  const int k = t.cardinality(var::kSpurious);
  std::uniform_int_distribution<int> out_card(1, k);
  PhiMap phi{var::kSpurious, "Phi", out_card(rng), {}};
  std::uniform_int_distribution<int> pick(0, phi.cardinality - 1);
  for (int s = 0; s < k; ++s) phi.mapping.push_back(pick(rng));
  return phi;
}

}  // namespace

ClaimResult claim_information_identities(const VerifyOptions& opt) {
  const VarSet Y{var::kLabel}, E{var::kEnv}, S{var::kSpurious}, F{"Phi"};
  std::mt19937_64 rng(derive_seed(opt.seed, "verify/identities"));
  double chain = 0.0, decomposition = 0.0, spur_chain = 0.0, spur_chain_env = 0.0, stated = 0.0;
  for (int i = 0; i < opt.identity_tables; ++i) {
    const JointTable base = random_table(rng);
    // Chain rule on a random partition with nonempty A and B.
    const auto names = base.names();
    std::vector<int> part(names.size());
    std::uniform_int_distribution<int> pick(0, 2);
    for (auto& p : part) p = pick(rng);
    part[0] = 0;
    part[1] = 1;
    VarSet a, b, c;
    for (std::size_t k = 0; k < names.size(); ++k) (part[k] == 0 ? a : part[k] == 1 ? b : c).push_back(names[k]);
    chain = std::max(chain, chain_rule_residual(base, a, b, c));
    chain = std::max(chain, chain_rule_residual(base, Y, E, S));

    const JointTable t = apply_phi(base, random_phi(base, rng));
    // I[Y;E|Φ] = I[Y;E] + I[Y;Φ|E] − I[Y;Φ]
    decomposition = std::max(decomposition, std::abs(cmi(t, Y, E, F) - (mi(t, Y, E) + cmi(t, Y, F, E) - mi(t, Y, F))));
    // I[Z_s;Φ] − I[Z_s;Y] = I[Z_s;Φ|Y] − I[Z_s;Y|Φ], and the same given E.
    spur_chain = std::max(spur_chain, std::abs((mi(t, S, F) - mi(t, S, Y)) - (cmi(t, S, F, Y) - cmi(t, S, Y, F))));
    spur_chain_env = std::max(
        spur_chain_env, std::abs((cmi(t, S, F, E) - cmi(t, S, Y, E)) -
                                  (cmi(t, S, F, {var::kLabel, var::kEnv}) - cmi(t, S, Y, {"Phi", var::kEnv}))));
    // Form with I[Y;Φ] − I[Y;Z_s] on the left; reported only.
    stated = std::max(stated, std::abs((mi(t, Y, F) - mi(t, Y, S)) - (cmi(t, S, F, Y) - cmi(t, S, Y, F))));
  }
  const double worst = std::max({chain, decomposition, spur_chain, spur_chain_env});
  ClaimResult r{"information_identities", verdict_of(worst <= opt.identity_tol), {}};
  r.detail = {{"tables", opt.identity_tables},
              {"tolerance", opt.identity_tol},
              {"chain_rule_max_residual", chain},
              {"phi_decomposition_max_residual", decomposition},
              {"spurious_chain_max_residual", spur_chain},
              {"spurious_chain_given_env_max_residual", spur_chain_env},
              {"label_form_max_residual", stated}};
  return r;
}

// ------------------------------------------------------------ benchmark claims

ClaimResult claim_fake_invariance(const VerifyOptions& opt) {
  if (!opt.fake_branch) return premise_absent("fake_invariance", kNoFake);
  using namespace var;
  const JointTable t = exact_joint(make_rs_benchmark(desk_config()), true);
  const double given_both = cmi(t, {kLabel}, {kEnv}, {kCausal, kFake});
  const double given_causal = cmi(t, {kLabel}, {kEnv}, {kCausal});
  const double given_fake = cmi(t, {kLabel}, {kEnv}, {kFake});
  const double given_spurious = cmi(t, {kLabel}, {kEnv}, {kSpurious});
  const bool ok = given_both < opt.zero_tol && given_causal < opt.zero_tol && given_fake > opt.positive_tol &&
                  given_spurious > opt.positive_tol;
  return {"fake_invariance",
          verdict_of(ok),
          {{"cmi_y_e_given_zc_zf_bits", given_both},
           {"cmi_y_e_given_zc_bits", given_causal},
           {"cmi_y_e_given_zf_bits", given_fake},
           {"cmi_y_e_given_zs_bits", given_spurious}}};
}

namespace {

/// Random RS-SCM whose Z_s = (a, b) has a ← Y and b ← E; Φ reads a.
JointTable spuriousness_instance(std::mt19937_64& rng) {
  using namespace var;
  CausalGraph g;
  for (const auto& n : {kEnv, kCausal, kFake, kLabel, std::string("S_a"), std::string("S_b")}) g.add_node(n);
  g.add_edge(kEnv, kCausal);
  g.add_edge(kCausal, kLabel);
  g.add_edge(kEnv, kFake);
  g.add_edge(kCausal, kFake);
  g.add_edge(kLabel, "S_a");
  g.add_edge(kEnv, "S_b");
  std::map<std::string, int> supports;
  for (const auto& n : g.nodes()) supports[n] = 3;
  const JointTable joint = exact_joint(random_parameterization(g, supports, rng), true);
  const int ia = joint.index_of("S_a"), ib = joint.index_of("S_b");
  const JointTable with_zs =
      joint.with_derived(kSpurious, 9, [&](const std::vector<int>& s) { return s[ia] * 3 + s[ib]; });
  return with_zs.marginal({kEnv, kCausal, kLabel, kSpurious});
}

}  // namespace

ClaimResult claim_spuriousness(const VerifyOptions& opt) {
  std::mt19937_64 rng(derive_seed(opt.seed, "verify/spuriousness"));
  const PhiMap phi{var::kSpurious, "Phi", 3, {0, 0, 0, 1, 1, 1, 2, 2, 2}};
  const SpuriousnessTolerance tol{opt.zero_tol, opt.positive_tol};
  int asserted = 0, held = 0, attempts = 0;
  double min_margin = INFINITY, min_rhs = INFINITY, max_markov = 0.0;
  const int max_attempts = 10 * opt.random_instances;
  while (asserted < opt.random_instances && attempts < max_attempts) {
    ++attempts;
    const SpuriousnessReport rep = verify_spuriousness(spuriousness_instance(rng), phi, tol);
    if (!rep.asserted()) continue;
    ++asserted;
    if (rep.holds) ++held;
    min_margin = std::min(min_margin, rep.lhs_bits - rep.rhs_bits);
    min_rhs = std::min(min_rhs, rep.rhs_bits);
    max_markov = std::max(max_markov, rep.zs_label_given_phi_env);
  }
  const bool ok = asserted == opt.random_instances && held == asserted;
  ClaimResult r{"spuriousness_bound", verdict_of(ok), {}};
  r.detail = {{"instances_asserted", asserted},
              {"instances_drawn", attempts},
              {"instances_holding", held},
              {"min_lhs_minus_rhs_bits", asserted ? min_margin : 0.0},
              {"min_rhs_bits", asserted ? min_rhs : 0.0},
              {"max_zs_label_given_phi_env_bits", max_markov}};
  return r;
}

ClaimResult claim_objective_equivalence(const VerifyOptions& opt) {
  const DeskInstance d = make_desk_instance(opt.fake_branch);
  const std::uint64_t n = std::uint64_t{1} << d.universe.size();
  double worst = 0.0;
  nlohmann::json per_lambda = nlohmann::json::object();
  for (double lambda : {0.1, 1.0, 10.0}) {
    double w = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const FeatureMask m = FeatureMask::from_index(d.universe, i);
      w = std::max(w, std::abs(entropy_form_objective(d.table, m, lambda) -
                               joint_cmi_objective(d.table, m, lambda).combined));
    }
    per_lambda[number_key(lambda)] = w;
    worst = std::max(worst, w);
  }
  return {"objective_equivalence",
          verdict_of(worst <= opt.equivalence_tol),
          {{"masks", n}, {"max_abs_difference", worst}, {"per_lambda", per_lambda},
           {"tolerance", opt.equivalence_tol}}};
}

ClaimResult claim_prop1_witness(const VerifyOptions& opt) {
  if (!opt.fake_branch) return premise_absent("prop1_witness", kNoFake);
  const DeskInstance d = make_desk_instance(true);
  bool ok = true;
  nlohmann::json runs = nlohmann::json::array();
  for (double lambda : {0.1, 1.0, 10.0}) {
    for (double beta : {0.1, 1.0, 10.0}) {
      const Prop1Result p = prop1_witness(d.table, lambda, beta, d.causal, d.fake, d.observation);
      ok = ok && p.found;
      nlohmann::json row = p.to_json();
      row["lambda"] = lambda;
      row["beta"] = beta;
      runs.push_back(row);
    }
  }
  return {"prop1_witness", verdict_of(ok), {{"runs", runs}}};
}

namespace {

struct Prop2Outcome {
  std::vector<ObjectiveReport> survivors;
  FeatureMask causal_mask;
  FeatureMask full_mask;
};

Prop2Outcome prop2_run(const DeskInstance& d, const VerifyOptions& opt) {
  return {prop2_oracle(d.table, d.universe, {opt.zero_tol, opt.positive_tol}),
          FeatureMask::of(d.universe, d.causal), FeatureMask::of(d.universe, d.universe)};
}

nlohmann::json mask_list(const std::vector<ObjectiveReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) out.push_back(r.mask.to_string());
  return out;
}

}  // namespace

ClaimResult claim_prop2_oracle(const VerifyOptions& opt) {
  if (!opt.fake_branch) return premise_absent("prop2_oracle", kNoFake);
  const DeskInstance d = make_desk_instance(true);
  const Prop2Outcome o = prop2_run(d, opt);
  bool has_causal = false, has_full = false, all_contain_causal = true;
  for (const auto& s : o.survivors) {
    has_causal = has_causal || s.mask == o.causal_mask;
    has_full = has_full || s.mask == o.full_mask;
    for (std::size_t i = 0; i < d.causal.size(); ++i) all_contain_causal = all_contain_causal && s.mask.selected()[i];
  }
  const bool exact = o.survivors.size() == 2 && has_causal && has_full;
  const DeskInstance shifted = make_desk_instance(true, Shift::kZfRandom);
  ClaimResult r{"prop2_oracle", verdict_of(has_causal && has_full && all_contain_causal), {}};
  r.detail = {{"survivors", mask_list(o.survivors)},
              {"contains_causal_and_full", has_causal && has_full},
              {"all_survivors_contain_causal", all_contain_causal},
              {"exact_match", exact},
              {"zf_shift_survivors", mask_list(prop2_run(shifted, opt).survivors)}};
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& s : o.survivors) reports.push_back(s.to_json());
  r.detail["reports"] = reports;
  return r;
}

ClaimResult claim_anti_collapse(const VerifyOptions& opt) {
  if (!opt.fake_branch) return premise_absent("anti_collapse", kNoFake);
  const DeskInstance d = make_desk_instance(true);
  const Prop2Outcome o = prop2_run(d, opt);
  std::vector<FeatureMask> candidates;
  for (const auto& s : o.survivors) candidates.push_back(s.mask);
  nlohmann::json detail{{"candidates", mask_list(o.survivors)}};
  if (candidates.empty()) {
    detail["selected"] = nullptr;
    return {"anti_collapse", Verdict::kFail, detail};
  }
  const AntiCollapseResult sel = anti_collapse_select(d.table, candidates);
  detail["scores_bits"] = sel.scores;
  detail["selected"] = sel.selected ? nlohmann::json(sel.selected->to_string()) : nlohmann::json(nullptr);
  return {"anti_collapse", verdict_of(sel.selected && *sel.selected == o.causal_mask), detail};
}

ClaimResult claim_collapse_ordering(const VerifyOptions& opt) {
  if (!opt.fake_branch) return premise_absent("collapse_ordering", kNoFake);
  const DeskInstance d = make_desk_instance(true);
  const double lambda = 0.1;
  const ObjectiveReport causal = joint_cmi_objective(d.table, FeatureMask::of(d.universe, d.causal), lambda);
  const ObjectiveReport full = joint_cmi_objective(d.table, FeatureMask::of(d.universe, d.universe), lambda);
  return {"collapse_ordering",
          verdict_of(causal.combined > full.combined),
          {{"lambda", lambda}, {"causal_objective", causal.combined}, {"full_objective", full.combined}}};
}

std::vector<ClaimResult> run_claim_suite(const VerifyOptions& opt) {
  return {claim_dsep_profiles(opt),         claim_dsep_soundness(opt),   claim_information_identities(opt),
          claim_fake_invariance(opt),       claim_spuriousness(opt),     claim_objective_equivalence(opt),
          claim_prop1_witness(opt),         claim_prop2_oracle(opt),     claim_anti_collapse(opt),
          claim_collapse_ordering(opt)};
}

}  // namespace rsscm
