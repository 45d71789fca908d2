#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace rsscm {

enum class Verdict { kPass, kFail, kPremiseAbsent };
std::string verdict_name(Verdict v);

struct ClaimResult {
  std::string claim;
  Verdict verdict = Verdict::kFail;
  nlohmann::json detail = nlohmann::json::object();

  bool failed() const { return verdict == Verdict::kFail; }
  nlohmann::json to_json() const;
};

struct VerifyOptions {
  bool fake_branch = true;
  double zero_tol = 1e-9;      // "= 0" threshold
  double positive_tol = 1e-3;  // "> 0" threshold
  std::uint64_t seed = 0;
  int identity_tables = 100;
  int random_instances = 50;
  double faithful_fraction = 0.95;
  double identity_tol = 1e-12;
  double equivalence_tol = 1e-10;

  nlohmann::json to_json() const;
};

// Each claim builds its own instances; none depends on another's output.
ClaimResult claim_dsep_profiles(const VerifyOptions& opt);
ClaimResult claim_dsep_soundness(const VerifyOptions& opt);
ClaimResult claim_information_identities(const VerifyOptions& opt);
ClaimResult claim_fake_invariance(const VerifyOptions& opt);
ClaimResult claim_spuriousness(const VerifyOptions& opt);
ClaimResult claim_objective_equivalence(const VerifyOptions& opt);
ClaimResult claim_prop1_witness(const VerifyOptions& opt);
ClaimResult claim_prop2_oracle(const VerifyOptions& opt);
ClaimResult claim_anti_collapse(const VerifyOptions& opt);
ClaimResult claim_collapse_ordering(const VerifyOptions& opt);

/// Every claim above, once each, in a fixed order.
std::vector<ClaimResult> run_claim_suite(const VerifyOptions& opt);

}  // namespace rsscm
