#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "rsscm/dataset.hpp"
#include "rsscm/joint_table.hpp"

namespace rsscm {

// All quantities are in bits. Zero-mass conditioning slices contribute zero.

double entropy(const JointTable& table, const VarSet& vars);
/// H(A | C); equals H(A) when C is empty.
double conditional_entropy(const JointTable& table, const VarSet& a, const VarSet& c);

/// I[A;B|C] by direct summation of p log(p p_c / (p_ac p_bc)). Empty A or B gives 0.
double cmi(const JointTable& table, const VarSet& a, const VarSet& b, const VarSet& c = {});
inline double mi(const JointTable& table, const VarSet& a, const VarSet& b) {
  return cmi(table, a, b, {});
}

/// |I[A;B|C] − (I[A;B∪C] − I[A;C])|.
double chain_rule_residual(const JointTable& table, const VarSet& a, const VarSet& b,
                           const VarSet& c);

/// Deterministic relabeling Φ of one variable.
struct PhiMap {
  std::string source;
  std::string target = "Phi";
  int cardinality = 0;
  std::vector<int> mapping;  // mapping[state of source] -> state of Φ
};

JointTable apply_phi(const JointTable& table, const PhiMap& phi);

/// Replaces a variable whose cardinality is 2^k with k binary coordinates, most
/// significant bit first, named `<prefix>0`, `<prefix>1`, ...
JointTable split_into_bits(const JointTable& table, const std::string& var,
                           const std::string& prefix);

/// Plug-in frequency table over dataset columns named E, Y, Z_c, Z_F, Z_s.
JointTable empirical_table(const EnvironmentDataset& dataset, const VarSet& vars);

struct SpuriousnessTolerance {
  double zero = 1e-9;
  double positive = 1e-3;
};

struct SpuriousnessReport {
  double lhs_bits = 0.0;  // I[Y;E|Φ(Z_s)]
  double rhs_bits = 0.0;  // I[Y;E|Z_s]
  double zs_env_given_label = 0.0;       // I[Z_s;E|Y]
  double phi_env_given_label = 0.0;      // I[Φ;E|Y]
  double zs_label_given_phi_env = 0.0;   // I[Z_s;Y|Φ,E]
  bool preconditions_met = false;
  bool holds = false;  // lhs ≥ rhs > 0, evaluated whether or not preconditions hold

  /// Verdict only counts when the preconditions are met.
  bool asserted() const { return preconditions_met; }
  nlohmann::json to_json(const std::string& claim) const;
};

/// Checks the spuriousness inequality I[Y;E|Φ(Z_s)] ≥ I[Y;E|Z_s] > 0 on `table`.
SpuriousnessReport verify_spuriousness(const JointTable& table, const PhiMap& phi,
                                       const SpuriousnessTolerance& tol = {});

}  // namespace rsscm
