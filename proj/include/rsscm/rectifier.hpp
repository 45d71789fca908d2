#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsscm/joint_table.hpp"
#include "rsscm/scm.hpp"

namespace rsscm {

/// Subset of latent coordinates. Bit i of index() is universe[i].
class FeatureMask {
 public:
  FeatureMask(VarSet universe, std::vector<bool> selected);
  static FeatureMask from_index(VarSet universe, std::uint64_t index);
  /// Selects exactly the members of `chosen`; all must be in `universe`.
  static FeatureMask of(VarSet universe, const VarSet& chosen);

  const VarSet& universe() const { return universe_; }
  const std::vector<bool>& selected() const { return selected_; }
  std::uint64_t index() const;
  std::size_t count() const;
  FeatureMask complement() const;
  VarSet chosen() const;
  VarSet rest() const { return complement().chosen(); }
  std::string to_string() const;

  bool operator==(const FeatureMask& other) const = default;

 private:
  VarSet universe_;
  std::vector<bool> selected_;
};

inline constexpr std::size_t kMaxUniverse = 20;

struct ObjectiveReport {
  FeatureMask mask;
  double lambda = 0.0;
  double first_term_bits = 0.0;   // I[Y; rest | chosen]
  double second_term_bits = 0.0;  // I[Y; chosen | rest]
  double combined = 0.0;          // first − λ·second
  double anti_collapse_bits = 0.0;  // I[chosen; rest]

  nlohmann::json to_json() const;
};

/// Difference form I[Y; rest | Z] − λ·I[Y; Z | rest]. Components clamped at 0.
ObjectiveReport joint_cmi_objective(const JointTable& table, const FeatureMask& mask,
                                    double lambda, const std::string& label = var::kLabel);

/// H(Y|Z) − λ·H(Y|rest) + (λ−1)·H(Y|universe).
double entropy_form_objective(const JointTable& table, const FeatureMask& mask, double lambda,
                              const std::string& label = var::kLabel);

struct OracleTolerance {
  double zero = 1e-9;      // "= 0" threshold on the first term
  double positive = 1e-3;  // "> 0" threshold on the second term
};

/// Every mask with first term ≤ zero and second term > positive, by mask index.
std::vector<ObjectiveReport> prop2_oracle(const JointTable& table, const VarSet& universe,
                                          const OracleTolerance& tol = {}, double lambda = 0.1);

struct AntiCollapseResult {
  std::optional<FeatureMask> selected;  // empty when every score is ≤ min_score
  double score = 0.0;
  std::vector<double> scores;  // I[Z; rest] per candidate, in input order
};

/// Picks the candidate maximizing I[Z; rest]; ties go to the lowest mask index.
AntiCollapseResult anti_collapse_select(const JointTable& table,
                                        const std::vector<FeatureMask>& candidates,
                                        double min_score = 1e-9);

/// λ·I[Y;E|Z] + β·I[X;Z], with X given as the table variables that encode it.
double iib_objective(const JointTable& table, const FeatureMask& mask, double lambda, double beta,
                     const VarSet& observation);

struct Prop1Result {
  bool premise_present = false;
  bool found = false;
  std::optional<FeatureMask> witness;
  double witness_value = 0.0;
  double reference_value = 0.0;  // objective of mask(Z_c ∪ fake group)
  std::size_t masks_checked = 0;

  nlohmann::json to_json() const;
};

/// Searches size-|causal| masks over causal ∪ fake that intersect the fake
/// group for one whose IIB objective is ≤ the reference. Returns the minimizer.
Prop1Result prop1_witness(const JointTable& table, double lambda, double beta,
                          const VarSet& causal, const VarSet& fake, const VarSet& observation);

/// Exact benchmark joint with Z_c and Z_F split into binary coordinates.
struct DeskInstance {
  BenchmarkConfig config;
  JointTable table;
  VarSet causal;       // c0, c1
  VarSet fake;         // f0, f1, empty when the fake branch is off
  VarSet universe;     // causal then fake
  VarSet observation;  // universe plus Z_s
};

/// K=4 desk benchmark, training environments (1,1) and (0.9,0.9), flip 0.25.
BenchmarkConfig desk_config();
DeskInstance make_desk_instance(bool fake_branch = true, std::optional<Shift> shift = std::nullopt);

}  // namespace rsscm
