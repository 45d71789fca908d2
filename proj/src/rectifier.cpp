#include "rsscm/rectifier.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <stdexcept>

#include "rsscm/info_metrics.hpp"

namespace rsscm {

FeatureMask::FeatureMask(VarSet universe, std::vector<bool> selected)
    : universe_(std::move(universe)), selected_(std::move(selected)) {
  if (universe_.size() != selected_.size()) throw std::invalid_argument("mask width differs from universe");
}

FeatureMask FeatureMask::from_index(VarSet universe, std::uint64_t index) {
  if (universe.size() > 63) throw std::invalid_argument("universe too large for an index");
  std::vector<bool> bits(universe.size());
  for (std::size_t i = 0; i < universe.size(); ++i) bits[i] = (index >> i) & 1u;
  return FeatureMask(std::move(universe), std::move(bits));
}

FeatureMask FeatureMask::of(VarSet universe, const VarSet& chosen) {
  std::vector<bool> bits(universe.size(), false);
  for (const auto& c : chosen) {
    auto it = std::find(universe.begin(), universe.end(), c);
    if (it == universe.end()) throw std::invalid_argument(c + " is not in the mask universe");
    bits[it - universe.begin()] = true;
  }
  return FeatureMask(std::move(universe), std::move(bits));
}

std::uint64_t FeatureMask::index() const {
  std::uint64_t out = 0;
  for (std::size_t i = 0; i < selected_.size(); ++i) {
    if (selected_[i]) out |= std::uint64_t{1} << i;
  }
  return out;
}

std::size_t FeatureMask::count() const {
  return static_cast<std::size_t>(std::count(selected_.begin(), selected_.end(), true));
}

FeatureMask FeatureMask::complement() const {
  std::vector<bool> flipped(selected_.size());
  for (std::size_t i = 0; i < selected_.size(); ++i) flipped[i] = !selected_[i];
  return FeatureMask(universe_, std::move(flipped));
}

VarSet FeatureMask::chosen() const {
  VarSet out;
  for (std::size_t i = 0; i < universe_.size(); ++i) {
    if (selected_[i]) out.push_back(universe_[i]);
  }
  return out;
}

std::string FeatureMask::to_string() const {
  std::string out = "{";
  const VarSet c = chosen();
  for (std::size_t i = 0; i < c.size(); ++i) out += (i ? "," : "") + c[i];
  return out + "}";
}

nlohmann::json ObjectiveReport::to_json() const {
  return {{"mask_index", mask.index()},
          {"mask", mask.to_string()},
          {"lambda", lambda},
          {"first_term_bits", first_term_bits},
          {"second_term_bits", second_term_bits},
          {"combined", combined},
          {"anti_collapse_bits", anti_collapse_bits}};
}

namespace {

void check_universe(const JointTable& table, const VarSet& universe, const std::string& label) {
  for (const auto& v : universe) {
    if (!table.has(v)) throw std::invalid_argument("coordinate " + v + " missing from table");
  }
  if (!table.has(label)) throw std::invalid_argument("label " + label + " missing from table");
}

}  // namespace

ObjectiveReport joint_cmi_objective(const JointTable& table, const FeatureMask& mask,
                                    double lambda, const std::string& label) {
  check_universe(table, mask.universe(), label);
  ObjectiveReport r{mask};
  r.lambda = lambda;
  const VarSet z = mask.chosen();
  const VarSet rest = mask.rest();
  r.first_term_bits = std::max(0.0, cmi(table, {label}, rest, z));
  r.second_term_bits = std::max(0.0, cmi(table, {label}, z, rest));
  r.combined = r.first_term_bits - lambda * r.second_term_bits;
  r.anti_collapse_bits = std::max(0.0, mi(table, z, rest));
  return r;
}

double entropy_form_objective(const JointTable& table, const FeatureMask& mask, double lambda,
                              const std::string& label) {
  check_universe(table, mask.universe(), label);
  const VarSet y{label};
  return conditional_entropy(table, y, mask.chosen()) -
         lambda * conditional_entropy(table, y, mask.rest()) +
         (lambda - 1.0) * conditional_entropy(table, y, mask.universe());
}

std::vector<ObjectiveReport> prop2_oracle(const JointTable& table, const VarSet& universe,
                                          const OracleTolerance& tol, double lambda) {
  if (universe.size() > kMaxUniverse) {
    throw std::length_error("mask enumeration limited to " + std::to_string(kMaxUniverse) + " coordinates");
  }
  std::vector<ObjectiveReport> out;
  const std::uint64_t total = std::uint64_t{1} << universe.size();
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    ObjectiveReport r = joint_cmi_objective(table, FeatureMask::from_index(universe, idx), lambda);
    if (r.first_term_bits <= tol.zero && r.second_term_bits > tol.positive) out.push_back(std::move(r));
  }
  return out;
}

AntiCollapseResult anti_collapse_select(const JointTable& table,
                                        const std::vector<FeatureMask>& candidates,
                                        double min_score) {
  if (candidates.empty()) throw std::invalid_argument("anti-collapse selection needs candidates");
  AntiCollapseResult out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = std::max(0.0, mi(table, candidates[i].chosen(), candidates[i].rest()));
    out.scores.push_back(s);
    if (s <= min_score) continue;
    if (!best || s > out.scores[*best] ||
        (s == out.scores[*best] && candidates[i].index() < candidates[*best].index())) {
      best = i;
    }
  }
  if (best) {
    out.selected = candidates[*best];
    out.score = out.scores[*best];
  }
  return out;
}

double iib_objective(const JointTable& table, const FeatureMask& mask, double lambda, double beta,
                     const VarSet& observation) {
  if (!table.has(var::kEnv)) throw std::invalid_argument("IIB objective needs E");
  if (observation.empty()) throw std::invalid_argument("IIB objective needs X coordinates");
  for (const auto& v : observation) {
    if (!table.has(v)) throw std::invalid_argument("X coordinate " + v + " missing from table");
  }
  const VarSet z = mask.chosen();
  for (const auto& v : z) {
    if (std::find(observation.begin(), observation.end(), v) == observation.end()) {
      throw std::invalid_argument(v + " is not an X coordinate");
    }
  }
  // Z is a sub-tuple of X, so I[X;Z] reduces to H(Z).
  const double compression = entropy(table, z);
  return lambda * std::max(0.0, cmi(table, {var::kLabel}, {var::kEnv}, z)) + beta * compression;
}

nlohmann::json Prop1Result::to_json() const {
  return {{"premise_present", premise_present},
          {"found", found},
          {"witness", witness ? witness->to_string() : ""},
          {"witness_value", witness_value},
          {"reference_value", reference_value},
          {"masks_checked", masks_checked}};
}

Prop1Result prop1_witness(const JointTable& table, double lambda, double beta,
                          const VarSet& causal, const VarSet& fake, const VarSet& observation) {
  Prop1Result out;
  out.premise_present = !fake.empty();
  if (!out.premise_present) return out;
  VarSet universe = causal;
  universe.insert(universe.end(), fake.begin(), fake.end());
  if (universe.size() > kMaxUniverse) throw std::length_error("witness search universe too large");

  out.reference_value = iib_objective(table, FeatureMask::of(universe, universe), lambda, beta, observation);
  const std::uint64_t fake_bits = ((std::uint64_t{1} << fake.size()) - 1) << causal.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t idx = 0; idx < (std::uint64_t{1} << universe.size()); ++idx) {
    if (static_cast<std::size_t>(std::popcount(idx)) != causal.size() || !(idx & fake_bits)) continue;
    ++out.masks_checked;
    const FeatureMask m = FeatureMask::from_index(universe, idx);
    const double v = iib_objective(table, m, lambda, beta, observation);
    if (v < best) {
      best = v;
      out.witness = m;
    }
  }
  out.witness_value = best;
  // Relative slack absorbs rounding in the entropy sums.
  out.found = out.witness && best <= out.reference_value + 1e-12 * (1.0 + std::abs(out.reference_value));
  return out;
}

BenchmarkConfig desk_config() {
  BenchmarkConfig cfg;
  cfg.num_classes = 4;
  cfg.obs_dim = 4;
  cfg.train_envs = {{1.0, 1.0}, {0.9, 0.9}};
  cfg.flip_rate = 0.25;
  return cfg;
}

DeskInstance make_desk_instance(bool fake_branch, std::optional<Shift> shift) {
  const BenchmarkConfig cfg = desk_config();
  DiscreteScm scm = make_rs_benchmark(cfg);
  if (shift) scm = shift_environment(scm, *shift);
  JointTable joint = exact_joint(scm, true);
  // Z_F is a leaf once X is not modeled, so summing it out removes the branch.
  if (!fake_branch) joint = joint.marginal({var::kEnv, var::kCausal, var::kLabel, var::kSpurious});
  joint = split_into_bits(joint, var::kCausal, "c");
  if (fake_branch) joint = split_into_bits(joint, var::kFake, "f");

  DeskInstance d{cfg, joint, {}, {}, {}, {}};
  d.causal = {"c0", "c1"};
  if (fake_branch) d.fake = {"f0", "f1"};
  d.universe = d.causal;
  d.universe.insert(d.universe.end(), d.fake.begin(), d.fake.end());
  d.observation = d.universe;
  d.observation.push_back(var::kSpurious);
  return d;
}

}  // namespace rsscm
