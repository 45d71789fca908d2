#include "rsscm/info_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rsscm/causal_graph.hpp"

namespace rsscm {

EnvironmentDataset EnvironmentDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("dataset slice out of range");
  EnvironmentDataset out;
  out.env_id = env_id;
  out.num_classes = num_classes;
  out.num_envs = num_envs;
  out.seed = seed;
  auto cut = [&](const std::vector<int>& v) {
    return std::vector<int>(v.begin() + begin, v.begin() + end);
  };
  out.env = cut(env);
  out.y = cut(y);
  out.z_c = cut(z_c);
  out.z_f = cut(z_f);
  out.z_s = cut(z_s);
  out.x = x.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return out;
}

namespace {

void check_members(const JointTable& table, const VarSet& vars) {
  for (const auto& v : vars) (void)table.index_of(v);
}

bool overlap(const VarSet& a, const VarSet& b) {
  return std::any_of(a.begin(), a.end(),
                     [&](const std::string& v) { return std::count(b.begin(), b.end(), v) > 0; });
}

VarSet concat(std::initializer_list<const VarSet*> parts) {
  VarSet out;
  for (const VarSet* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

}  // namespace

double entropy(const JointTable& table, const VarSet& vars) {
  if (vars.empty()) return 0.0;
  check_members(table, vars);
  const JointTable m = table.marginal(vars);
  double h = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double p = m.mass()(i);
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double conditional_entropy(const JointTable& table, const VarSet& a, const VarSet& c) {
  if (overlap(a, c)) throw std::invalid_argument("conditional entropy sets overlap");
  return entropy(table, concat({&a, &c})) - entropy(table, c);
}

double cmi(const JointTable& table, const VarSet& a, const VarSet& b, const VarSet& c) {
  check_members(table, a);
  check_members(table, b);
  check_members(table, c);
  if (overlap(a, b) || overlap(a, c) || overlap(b, c)) {
    throw std::invalid_argument("cmi argument sets must be pairwise disjoint");
  }
  if (a.empty() || b.empty()) return 0.0;

  const JointTable m = table.marginal(concat({&a, &b, &c}));
  auto block_size = [&](std::size_t from, std::size_t count) {
    Eigen::Index s = 1;
    for (std::size_t i = from; i < from + count; ++i) s *= m.variables()[i].cardinality;
    return s;
  };
  const Eigen::Index na = block_size(0, a.size());
  const Eigen::Index nb = block_size(a.size(), b.size());
  const Eigen::Index nc = block_size(a.size() + b.size(), c.size());

  // Cell index = (ia * nb + ib) * nc + ic.
  Eigen::VectorXd p_ac = Eigen::VectorXd::Zero(na * nc);
  Eigen::VectorXd p_bc = Eigen::VectorXd::Zero(nb * nc);
  Eigen::VectorXd p_c = Eigen::VectorXd::Zero(nc);
  const Eigen::VectorXd& p = m.mass();
  for (Eigen::Index ia = 0; ia < na; ++ia) {
    for (Eigen::Index ib = 0; ib < nb; ++ib) {
      for (Eigen::Index ic = 0; ic < nc; ++ic) {
        const double v = p((ia * nb + ib) * nc + ic);
        p_ac(ia * nc + ic) += v;
        p_bc(ib * nc + ic) += v;
        p_c(ic) += v;
      }
    }
  }
  double total = 0.0;
  for (Eigen::Index ia = 0; ia < na; ++ia) {
    for (Eigen::Index ib = 0; ib < nb; ++ib) {
      for (Eigen::Index ic = 0; ic < nc; ++ic) {
        const double v = p((ia * nb + ib) * nc + ic);
        if (v <= 0.0) continue;
        total += v * std::log2(v * p_c(ic) / (p_ac(ia * nc + ic) * p_bc(ib * nc + ic)));
      }
    }
  }
  return total;
}

double chain_rule_residual(const JointTable& table, const VarSet& a, const VarSet& b,
                           const VarSet& c) {
  const double lhs = cmi(table, a, b, c);
  const double rhs = mi(table, a, concat({&b, &c})) - mi(table, a, c);
  return std::abs(lhs - rhs);
}

JointTable apply_phi(const JointTable& table, const PhiMap& phi) {
  const int src = table.index_of(phi.source);
  if (static_cast<int>(phi.mapping.size()) != table.variables()[src].cardinality) {
    throw std::invalid_argument("phi mapping must cover the whole support of " + phi.source);
  }
  for (int v : phi.mapping) {
    if (v < 0 || v >= phi.cardinality) {
      throw std::invalid_argument("phi mapping range exceeds declared cardinality");
    }
  }
  return table.with_derived(phi.target, phi.cardinality,
                            [&](const std::vector<int>& s) { return phi.mapping[s[src]]; });
}

JointTable split_into_bits(const JointTable& table, const std::string& var,
                           const std::string& prefix) {
  const int src = table.index_of(var);
  const int card = table.variables()[src].cardinality;
  int bits = 0;
  while ((1 << bits) < card) ++bits;
  if ((1 << bits) != card || bits == 0) {
    throw std::invalid_argument(var + " cardinality is not a power of two");
  }
  JointTable out = table;
  VarSet order;
  for (const auto& v : table.variables()) {
    if (v.name != var) {
      order.push_back(v.name);
      continue;
    }
    for (int k = 0; k < bits; ++k) {
      const std::string name = prefix + std::to_string(k);
      const int shift = bits - 1 - k;
      out = out.with_derived(name, 2, [&](const std::vector<int>& s) { return (s[src] >> shift) & 1; });
      order.push_back(name);
    }
  }
  return out.marginal(order);
}

JointTable empirical_table(const EnvironmentDataset& dataset, const VarSet& vars) {
  if (dataset.size() == 0) throw std::invalid_argument("empirical table of an empty dataset");
  if (vars.empty()) throw std::invalid_argument("empirical table needs at least one variable");
  std::vector<const std::vector<int>*> columns;
  std::vector<TableVariable> table_vars;
  for (const auto& v : vars) {
    if (v == var::kEnv) {
      columns.push_back(&dataset.env);
      table_vars.push_back({v, dataset.num_envs});
    } else if (v == var::kLabel) {
      columns.push_back(&dataset.y);
      table_vars.push_back({v, dataset.num_classes});
    } else if (v == var::kCausal) {
      columns.push_back(&dataset.z_c);
      table_vars.push_back({v, dataset.num_classes});
    } else if (v == var::kFake) {
      columns.push_back(&dataset.z_f);
      table_vars.push_back({v, dataset.num_classes});
    } else if (v == var::kSpurious) {
      columns.push_back(&dataset.z_s);
      table_vars.push_back({v, dataset.num_classes});
    } else {
      throw std::invalid_argument("no discrete column named " + v);
    }
  }
  Eigen::Index cells = 1;
  for (const auto& tv : table_vars) cells *= tv.cardinality;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(cells);
  for (std::size_t row = 0; row < dataset.size(); ++row) {
    Eigen::Index cell = 0;
    for (std::size_t k = 0; k < columns.size(); ++k) {
      const int state = (*columns[k])[row];
      if (state < 0 || state >= table_vars[k].cardinality) {
        throw std::invalid_argument("column " + table_vars[k].name + " has an out-of-range state");
      }
      cell = cell * table_vars[k].cardinality + state;
    }
    counts(cell) += 1.0;
  }
  return JointTable::from_weights(std::move(table_vars), std::move(counts));
}

nlohmann::json SpuriousnessReport::to_json(const std::string& claim) const {
  auto clamp = [](double v) { return std::max(v, 0.0); };
  return {{"claim", claim},
          {"lhs_bits", clamp(lhs_bits)},
          {"rhs_bits", clamp(rhs_bits)},
          {"preconditions",
           {{"met", preconditions_met},
            {"zs_env_given_label_bits", clamp(zs_env_given_label)},
            {"phi_env_given_label_bits", clamp(phi_env_given_label)},
            {"zs_label_given_phi_env_bits", clamp(zs_label_given_phi_env)}}},
          {"holds", holds}};
}

SpuriousnessReport verify_spuriousness(const JointTable& table, const PhiMap& phi,
                                       const SpuriousnessTolerance& tol) {
  using namespace var;
  for (const auto& v : {kLabel, kEnv, kSpurious}) {
    if (!table.has(v)) throw std::invalid_argument("spuriousness check needs variable " + v);
  }
  if (phi.source != kSpurious) throw std::invalid_argument("phi must be defined on Z_s");
  const JointTable t = table.has(phi.target) ? table : apply_phi(table, phi);
  const std::string& f = phi.target;

  SpuriousnessReport r;
  r.lhs_bits = cmi(t, {kLabel}, {kEnv}, {f});
  r.rhs_bits = cmi(t, {kLabel}, {kEnv}, {kSpurious});
  r.zs_env_given_label = cmi(t, {kSpurious}, {kEnv}, {kLabel});
  r.phi_env_given_label = cmi(t, {f}, {kEnv}, {kLabel});
  r.zs_label_given_phi_env = cmi(t, {kSpurious}, {kLabel}, {f, kEnv});
  r.preconditions_met = r.zs_env_given_label > tol.positive && r.phi_env_given_label < tol.zero;
  r.holds = r.lhs_bits >= r.rhs_bits - tol.zero && r.rhs_bits > tol.positive;
  return r;
}

}  // namespace rsscm
