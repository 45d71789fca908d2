#include "rsscm/joint_table.hpp"

#include <cmath>
#include <stdexcept>

namespace rsscm {

JointTable::JointTable(std::vector<TableVariable> variables, Eigen::VectorXd mass)
    : vars_(std::move(variables)), mass_(std::move(mass)) {
  if (vars_.empty()) throw std::invalid_argument("joint table needs at least one variable");
  Eigen::Index cells = 1;
  for (const auto& v : vars_) {
    if (v.cardinality < 1) throw std::invalid_argument("variable " + v.name + " has empty support");
    cells *= v.cardinality;
  }
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    for (std::size_t j = i + 1; j < vars_.size(); ++j) {
      if (vars_[i].name == vars_[j].name) {
        throw std::invalid_argument("duplicate variable " + vars_[i].name);
      }
    }
  }
  if (mass_.size() != cells) throw std::invalid_argument("mass size does not match the product space");
  if ((mass_.array() < 0.0).any()) throw std::invalid_argument("negative probability mass");
  if (std::abs(mass_.sum() - 1.0) > 1e-10) throw std::invalid_argument("mass does not sum to one");
  strides_.assign(vars_.size(), 1);
  for (int i = static_cast<int>(vars_.size()) - 2; i >= 0; --i) {
    strides_[i] = strides_[i + 1] * vars_[i + 1].cardinality;
  }
}

JointTable JointTable::from_weights(std::vector<TableVariable> variables, Eigen::VectorXd weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("weights must have positive total");
  weights /= total;
  return JointTable(std::move(variables), std::move(weights));
}

bool JointTable::has(const std::string& name) const {
  for (const auto& v : vars_) {
    if (v.name == name) return true;
  }
  return false;
}

int JointTable::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].name == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("variable " + name + " is not in the table");
}

int JointTable::cardinality(const std::string& name) const {
  return vars_[index_of(name)].cardinality;
}

std::vector<std::string> JointTable::names() const {
  std::vector<std::string> out;
  for (const auto& v : vars_) out.push_back(v.name);
  return out;
}

std::vector<int> JointTable::unravel(Eigen::Index cell) const {
  std::vector<int> states(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    states[i] = static_cast<int>((cell / strides_[i]) % vars_[i].cardinality);
  }
  return states;
}

Eigen::Index JointTable::ravel(const std::vector<int>& states) const {
  Eigen::Index cell = 0;
  for (std::size_t i = 0; i < vars_.size(); ++i) cell += states[i] * strides_[i];
  return cell;
}

JointTable JointTable::marginal(const VarSet& keep) const {
  if (keep.empty()) throw std::invalid_argument("marginal over an empty variable set");
  std::vector<int> idx;
  std::vector<TableVariable> vars;
  for (const auto& name : keep) {
    idx.push_back(index_of(name));
    vars.push_back(vars_[idx.back()]);
  }
  std::vector<Eigen::Index> out_strides(keep.size(), 1);
  for (int i = static_cast<int>(keep.size()) - 2; i >= 0; --i) {
    out_strides[i] = out_strides[i + 1] * vars[i + 1].cardinality;
  }
  Eigen::Index out_size = out_strides[0] * vars[0].cardinality;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_size);
  for (Eigen::Index cell = 0; cell < mass_.size(); ++cell) {
    const double m = mass_(cell);
    if (m == 0.0) continue;
    Eigen::Index target = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      target += ((cell / strides_[idx[k]]) % vars_[idx[k]].cardinality) * out_strides[k];
    }
    out(target) += m;
  }
  // Summation can drift by a few ulps; renormalize so the invariant holds exactly.
  out /= out.sum();
  return JointTable(std::move(vars), std::move(out));
}

nlohmann::json JointTable::to_json() const {
  nlohmann::json doc;
  doc["variables"] = nlohmann::json::array();
  for (const auto& v : vars_) doc["variables"].push_back({{"name", v.name}, {"cardinality", v.cardinality}});
  doc["mass"] = std::vector<double>(mass_.data(), mass_.data() + mass_.size());
  return doc;
}

}  // namespace rsscm
