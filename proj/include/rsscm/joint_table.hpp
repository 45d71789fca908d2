#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "rsscm/causal_graph.hpp"

namespace rsscm {

struct TableVariable {
  std::string name;
  int cardinality = 0;
};

/**
 * Exact probability mass over the product space of named discrete variables.
 *
 * Cells are laid out row-major: the last variable varies fastest. Mass is
 * nonnegative and sums to one within 1e-10; construction enforces both.
 */
class JointTable {
 public:
  JointTable(std::vector<TableVariable> variables, Eigen::VectorXd mass);

  /// Normalizes `weights` (nonnegative, positive total) before constructing.
  static JointTable from_weights(std::vector<TableVariable> variables, Eigen::VectorXd weights);

  const std::vector<TableVariable>& variables() const { return vars_; }
  const Eigen::VectorXd& mass() const { return mass_; }
  Eigen::Index size() const { return mass_.size(); }

  bool has(const std::string& name) const;
  int index_of(const std::string& name) const;
  int cardinality(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Decodes a flat cell index into one state per variable.
  std::vector<int> unravel(Eigen::Index cell) const;
  Eigen::Index ravel(const std::vector<int>& states) const;

  /// Marginal over `keep`, with variables in the order given.
  JointTable marginal(const VarSet& keep) const;

  /// Appends a variable that is a deterministic function of existing cells.
  template <typename Fn>
  JointTable with_derived(const std::string& name, int cardinality, Fn&& value_of_cell) const;

  nlohmann::json to_json() const;

 private:
  std::vector<TableVariable> vars_;
  std::vector<Eigen::Index> strides_;
  Eigen::VectorXd mass_;
};

template <typename Fn>
JointTable JointTable::with_derived(const std::string& name, int cardinality,
                                    Fn&& value_of_cell) const {
  auto vars = vars_;
  vars.push_back({name, cardinality});
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mass_.size() * cardinality);
  for (Eigen::Index cell = 0; cell < mass_.size(); ++cell) {
    const int v = value_of_cell(unravel(cell));
    if (v < 0 || v >= cardinality) {
      throw std::invalid_argument("derived variable " + name + " leaves its declared range");
    }
    out(cell * cardinality + v) = mass_(cell);
  }
  return JointTable(std::move(vars), std::move(out));
}

}  // namespace rsscm
