#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace rsscm {

/**
 * Samples from one environment (or a pooled test mixture) of the benchmark.
 *
 * `x` holds one observation per column so batches feed straight into the
 * networks; the integer columns keep the ground-truth generating trace.
 */
struct EnvironmentDataset {
  std::string env_id;
  int num_classes = 0;
  int num_envs = 0;
  unsigned long long seed = 0;
  std::vector<int> env;
  std::vector<int> y;
  std::vector<int> z_c;
  std::vector<int> z_f;
  std::vector<int> z_s;
  Eigen::MatrixXd x;

  std::size_t size() const { return y.size(); }

  /// Rows [begin, end) as a new dataset with the same metadata.
  EnvironmentDataset slice(std::size_t begin, std::size_t end) const;
};

}  // namespace rsscm
