#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "rsscm/causal_graph.hpp"
#include "rsscm/dataset.hpp"
#include "rsscm/joint_table.hpp"

namespace rsscm {

/// Conditional probability table. Rows index parent configurations (last
/// parent fastest), columns index the child's states.
struct Mechanism {
  VarSet parents;
  Eigen::MatrixXd cpt;
};

/// Dataset id that samples E from its mixture weights instead of fixing it.
inline const std::string kMixtureEnv = "mixture";

/**
 * Discrete structural causal model. E is an ordinary root variable whose
 * single CPT row holds the environment mixture weights.
 */
class DiscreteScm {
 public:
  DiscreteScm(CausalGraph graph, std::vector<std::string> env_ids);

  /// Declares a variable; must come after all of its parents.
  void set_mechanism(const std::string& name, int cardinality, Mechanism mechanism);

  const CausalGraph& graph() const { return graph_; }
  const std::vector<std::string>& order() const { return order_; }
  const std::vector<std::string>& env_ids() const { return env_ids_; }
  Eigen::VectorXd env_weights() const;
  int env_index(const std::string& env_id) const;
  int cardinality(const std::string& name) const;
  const Mechanism& mechanism(const std::string& name) const;
  bool has_variable(const std::string& name) const { return supports_.count(name) > 0; }

  /// Cuts every edge into `name` and makes it a uniform root draw.
  void make_uniform_root(const std::string& name);

  /// Free-form tag; the benchmark builder sets "rs_benchmark".
  std::string kind;

  /// Throws unless every graph node has a mechanism matching its parents.
  void validate() const;

 private:
  CausalGraph graph_;
  std::vector<std::string> env_ids_;
  std::vector<std::string> order_;
  std::map<std::string, int> supports_;
  std::map<std::string, Mechanism> mechanisms_;
};

inline constexpr std::int64_t kDefaultEnumerationBudget = 10'000'000;

/// Exact joint over all variables. With pooling E is kept as a variable;
/// without it E is summed out of the mixture.
JointTable exact_joint(const DiscreteScm& scm, bool pool_environments,
                       std::int64_t budget = kDefaultEnumerationBudget);
/// Joint conditioned on E = env_id, E dropped.
JointTable exact_joint_env(const DiscreteScm& scm, const std::string& env_id,
                           std::int64_t budget = kDefaultEnumerationBudget);

/// Ancestral sampling of the discrete variables. `x` is left empty.
struct DiscreteSample {
  std::vector<std::string> variables;
  std::vector<std::vector<int>> columns;  // one column per variable, in `variables` order
};
DiscreteSample sample(const DiscreteScm& scm, const std::string& env_id, std::size_t n,
                      std::uint64_t seed);

struct RandomCptOptions {
  /// Each row is w·δ_π + (1−w)·Dirichlet(1) with w ~ U[dominance_low, dominance_high]
  /// and π a random state, which keeps random instances away from independence.
  double dominance_low = 0.3;
  double dominance_high = 0.7;
};

/// Random CPTs for every node of `graph` (E included) with the given supports.
DiscreteScm random_parameterization(const CausalGraph& graph,
                                    const std::map<std::string, int>& supports,
                                    std::mt19937_64& rng, const RandomCptOptions& options = {});

// ---------------------------------------------------------------- benchmark

struct EnvParams {
  double p_e = 1.0;      // P(Z_F copies Z_c)
  double p_hat_e = 1.0;  // P(Z_s copies Y)
};

struct BenchmarkConfig {
  int num_classes = 10;
  std::vector<EnvParams> train_envs{{1.0, 1.0}, {0.9, 0.9}};
  double flip_rate = 0.25;
  int obs_dim = 10;
  double noise_sigma = 0.3;
  std::string codebook = "onehot";  // or "gaussian"
  std::uint64_t seed = 0;
  std::size_t samples_per_env = 20000;
  std::size_t test_samples = 20000;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static BenchmarkConfig from_json(const nlohmann::json& doc);
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Shift { kZsRandom, kZfRandom, kBoth };
std::string shift_name(Shift shift);
Shift parse_shift(const std::string& name);
inline constexpr Shift kAllShifts[] = {Shift::kZsRandom, Shift::kZfRandom, Shift::kBoth};

std::string train_env_id(std::size_t index);

/// RS-SCM over E, Z_c, Z_F, Y, Z_s with the benchmark mechanisms.
DiscreteScm make_rs_benchmark(const BenchmarkConfig& cfg);

/// Replaces the shifted latents' mechanisms by independent uniform draws.
DiscreteScm shift_environment(const DiscreteScm& scm, Shift shift);

/// Per-latent codebooks, each obs_dim × K with one column per state.
struct Codebook {
  Eigen::MatrixXd z_c;
  Eigen::MatrixXd z_f;
  Eigen::MatrixXd z_s;

  nlohmann::json to_json() const;
  static Codebook from_json(const nlohmann::json& doc);
};

Codebook make_codebook(const BenchmarkConfig& cfg);

/// Concatenated codewords [z_c | z_f | z_s] plus N(0, σ²) noise.
Eigen::VectorXd encode_observation(int z_c, int z_f, int z_s, const Codebook& codebook,
                                   double noise_sigma, std::mt19937_64& rng);
Eigen::VectorXd encode_observation(int z_c, int z_f, int z_s, const Codebook& codebook,
                                   double noise_sigma, std::uint64_t noise_seed);

/// Samples an environment of a benchmark SCM and encodes observations.
EnvironmentDataset sample_benchmark(const DiscreteScm& scm, const Codebook& codebook,
                                    const BenchmarkConfig& cfg, const std::string& env_id,
                                    std::size_t n, std::uint64_t seed);

/// Per-block nearest-codeword decoding of one observation.
std::array<int, 3> decode_observation(const Eigen::VectorXd& x, const Codebook& codebook);

// CSV with header env,y,z_c,z_f,z_s,x_0..x_{D-1}. Reals use shortest round-trip form.
void write_dataset_csv(const EnvironmentDataset& data, const std::string& path);
EnvironmentDataset read_dataset_csv(const std::string& path, int num_classes, int num_envs);

/// Seed for a named stream derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, const std::string& stream);

}  // namespace rsscm
