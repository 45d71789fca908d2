#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsscm/dataset.hpp"
#include "rsscm/nn.hpp"

namespace rsscm {

using Net = nn::Network<double>;

struct TrainConfig {
  double lambda = 0.1;
  double beta = 5.0;
  std::string optimizer = "adam";
  double learning_rate = 1e-2;         // h and g_i
  double domain_learning_rate = 5e-2;  // g_d heads
  double selector_learning_rate = 1e-2;  // s and the MI estimator
  std::size_t batch_size = 256;        // per environment
  std::size_t steps = 3000;            // ERM / InvRat updates
  std::size_t domain_steps = 10;       // g_d updates per InvRat update
  /// "residual": g_d(z) = g_i(z) + head_e(z) with head_e starting at zero;
  /// "independent": g_d(z) = head_e(z).
  std::string domain_heads = "residual";
  /// "softmax": one K-way softmax block per latent; "binary": ceil(log2 K)
  /// sigmoid units per latent.
  std::string encoder = "softmax";
  std::size_t inner_iterations = 10;
  std::size_t selector_steps = 50;     // selector updates per outer epoch
  std::size_t max_outer_epochs = 40;
  std::size_t plateau_window = 5;
  double plateau_min_gain = 0.002;     // 0.2 accuracy points
  double mi_weight = 1.0;
  bool mi_enabled = true;
  bool mi_shared_gate = true;          // MI term uses the batch-mean gate
  bool straight_through = true;        // hard split inside the MI term
  int mine_hidden = 32;
  double bottleneck_weight = 0.0;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// h, g_i, per-environment g_d heads, selector s and the MI critic T.
struct ModelBundle {
  std::string method;
  int num_classes = 0;
  int num_envs = 0;
  int block_width = 0;  // observation width of one latent block
  std::string domain_heads = "residual";
  std::string encoder = "softmax";
  int code_width = 0;   // encoder units per latent block
  Net h;
  Net g_i;
  std::vector<Net> g_d;
  Net s;
  Net t;
  bool selector_active = false;

  Eigen::Index feature_dim() const { return 3 * code_width; }

  nlohmann::json manifest() const;
  /// Manifest plus base64 little-endian float64 parameter blob.
  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& doc);
};

/// Encoder with block-diagonal weights, one block per latent.
ModelBundle make_bundle(int block_width, int num_classes, int num_envs, const TrainConfig& cfg);

struct CurveRow {
  std::size_t epoch = 0;
  std::string phase;
  std::map<std::string, double> terms;
  double id_accuracy = 0.0;
};

struct Curves {
  std::vector<CurveRow> rows;
  /// Long format: epoch,phase,term,value,id_accuracy.
  std::string to_csv() const;
};

struct TrainValSplit {
  std::vector<EnvironmentDataset> train;
  std::vector<EnvironmentDataset> validation;
};
/// Holds out the trailing fraction of every environment.
TrainValSplit split_train_validation(const std::vector<EnvironmentDataset>& data, double fraction);

ModelBundle train_erm(const TrainValSplit& data, const TrainConfig& cfg, Curves* curves = nullptr);
ModelBundle train_invrat(const TrainValSplit& data, const TrainConfig& cfg, Curves* curves = nullptr);
ModelBundle train_iil(ModelBundle bundle, const TrainValSplit& data, const TrainConfig& cfg,
                      Curves* curves = nullptr);

double evaluate(const ModelBundle& bundle, const EnvironmentDataset& data, bool use_selector);
/// Mean accuracy over several datasets, weighted equally.
double evaluate_mean(const ModelBundle& bundle, const std::vector<EnvironmentDataset>& data,
                     bool use_selector);

/// Features fed to g_i: h(x), or s(h(x))⊙h(x) when the selector is active.
Eigen::MatrixXd features(const ModelBundle& bundle, const Eigen::MatrixXd& x, bool use_selector);

/// E[L(Y, g_i(s⊙h))] − λ·E[L(Y, g_i((1−s)⊙h))] in nats.
double selector_loss(const ModelBundle& bundle, const Eigen::MatrixXd& x,
                     const std::vector<int>& labels, double lambda);

/// Mean selector output over the z_c, z_f and z_s feature blocks.
std::array<double, 3> selector_block_mass(const ModelBundle& bundle, const Eigen::MatrixXd& x);

/// Donsker-Varadhan bound mean_joint[T] − log mean_product[exp T], in bits.
/// Inputs are stacked pairs, one pair per column.
double mi_lower_bound(const Net& critic, const Eigen::MatrixXd& joint_pairs,
                      const Eigen::MatrixXd& product_pairs);

/// Bound plus gradients w.r.t. critic parameters and both input batches (nats).
struct MineTerms {
  double bound_nats = 0.0;
  nn::Gradients<double> critic_grads;
  Eigen::MatrixXd grad_joint;
  Eigen::MatrixXd grad_product;
};
MineTerms mine_terms(const Net& critic, const Eigen::MatrixXd& joint_pairs,
                     const Eigen::MatrixXd& product_pairs);

/// Fits a fresh critic on (a, b) pairs; returns the final bound in bits.
double fit_mine(Net& critic, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t steps,
                double learning_rate, std::size_t batch_size, std::mt19937_64& rng);

Net make_critic(Eigen::Index pair_dim, int hidden, std::mt19937_64& rng);

}  // namespace rsscm
