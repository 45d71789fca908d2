#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsscm/learner.hpp"
#include "rsscm/scm.hpp"

namespace rsscm {

/// Sampled benchmark: training environments plus one mixture test set per shift.
struct BenchmarkData {
  BenchmarkConfig config;
  DiscreteScm scm;
  Codebook codebook;
  std::vector<EnvironmentDataset> train;
  std::map<Shift, EnvironmentDataset> test;
};

/// Every stream is derived from config.seed, so equal configs give equal data.
BenchmarkData generate_benchmark(const BenchmarkConfig& config);

struct MethodResult {
  std::string method;
  double lambda = 0.0;
  double id_accuracy = 0.0;
  std::map<Shift, double> ood_accuracy;
  /// Only for selector methods: accuracy with the selector switched off.
  std::map<Shift, double> ood_accuracy_without_selector;
  std::optional<std::array<double, 3>> selector_mass;  // z_c, z_f, z_s blocks

  nlohmann::json to_json() const;
};

struct LearningOptions {
  bool include_iib = true;
  double iib_bottleneck_weight = 0.1;
  /// Extra IIL runs trained from the same InvRat bundle at these λ values.
  std::vector<double> ablate_lambda;
  /// Adds an IIL run with the MI term disabled.
  bool ablate_mi = false;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MethodResult> methods;
  std::map<std::string, ModelBundle> bundles;
  std::map<std::string, Curves> curves;

  const MethodResult& method(const std::string& name) const;
};

/// Trains ERM, InvRat, optionally IIB, then IIL from the InvRat bundle, on a
/// benchmark sampled with `seed`, and evaluates each on ID and every shift.
SeedRun run_learning_seed(BenchmarkConfig benchmark, TrainConfig train, std::uint64_t seed,
                          const LearningOptions& options);

std::string method_key(const std::string& method, std::optional<double> lambda = std::nullopt);

}  // namespace rsscm
