#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rsscm/claims.hpp"
#include "rsscm/experiment.hpp"

namespace rsscm {

inline constexpr int kSchemaVersion = 1;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One JSON document drives every command. Unknown keys are rejected.
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string run_id = "run";
  BenchmarkConfig benchmark;
  TrainConfig train;
  VerifyOptions verify;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  LearningOptions learning;

  nlohmann::json to_json() const;
  /// Throws ConfigError naming the offending field.
  static ExperimentConfig from_json(const nlohmann::json& doc);
};

/// Verify report; contains no timings so reruns are byte-identical.
nlohmann::json verify_report(const ExperimentConfig& cfg, const std::vector<ClaimResult>& claims);

/// Per-seed results plus mean and sample std per (method, column).
nlohmann::json train_report(const ExperimentConfig& cfg, const std::vector<SeedRun>& runs);

/// Rows are methods, columns id and each shift, cells "mean±std".
std::string accuracy_table_csv(const nlohmann::json& train_report);

/// Long format run,method,shift,seed,accuracy over train reports keyed by run id.
/// Throws SchemaError when schema versions disagree with this build.
std::string merge_long_csv(const std::vector<std::pair<std::string, nlohmann::json>>& reports);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace rsscm
