#include "rsscm/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

namespace rsscm {

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace {

template <typename T>
void take(const nlohmann::json& doc, const std::string& section, const std::string& key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(section + "." + key + ": wrong type");
  }
}

void reject_unknown(const nlohmann::json& doc, const std::string& section, std::set<std::string> known) {
  if (!doc.is_object()) throw ConfigError(section + ": must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError(section + "." + key + ": unknown field");
  }
}

VerifyOptions verify_from_json(const nlohmann::json& doc) {
  reject_unknown(doc, "verify",
                 {"fake_branch", "zero_tol", "positive_tol", "seed", "identity_tables", "random_instances",
                  "faithful_fraction", "identity_tol", "equivalence_tol"});
  VerifyOptions v;
  take(doc, "verify", "fake_branch", v.fake_branch);
  take(doc, "verify", "zero_tol", v.zero_tol);
  take(doc, "verify", "positive_tol", v.positive_tol);
  take(doc, "verify", "seed", v.seed);
  take(doc, "verify", "identity_tables", v.identity_tables);
  take(doc, "verify", "random_instances", v.random_instances);
  take(doc, "verify", "faithful_fraction", v.faithful_fraction);
  take(doc, "verify", "identity_tol", v.identity_tol);
  take(doc, "verify", "equivalence_tol", v.equivalence_tol);
  if (!(v.zero_tol >= 0.0)) throw ConfigError("verify.zero_tol: must be >= 0");
  if (!(v.positive_tol >= 0.0)) throw ConfigError("verify.positive_tol: must be >= 0");
  if (v.identity_tables < 1) throw ConfigError("verify.identity_tables: must be positive");
  if (v.random_instances < 1) throw ConfigError("verify.random_instances: must be positive");
  if (!(v.faithful_fraction >= 0.0 && v.faithful_fraction <= 1.0)) {
    throw ConfigError("verify.faithful_fraction: must lie in [0,1]");
  }
  return v;
}

LearningOptions learning_from_json(const nlohmann::json& doc) {
  reject_unknown(doc, "learning", {"include_iib", "iib_bottleneck_weight", "ablate_lambda", "ablate_mi"});
  LearningOptions l;
  take(doc, "learning", "include_iib", l.include_iib);
  take(doc, "learning", "iib_bottleneck_weight", l.iib_bottleneck_weight);
  take(doc, "learning", "ablate_lambda", l.ablate_lambda);
  take(doc, "learning", "ablate_mi", l.ablate_mi);
  if (!(l.iib_bottleneck_weight > 0.0)) throw ConfigError("learning.iib_bottleneck_weight: must be positive");
  for (double lam : l.ablate_lambda) {
    if (!(lam >= 0.0)) throw ConfigError("learning.ablate_lambda: values must be >= 0");
  }
  return l;
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
  return {{"schema_version", schema_version},
          {"run_id", run_id},
          {"benchmark", benchmark.to_json()},
          {"train", train.to_json()},
          {"verify", verify.to_json()},
          {"seeds", seeds},
          {"learning",
           {{"include_iib", learning.include_iib},
            {"iib_bottleneck_weight", learning.iib_bottleneck_weight},
            {"ablate_lambda", learning.ablate_lambda},
            {"ablate_mi", learning.ablate_mi}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  reject_unknown(doc, "config", {"schema_version", "run_id", "benchmark", "train", "verify", "seeds", "learning"});
  ExperimentConfig cfg;
  take(doc, "config", "schema_version", cfg.schema_version);
  if (cfg.schema_version != kSchemaVersion) {
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion) + ", got " +
                      std::to_string(cfg.schema_version));
  }
  take(doc, "config", "run_id", cfg.run_id);
  if (cfg.run_id.empty() || cfg.run_id.find_first_of("/\\") != std::string::npos || cfg.run_id == "." ||
      cfg.run_id == "..") {
    throw ConfigError("config.run_id: must be a plain nonempty name");
  }
  auto section = [](const std::string& name, auto&& parse) {
    try {
      parse();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      const bool prefixed = msg.rfind(name + ".", 0) == 0 || msg.rfind(name + ":", 0) == 0;
      throw ConfigError(prefixed ? msg : name + "." + msg);
    }
  };
  if (doc.contains("benchmark")) section("benchmark", [&] { cfg.benchmark = BenchmarkConfig::from_json(doc.at("benchmark")); });
  if (doc.contains("train")) section("train", [&] { cfg.train = TrainConfig::from_json(doc.at("train")); });
  if (doc.contains("verify")) cfg.verify = verify_from_json(doc.at("verify"));
  take(doc, "config", "seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("config.seeds: must be nonempty");
  if (doc.contains("learning")) cfg.learning = learning_from_json(doc.at("learning"));
  return cfg;
}

nlohmann::json verify_report(const ExperimentConfig& cfg, const std::vector<ClaimResult>& claims) {
  nlohmann::json list = nlohmann::json::array();
  int passed = 0, failed = 0, absent = 0;
  for (const auto& c : claims) {
    list.push_back(c.to_json());
    if (c.verdict == Verdict::kPass) ++passed;
    else if (c.verdict == Verdict::kFail) ++failed;
    else ++absent;
  }
  return {{"schema_version", kSchemaVersion},
          {"command", "verify"},
          {"run_id", cfg.run_id},
          {"options", cfg.verify.to_json()},
          {"claims", list},
          {"summary", {{"passed", passed}, {"failed", failed}, {"premise_absent", absent}}}};
}

namespace {

const std::vector<std::string>& columns() {
  static const std::vector<std::string> c{"id", "zs_random", "zf_random", "both"};
  return c;
}

double column_value(const MethodResult& m, const std::string& col) {
  if (col == "id") return m.id_accuracy;
  return m.ood_accuracy.at(parse_shift(col));
}

}  // namespace

nlohmann::json train_report(const ExperimentConfig& cfg, const std::vector<SeedRun>& runs) {
  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  for (const auto& run : runs) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : run.methods) {
      methods.push_back(m.to_json());
      if (!values.count(m.method)) order.push_back(m.method);
      for (const auto& col : columns()) values[m.method][col].push_back(column_value(m, col));
    }
    per_seed.push_back({{"seed", run.seed}, {"methods", methods}});
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& method : order) {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& col : columns()) {
      const auto& v = values[method][col];
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      cells[col] = {{"mean", mean}, {"std", sd}, {"n", v.size()}};
    }
    summary.push_back({{"method", method}, {"accuracy", cells}});
  }
  return {{"schema_version", kSchemaVersion},
          {"command", "train"},
          {"run_id", cfg.run_id},
          {"config", cfg.to_json()},
          {"runs", per_seed},
          {"summary", summary}};
}

std::string accuracy_table_csv(const nlohmann::json& report) {
  std::ostringstream out;
  out << "method";
  for (const auto& col : columns()) out << ',' << col;
  out << '\n';
  char buf[64];
  for (const auto& row : report.at("summary")) {
    out << row.at("method").get<std::string>();
    for (const auto& col : columns()) {
      const auto& cell = row.at("accuracy").at(col);
      std::snprintf(buf, sizeof(buf), "%.4f±%.4f", cell.at("mean").get<double>(), cell.at("std").get<double>());
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string merge_long_csv(const std::vector<std::pair<std::string, nlohmann::json>>& reports) {
  struct Block {
    std::string run;
    std::uint64_t seed;
    const nlohmann::json* methods;
  };
  std::vector<Block> blocks;
  for (const auto& [id, doc] : reports) {
    const int version = doc.value("schema_version", -1);
    if (version != kSchemaVersion) {
      throw SchemaError("run " + id + " has schema_version " + std::to_string(version) + ", expected " +
                        std::to_string(kSchemaVersion));
    }
    if (doc.value("command", "") != "train") throw SchemaError("run " + id + " is not a train report");
    for (const auto& run : doc.at("runs")) blocks.push_back({id, run.at("seed").get<std::uint64_t>(), &run.at("methods")});
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const Block& a, const Block& b) { return std::tie(a.run, a.seed) < std::tie(b.run, b.seed); });
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    if (blocks[i].run == blocks[i - 1].run && blocks[i].seed == blocks[i - 1].seed) {
      throw std::invalid_argument("run " + blocks[i].run + " seed " + std::to_string(blocks[i].seed) +
                                  " listed twice");
    }
  }
  std::ostringstream out;
  out << "run,method,shift,seed,accuracy\n";
  for (const auto& b : blocks) {
    for (const auto& m : *b.methods) {
      const std::string method = m.at("method").get<std::string>();
      out << b.run << ',' << method << ",id," << b.seed << ',' << format_double(m.at("id_accuracy").get<double>())
          << '\n';
      for (Shift s : kAllShifts) {
        const std::string name = shift_name(s);
        out << b.run << ',' << method << ',' << name << ',' << b.seed << ','
            << format_double(m.at("ood_accuracy").at(name).get<double>()) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace rsscm
