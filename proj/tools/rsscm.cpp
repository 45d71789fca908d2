// Command-line front end: generate, verify, train, report.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "rsscm/claims.hpp"
#include "rsscm/experiment.hpp"
#include "rsscm/report.hpp"
#include "rsscm/scm.hpp"

namespace fs = std::filesystem;
using namespace rsscm;

namespace {

enum Exit { kOk = 0, kClaimFailure = 1, kInvalidConfig = 2, kRuntimeFailure = 3 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string dump(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

/// Output directory of a run. A run id may be reused only with an identical config.
fs::path prepare_run_dir(const std::string& out, const ExperimentConfig& cfg, const std::string& command) {
  const fs::path dir = fs::path(out) / cfg.run_id;
  const fs::path echo = dir / ("config." + command + ".json");
  const std::string text = dump(cfg.to_json());
  if (fs::exists(echo) && read_text(echo) != text) {
    throw ConfigError("run_id: '" + cfg.run_id + "' already used in " + out + " with a different config");
  }
  write_text(echo, text);
  return dir;
}

void write_metadata(const fs::path& dir, const std::string& command, double seconds,
                    const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json doc{{"command", command}, {"wall_seconds", seconds}};
  doc.update(extra);
  write_text(dir / ("metadata." + command + ".json"), dump(doc));
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--ablate-lambda: '" + item + "' is not a number");
    }
  }
  return out;
}

// ------------------------------------------------------------------ commands

struct Common {
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const Common& c, std::optional<int> k, bool exact) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.benchmark.seed = *c.seed;
  if (k) cfg.benchmark.num_classes = *k;
  cfg.benchmark.validate();
  const fs::path dir = prepare_run_dir(c.out, cfg, "generate");
  const BenchmarkData data = generate_benchmark(cfg.benchmark);
  std::vector<std::string> files;
  for (const auto& env : data.train) {
    write_dataset_csv(env, (dir / (env.env_id + ".csv")).string());
    files.push_back(env.env_id + ".csv");
  }
  for (const auto& [shift, env] : data.test) {
    write_dataset_csv(env, (dir / (env.env_id + ".csv")).string());
    files.push_back(env.env_id + ".csv");
  }
  write_text(dir / "codebook.json", dump(data.codebook.to_json()));
  if (exact) {
    write_text(dir / "exact_joint.json", dump(exact_joint(data.scm, true).to_json()));
    files.push_back("exact_joint.json");
  }
  write_metadata(dir, "generate", since(t0));
  for (const auto& f : files) std::cout << (dir / f).string() << "\n";
  return kOk;
}

int cmd_verify(const Common& c, std::optional<double> tol, std::optional<std::string> fake) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.verify.seed = *c.seed;
  if (tol) {
    if (!(*tol >= 0.0)) throw ConfigError("--tol: must be >= 0");
    cfg.verify.positive_tol = *tol;
  }
  if (fake) cfg.verify.fake_branch = *fake == "on";
  const fs::path dir = prepare_run_dir(c.out, cfg, "verify");
  const auto claims = run_claim_suite(cfg.verify);
  const nlohmann::json report = verify_report(cfg, claims);
  write_text(dir / "verify_report.json", dump(report));
  write_metadata(dir, "verify", since(t0));
  bool failed = false;
  for (const auto& claim : claims) {
    std::cout << claim.claim << ": " << verdict_name(claim.verdict) << "\n";
    failed = failed || claim.failed();
  }
  std::cout << "report: " << (dir / "verify_report.json").string() << "\n";
  return failed ? kClaimFailure : kOk;
}

int cmd_train(const Common& c, const std::string& ablate_lambda, std::optional<std::string> ablate_mi,
              int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!ablate_lambda.empty()) cfg.learning.ablate_lambda = parse_list(ablate_lambda);
  // "off" asks for the run with the MI term switched off.
  if (ablate_mi) cfg.learning.ablate_mi = *ablate_mi == "off";
  if (jobs < 1) throw ConfigError("--jobs: must be positive");
  const fs::path dir = prepare_run_dir(c.out, cfg, "train");

  std::vector<SeedRun> runs(cfg.seeds.size());
  std::vector<double> seconds(cfg.seeds.size(), 0.0);
  std::vector<std::string> errors(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      const auto ts = std::chrono::steady_clock::now();
      try {
        runs[i] = run_learning_seed(cfg.benchmark, cfg.train, cfg.seeds[i], cfg.learning);
      } catch (const std::exception& e) {
        errors[i] = "seed " + std::to_string(cfg.seeds[i]) + ": " + e.what();
      }
      seconds[i] = since(ts);
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < std::min<int>(jobs, static_cast<int>(cfg.seeds.size())); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }

  const nlohmann::json report = train_report(cfg, runs);
  write_text(dir / "train_report.json", dump(report));
  write_text(dir / "accuracy_table.csv", accuracy_table_csv(report));
  for (const auto& run : runs) {
    const std::string suffix = "_seed" + std::to_string(run.seed);
    for (const auto& [name, bundle] : run.bundles) {
      write_text(dir / "models" / (name + suffix + ".json"), dump(bundle.to_json()));
    }
    for (const auto& [name, curves] : run.curves) write_text(dir / "curves" / (name + suffix + ".csv"), curves.to_csv());
  }
  nlohmann::json per_seed = nlohmann::json::object();
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) per_seed[std::to_string(cfg.seeds[i])] = seconds[i];
  write_metadata(dir, "train", since(t0), {{"seed_seconds", per_seed}, {"jobs", jobs}});
  std::cout << accuracy_table_csv(report);
  return kOk;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out) {
  std::vector<std::pair<std::string, nlohmann::json>> reports;
  for (const auto& d : run_dirs) {
    const fs::path path = fs::path(d) / "train_report.json";
    if (!fs::exists(path)) throw IoError("missing run: no train report in " + d);
    nlohmann::json doc = nlohmann::json::parse(read_text(path));
    const std::string id = doc.value("run_id", fs::path(d).filename().string());
    reports.emplace_back(id, std::move(doc));
  }
  const std::string csv = merge_long_csv(reports);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and verifier for fake-invariance rectification experiments"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config (JSON)");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "seed override");
  };

  auto* gen = app.add_subcommand("generate", "write benchmark datasets and codebook");
  add_common(gen);
  std::optional<int> k;
  bool exact = false;
  gen->add_option("--k", k, "number of classes");
  gen->add_flag("--exact", exact, "also write the exact joint table");

  auto* ver = app.add_subcommand("verify", "run the claim suite");
  add_common(ver);
  std::optional<double> tol;
  std::optional<std::string> fake;
  ver->add_option("--tol", tol, "threshold for \"> 0\" checks");
  ver->add_option("--fake-branch", fake, "on|off")->check(CLI::IsMember({"on", "off"}));

  auto* tr = app.add_subcommand("train", "train ERM, InvRat, IIB and IIL and evaluate them");
  add_common(tr);
  std::string ablate_lambda;
  std::optional<std::string> ablate_mi;
  int jobs = 1;
  tr->add_option("--ablate-lambda", ablate_lambda, "comma-separated lambda values for extra IIL runs");
  tr->add_option("--ablate-mi", ablate_mi, "off adds an IIL run without the MI term")
      ->check(CLI::IsMember({"on", "off"}));
  tr->add_option("--jobs", jobs, "seeds trained in parallel")->capture_default_str();

  auto* rep = app.add_subcommand("report", "merge train reports into long-format CSV");
  std::vector<std::string> run_dirs;
  std::string report_out;
  rep->add_option("runs", run_dirs, "run directories")->required();
  rep->add_option("--out", report_out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidConfig;
  }

  try {
    if (*gen) return cmd_generate(common, k, exact);
    if (*ver) return cmd_verify(common, tol, fake);
    if (*tr) return cmd_train(common, ablate_lambda, ablate_mi, jobs);
    if (*rep) return cmd_report(run_dirs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
