#include "rsscm/experiment.hpp"

#include <charconv>
#include <stdexcept>

namespace rsscm {

BenchmarkData generate_benchmark(const BenchmarkConfig& config) {
  config.validate();
  BenchmarkData out{config, make_rs_benchmark(config), make_codebook(config), {}, {}};
  for (std::size_t e = 0; e < config.train_envs.size(); ++e) {
    const std::string id = train_env_id(e);
    out.train.push_back(sample_benchmark(out.scm, out.codebook, config, id, config.samples_per_env,
                                         derive_seed(config.seed, "train/" + id)));
  }
  for (Shift s : kAllShifts) {
    const DiscreteScm shifted = shift_environment(out.scm, s);
    EnvironmentDataset d = sample_benchmark(shifted, out.codebook, config, kMixtureEnv,
                                            config.test_samples,
                                            derive_seed(config.seed, "test/" + shift_name(s)));
    d.env_id = "test_" + shift_name(s);
    out.test.emplace(s, std::move(d));
  }
  return out;
}

nlohmann::json MethodResult::to_json() const {
  nlohmann::json doc{{"method", method}, {"lambda", lambda}, {"id_accuracy", id_accuracy}};
  for (const auto& [s, acc] : ood_accuracy) doc["ood_accuracy"][shift_name(s)] = acc;
  for (const auto& [s, acc] : ood_accuracy_without_selector) {
    doc["ood_accuracy_without_selector"][shift_name(s)] = acc;
  }
  if (selector_mass) {
    doc["selector_mass"] = {{"z_c", (*selector_mass)[0]}, {"z_f", (*selector_mass)[1]},
                            {"z_s", (*selector_mass)[2]}};
  }
  return doc;
}

const MethodResult& SeedRun::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw std::out_of_range("no result for method " + name);
}

std::string method_key(const std::string& method, std::optional<double> lambda) {
  if (!lambda) return method;
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), *lambda);
  return method + "@lambda=" + std::string(buf, r.ptr);
}

namespace {

MethodResult assess(const ModelBundle& bundle, const TrainValSplit& split, const BenchmarkData& data,
                    const std::string& key, double lambda) {
  MethodResult r;
  r.method = key;
  r.lambda = lambda;
  const bool sel = bundle.selector_active;
  r.id_accuracy = evaluate_mean(bundle, split.validation, sel);
  for (const auto& [shift, test] : data.test) {
    r.ood_accuracy[shift] = evaluate(bundle, test, sel);
    if (sel) r.ood_accuracy_without_selector[shift] = evaluate(bundle, test, false);
  }
  if (sel) {
    Eigen::Index cols = 0;
    for (const auto& v : split.validation) cols += v.x.cols();
    Eigen::MatrixXd x(split.validation.front().x.rows(), cols);
    Eigen::Index at = 0;
    for (const auto& v : split.validation) {
      x.middleCols(at, v.x.cols()) = v.x;
      at += v.x.cols();
    }
    r.selector_mass = selector_block_mass(bundle, x);
  }
  return r;
}

}  // namespace

SeedRun run_learning_seed(BenchmarkConfig benchmark, TrainConfig train, std::uint64_t seed,
                          const LearningOptions& options) {
  benchmark.seed = seed;
  train.seed = seed;
  const BenchmarkData data = generate_benchmark(benchmark);
  const TrainValSplit split = split_train_validation(data.train, train.validation_fraction);

  SeedRun run;
  run.seed = seed;
  auto record = [&](const std::string& key, ModelBundle bundle, Curves curves, double lambda) {
    run.methods.push_back(assess(bundle, split, data, key, lambda));
    run.bundles.emplace(key, std::move(bundle));
    run.curves.emplace(key, std::move(curves));
  };

  {
    Curves c;
    ModelBundle b = train_erm(split, train, &c);
    record("erm", std::move(b), std::move(c), 0.0);
  }
  Curves invrat_curves;
  const ModelBundle invrat = train_invrat(split, [&] {
    TrainConfig t = train;
    t.bottleneck_weight = 0.0;
    return t;
  }(), &invrat_curves);
  record("invrat", invrat, std::move(invrat_curves), 0.0);
  if (options.include_iib) {
    TrainConfig t = train;
    t.bottleneck_weight = options.iib_bottleneck_weight;
    Curves c;
    ModelBundle b = train_invrat(split, t, &c);
    record("iib", std::move(b), std::move(c), 0.0);
  }

  auto run_iil = [&](const std::string& key, TrainConfig t) {
    Curves c;
    ModelBundle b = train_iil(invrat, split, t, &c);
    record(key, std::move(b), std::move(c), t.lambda);
  };
  run_iil("iil", train);
  if (options.ablate_mi) {
    TrainConfig t = train;
    t.mi_enabled = false;
    run_iil("iil_no_mi", t);
  }
  for (double lam : options.ablate_lambda) {
    TrainConfig t = train;
    t.lambda = lam;
    run_iil(method_key("iil", lam), t);
  }
  return run;
}

}  // namespace rsscm
