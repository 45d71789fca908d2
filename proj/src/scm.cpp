#include "rsscm/scm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace rsscm {

std::uint64_t derive_seed(std::uint64_t base, const std::string& stream) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ------------------------------------------------------------------ DiscreteScm

DiscreteScm::DiscreteScm(CausalGraph graph, std::vector<std::string> env_ids)
    : graph_(std::move(graph)), env_ids_(std::move(env_ids)) {
  if (!graph_.has_node(var::kEnv)) throw std::invalid_argument("SCM graph needs an E node");
  if (env_ids_.empty()) throw std::invalid_argument("SCM needs at least one environment");
  std::set<std::string> unique(env_ids_.begin(), env_ids_.end());
  if (unique.size() != env_ids_.size() || unique.count(kMixtureEnv)) {
    throw std::invalid_argument("environment ids must be distinct and not '" + kMixtureEnv + "'");
  }
}

void DiscreteScm::set_mechanism(const std::string& name, int cardinality, Mechanism mechanism) {
  if (!graph_.has_node(name)) throw std::invalid_argument("no graph node " + name);
  if (cardinality < 1) throw std::invalid_argument(name + " needs a nonempty support");
  if (name == var::kEnv && cardinality != static_cast<int>(env_ids_.size())) {
    throw std::invalid_argument("E cardinality must equal the number of environments");
  }
  Eigen::Index rows = 1;
  for (const auto& p : mechanism.parents) {
    if (!supports_.count(p)) throw std::invalid_argument("parent " + p + " of " + name + " not declared yet");
    rows *= supports_.at(p);
  }
  if (mechanism.cpt.rows() != rows || mechanism.cpt.cols() != cardinality) {
    throw std::invalid_argument("CPT shape mismatch for " + name);
  }
  if ((mechanism.cpt.array() < 0.0).any()) throw std::invalid_argument("negative CPT entry for " + name);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (std::abs(mechanism.cpt.row(r).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("CPT row of " + name + " does not sum to one");
    }
  }
  if (!supports_.count(name)) order_.push_back(name);
  supports_[name] = cardinality;
  mechanisms_[name] = std::move(mechanism);
}

Eigen::VectorXd DiscreteScm::env_weights() const {
  return mechanism(var::kEnv).cpt.row(0).transpose();
}

int DiscreteScm::env_index(const std::string& env_id) const {
  auto it = std::find(env_ids_.begin(), env_ids_.end(), env_id);
  if (it == env_ids_.end()) throw std::invalid_argument("unknown environment " + env_id);
  return static_cast<int>(it - env_ids_.begin());
}

int DiscreteScm::cardinality(const std::string& name) const {
  auto it = supports_.find(name);
  if (it == supports_.end()) throw std::invalid_argument("no variable " + name);
  return it->second;
}

const Mechanism& DiscreteScm::mechanism(const std::string& name) const {
  auto it = mechanisms_.find(name);
  if (it == mechanisms_.end()) throw std::invalid_argument("no mechanism for " + name);
  return it->second;
}

void DiscreteScm::make_uniform_root(const std::string& name) {
  const int k = cardinality(name);
  graph_.remove_edges_into(name);
  mechanisms_[name] = Mechanism{{}, Eigen::MatrixXd::Constant(1, k, 1.0 / k)};
}

void DiscreteScm::validate() const {
  for (const auto& node : graph_.nodes()) {
    if (!mechanisms_.count(node)) throw std::invalid_argument("node " + node + " has no mechanism");
    auto expected = graph_.parents(node);
    auto actual = mechanisms_.at(node).parents;
    std::sort(expected.begin(), expected.end());
    std::sort(actual.begin(), actual.end());
    if (expected != actual) throw std::invalid_argument("mechanism parents of " + node + " differ from graph");
  }
  const Eigen::VectorXd w = env_weights();
  if (std::abs(w.sum() - 1.0) > 1e-12) throw std::invalid_argument("environment weights do not sum to one");
}

// ------------------------------------------------------------------ exact joint

namespace {

Eigen::Index cpt_row(const DiscreteScm& scm, const Mechanism& m,
                     const std::map<std::string, int>& position, const std::vector<int>& states) {
  Eigen::Index row = 0;
  for (const auto& p : m.parents) row = row * scm.cardinality(p) + states[position.at(p)];
  return row;
}

// Enumerates cells in order_ layout; E fixed to `fixed_env` when nonnegative.
JointTable enumerate(const DiscreteScm& scm, int fixed_env, std::int64_t budget) {
  scm.validate();
  const auto& order = scm.order();
  std::vector<TableVariable> vars;
  std::map<std::string, int> position;
  std::int64_t cells = 1;
  for (const auto& name : order) {
    position[name] = static_cast<int>(vars.size());
    vars.push_back({name, scm.cardinality(name)});
    cells *= scm.cardinality(name);
    if (cells > budget) {
      throw std::length_error("joint enumeration exceeds budget of " + std::to_string(budget) + " cells");
    }
  }
  std::vector<const Mechanism*> mechs;
  for (const auto& name : order) mechs.push_back(&scm.mechanism(name));
  const int env_pos = position.at(var::kEnv);

  Eigen::VectorXd mass(cells);
  std::vector<int> states(order.size(), 0);
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    double p = 1.0;
    for (std::size_t i = 0; i < order.size() && p > 0.0; ++i) {
      if (static_cast<int>(i) == env_pos && fixed_env >= 0) {
        p *= states[i] == fixed_env ? 1.0 : 0.0;
      } else {
        p *= (*mechs[i]).cpt(cpt_row(scm, *mechs[i], position, states), states[i]);
      }
    }
    mass(cell) = p;
    for (int i = static_cast<int>(order.size()) - 1; i >= 0; --i) {
      if (++states[i] < vars[i].cardinality) break;
      states[i] = 0;
    }
  }
  return JointTable::from_weights(std::move(vars), std::move(mass));
}

VarSet without_env(const DiscreteScm& scm) {
  VarSet keep;
  for (const auto& name : scm.order()) {
    if (name != var::kEnv) keep.push_back(name);
  }
  return keep;
}

}  // namespace

JointTable exact_joint(const DiscreteScm& scm, bool pool_environments, std::int64_t budget) {
  JointTable full = enumerate(scm, -1, budget);
  if (pool_environments) return full;
  return full.marginal(without_env(scm));
}

JointTable exact_joint_env(const DiscreteScm& scm, const std::string& env_id, std::int64_t budget) {
  return enumerate(scm, scm.env_index(env_id), budget).marginal(without_env(scm));
}

// ------------------------------------------------------------------ sampling

namespace {

int draw_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (probs(k) <= 0.0) continue;
    acc += probs(k);
    last_positive = static_cast<int>(k);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

}  // namespace

DiscreteSample sample(const DiscreteScm& scm, const std::string& env_id, std::size_t n,
                      std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample size must be at least 1");
  scm.validate();
  const int fixed_env = env_id == kMixtureEnv ? -1 : scm.env_index(env_id);
  const auto& order = scm.order();
  std::map<std::string, int> position;
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = static_cast<int>(i);

  DiscreteSample out;
  out.variables = order;
  out.columns.assign(order.size(), std::vector<int>(n));
  std::mt19937_64 rng(seed);
  std::vector<int> states(order.size());
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Mechanism& m = scm.mechanism(order[i]);
      if (order[i] == var::kEnv && fixed_env >= 0) {
        states[i] = fixed_env;
      } else {
        states[i] = draw_categorical(m.cpt.row(cpt_row(scm, m, position, states)), rng);
      }
      out.columns[i][row] = states[i];
    }
  }
  return out;
}

DiscreteScm random_parameterization(const CausalGraph& graph,
                                    const std::map<std::string, int>& supports,
                                    std::mt19937_64& rng, const RandomCptOptions& options) {
  const int num_envs = supports.at(var::kEnv);
  std::vector<std::string> env_ids;
  for (int e = 0; e < num_envs; ++e) env_ids.push_back("e" + std::to_string(e));
  DiscreteScm scm(graph, env_ids);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::uniform_real_distribution<double> weight(options.dominance_low, options.dominance_high);
  for (const auto& node : graph.topological_order()) {
    const int k = supports.at(node);
    Mechanism m;
    m.parents = graph.parents(node);
    Eigen::Index rows = 1;
    for (const auto& p : m.parents) rows *= supports.at(p);
    m.cpt.resize(rows, k);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::RowVectorXd dir(k);
      for (int j = 0; j < k; ++j) dir(j) = gamma(rng);
      dir /= dir.sum();
      const double w = weight(rng);
      const int peak = std::uniform_int_distribution<int>(0, k - 1)(rng);
      Eigen::RowVectorXd row = (1.0 - w) * dir;
      row(peak) += w;
      m.cpt.row(r) = row / row.sum();
    }
    scm.set_mechanism(node, k, std::move(m));
  }
  return scm;
}

// ------------------------------------------------------------------ benchmark

namespace {

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field + ": " + message);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

template <typename T>
void read_field(const nlohmann::json& doc, const std::string& key, T& target) {
  if (!doc.contains(key)) return;
  try {
    target = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(key + ": wrong type");
  }
}

}  // namespace

void BenchmarkConfig::validate() const {
  require(num_classes >= 2, "num_classes", "must be at least 2");
  require(!train_envs.empty(), "train_envs", "needs at least one environment");
  for (std::size_t i = 0; i < train_envs.size(); ++i) {
    const std::string f = "train_envs[" + std::to_string(i) + "]";
    require(is_probability(train_envs[i].p_e), f + ".p_e", "must lie in [0,1]");
    require(is_probability(train_envs[i].p_hat_e), f + ".p_hat_e", "must lie in [0,1]");
  }
  require(is_probability(flip_rate), "flip_rate", "must lie in [0,1]");
  require(obs_dim >= 1, "obs_dim", "must be positive");
  require(codebook == "onehot" || codebook == "gaussian", "codebook", "must be onehot or gaussian");
  require(codebook != "onehot" || obs_dim >= num_classes, "obs_dim", "must be >= num_classes for onehot");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma", "must be finite and >= 0");
  require(samples_per_env >= 1, "samples_per_env", "must be positive");
  require(test_samples >= 1, "test_samples", "must be positive");
}

nlohmann::json BenchmarkConfig::to_json() const {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& e : train_envs) envs.push_back({{"p_e", e.p_e}, {"p_hat_e", e.p_hat_e}});
  return {{"num_classes", num_classes}, {"train_envs", envs},   {"flip_rate", flip_rate},
          {"obs_dim", obs_dim},         {"noise_sigma", noise_sigma}, {"codebook", codebook},
          {"seed", seed},               {"samples_per_env", samples_per_env},
          {"test_samples", test_samples}};
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("benchmark: must be an object");
  static const std::set<std::string> known{"num_classes", "train_envs",  "flip_rate",
                                           "obs_dim",     "noise_sigma", "codebook",
                                           "seed",        "samples_per_env", "test_samples"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError(key + ": unknown field");
  }
  BenchmarkConfig cfg;
  read_field(doc, "num_classes", cfg.num_classes);
  read_field(doc, "flip_rate", cfg.flip_rate);
  read_field(doc, "obs_dim", cfg.obs_dim);
  read_field(doc, "noise_sigma", cfg.noise_sigma);
  read_field(doc, "codebook", cfg.codebook);
  read_field(doc, "seed", cfg.seed);
  read_field(doc, "samples_per_env", cfg.samples_per_env);
  read_field(doc, "test_samples", cfg.test_samples);
  if (doc.contains("train_envs")) {
    if (!doc["train_envs"].is_array()) throw ConfigError("train_envs: must be an array");
    cfg.train_envs.clear();
    for (std::size_t i = 0; i < doc["train_envs"].size(); ++i) {
      const auto& e = doc["train_envs"][i];
      const std::string f = "train_envs[" + std::to_string(i) + "]";
      if (!e.is_object()) throw ConfigError(f + ": must be an object");
      for (const auto& [key, _] : e.items()) {
        if (key != "p_e" && key != "p_hat_e") throw ConfigError(f + "." + key + ": unknown field");
      }
      EnvParams p;
      read_field(e, "p_e", p.p_e);
      read_field(e, "p_hat_e", p.p_hat_e);
      cfg.train_envs.push_back(p);
    }
  }
  cfg.validate();
  return cfg;
}

std::string shift_name(Shift shift) {
  switch (shift) {
    case Shift::kZsRandom: return "zs_random";
    case Shift::kZfRandom: return "zf_random";
    case Shift::kBoth: return "both";
  }
  return "";
}

Shift parse_shift(const std::string& name) {
  for (Shift s : kAllShifts) {
    if (shift_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown shift " + name);
}

std::string train_env_id(std::size_t index) { return "train" + std::to_string(index); }

DiscreteScm make_rs_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  using namespace var;
  const int k = cfg.num_classes;
  const int ne = static_cast<int>(cfg.train_envs.size());
  const CausalGraph graph = assumption_graph(AssumptionKind::kRsScm, true)
                                .induced({kEnv, kCausal, kFake, kLabel, kSpurious});
  std::vector<std::string> ids;
  for (int e = 0; e < ne; ++e) ids.push_back(train_env_id(e));
  DiscreteScm scm(graph, ids);
  scm.kind = "rs_benchmark";

  const Eigen::MatrixXd uniform_row = Eigen::MatrixXd::Constant(1, k, 1.0 / k);
  scm.set_mechanism(kEnv, ne, {{}, Eigen::MatrixXd::Constant(1, ne, 1.0 / ne)});
  // Z_c ignores E; the edge stays so the parent set matches the diagram.
  scm.set_mechanism(kCausal, k, {{kEnv}, uniform_row.replicate(ne, 1)});

  // Copy `parent_state` with probability p, otherwise redraw uniformly.
  auto copy_or_redraw = [k](double p, int parent_state) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Constant(k, (1.0 - p) / k);
    row(parent_state) += p;
    return row;
  };
  Eigen::MatrixXd fake(ne * k, k);
  Eigen::MatrixXd spurious(ne * k, k);
  for (int e = 0; e < ne; ++e) {
    for (int s = 0; s < k; ++s) {
      fake.row(e * k + s) = copy_or_redraw(cfg.train_envs[e].p_e, s);
      spurious.row(e * k + s) = copy_or_redraw(cfg.train_envs[e].p_hat_e, s);
    }
  }
  scm.set_mechanism(kFake, k, {{kEnv, kCausal}, fake});
  Eigen::MatrixXd label(k, k);
  for (int s = 0; s < k; ++s) label.row(s) = copy_or_redraw(1.0 - cfg.flip_rate, s);
  scm.set_mechanism(kLabel, k, {{kCausal}, label});
  scm.set_mechanism(kSpurious, k, {{kEnv, kLabel}, spurious});
  scm.validate();
  return scm;
}

DiscreteScm shift_environment(const DiscreteScm& scm, Shift shift) {
  if (scm.kind != "rs_benchmark") throw std::invalid_argument("shift needs an RS benchmark SCM");
  DiscreteScm out = scm;
  if (shift == Shift::kZsRandom || shift == Shift::kBoth) out.make_uniform_root(var::kSpurious);
  if (shift == Shift::kZfRandom || shift == Shift::kBoth) out.make_uniform_root(var::kFake);
  out.kind = "rs_benchmark_shifted";
  out.validate();
  return out;
}

// ------------------------------------------------------------------ observations

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    cols.push_back(std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows()));
  }
  return cols;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& cols) {
  const auto n = static_cast<Eigen::Index>(cols.size());
  if (n == 0) throw std::invalid_argument("empty codebook");
  const auto d = static_cast<Eigen::Index>(cols.at(0).size());
  Eigen::MatrixXd m(d, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto v = cols.at(c).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != d) throw std::invalid_argument("ragged codebook");
    for (Eigen::Index r = 0; r < d; ++r) m(r, c) = v[r];
  }
  return m;
}

}  // namespace

nlohmann::json Codebook::to_json() const {
  return {{"z_c", matrix_json(z_c)}, {"z_f", matrix_json(z_f)}, {"z_s", matrix_json(z_s)}};
}

Codebook Codebook::from_json(const nlohmann::json& doc) {
  Codebook cb{matrix_from_json(doc.at("z_c")), matrix_from_json(doc.at("z_f")),
              matrix_from_json(doc.at("z_s"))};
  if (cb.z_c.rows() != cb.z_f.rows() || cb.z_c.rows() != cb.z_s.rows()) {
    throw std::invalid_argument("codebook blocks differ in width");
  }
  return cb;
}

Codebook make_codebook(const BenchmarkConfig& cfg) {
  cfg.validate();
  const int d = cfg.obs_dim;
  const int k = cfg.num_classes;
  if (cfg.codebook == "onehot") {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, k);
    return {eye, eye, eye};
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, "codebook"));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto block = [&] {
    Eigen::MatrixXd m(d, k);
    for (int c = 0; c < k; ++c) {
      for (int r = 0; r < d; ++r) m(r, c) = normal(rng);
      m.col(c).normalize();
    }
    return m;
  };
  Codebook cb;
  cb.z_c = block();
  cb.z_f = block();
  cb.z_s = block();
  return cb;
}

Eigen::VectorXd encode_observation(int z_c, int z_f, int z_s, const Codebook& codebook,
                                   double noise_sigma, std::mt19937_64& rng) {
  const Eigen::Index d = codebook.z_c.rows();
  const Eigen::Index k = codebook.z_c.cols();
  for (int v : {z_c, z_f, z_s}) {
    if (v < 0 || v >= k) throw std::invalid_argument("latent state outside the codebook");
  }
  Eigen::VectorXd x(3 * d);
  x << codebook.z_c.col(z_c), codebook.z_f.col(z_f), codebook.z_s.col(z_s);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += normal(rng);
  }
  return x;
}

Eigen::VectorXd encode_observation(int z_c, int z_f, int z_s, const Codebook& codebook,
                                   double noise_sigma, std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  return encode_observation(z_c, z_f, z_s, codebook, noise_sigma, rng);
}

std::array<int, 3> decode_observation(const Eigen::VectorXd& x, const Codebook& codebook) {
  const Eigen::Index d = codebook.z_c.rows();
  std::array<int, 3> out{};
  const Eigen::MatrixXd* blocks[] = {&codebook.z_c, &codebook.z_f, &codebook.z_s};
  for (int b = 0; b < 3; ++b) {
    const Eigen::VectorXd seg = x.segment(b * d, d);
    Eigen::Index best = 0;
    ((*blocks[b]).colwise() - seg).colwise().squaredNorm().minCoeff(&best);
    out[b] = static_cast<int>(best);
  }
  return out;
}

EnvironmentDataset sample_benchmark(const DiscreteScm& scm, const Codebook& codebook,
                                    const BenchmarkConfig& cfg, const std::string& env_id,
                                    std::size_t n, std::uint64_t seed) {
  if (scm.kind.rfind("rs_benchmark", 0) != 0) throw std::invalid_argument("not a benchmark SCM");
  const DiscreteSample s = sample(scm, env_id, n, derive_seed(seed, "latents"));
  auto column = [&](const std::string& name) {
    const auto it = std::find(s.variables.begin(), s.variables.end(), name);
    return s.columns[it - s.variables.begin()];
  };
  EnvironmentDataset out;
  out.env_id = env_id;
  out.num_classes = cfg.num_classes;
  out.num_envs = static_cast<int>(scm.env_ids().size());
  out.seed = seed;
  out.env = column(var::kEnv);
  out.y = column(var::kLabel);
  out.z_c = column(var::kCausal);
  out.z_f = column(var::kFake);
  out.z_s = column(var::kSpurious);
  out.x.resize(3 * codebook.z_c.rows(), static_cast<Eigen::Index>(n));
  std::mt19937_64 noise(derive_seed(seed, "noise"));
  for (std::size_t i = 0; i < n; ++i) {
    out.x.col(static_cast<Eigen::Index>(i)) =
        encode_observation(out.z_c[i], out.z_f[i], out.z_s[i], codebook, cfg.noise_sigma, noise);
  }
  return out;
}

// ------------------------------------------------------------------ CSV

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  T v{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("bad number '" + std::string(field) + "' on line " + std::to_string(line));
  }
  return v;
}

}  // namespace

void write_dataset_csv(const EnvironmentDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "env,y,z_c,z_f,z_s";
  for (Eigen::Index j = 0; j < data.x.rows(); ++j) out << ",x_" << j;
  out << '\n';
  std::string line;
  for (std::size_t i = 0; i < data.size(); ++i) {
    line = std::to_string(data.env[i]) + ',' + std::to_string(data.y[i]) + ',' +
           std::to_string(data.z_c[i]) + ',' + std::to_string(data.z_f[i]) + ',' +
           std::to_string(data.z_s[i]);
    for (Eigen::Index j = 0; j < data.x.rows(); ++j) {
      line += ',';
      line += format_double(data.x(j, static_cast<Eigen::Index>(i)));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

EnvironmentDataset read_dataset_csv(const std::string& path, int num_classes, int num_envs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> names;
  {
    std::stringstream ss(header);
    for (std::string f; std::getline(ss, f, ',');) names.push_back(f);
  }
  if (names.size() < 5 || names[0] != "env" || names[1] != "y" || names[2] != "z_c" ||
      names[3] != "z_f" || names[4] != "z_s") {
    throw std::runtime_error(path + ": unexpected header");
  }
  const std::size_t dim = names.size() - 5;
  EnvironmentDataset data;
  data.num_classes = num_classes;
  data.num_envs = num_envs;
  std::vector<double> xs;
  std::size_t line_no = 1;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != names.size()) {
      throw std::runtime_error(path + ": wrong field count on line " + std::to_string(line_no));
    }
    data.env.push_back(parse_number<int>(fields[0], line_no));
    data.y.push_back(parse_number<int>(fields[1], line_no));
    data.z_c.push_back(parse_number<int>(fields[2], line_no));
    data.z_f.push_back(parse_number<int>(fields[3], line_no));
    data.z_s.push_back(parse_number<int>(fields[4], line_no));
    for (std::size_t j = 0; j < dim; ++j) xs.push_back(parse_number<double>(fields[5 + j], line_no));
  }
  data.x = Eigen::Map<Eigen::MatrixXd>(xs.data(), static_cast<Eigen::Index>(dim),
                                       static_cast<Eigen::Index>(data.y.size()));
  return data;
}

}  // namespace rsscm
