#include "rsscm/learner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "rsscm/scm.hpp"

namespace rsscm {

using Mat = Eigen::MatrixXd;
using nn::Activation;

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& field, const std::string& msg) {
    if (!ok) throw ConfigError(field + ": " + msg);
  };
  require(lambda >= 0.0, "lambda", "must be >= 0");
  require(beta >= 0.0, "beta", "must be >= 0");
  require(optimizer == "adam" || optimizer == "sgd", "optimizer", "must be adam or sgd");
  require(learning_rate > 0.0, "learning_rate", "must be positive");
  require(domain_learning_rate > 0.0, "domain_learning_rate", "must be positive");
  require(selector_learning_rate > 0.0, "selector_learning_rate", "must be positive");
  require(batch_size >= 1, "batch_size", "must be positive");
  require(steps >= 1, "steps", "must be positive");
  require(max_outer_epochs >= 1, "max_outer_epochs", "must be positive");
  require(plateau_window >= 1, "plateau_window", "must be positive");
  require(mi_weight >= 0.0, "mi_weight", "must be >= 0");
  require(mine_hidden >= 1, "mine_hidden", "must be positive");
  require(bottleneck_weight >= 0.0, "bottleneck_weight", "must be >= 0");
  require(domain_heads == "residual" || domain_heads == "independent", "domain_heads",
          "must be residual or independent");
  require(encoder == "softmax" || encoder == "binary", "encoder", "must be softmax or binary");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction",
          "must lie in (0,1)");
}

#define RSSCM_TRAIN_FIELDS(X)                                                              \
  X(lambda) X(beta) X(optimizer) X(learning_rate) X(domain_learning_rate)                  \
  X(selector_learning_rate) X(batch_size) X(steps) X(domain_steps) X(domain_heads) X(encoder)         \
  X(inner_iterations) X(selector_steps) X(max_outer_epochs) X(plateau_window)              \
  X(plateau_min_gain) X(mi_weight) X(mi_enabled) X(mi_shared_gate) X(straight_through) X(mine_hidden)        \
  X(bottleneck_weight) X(validation_fraction) X(seed)

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json doc;
#define X(name) doc[#name] = name;
  RSSCM_TRAIN_FIELDS(X)
#undef X
  return doc;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("train: must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    bool known = false;
#define X(name)                                                     \
  if (key == #name) {                                               \
    known = true;                                                   \
    try {                                                           \
      cfg.name = value.get<decltype(cfg.name)>();                   \
    } catch (const nlohmann::json::exception&) {                    \
      throw ConfigError("train." + key + ": wrong type");           \
    }                                                               \
  }
    RSSCM_TRAIN_FIELDS(X)
#undef X
    if (!known) throw ConfigError("train." + key + ": unknown field");
  }
  cfg.validate();
  return cfg;
}

// ------------------------------------------------------------------ bundle

namespace {

int code_width(const std::string& encoder, int k) {
  if (encoder == "softmax") return k;
  int bits = 1;
  while ((1 << bits) < k) ++bits;
  return bits;
}

Net make_encoder(const std::string& encoder, int block_width, int width, std::mt19937_64& rng) {
  Mat conn = Mat::Zero(3 * width, 3 * block_width);
  for (int b = 0; b < 3; ++b) conn.block(b * width, b * block_width, width, block_width).setOnes();
  Net h;
  if (encoder == "softmax") {
    h.add_dense(3 * block_width, 3 * width, Activation::kGroupSoftmax, rng, conn, width);
  } else {
    h.add_dense(3 * block_width, 3 * width, Activation::kSigmoid, rng, conn);
  }
  return h;
}

Net make_linear(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng, bool zero) {
  Net n;
  n.add_dense(in, out, Activation::kIdentity, rng);
  if (zero) n.mutable_layers()[0].weight.setZero();
  return n;
}

}  // namespace

Net make_critic(Eigen::Index pair_dim, int hidden, std::mt19937_64& rng) {
  Net t;
  t.add_dense(pair_dim, hidden, Activation::kRelu, rng);
  t.add_dense(hidden, 1, Activation::kIdentity, rng);
  return t;
}

ModelBundle make_bundle(int block_width, int num_classes, int num_envs, const TrainConfig& cfg) {
  cfg.validate();
  if (block_width < 1 || num_classes < 2 || num_envs < 1) throw std::invalid_argument("bad bundle shape");
  std::mt19937_64 rng(derive_seed(cfg.seed, "init"));
  ModelBundle b;
  b.num_classes = num_classes;
  b.num_envs = num_envs;
  b.block_width = block_width;
  b.domain_heads = cfg.domain_heads;
  b.encoder = cfg.encoder;
  b.code_width = code_width(cfg.encoder, num_classes);
  const Eigen::Index fd = b.feature_dim();
  b.h = make_encoder(b.encoder, block_width, b.code_width, rng);
  b.g_i = make_linear(fd, num_classes, rng, false);
  for (int e = 0; e < num_envs; ++e) {
    b.g_d.push_back(make_linear(fd, num_classes, rng, cfg.domain_heads == "residual"));
  }
  b.s.add_dense(fd, fd, Activation::kRelu, rng);
  b.s.add_dense(fd, fd, Activation::kSigmoid, rng);
  b.t = make_critic(2 * fd, cfg.mine_hidden, rng);
  return b;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) v |= bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kB64[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  int table[256];
  std::fill(std::begin(table), std::end(table), -1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64[i])] = i;
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length must be a multiple of 4");
  std::vector<unsigned char> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = table[static_cast<unsigned char>(c)];
      if (d < 0 || pad) throw std::invalid_argument("invalid base64 character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back((v >> 16) & 255);
    if (pad < 2) out.push_back((v >> 8) & 255);
    if (pad < 1) out.push_back(v & 255);
  }
  return out;
}

std::vector<std::pair<std::string, const Net*>> named_networks(const ModelBundle& b) {
  std::vector<std::pair<std::string, const Net*>> out{{"h", &b.h}, {"g_i", &b.g_i}};
  for (std::size_t e = 0; e < b.g_d.size(); ++e) out.emplace_back("g_d" + std::to_string(e), &b.g_d[e]);
  out.emplace_back("s", &b.s);
  out.emplace_back("t", &b.t);
  return out;
}

void append_doubles(std::vector<unsigned char>& bytes, const double* data, Eigen::Index n) {
  const auto* p = reinterpret_cast<const unsigned char*>(data);
  bytes.insert(bytes.end(), p, p + n * sizeof(double));
}

}  // namespace

nlohmann::json ModelBundle::manifest() const {
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& [name, net] : named_networks(*this)) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net->layers()) {
      layers.push_back({{"in", l.in_dim()},
                        {"out", l.out_dim()},
                        {"activation", nn::activation_name(l.activation)},
                        {"group", l.group},
                        {"masked", l.connectivity.size() != 0}});
    }
    nets.push_back({{"name", name}, {"layers", layers}});
  }
  return {{"method", method},
          {"num_classes", num_classes},
          {"num_envs", num_envs},
          {"block_width", block_width},
          {"domain_heads", domain_heads},
          {"encoder", encoder},
          {"code_width", code_width},
          {"selector_active", selector_active},
          {"blob_format", "float64-le; per network: weights (column-major) and bias per layer, "
                          "then connectivity of masked layers"},
          {"networks", nets}};
}

nlohmann::json ModelBundle::to_json() const {
  std::vector<unsigned char> bytes;
  for (const auto& [name, net] : named_networks(*this)) {
    const Eigen::VectorXd flat = net->flat_parameters();
    append_doubles(bytes, flat.data(), flat.size());
    for (const auto& l : net->layers()) {
      if (l.connectivity.size() != 0) append_doubles(bytes, l.connectivity.data(), l.connectivity.size());
    }
  }
  return {{"manifest", manifest()}, {"parameters", base64_encode(bytes)}};
}

ModelBundle ModelBundle::from_json(const nlohmann::json& doc) {
  const auto& m = doc.at("manifest");
  ModelBundle b;
  b.method = m.at("method").get<std::string>();
  b.num_classes = m.at("num_classes").get<int>();
  b.num_envs = m.at("num_envs").get<int>();
  b.block_width = m.at("block_width").get<int>();
  b.domain_heads = m.at("domain_heads").get<std::string>();
  b.encoder = m.at("encoder").get<std::string>();
  b.code_width = m.at("code_width").get<int>();
  b.selector_active = m.at("selector_active").get<bool>();
  const auto bytes = base64_decode(doc.at("parameters").get<std::string>());
  std::size_t at = 0;
  auto take = [&](double* dst, Eigen::Index n) {
    const std::size_t len = static_cast<std::size_t>(n) * sizeof(double);
    if (at + len > bytes.size()) throw std::invalid_argument("parameter blob too short");
    std::memcpy(dst, bytes.data() + at, len);
    at += len;
  };
  b.g_d.resize(b.num_envs);
  for (const auto& spec : m.at("networks")) {
    const std::string name = spec.at("name").get<std::string>();
    Net* target = nullptr;
    if (name == "h") target = &b.h;
    else if (name == "g_i") target = &b.g_i;
    else if (name == "s") target = &b.s;
    else if (name == "t") target = &b.t;
    else if (name.rfind("g_d", 0) == 0) target = &b.g_d.at(std::stoul(name.substr(3)));
    else throw std::invalid_argument("unknown network " + name);
    Net net;
    std::vector<nn::DenseLayer<double>> layers;
    for (const auto& ls : spec.at("layers")) {
      nn::DenseLayer<double> l;
      l.weight = Mat::Zero(ls.at("out").get<Eigen::Index>(), ls.at("in").get<Eigen::Index>());
      l.bias = Eigen::VectorXd::Zero(l.weight.rows());
      l.activation = nn::parse_activation(ls.at("activation").get<std::string>());
      l.group = ls.at("group").get<int>();
      if (ls.at("masked").get<bool>()) l.connectivity = Mat::Ones(l.weight.rows(), l.weight.cols());
      layers.push_back(std::move(l));
    }
    for (auto& l : layers) net.add_layer(l);
    Eigen::VectorXd flat(net.parameter_count());
    take(flat.data(), flat.size());
    for (auto& l : net.mutable_layers()) {
      if (l.connectivity.size() != 0) take(l.connectivity.data(), l.connectivity.size());
    }
    net.set_flat_parameters(flat);
    *target = std::move(net);
  }
  if (at != bytes.size()) throw std::invalid_argument("parameter blob has trailing bytes");
  return b;
}

// ------------------------------------------------------------------ curves and data

std::string Curves::to_csv() const {
  std::ostringstream out;
  out << "epoch,phase,term,value,id_accuracy\n";
  auto num = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
  };
  for (const auto& row : rows) {
    for (const auto& [term, value] : row.terms) {
      out << row.epoch << ',' << row.phase << ',' << term << ',' << num(value) << ','
          << num(row.id_accuracy) << '\n';
    }
  }
  return out.str();
}

TrainValSplit split_train_validation(const std::vector<EnvironmentDataset>& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("validation fraction must lie in (0,1)");
  TrainValSplit out;
  for (const auto& d : data) {
    const std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d.size())));
    if (n_val == 0 || n_val >= d.size()) throw std::invalid_argument("environment too small to split");
    out.train.push_back(d.slice(0, d.size() - n_val));
    out.validation.push_back(d.slice(d.size() - n_val, d.size()));
  }
  return out;
}

namespace {

struct Batch {
  Mat x;
  std::vector<int> y;
};

Batch draw_batch(const EnvironmentDataset& d, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
  Batch b;
  b.x.resize(d.x.rows(), static_cast<Eigen::Index>(n));
  b.y.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = pick(rng);
    b.x.col(static_cast<Eigen::Index>(j)) = d.x.col(static_cast<Eigen::Index>(i));
    b.y[j] = d.y[i];
  }
  return b;
}

std::vector<Batch> draw_batches(const std::vector<EnvironmentDataset>& envs, std::size_t n,
                                std::mt19937_64& rng) {
  std::vector<Batch> out;
  for (const auto& d : envs) out.push_back(draw_batch(d, n, rng));
  return out;
}

nn::OptimizerConfig opt_config(const TrainConfig& cfg, double lr) {
  nn::OptimizerConfig o;
  o.kind = cfg.optimizer;
  o.learning_rate = lr;
  return o;
}

void check_finite(double v, const std::string& what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw nn::TrainingDivergence(what + " became non-finite at epoch " + std::to_string(epoch));
  }
}

/// Optimizer state of the h / g_i / g_d game.
struct Game {
  nn::Optimizer<double> h, g_i;
  std::vector<nn::Optimizer<double>> g_d;

  Game(const TrainConfig& cfg, int num_envs)
      : h(opt_config(cfg, cfg.learning_rate)), g_i(opt_config(cfg, cfg.learning_rate)) {
    for (int e = 0; e < num_envs; ++e) g_d.emplace_back(opt_config(cfg, cfg.domain_learning_rate));
  }
};

struct GameTerms {
  double invariant_loss = 0.0;
  double domain_loss = 0.0;
  double compression = 0.0;
};

struct Compression {
  double value = 0.0;
  Mat grad;  // d value / d features
};

/// Batch mean of the encoder's KL to its uniform code: Σ_blocks KL(h_b ‖ uniform)
/// for softmax blocks, Σ_units KL(Bern(h_j) ‖ Bern(1/2)) for binary units.
Compression compression(const ModelBundle& b, const Mat& f) {
  const double n = static_cast<double>(f.cols());
  const Mat p = f.array().max(1e-300);
  Compression c;
  if (b.encoder == "softmax") {
    const Mat logp = p.array().log().matrix();
    c.value = (p.array() * logp.array()).sum() / n + 3.0 * std::log(static_cast<double>(b.code_width));
    c.grad = ((logp.array() + 1.0) / n).matrix();
  } else {
    const Mat q = (1.0 - f.array()).max(1e-300).matrix();
    c.value = ((p.array() * p.array().log() + q.array() * q.array().log()).sum() +
               static_cast<double>(f.size()) * std::log(2.0)) / n;
    c.grad = ((p.array().log() - q.array().log()) / n).matrix();
  }
  return c;
}

Mat domain_logits(const ModelBundle& b, std::size_t e, const Mat& z, nn::Tape<double>* tape_d,
                  nn::Tape<double>* tape_i) {
  Mat logits = b.g_d[e].forward(z, tape_d);
  if (b.domain_heads == "residual") logits += b.g_i.forward(z, tape_i);
  return logits;
}

/// One update of the game: g_d heads first, then h and g_i on
/// L_i + β·(L_i − L_d) (+ compression). With `masked`, features are s(h)⊙h
/// with s held fixed.
GameTerms game_step(ModelBundle& b, Game& game, const std::vector<Batch>& batches,
                    const TrainConfig& cfg, double beta, std::size_t domain_steps, bool masked,
                    std::size_t epoch) {
  const std::size_t ne = batches.size();
  std::vector<nn::Tape<double>> tape_h(ne);
  std::vector<Mat> f(ne), m(ne), z(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    f[e] = b.h.forward(batches[e].x, &tape_h[e]);
    m[e] = masked ? b.s.forward(f[e]) : Mat::Ones(f[e].rows(), f[e].cols());
    z[e] = m[e].cwiseProduct(f[e]);
  }

  for (std::size_t k = 0; k < domain_steps; ++k) {
    for (std::size_t e = 0; e < ne; ++e) {
      nn::Tape<double> tape;
      const Mat logits = domain_logits(b, e, z[e], &tape, nullptr);
      const auto loss = nn::cross_entropy_with_logits<double>(logits, batches[e].y);
      check_finite(loss.value, "domain loss", epoch);
      auto grads = b.g_d[e].zero_gradients();
      b.g_d[e].backward(tape, loss.grad, &grads);
      game.g_d[e].step(b.g_d[e], grads);
    }
  }

  GameTerms terms;
  std::vector<nn::Tape<double>> tape_i(ne), tape_d(ne), tape_di(ne);
  std::vector<nn::LossResult<double>> loss_i(ne), loss_d(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    loss_i[e] = nn::cross_entropy_with_logits<double>(b.g_i.forward(z[e], &tape_i[e]), batches[e].y);
    terms.invariant_loss += loss_i[e].value / static_cast<double>(ne);
    if (beta > 0.0) {
      loss_d[e] = nn::cross_entropy_with_logits<double>(domain_logits(b, e, z[e], &tape_d[e], &tape_di[e]),
                                                        batches[e].y);
      terms.domain_loss += loss_d[e].value / static_cast<double>(ne);
    }
  }
  check_finite(terms.invariant_loss, "invariant loss", epoch);
  check_finite(terms.domain_loss, "domain loss", epoch);

  auto grads_h = b.h.zero_gradients();
  auto grads_i = b.g_i.zero_gradients();
  const double wi = (1.0 + beta) / static_cast<double>(ne);
  const double wd = beta / static_cast<double>(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    Mat dz = b.g_i.backward(tape_i[e], wi * loss_i[e].grad, &grads_i);
    if (beta > 0.0) {
      const Mat gd = -wd * loss_d[e].grad;
      dz += b.g_d[e].backward(tape_d[e], gd, nullptr);
      if (b.domain_heads == "residual") dz += b.g_i.backward(tape_di[e], gd, nullptr);
    }
    Mat df = dz.cwiseProduct(m[e]);
    if (cfg.bottleneck_weight > 0.0) {
      const Compression c = compression(b, f[e]);
      terms.compression += c.value / static_cast<double>(ne);
      df += (cfg.bottleneck_weight / static_cast<double>(ne)) * c.grad;
    }
    b.h.backward(tape_h[e], df, &grads_h);
  }
  game.h.step(b.h, grads_h);
  game.g_i.step(b.g_i, grads_i);
  return terms;
}

double validation_accuracy(const ModelBundle& b, const TrainValSplit& data, bool use_selector) {
  return evaluate_mean(b, data.validation, use_selector);
}

ModelBundle train_game(const TrainValSplit& data, const TrainConfig& cfg, const std::string& method,
                       double beta, std::size_t domain_steps, Curves* curves) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("no training environments");
  const auto& first = data.train.front();
  if (first.x.rows() % 3 != 0) throw std::invalid_argument("observation width must split into 3 blocks");
  ModelBundle b = make_bundle(static_cast<int>(first.x.rows() / 3), first.num_classes,
                              static_cast<int>(data.train.size()), cfg);
  b.method = method;
  Game game(cfg, b.num_envs);
  std::mt19937_64 rng(derive_seed(cfg.seed, method + "/batches"));
  const std::size_t log_every = std::max<std::size_t>(1, cfg.steps / 20);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto batches = draw_batches(data.train, cfg.batch_size, rng);
    const GameTerms t = game_step(b, game, batches, cfg, beta, domain_steps, false, step);
    if (curves && (step % log_every == 0 || step == cfg.steps)) {
      CurveRow row{step, method, {{"invariant_loss", t.invariant_loss}}, validation_accuracy(b, data, false)};
      if (beta > 0.0) {
        row.terms["domain_loss"] = t.domain_loss;
        row.terms["invariance_gap"] = t.invariant_loss - t.domain_loss;
      }
      if (cfg.bottleneck_weight > 0.0) row.terms["compression"] = t.compression;
      curves->rows.push_back(std::move(row));
    }
  }
  return b;
}

}  // namespace

ModelBundle train_erm(const TrainValSplit& data, const TrainConfig& cfg, Curves* curves) {
  return train_game(data, cfg, "erm", 0.0, 0, curves);
}

ModelBundle train_invrat(const TrainValSplit& data, const TrainConfig& cfg, Curves* curves) {
  if (data.train.size() < 2) throw std::invalid_argument("InvRat needs at least two training environments");
  const std::string method = cfg.bottleneck_weight > 0.0 ? "iib" : "invrat";
  return train_game(data, cfg, method, cfg.beta, cfg.domain_steps, curves);
}

// ------------------------------------------------------------------ evaluation

Eigen::MatrixXd features(const ModelBundle& bundle, const Eigen::MatrixXd& x, bool use_selector) {
  Mat f = bundle.h.forward(x);
  if (use_selector) f = f.cwiseProduct(bundle.s.forward(f));
  return f;
}

double evaluate(const ModelBundle& bundle, const EnvironmentDataset& data, bool use_selector) {
  if (data.size() == 0) return 0.0;
  const Mat logits = bundle.g_i.forward(features(bundle, data.x, use_selector));
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    if (arg == data.y[j]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_mean(const ModelBundle& bundle, const std::vector<EnvironmentDataset>& data,
                     bool use_selector) {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& d : data) acc += evaluate(bundle, d, use_selector);
  return acc / static_cast<double>(data.size());
}

double selector_loss(const ModelBundle& bundle, const Eigen::MatrixXd& x,
                     const std::vector<int>& labels, double lambda) {
  const Mat f = bundle.h.forward(x);
  if (bundle.s.out_dim() != f.rows()) throw std::invalid_argument("selector width differs from h");
  const Mat m = bundle.s.forward(f);
  const Mat ones = Mat::Ones(m.rows(), m.cols());
  const double kept = nn::cross_entropy_with_logits<double>(bundle.g_i.forward(m.cwiseProduct(f)), labels).value;
  const double dropped =
      nn::cross_entropy_with_logits<double>(bundle.g_i.forward((ones - m).cwiseProduct(f)), labels).value;
  return kept - lambda * dropped;
}

std::array<double, 3> selector_block_mass(const ModelBundle& bundle, const Eigen::MatrixXd& x) {
  const Mat m = bundle.s.forward(bundle.h.forward(x));
  std::array<double, 3> out{};
  const int w = bundle.code_width;
  for (int b = 0; b < 3; ++b) out[b] = m.middleRows(b * w, w).mean();
  return out;
}

// ------------------------------------------------------------------ MINE

MineTerms mine_terms(const Net& critic, const Eigen::MatrixXd& joint_pairs,
                     const Eigen::MatrixXd& product_pairs) {
  if (joint_pairs.cols() == 0 || product_pairs.cols() == 0) {
    throw std::invalid_argument("MI bound needs nonempty sample sets");
  }
  nn::Tape<double> tj, tp;
  const Mat t_joint = critic.forward(joint_pairs, &tj);
  const Mat t_prod = critic.forward(product_pairs, &tp);
  const double nj = static_cast<double>(t_joint.cols());
  const double np = static_cast<double>(t_prod.cols());
  const double shift = t_prod.maxCoeff();
  const Eigen::RowVectorXd e = (t_prod.row(0).array() - shift).exp();
  const double mean_exp = e.sum() / np;
  MineTerms out;
  out.bound_nats = t_joint.mean() - (shift + std::log(mean_exp));
  out.critic_grads = critic.zero_gradients();
  out.grad_joint = critic.backward(tj, Mat::Constant(1, t_joint.cols(), 1.0 / nj), &out.critic_grads);
  out.grad_product = critic.backward(tp, -(e / e.sum()), &out.critic_grads);
  return out;
}

double mi_lower_bound(const Net& critic, const Eigen::MatrixXd& joint_pairs,
                      const Eigen::MatrixXd& product_pairs) {
  if (joint_pairs.cols() == 0 || product_pairs.cols() == 0) {
    throw std::invalid_argument("MI bound needs nonempty sample sets");
  }
  const Mat t_joint = critic.forward(joint_pairs);
  const Mat t_prod = critic.forward(product_pairs);
  const double shift = t_prod.maxCoeff();
  const double lme = shift + std::log((t_prod.array() - shift).exp().mean());
  return (t_joint.mean() - lme) / std::log(2.0);
}

namespace {

std::vector<Eigen::Index> permutation(Eigen::Index n, std::mt19937_64& rng) {
  std::vector<Eigen::Index> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Mat stack_pairs(const Mat& a, const Mat& b, const std::vector<Eigen::Index>* perm) {
  Mat out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  if (perm) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.col(j).tail(b.rows()) = b.col((*perm)[j]);
  } else {
    out.bottomRows(b.rows()) = b;
  }
  return out;
}

nn::Gradients<double> scaled(nn::Gradients<double> g, double k) {
  for (auto& w : g.weight) w *= k;
  for (auto& v : g.bias) v *= k;
  return g;
}

}  // namespace

double fit_mine(Net& critic, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t steps,
                double learning_rate, std::size_t batch_size, std::mt19937_64& rng) {
  if (a.cols() != b.cols() || a.cols() == 0) throw std::invalid_argument("MINE needs paired samples");
  nn::OptimizerConfig oc;
  oc.learning_rate = learning_rate;
  nn::Optimizer<double> opt(oc);
  std::uniform_int_distribution<Eigen::Index> pick(0, a.cols() - 1);
  for (std::size_t s = 0; s < steps; ++s) {
    Mat ab(a.rows(), static_cast<Eigen::Index>(batch_size));
    Mat bb(b.rows(), static_cast<Eigen::Index>(batch_size));
    for (Eigen::Index j = 0; j < ab.cols(); ++j) {
      const Eigen::Index i = pick(rng);
      ab.col(j) = a.col(i);
      bb.col(j) = b.col(i);
    }
    const auto perm = permutation(ab.cols(), rng);
    const MineTerms t = mine_terms(critic, stack_pairs(ab, bb, nullptr), stack_pairs(ab, bb, &perm));
    opt.step(critic, scaled(t.critic_grads, -1.0));
  }
  const auto perm = permutation(a.cols(), rng);
  return mi_lower_bound(critic, stack_pairs(a, b, nullptr), stack_pairs(a, b, &perm));
}

// ------------------------------------------------------------------ IIL

namespace {

struct SelectorTerms {
  double loss = 0.0;
  double mi_bits = 0.0;
};

/// One update of s and T on selector_loss − w·MI[s⊙h; (1−s)⊙h]; h and g_i fixed.
SelectorTerms selector_step(ModelBundle& b, nn::Optimizer<double>& opt_s, nn::Optimizer<double>& opt_t,
                            const Batch& batch, const TrainConfig& cfg, std::mt19937_64& rng,
                            std::size_t epoch) {
  const Mat f = b.h.forward(batch.x);
  nn::Tape<double> tape_s;
  const Mat m = b.s.forward(f, &tape_s);
  const Mat ones = Mat::Ones(m.rows(), m.cols());

  nn::Tape<double> ta, tb;
  const auto kept = nn::cross_entropy_with_logits<double>(b.g_i.forward(m.cwiseProduct(f), &ta), batch.y);
  const auto dropped =
      nn::cross_entropy_with_logits<double>(b.g_i.forward((ones - m).cwiseProduct(f), &tb), batch.y);
  SelectorTerms terms;
  terms.loss = kept.value - cfg.lambda * dropped.value;
  check_finite(terms.loss, "selector loss", epoch);
  const Mat da = b.g_i.backward(ta, kept.grad, nullptr);
  const Mat db = b.g_i.backward(tb, dropped.grad, nullptr);
  Mat dm = da.cwiseProduct(f) + cfg.lambda * db.cwiseProduct(f);

  if (cfg.mi_enabled && cfg.mi_weight > 0.0) {
    // A shared gate keeps the mask pattern itself from carrying information.
    const Mat gate = cfg.mi_shared_gate ? Mat(m.rowwise().mean().replicate(1, m.cols())) : m;
    const Mat mh = cfg.straight_through ? Mat((gate.array() > 0.5).cast<double>()) : gate;
    const Mat a = mh.cwiseProduct(f);
    const Mat rest = (ones - mh).cwiseProduct(f);
    const auto perm = permutation(a.cols(), rng);
    const MineTerms mt = mine_terms(b.t, stack_pairs(a, rest, nullptr), stack_pairs(a, rest, &perm));
    terms.mi_bits = mt.bound_nats / std::log(2.0);
    check_finite(terms.mi_bits, "MI bound", epoch);
    const Eigen::Index d = a.rows();
    Mat d_a = mt.grad_joint.topRows(d) + mt.grad_product.topRows(d);
    Mat d_rest = mt.grad_joint.bottomRows(d);
    for (Eigen::Index j = 0; j < a.cols(); ++j) d_rest.col(perm[j]) += mt.grad_product.col(j).tail(d);
    // Loss carries −w·MI; straight-through passes d/d(mh) to m unchanged.
    Mat d_gate = (d_a - d_rest).cwiseProduct(f);
    if (cfg.mi_shared_gate) {
      d_gate = (d_gate.rowwise().sum() / static_cast<double>(d_gate.cols())).replicate(1, d_gate.cols());
    }
    dm -= cfg.mi_weight * d_gate;
    opt_t.step(b.t, scaled(mt.critic_grads, -cfg.mi_weight));
  }
  auto grads_s = b.s.zero_gradients();
  b.s.backward(tape_s, dm, &grads_s);
  opt_s.step(b.s, grads_s);
  return terms;
}

Batch pooled_batch(const std::vector<Batch>& batches) {
  Batch out;
  Eigen::Index cols = 0;
  for (const auto& b : batches) cols += b.x.cols();
  out.x.resize(batches.front().x.rows(), cols);
  Eigen::Index at = 0;
  for (const auto& b : batches) {
    out.x.middleCols(at, b.x.cols()) = b.x;
    at += b.x.cols();
    out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  }
  return out;
}

}  // namespace

ModelBundle train_iil(ModelBundle bundle, const TrainValSplit& data, const TrainConfig& cfg,
                      Curves* curves) {
  cfg.validate();
  if (data.train.size() < 2) throw std::invalid_argument("IIL needs at least two training environments");
  if (static_cast<int>(data.train.size()) != bundle.num_envs) {
    throw std::invalid_argument("bundle and data disagree on the number of environments");
  }
  ModelBundle& b = bundle;
  b.method = cfg.mi_enabled && cfg.mi_weight > 0.0 ? "iil" : "iil_no_mi";
  nn::Optimizer<double> opt_s(opt_config(cfg, cfg.selector_learning_rate));
  nn::Optimizer<double> opt_t(opt_config(cfg, cfg.selector_learning_rate));
  Game game(cfg, b.num_envs);
  std::mt19937_64 rng(derive_seed(cfg.seed, b.method + "/iil"));

  std::vector<double> history;
  for (std::size_t epoch = 1; epoch <= cfg.max_outer_epochs; ++epoch) {
    SelectorTerms sel;
    for (std::size_t k = 0; k < cfg.selector_steps; ++k) {
      sel = selector_step(b, opt_s, opt_t, pooled_batch(draw_batches(data.train, cfg.batch_size, rng)), cfg,
                          rng, epoch);
    }
    b.selector_active = true;
    GameTerms game_terms;
    for (std::size_t k = 0; k < cfg.inner_iterations; ++k) {
      game_terms = game_step(b, game, draw_batches(data.train, cfg.batch_size, rng), cfg, cfg.beta,
                             cfg.domain_steps, true, epoch);
    }
    const double acc = validation_accuracy(b, data, true);
    if (curves) {
      CurveRow row{epoch, b.method, {{"selector_loss", sel.loss}}, acc};
      if (cfg.mi_enabled) row.terms["mi_bits"] = sel.mi_bits;
      if (cfg.inner_iterations > 0) {
        row.terms["invariant_loss"] = game_terms.invariant_loss;
        row.terms["domain_loss"] = game_terms.domain_loss;
      }
      curves->rows.push_back(std::move(row));
    }
    history.push_back(acc);
    if (history.size() > cfg.plateau_window) {
      const auto split = history.end() - static_cast<std::ptrdiff_t>(cfg.plateau_window);
      const double before = *std::max_element(history.begin(), split);
      const double recent = *std::max_element(split, history.end());
      if (recent - before < cfg.plateau_min_gain) break;
    }
  }
  return bundle;
}

}  // namespace rsscm
