#include "aisurvey/dcn.hpp"

#include "aisurvey/error.hpp"
#include "aisurvey/tensor_io.hpp"

#include <algorithm>
#include <cmath>

namespace aisurvey {

void DcnConfig::validate() const {
  if (embed_dim <= 0) throw Error(ErrorKind::Config, "embed_dim must be positive");
  if (num_cross_layers < 0 || num_dense_layers < 0) throw Error(ErrorKind::Config, "layer counts must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::Config, "dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning rate must be positive");
  if (decay_steps <= 0 || !(decay_rate > 0.0)) throw Error(ErrorKind::Config, "invalid learning-rate decay");
  if (batch_size <= 0) throw Error(ErrorKind::Config, "batch size must be positive");
  if (max_epochs <= 0) throw Error(ErrorKind::Config, "max epochs must be positive");
  if (patience <= 0) throw Error(ErrorKind::Config, "patience must be positive");
}

nlohmann::json to_json(const DcnConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"num_cross_layers", c.num_cross_layers},
          {"num_dense_layers", c.num_dense_layers},
          {"dropout", c.dropout},
          {"learning_rate", c.learning_rate},
          {"decay_steps", c.decay_steps},
          {"decay_rate", c.decay_rate},
          {"staircase", c.staircase},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed}};
}

DcnConfig dcn_config_from_json(const nlohmann::json& j) {
  DcnConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_cross_layers = j.value("num_cross_layers", c.num_cross_layers);
  c.num_dense_layers = j.value("num_dense_layers", c.num_dense_layers);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay_steps = j.value("decay_steps", c.decay_steps);
  c.decay_rate = j.value("decay_rate", c.decay_rate);
  c.staircase = j.value("staircase", c.staircase);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

DcnParameters DcnParameters::zeros_like() const {
  DcnParameters z;
  z.semantic_w = Eigen::MatrixXd::Zero(semantic_w.rows(), semantic_w.cols());
  z.semantic_b = Eigen::VectorXd::Zero(semantic_b.size());
  z.belief = Eigen::MatrixXd::Zero(belief.rows(), belief.cols());
  z.period = Eigen::MatrixXd::Zero(period.rows(), period.cols());
  for (const auto& w : cross_w) z.cross_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : cross_b) z.cross_b.push_back(Eigen::VectorXd::Zero(b.size()));
  for (const auto& w : dense_w) z.dense_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : dense_b) z.dense_b.push_back(Eigen::VectorXd::Zero(b.size()));
  z.head_w = Eigen::VectorXd::Zero(head_w.size());
  z.head_b = 0.0;
  return z;
}

bool DcnParameters::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, Eigen::Map<const Eigen::MatrixXd> m) { ok = ok && m.allFinite(); });
  return ok;
}

double glorot_bound(int fan_in, int fan_out) { return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); }

DcnParameters init_params(const DcnConfig& cfg, int raw_dim, int n_individuals, int n_years, std::uint64_t seed) {
  cfg.validate();
  if (raw_dim <= 0 || n_individuals <= 0 || n_years <= 0) {
    throw Error(ErrorKind::Config, "raw embedding width, individual count and year count must be positive");
  }
  const int n = cfg.embed_dim;
  const int h = cfg.hidden_width();
  DcnParameters p;
  p.semantic_w.resize(raw_dim, n);
  p.semantic_b = Eigen::VectorXd::Zero(n);
  p.belief.resize(n_individuals, n);
  p.period.resize(n_years, n);
  for (int l = 0; l < cfg.num_cross_layers; ++l) {
    p.cross_w.emplace_back(h, h);
    p.cross_b.push_back(Eigen::VectorXd::Zero(h));
  }
  for (int l = 0; l < cfg.num_dense_layers; ++l) {
    p.dense_w.emplace_back(h, h);
    p.dense_b.push_back(Eigen::VectorXd::Zero(h));
  }
  p.head_w.resize(h);
  p.head_b = 0.0;

  Rng rng(seed);
  auto fill = [&](Eigen::Map<Eigen::MatrixXd> m, double bound) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
    }
  };
  p.visit([&](const std::string& name, Eigen::Map<Eigen::MatrixXd> m) {
    if (name == "semantic_w") {
      fill(m, glorot_bound(raw_dim, n));
    } else if (name == "belief" || name == "period") {
      fill(m, 0.05);
    } else if (name.starts_with("cross_w") || name.starts_with("dense_w")) {
      fill(m, glorot_bound(h, h));
    } else if (name == "head_w") {
      fill(m, glorot_bound(h, 1));
    }
  });
  return p;
}

Eigen::VectorXd cross_layer_forward(const Eigen::VectorXd& x0, const Eigen::VectorXd& xl, const Eigen::MatrixXd& w,
                                    const Eigen::VectorXd& b) {
  if (x0.size() != xl.size() || w.rows() != xl.size() || w.cols() != xl.size() || b.size() != xl.size()) {
    throw Error(ErrorKind::Shape, "cross layer operands disagree in width");
  }
  return (x0.array() * (w * xl + b).array()).matrix() + xl;
}

namespace {

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.uniform() < rate ? 0.0 : scale;
  }
  return mask;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

ForwardCache forward(const DcnParameters& params, const Eigen::MatrixXd& frozen, std::span<const Example> batch,
                     double dropout, bool training, Rng* rng) {
  const int n = params.embed_dim();
  const int h = params.hidden_width();
  const auto bsz = static_cast<Eigen::Index>(batch.size());
  if (frozen.cols() != params.semantic_w.rows()) {
    throw Error(ErrorKind::Shape, "frozen embedding width " + std::to_string(frozen.cols()) +
                                      " does not match projection input " + std::to_string(params.semantic_w.rows()));
  }
  const bool use_dropout = training && dropout > 0.0;
  if (use_dropout && rng == nullptr) throw Error(ErrorKind::Config, "training-mode forward needs an rng");

  ForwardCache cache;
  cache.examples.assign(batch.begin(), batch.end());
  cache.params_version = params.version;
  cache.params = &params;
  cache.training = training;
  cache.semantic_in.resize(frozen.cols(), bsz);
  cache.x0.resize(h, bsz);
  for (Eigen::Index c = 0; c < bsz; ++c) {
    const auto& ex = batch[static_cast<std::size_t>(c)];
    if (ex.individual < 0 || ex.individual >= params.belief.rows() || ex.question < 0 || ex.question >= frozen.rows() ||
        ex.year < 0 || ex.year >= params.period.rows()) {
      throw Error(ErrorKind::Index, "example (" + std::to_string(ex.individual) + ", " + std::to_string(ex.question) +
                                        ", " + std::to_string(ex.year) + ") outside embedding tables");
    }
    cache.semantic_in.col(c) = frozen.row(ex.question).transpose();
    cache.x0.col(c).segment(0, n) = params.belief.row(ex.individual).transpose();
    cache.x0.col(c).segment(2 * n, n) = params.period.row(ex.year).transpose();
  }
  cache.x0.middleRows(n, n).noalias() = params.semantic_w.transpose() * cache.semantic_in;
  cache.x0.middleRows(n, n).colwise() += params.semantic_b;

  Eigen::MatrixXd x = cache.x0;
  for (std::size_t l = 0; l < params.cross_w.size(); ++l) {
    cache.cross_in.push_back(x);
    Eigen::MatrixXd lin = params.cross_w[l] * x;
    lin.colwise() += params.cross_b[l];
    x = (cache.x0.array() * lin.array()).matrix() + x;
    cache.cross_lin.push_back(std::move(lin));
    if (use_dropout) {
      cache.cross_mask.push_back(dropout_mask(h, bsz, dropout, *rng));
      x.array() *= cache.cross_mask.back().array();
    }
  }
  for (std::size_t l = 0; l < params.dense_w.size(); ++l) {
    cache.dense_in.push_back(x);
    Eigen::MatrixXd pre = params.dense_w[l] * x;
    pre.colwise() += params.dense_b[l];
    x = pre.cwiseMax(0.0);
    cache.dense_pre.push_back(std::move(pre));
    if (use_dropout) {
      cache.dense_mask.push_back(dropout_mask(h, bsz, dropout, *rng));
      x.array() *= cache.dense_mask.back().array();
    }
  }
  cache.logits = (params.head_w.transpose() * x).transpose();
  cache.logits.array() += params.head_b;
  cache.head_in = std::move(x);
  cache.probabilities.resize(bsz);
  for (Eigen::Index c = 0; c < bsz; ++c) {
    cache.probabilities(c) = std::clamp(sigmoid(cache.logits(c)), kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  }
  return cache;
}

std::vector<double> predict(const DcnParameters& params, const Eigen::MatrixXd& frozen, std::span<const Example> batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < batch.size(); start += kChunk) {
    const auto len = std::min(kChunk, batch.size() - start);
    auto cache = forward(params, frozen, batch.subspan(start, len), 0.0, false, nullptr);
    for (Eigen::Index i = 0; i < cache.probabilities.size(); ++i) out.push_back(cache.probabilities(i));
  }
  return out;
}

double loss_bce(double probability, int label) {
  const double p = std::clamp(probability, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return label ? -std::log(p) : -std::log1p(-p);
}

double mean_bce(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) throw Error(ErrorKind::Shape, "probability/label length mismatch");
  if (probabilities.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += loss_bce(probabilities[i], labels[i]);
  return total / static_cast<double>(labels.size());
}

DcnGradients backward(const ForwardCache& cache, std::span<const int> labels, const DcnParameters& params) {
  if (cache.params != &params || cache.params_version != params.version) {
    throw Error(ErrorKind::CacheMismatch, "forward cache was produced by different or since-updated parameters");
  }
  const auto bsz = static_cast<Eigen::Index>(cache.examples.size());
  if (static_cast<Eigen::Index>(labels.size()) != bsz) throw Error(ErrorKind::Shape, "label count != batch size");
  const int n = params.embed_dim();

  DcnGradients g = params.zeros_like();
  if (bsz == 0) return g;

  // d(mean BCE)/d(logit) = (sigmoid(z) - y) / B
  Eigen::RowVectorXd dz(bsz);
  for (Eigen::Index c = 0; c < bsz; ++c) {
    double z = cache.logits(c);
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    dz(c) = (p - labels[static_cast<std::size_t>(c)]) / static_cast<double>(bsz);
  }
  g.head_w.noalias() = cache.head_in * dz.transpose();
  g.head_b = dz.sum();
  Eigen::MatrixXd dx = params.head_w * dz;  // H x B

  for (std::size_t li = params.dense_w.size(); li-- > 0;) {
    if (!cache.dense_mask.empty()) dx.array() *= cache.dense_mask[li].array();
    dx.array() *= (cache.dense_pre[li].array() > 0.0).cast<double>();
    g.dense_w[li].noalias() = dx * cache.dense_in[li].transpose();
    g.dense_b[li] = dx.rowwise().sum();
    dx = params.dense_w[li].transpose() * dx;
  }

  Eigen::MatrixXd dx0 = Eigen::MatrixXd::Zero(dx.rows(), bsz);
  for (std::size_t li = params.cross_w.size(); li-- > 0;) {
    if (!cache.cross_mask.empty()) dx.array() *= cache.cross_mask[li].array();
    // x_{l+1} = x0 * u + x_l, u = W x_l + b
    Eigen::MatrixXd du = (dx.array() * cache.x0.array()).matrix();
    dx0.array() += dx.array() * cache.cross_lin[li].array();
    g.cross_w[li].noalias() = du * cache.cross_in[li].transpose();
    g.cross_b[li] = du.rowwise().sum();
    dx.noalias() += params.cross_w[li].transpose() * du;
  }
  dx0 += dx;

  const auto ds = dx0.middleRows(n, n);
  g.semantic_w.noalias() = cache.semantic_in * ds.transpose();
  g.semantic_b = ds.rowwise().sum();
  for (Eigen::Index c = 0; c < bsz; ++c) {
    const auto& ex = cache.examples[static_cast<std::size_t>(c)];
    g.belief.row(ex.individual) += dx0.col(c).segment(0, n).transpose();
    g.period.row(ex.year) += dx0.col(c).segment(2 * n, n).transpose();
  }
  return g;
}

AdamState AdamState::for_params(const DcnParameters& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

double scheduled_learning_rate(const DcnConfig& cfg, long step) {
  const double exponent = cfg.staircase ? std::floor(static_cast<double>(step) / static_cast<double>(cfg.decay_steps))
                                        : static_cast<double>(step) / static_cast<double>(cfg.decay_steps);
  return cfg.learning_rate * std::pow(cfg.decay_rate, exponent);
}

void adam_step(DcnParameters& params, const DcnGradients& grads, AdamState& state, const DcnConfig& cfg) {
  std::vector<Eigen::Map<const Eigen::MatrixXd>> gs;
  std::vector<std::string> names;
  grads.visit([&](const std::string& name, Eigen::Map<const Eigen::MatrixXd> m) {
    if (!m.allFinite()) {
      throw Error(ErrorKind::NonFinite, "gradient of '" + name + "' contains non-finite values at step " +
                                            std::to_string(state.step) + " (max |g| = " +
                                            std::to_string(m.array().isFinite().select(m.array().abs(), 0.0).maxCoeff()) +
                                            ")");
    }
    gs.push_back(m);
    names.push_back(name);
  });
  const double lr = scheduled_learning_rate(cfg, state.step);
  state.step += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  std::vector<Eigen::Map<Eigen::MatrixXd>> ms, vs;
  state.m.visit([&](const std::string&, Eigen::Map<Eigen::MatrixXd> m) { ms.push_back(m); });
  state.v.visit([&](const std::string&, Eigen::Map<Eigen::MatrixXd> m) { vs.push_back(m); });
  std::size_t i = 0;
  params.visit([&](const std::string& name, Eigen::Map<Eigen::MatrixXd> p) {
    if (i >= gs.size() || names[i] != name || gs[i].rows() != p.rows() || gs[i].cols() != p.cols() ||
        ms[i].rows() != p.rows() || ms[i].cols() != p.cols()) {
      throw Error(ErrorKind::Shape, "optimizer state does not match parameter '" + name + "'");
    }
    auto& m = ms[i];
    auto& v = vs[i];
    const auto& g = gs[i];
    m = b1 * m + (1.0 - b1) * g;
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
    ++i;
  });
  params.version += 1;
}

double block_norm(const Eigen::MatrixXd& w, int embed_dim, Block row_block, Block col_block) {
  if (w.rows() != 3 * embed_dim || w.cols() != 3 * embed_dim) {
    throw Error(ErrorKind::Shape, "cross weight must be 3n x 3n");
  }
  return w.block(static_cast<int>(row_block) * embed_dim, static_cast<int>(col_block) * embed_dim, embed_dim, embed_dim)
      .norm();
}

FeatureImportance raw_importance(const Eigen::MatrixXd& w, int embed_dim) {
  auto pair = [&](Block a, Block b) { return 0.5 * (block_norm(w, embed_dim, a, b) + block_norm(w, embed_dim, b, a)); };
  FeatureImportance f;
  f.semantic = block_norm(w, embed_dim, Block::Semantic, Block::Semantic);
  f.belief = block_norm(w, embed_dim, Block::Belief, Block::Belief);
  f.period = block_norm(w, embed_dim, Block::Period, Block::Period);
  f.semantic_belief = pair(Block::Semantic, Block::Belief);
  f.semantic_period = pair(Block::Semantic, Block::Period);
  f.belief_period = pair(Block::Belief, Block::Period);
  return f;
}

FeatureImportance feature_importance(const DcnParameters& params) {
  if (params.cross_w.empty()) throw Error(ErrorKind::Config, "model has no cross layer");
  auto f = raw_importance(params.cross_w.front(), params.embed_dim());
  const auto a = f.as_array();
  double total = 0.0;
  for (double v : a) total += v;
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateImportance, "first cross-layer weights are all zero");
  f.semantic /= total;
  f.belief /= total;
  f.period /= total;
  f.semantic_belief /= total;
  f.semantic_period /= total;
  f.belief_period /= total;
  return f;
}

void save_checkpoint(const DcnParameters& params, const DcnConfig& cfg, const nlohmann::json& index,
                     const std::filesystem::path& manifest) {
  TensorBundle bundle;
  bundle.kind = "dcn-checkpoint";
  bundle.meta = {{"config", to_json(cfg)}, {"index", index}};
  params.visit([&](const std::string& name, Eigen::Map<const Eigen::MatrixXd> m) {
    bundle.tensors.push_back({name, Eigen::MatrixXd(m)});
  });
  save_bundle(bundle, manifest);
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  auto bundle = load_bundle(manifest);
  if (bundle.kind != "dcn-checkpoint") throw Error(ErrorKind::Format, "bundle kind '" + bundle.kind + "' is not a checkpoint");
  Checkpoint ck;
  ck.config = dcn_config_from_json(bundle.meta.at("config"));
  ck.index = bundle.meta.value("index", nlohmann::json::object());
  const auto& sw = bundle.get("semantic_w");
  ck.params = init_params(ck.config, static_cast<int>(sw.rows()), static_cast<int>(bundle.get("belief").rows()),
                          static_cast<int>(bundle.get("period").rows()), 0);
  ck.params.visit([&](const std::string& name, Eigen::Map<Eigen::MatrixXd> m) {
    const auto& t = bundle.get(name);
    if (t.rows() != m.rows() || t.cols() != m.cols()) {
      throw Error(ErrorKind::Shape, "checkpoint tensor '" + name + "' has unexpected shape");
    }
    m = t;
  });
  return ck;
}

}  // namespace aisurvey
