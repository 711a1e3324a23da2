#pragma once

#include "aisurvey/rng.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace aisurvey {

struct DcnConfig {
  int embed_dim = 50;
  int num_cross_layers = 3;
  int num_dense_layers = 3;
  double dropout = 0.2;
  double learning_rate = 2e-5;
  long decay_steps = 80000;
  double decay_rate = 0.96;
  bool staircase = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;
  int batch_size = 128;
  int max_epochs = 10;
  int patience = 2;
  std::uint64_t seed = 42;

  int hidden_width() const { return 3 * embed_dim; }
  void validate() const;
};

nlohmann::json to_json(const DcnConfig& cfg);
DcnConfig dcn_config_from_json(const nlohmann::json& j);

// x0 = [belief; semantic; period], each block embed_dim wide.
enum class Block { Belief = 0, Semantic = 1, Period = 2 };

struct DcnParameters {
  Eigen::MatrixXd semantic_w;  // D x n, trainable adapter over frozen vectors
  Eigen::VectorXd semantic_b;  // n
  Eigen::MatrixXd belief;      // individuals x n
  Eigen::MatrixXd period;      // years x n
  std::vector<Eigen::MatrixXd> cross_w;  // H x H
  std::vector<Eigen::VectorXd> cross_b;
  std::vector<Eigen::MatrixXd> dense_w;  // H x H, ReLU
  std::vector<Eigen::VectorXd> dense_b;
  Eigen::VectorXd head_w;  // H
  double head_b = 0.0;

  // Bumped whenever the values change through the optimizer; forward
  // caches record it so a stale cache cannot be fed to backward().
  std::uint64_t version = 0;

  int embed_dim() const { return static_cast<int>(semantic_b.size()); }
  int hidden_width() const { return 3 * embed_dim(); }

  // Zero tensors of identical shape.
  DcnParameters zeros_like() const;

  // Visits every trainable tensor in a fixed order as a column-major map.
  template <typename F>
  void visit(F&& f) {
    f("semantic_w", Eigen::Map<Eigen::MatrixXd>(semantic_w.data(), semantic_w.rows(), semantic_w.cols()));
    f("semantic_b", Eigen::Map<Eigen::MatrixXd>(semantic_b.data(), semantic_b.size(), 1));
    f("belief", Eigen::Map<Eigen::MatrixXd>(belief.data(), belief.rows(), belief.cols()));
    f("period", Eigen::Map<Eigen::MatrixXd>(period.data(), period.rows(), period.cols()));
    for (std::size_t l = 0; l < cross_w.size(); ++l) {
      f("cross_w" + std::to_string(l), Eigen::Map<Eigen::MatrixXd>(cross_w[l].data(), cross_w[l].rows(), cross_w[l].cols()));
      f("cross_b" + std::to_string(l), Eigen::Map<Eigen::MatrixXd>(cross_b[l].data(), cross_b[l].size(), 1));
    }
    for (std::size_t l = 0; l < dense_w.size(); ++l) {
      f("dense_w" + std::to_string(l), Eigen::Map<Eigen::MatrixXd>(dense_w[l].data(), dense_w[l].rows(), dense_w[l].cols()));
      f("dense_b" + std::to_string(l), Eigen::Map<Eigen::MatrixXd>(dense_b[l].data(), dense_b[l].size(), 1));
    }
    f("head_w", Eigen::Map<Eigen::MatrixXd>(head_w.data(), head_w.size(), 1));
    f("head_b", Eigen::Map<Eigen::MatrixXd>(&head_b, 1, 1));
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<DcnParameters*>(this)->visit([&](const std::string& name, Eigen::Map<Eigen::MatrixXd> m) {
      f(name, Eigen::Map<const Eigen::MatrixXd>(m.data(), m.rows(), m.cols()));
    });
  }

  bool all_finite() const;
};

using DcnGradients = DcnParameters;

// Glorot-uniform projection, cross, dense and head weights; uniform(-0.05,
// 0.05) lookup tables; zero biases. Tensors are filled row-major in visit()
// order from a single Rng stream.
DcnParameters init_params(const DcnConfig& cfg, int raw_dim, int n_individuals, int n_years, std::uint64_t seed);

double glorot_bound(int fan_in, int fan_out);

Eigen::VectorXd cross_layer_forward(const Eigen::VectorXd& x0, const Eigen::VectorXd& xl, const Eigen::MatrixXd& w,
                                    const Eigen::VectorXd& b);

struct Example {
  int individual = 0;
  int question = 0;
  int year = 0;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

struct ForwardCache {
  std::vector<Example> examples;
  Eigen::MatrixXd semantic_in;  // D x B, frozen rows
  Eigen::MatrixXd x0;           // H x B
  std::vector<Eigen::MatrixXd> cross_in;   // x_l fed to layer l
  std::vector<Eigen::MatrixXd> cross_lin;  // W x_l + b
  std::vector<Eigen::MatrixXd> cross_mask; // scaled keep mask, empty at inference
  std::vector<Eigen::MatrixXd> dense_in;
  std::vector<Eigen::MatrixXd> dense_pre;
  std::vector<Eigen::MatrixXd> dense_mask;
  Eigen::MatrixXd head_in;       // H x B
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities; // clamped to [eps, 1 - eps]
  std::uint64_t params_version = 0;
  const DcnParameters* params = nullptr;
  bool training = false;
};

// Batched forward pass. Columns of every cached matrix are examples. In
// training mode inverted dropout follows every cross and dense layer; `rng`
// must then be non-null.
ForwardCache forward(const DcnParameters& params, const Eigen::MatrixXd& frozen, std::span<const Example> batch,
                     double dropout, bool training, Rng* rng);

// Inference-mode probabilities, evaluated in chunks.
std::vector<double> predict(const DcnParameters& params, const Eigen::MatrixXd& frozen, std::span<const Example> batch);

double loss_bce(double probability, int label);
double mean_bce(std::span<const double> probabilities, std::span<const int> labels);

// Exact gradients of the mean batch BCE. The frozen matrix gets none.
DcnGradients backward(const ForwardCache& cache, std::span<const int> labels, const DcnParameters& params);

struct AdamState {
  DcnParameters m;
  DcnParameters v;
  long step = 0;

  static AdamState for_params(const DcnParameters& params);
};

double scheduled_learning_rate(const DcnConfig& cfg, long step);

// One Adam update; throws NonFinite naming the first offending tensor.
void adam_step(DcnParameters& params, const DcnGradients& grads, AdamState& state, const DcnConfig& cfg);

struct FeatureImportance {
  double semantic = 0.0;
  double belief = 0.0;
  double period = 0.0;
  double semantic_belief = 0.0;
  double semantic_period = 0.0;
  double belief_period = 0.0;

  std::array<double, 6> as_array() const {
    return {semantic, belief, period, semantic_belief, semantic_period, belief_period};
  }
  static constexpr std::array<const char*, 6> kNames = {"semantic", "belief", "period",
                                                        "semantic_x_belief", "semantic_x_period", "belief_x_period"};
};

// Frobenius block norm of rows in block `row_block`, columns in `col_block`.
double block_norm(const Eigen::MatrixXd& w, int embed_dim, Block row_block, Block col_block);
// Raw (unnormalized) scores from a cross-layer weight matrix.
FeatureImportance raw_importance(const Eigen::MatrixXd& w, int embed_dim);
// Normalized scores from the first cross layer.
FeatureImportance feature_importance(const DcnParameters& params);

struct Checkpoint {
  DcnConfig config;
  DcnParameters params;
  nlohmann::json index;  // raw keys for individuals / variables / years
};

void save_checkpoint(const DcnParameters& params, const DcnConfig& cfg, const nlohmann::json& index,
                     const std::filesystem::path& manifest);
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

}  // namespace aisurvey
