#pragma once

// Fusion embedding layer plus two sequence encoders (causal self-attention,
// stacked GRU) with hand-written reverse-mode gradients. Output scores reuse
// the id embedding (no output bias).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pagerec/batch.hpp"
#include "pagerec/rng.hpp"

namespace pagerec {

using Matrix = Eigen::MatrixXd;

enum class Backend { SelfAttention, Gru };

std::string_view name(Backend b);
Backend parse_backend(std::string_view text);

struct ModelConfig {
  Backend backend = Backend::SelfAttention;
  std::size_t d = 64;
  std::size_t max_len = 50;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t inner = 256;
  double dropout = 0.2;
  std::size_t vocab_size = 0;
  std::size_t n_attrs = 0;
  std::size_t dense_dim = 0;

  /// Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
  bool uses_position() const { return backend == Backend::SelfAttention; }
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Named dense tensors in a fixed order. Gradients and optimizer moments use
/// the same layout.
class ParamSet {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);
  std::size_t size() const { return values_.size(); }
  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t n_scalars() const;
  void set_zero();
  ParamSet zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

struct AttentionLayerIds {
  std::size_t ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_gain, ln2_bias, w1, b1, w2, b2;
};

struct GruLayerIds {
  std::size_t w_input, b_input, w_hidden, b_hidden;  // gates ordered r, z, n
};

struct ParamLayout {
  std::size_t item_embedding = 0;                 // E_V, |vocab| x d
  std::optional<std::size_t> position_embedding;  // E_G, N x d
  std::optional<std::size_t> attr_weight, attr_bias;    // W_A, b_A
  std::optional<std::size_t> dense_weight, dense_bias;  // W_R, b_R
  std::vector<AttentionLayerIds> attention;
  std::vector<GruLayerIds> gru;
  std::optional<std::size_t> final_ln_gain, final_ln_bias;
};

struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  ParamSet tensors;

  const Matrix& item_embedding() const { return tensors[layout.item_embedding]; }
};

/// Allocates the tensors for `config`; values are zero.
ModelParams make_params(const ModelConfig& config);
/// Embeddings and linear weights ~ U(-1/sqrt(d), 1/sqrt(d)); biases zero;
/// layer-norm gains one.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// h0 = e + g + (x_A W_A + b_A) + (x_R W_R + b_R), the attribute and dense
/// terms only on rows where their input is non-zero. Positional term only for
/// the self-attention backend.
Matrix embed_input(const ModelParams& params, const EncodedBatch& batch);

/// `dropout_rng` enables dropout (training mode); nullptr disables it.
/// Returns (B*N) x |vocab| scores. Throws NumericError on non-finite values.
Matrix forward(const ModelParams& params, const EncodedBatch& batch, Rng* dropout_rng = nullptr);

struct LossAndGrad {
  double loss = 0.0;
  std::size_t n_targets = 0;
  ParamSet grads;
};

/// Mean cross-entropy over loss_mask positions and its exact gradient.
/// Dropout masks are drawn from `dropout_rng` in the same order as forward().
LossAndGrad loss_and_grad(const ModelParams& params, const EncodedBatch& batch,
                          Rng* dropout_rng = nullptr);
double loss_only(const ModelParams& params, const EncodedBatch& batch, Rng* dropout_rng = nullptr);

/// Scores at slot N-1 of every sequence, B x |vocab|.
Matrix score_last(const ModelParams& params, const EncodedBatch& batch);

}  // namespace pagerec
