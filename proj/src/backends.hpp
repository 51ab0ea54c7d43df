#pragma once

// Internal: encoder forward passes with caches and their backward passes.

#include <vector>

#include "pagerec/model.hpp"

namespace pagerec::detail {

using RowVector = Eigen::RowVectorXd;

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias,
                          LayerNormCache& cache);
/// Accumulates into dgain/dbias and returns dx.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache,
                           Matrix& dgain, Matrix& dbias);

struct AttentionLayerCache {
  Matrix x_in;
  LayerNormCache ln1;
  Matrix normed1, q, k, v;
  std::vector<Matrix> probs;      // per (sequence, head), N x N
  std::vector<Matrix> attn_drop;  // same shape, scaled keep mask; empty without dropout
  Matrix context;
  Matrix x_mid;
  LayerNormCache ln2;
  Matrix normed2, pre_act, act;
  Matrix ffn_drop;  // scaled keep mask; empty without dropout
};

struct SelfAttentionCache {
  std::vector<AttentionLayerCache> layers;
  LayerNormCache final_ln;
};

Matrix self_attention_forward(const ModelParams& params, const EncodedBatch& batch,
                              const Matrix& h0, Rng* dropout_rng, SelfAttentionCache& cache);
Matrix self_attention_backward(const ModelParams& params, const EncodedBatch& batch,
                               const SelfAttentionCache& cache, const Matrix& d_out,
                               ParamSet& grads);

struct GruStepCache {
  Matrix h_prev, r, z, n, hidden_n;  // B x d each
};

struct GruLayerCache {
  Matrix x_in;                     // (B*N) x d
  std::vector<GruStepCache> steps;  // one per slot
};

struct GruCache {
  std::vector<GruLayerCache> layers;
};

Matrix gru_forward(const ModelParams& params, const EncodedBatch& batch, const Matrix& h0,
                   GruCache& cache);
Matrix gru_backward(const ModelParams& params, const EncodedBatch& batch, const GruCache& cache,
                    const Matrix& d_out, ParamSet& grads);

}  // namespace pagerec::detail
