#include <cmath>
#include <stdexcept>
#include <variant>

#include "backends.hpp"
#include "pagerec/errors.hpp"

namespace pagerec {

namespace {

std::vector<std::uint8_t> nonzero_rows(const Matrix& m) {
  std::vector<std::uint8_t> active(static_cast<std::size_t>(m.rows()), 0);
  if (m.cols() == 0) return active;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    active[static_cast<std::size_t>(r)] = (m.row(r).array() != 0.0).any() ? 1 : 0;
  }
  return active;
}

void check_batch(const ModelParams& params, const EncodedBatch& batch) {
  const auto& cfg = params.config;
  if (batch.max_len != cfg.max_len) throw std::invalid_argument("batch length differs from model");
  for (auto tok : batch.token_ids) {
    if (tok >= cfg.vocab_size) throw std::invalid_argument("token id outside vocabulary");
  }
}

struct EncoderCache {
  std::variant<detail::SelfAttentionCache, detail::GruCache> backend;
  std::vector<std::uint8_t> attr_rows, dense_rows;
};

Matrix run_encoder(const ModelParams& params, const EncodedBatch& batch, Rng* dropout_rng,
                   EncoderCache& cache) {
  check_batch(params, batch);
  cache.attr_rows = nonzero_rows(batch.attr_multihot);
  cache.dense_rows = nonzero_rows(batch.dense_reps);
  const Matrix h0 = embed_input(params, batch);
  Matrix out;
  if (params.config.backend == Backend::SelfAttention) {
    auto& c = cache.backend.emplace<detail::SelfAttentionCache>();
    out = detail::self_attention_forward(params, batch, h0, dropout_rng, c);
  } else {
    auto& c = cache.backend.emplace<detail::GruCache>();
    out = detail::gru_forward(params, batch, h0, c);
  }
  if (!out.allFinite()) throw NumericError("non-finite activations in encoder output");
  return out;
}

void embedding_backward(const ModelParams& params, const EncodedBatch& batch,
                        const EncoderCache& cache, const Matrix& d_h0, ParamSet& grads) {
  const auto& l = params.layout;
  Matrix& d_items = grads[l.item_embedding];
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    d_items.row(batch.token_ids[r]) += d_h0.row(row);
    if (l.position_embedding) grads[*l.position_embedding].row(batch.positions[r]) += d_h0.row(row);
    if (l.attr_weight && cache.attr_rows[r]) {
      grads[*l.attr_weight] += batch.attr_multihot.row(row).transpose() * d_h0.row(row);
      grads[*l.attr_bias].row(0) += d_h0.row(row);
    }
    if (l.dense_weight && cache.dense_rows[r]) {
      grads[*l.dense_weight] += batch.dense_reps.row(row).transpose() * d_h0.row(row);
      grads[*l.dense_bias].row(0) += d_h0.row(row);
    }
  }
}

}  // namespace

Matrix embed_input(const ModelParams& params, const EncodedBatch& batch) {
  const auto& l = params.layout;
  const auto& t = params.tensors;
  const Matrix& items = t[l.item_embedding];
  const auto rows = static_cast<Eigen::Index>(batch.rows());
  Matrix h0(rows, items.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    h0.row(r) = items.row(batch.token_ids[static_cast<std::size_t>(r)]);
    if (l.position_embedding) {
      h0.row(r) += t[*l.position_embedding].row(batch.positions[static_cast<std::size_t>(r)]);
    }
  }
  const auto attr_rows = nonzero_rows(batch.attr_multihot);
  const auto dense_rows = nonzero_rows(batch.dense_reps);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(r);
    if (attr_rows[i]) {
      if (!l.attr_weight || t[*l.attr_weight].rows() != batch.attr_multihot.cols()) {
        throw std::invalid_argument("batch carries attributes the model has no layer for");
      }
      h0.row(r) += batch.attr_multihot.row(r) * t[*l.attr_weight] + t[*l.attr_bias].row(0);
    }
    if (dense_rows[i]) {
      if (!l.dense_weight || t[*l.dense_weight].rows() != batch.dense_reps.cols()) {
        throw std::invalid_argument("batch carries dense vectors the model has no layer for");
      }
      h0.row(r) += batch.dense_reps.row(r) * t[*l.dense_weight] + t[*l.dense_bias].row(0);
    }
  }
  return h0;
}

Matrix forward(const ModelParams& params, const EncodedBatch& batch, Rng* dropout_rng) {
  EncoderCache cache;
  const Matrix out = run_encoder(params, batch, dropout_rng, cache);
  Matrix logits = out * params.item_embedding().transpose();
  if (!logits.allFinite()) throw NumericError("non-finite output scores");
  return logits;
}

Matrix score_last(const ModelParams& params, const EncodedBatch& batch) {
  EncoderCache cache;
  const Matrix out = run_encoder(params, batch, nullptr, cache);
  Matrix last(static_cast<Eigen::Index>(batch.batch_size), out.cols());
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    last.row(static_cast<Eigen::Index>(b)) =
        out.row(static_cast<Eigen::Index>(b * batch.max_len + batch.max_len - 1));
  }
  Matrix scores = last * params.item_embedding().transpose();
  if (!scores.allFinite()) throw NumericError("non-finite output scores");
  return scores;
}

namespace {

// Cross-entropy on the masked rows. Fills d_hidden when requested.
double masked_cross_entropy(const ModelParams& params, const EncodedBatch& batch,
                            const Matrix& hidden, Matrix* d_hidden, Matrix* d_items) {
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    if (batch.loss_mask[r]) rows.push_back(static_cast<Eigen::Index>(r));
  }
  if (rows.empty()) throw std::invalid_argument("batch has no unmasked targets");
  const auto n_targets = static_cast<Eigen::Index>(rows.size());
  Matrix picked(n_targets, hidden.cols());
  for (Eigen::Index i = 0; i < n_targets; ++i) picked.row(i) = hidden.row(rows[static_cast<std::size_t>(i)]);

  const Matrix& items = params.item_embedding();
  Matrix logits = picked * items.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n_targets; ++i) {
    const double row_max = logits.row(i).maxCoeff();
    logits.row(i).array() = (logits.row(i).array() - row_max).exp();
    const double total = logits.row(i).sum();
    const auto target = batch.target_ids[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
    loss -= std::log(logits(i, target) / total);
    logits.row(i) /= total;  // now softmax probabilities
    logits(i, target) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n_targets);
  loss *= inv_n;
  if (d_hidden) {
    logits *= inv_n;  // d loss / d logits
    *d_items += logits.transpose() * picked;
    Matrix d_picked = logits * items;
    *d_hidden = Matrix::Zero(hidden.rows(), hidden.cols());
    for (Eigen::Index i = 0; i < n_targets; ++i) d_hidden->row(rows[static_cast<std::size_t>(i)]) = d_picked.row(i);
  }
  return loss;
}

}  // namespace

double loss_only(const ModelParams& params, const EncodedBatch& batch, Rng* dropout_rng) {
  EncoderCache cache;
  const Matrix hidden = run_encoder(params, batch, dropout_rng, cache);
  return masked_cross_entropy(params, batch, hidden, nullptr, nullptr);
}

LossAndGrad loss_and_grad(const ModelParams& params, const EncodedBatch& batch, Rng* dropout_rng) {
  EncoderCache cache;
  const Matrix hidden = run_encoder(params, batch, dropout_rng, cache);
  LossAndGrad result;
  result.grads = params.tensors.zeros_like();
  result.n_targets = batch.n_targets();
  Matrix d_hidden;
  result.loss = masked_cross_entropy(params, batch, hidden, &d_hidden,
                                     &result.grads[params.layout.item_embedding]);
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss");
  Matrix d_h0;
  if (auto* c = std::get_if<detail::SelfAttentionCache>(&cache.backend)) {
    d_h0 = detail::self_attention_backward(params, batch, *c, d_hidden, result.grads);
  } else {
    d_h0 = detail::gru_backward(params, batch, std::get<detail::GruCache>(cache.backend), d_hidden,
                                result.grads);
  }
  embedding_backward(params, batch, cache, d_h0, result.grads);
  return result;
}

}  // namespace pagerec
