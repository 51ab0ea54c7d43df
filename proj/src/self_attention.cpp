#include <cmath>
#include <numbers>

#include "backends.hpp"

namespace pagerec::detail {

namespace {

constexpr double kLayerNormEps = 1e-12;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix add_bias(Matrix m, const Matrix& bias) {
  m.rowwise() += bias.row(0);
  return m;
}

Matrix keep_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix mask(rows, cols);
  const double scale = 1.0 / (1.0 - p);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = rng.uniform() >= p ? scale : 0.0;
  }
  return mask;
}

}  // namespace

Matrix layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias,
                          LayerNormCache& cache) {
  const auto d = static_cast<double>(x.cols());
  Eigen::VectorXd mean = x.rowwise().sum() / d;
  cache.xhat = x.colwise() - mean;
  Eigen::VectorXd var = cache.xhat.array().square().rowwise().sum() / d;
  cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = cache.inv_std.asDiagonal() * cache.xhat;
  Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache,
                           Matrix& dgain, Matrix& dbias) {
  const auto d = static_cast<double>(dy.cols());
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  Eigen::VectorXd mean_dxhat = dxhat.rowwise().sum() / d;
  Eigen::VectorXd mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum() / d;
  Matrix dx = dxhat.colwise() - mean_dxhat;
  dx -= (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return cache.inv_std.asDiagonal() * dx;
}

Matrix self_attention_forward(const ModelParams& params, const EncodedBatch& batch,
                              const Matrix& h0, Rng* dropout_rng, SelfAttentionCache& cache) {
  const auto& cfg = params.config;
  const auto& t = params.tensors;
  const auto n = static_cast<Eigen::Index>(batch.max_len);
  const auto n_heads = static_cast<Eigen::Index>(cfg.heads);
  const auto dh = static_cast<Eigen::Index>(cfg.d / cfg.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool dropout = dropout_rng != nullptr && cfg.dropout > 0.0;

  cache.layers.assign(params.layout.attention.size(), {});
  Matrix x = h0;
  for (std::size_t l = 0; l < params.layout.attention.size(); ++l) {
    const auto& ids = params.layout.attention[l];
    auto& c = cache.layers[l];
    c.x_in = x;
    c.normed1 = layer_norm_forward(x, t[ids.ln1_gain], t[ids.ln1_bias], c.ln1);
    c.q = add_bias(c.normed1 * t[ids.wq], t[ids.bq]);
    c.k = add_bias(c.normed1 * t[ids.wk], t[ids.bk]);
    c.v = add_bias(c.normed1 * t[ids.wv], t[ids.bv]);
    c.context = Matrix::Zero(x.rows(), x.cols());
    c.probs.clear();
    c.attn_drop.clear();
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      const auto r0 = static_cast<Eigen::Index>(b) * n;
      for (Eigen::Index h = 0; h < n_heads; ++h) {
        const auto c0 = h * dh;
        Matrix scores = c.q.block(r0, c0, n, dh) * c.k.block(r0, c0, n, dh).transpose() * scale;
        Matrix probs = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          double row_max = -std::numeric_limits<double>::infinity();
          auto allowed = [&](Eigen::Index j) {
            return j == i || !batch.is_pad(static_cast<std::size_t>(r0 + j));
          };
          for (Eigen::Index j = 0; j <= i; ++j) {
            if (allowed(j)) row_max = std::max(row_max, scores(i, j));
          }
          double total = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            if (!allowed(j)) continue;
            probs(i, j) = std::exp(scores(i, j) - row_max);
            total += probs(i, j);
          }
          probs.row(i).head(i + 1) /= total;
        }
        Matrix used = probs;
        if (dropout) {
          c.attn_drop.push_back(keep_mask(n, n, cfg.dropout, *dropout_rng));
          used = used.cwiseProduct(c.attn_drop.back());
        }
        c.context.block(r0, c0, n, dh) = used * c.v.block(r0, c0, n, dh);
        c.probs.push_back(std::move(probs));
      }
    }
    c.x_mid = x + add_bias(c.context * t[ids.wo], t[ids.bo]);
    c.normed2 = layer_norm_forward(c.x_mid, t[ids.ln2_gain], t[ids.ln2_bias], c.ln2);
    c.pre_act = add_bias(c.normed2 * t[ids.w1], t[ids.b1]);
    c.act = c.pre_act.unaryExpr([](double v) { return gelu(v); });
    Matrix ffn = add_bias(c.act * t[ids.w2], t[ids.b2]);
    if (dropout) {
      c.ffn_drop = keep_mask(ffn.rows(), ffn.cols(), cfg.dropout, *dropout_rng);
      ffn = ffn.cwiseProduct(c.ffn_drop);
    } else {
      c.ffn_drop.resize(0, 0);
    }
    x = c.x_mid + ffn;
  }
  return layer_norm_forward(x, t[*params.layout.final_ln_gain], t[*params.layout.final_ln_bias],
                            cache.final_ln);
}

Matrix self_attention_backward(const ModelParams& params, const EncodedBatch& batch,
                               const SelfAttentionCache& cache, const Matrix& d_out,
                               ParamSet& grads) {
  const auto& cfg = params.config;
  const auto& t = params.tensors;
  const auto n = static_cast<Eigen::Index>(batch.max_len);
  const auto n_heads = static_cast<Eigen::Index>(cfg.heads);
  const auto dh = static_cast<Eigen::Index>(cfg.d / cfg.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = layer_norm_backward(d_out, t[*params.layout.final_ln_gain], cache.final_ln,
                                  grads[*params.layout.final_ln_gain],
                                  grads[*params.layout.final_ln_bias]);
  for (std::size_t li = params.layout.attention.size(); li-- > 0;) {
    const auto& ids = params.layout.attention[li];
    const auto& c = cache.layers[li];

    // Feed-forward branch.
    Matrix d_ffn = c.ffn_drop.size() ? Matrix(dx.cwiseProduct(c.ffn_drop)) : dx;
    grads[ids.w2] += c.act.transpose() * d_ffn;
    grads[ids.b2].row(0) += d_ffn.colwise().sum();
    Matrix d_act = d_ffn * t[ids.w2].transpose();
    Matrix d_pre = d_act.cwiseProduct(c.pre_act.unaryExpr([](double v) { return gelu_grad(v); }));
    grads[ids.w1] += c.normed2.transpose() * d_pre;
    grads[ids.b1].row(0) += d_pre.colwise().sum();
    Matrix d_normed2 = d_pre * t[ids.w1].transpose();
    Matrix d_mid = dx + layer_norm_backward(d_normed2, t[ids.ln2_gain], c.ln2, grads[ids.ln2_gain],
                                            grads[ids.ln2_bias]);

    // Attention branch.
    grads[ids.wo] += c.context.transpose() * d_mid;
    grads[ids.bo].row(0) += d_mid.colwise().sum();
    Matrix d_context = d_mid * t[ids.wo].transpose();
    Matrix dq = Matrix::Zero(dx.rows(), dx.cols());
    Matrix dk = Matrix::Zero(dx.rows(), dx.cols());
    Matrix dv = Matrix::Zero(dx.rows(), dx.cols());
    std::size_t slot = 0;
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      const auto r0 = static_cast<Eigen::Index>(b) * n;
      for (Eigen::Index h = 0; h < n_heads; ++h, ++slot) {
        const auto c0 = h * dh;
        const Matrix& probs = c.probs[slot];
        const bool dropped = !c.attn_drop.empty();
        Matrix used = dropped ? Matrix(probs.cwiseProduct(c.attn_drop[slot])) : probs;
        auto d_o = d_context.block(r0, c0, n, dh);
        dv.block(r0, c0, n, dh) = used.transpose() * d_o;
        Matrix d_probs = d_o * c.v.block(r0, c0, n, dh).transpose();
        if (dropped) d_probs = d_probs.cwiseProduct(c.attn_drop[slot]);
        Eigen::VectorXd inner = (d_probs.array() * probs.array()).rowwise().sum();
        Matrix d_scores = probs.array() * (d_probs.colwise() - inner).array();
        d_scores *= scale;
        dq.block(r0, c0, n, dh) = d_scores * c.k.block(r0, c0, n, dh);
        dk.block(r0, c0, n, dh) = d_scores.transpose() * c.q.block(r0, c0, n, dh);
      }
    }
    grads[ids.wq] += c.normed1.transpose() * dq;
    grads[ids.bq].row(0) += dq.colwise().sum();
    grads[ids.wk] += c.normed1.transpose() * dk;
    grads[ids.bk].row(0) += dk.colwise().sum();
    grads[ids.wv] += c.normed1.transpose() * dv;
    grads[ids.bv].row(0) += dv.colwise().sum();
    Matrix d_normed1 = dq * t[ids.wq].transpose() + dk * t[ids.wk].transpose() +
                       dv * t[ids.wv].transpose();
    dx = d_mid + layer_norm_backward(d_normed1, t[ids.ln1_gain], c.ln1, grads[ids.ln1_gain],
                                     grads[ids.ln1_bias]);
  }
  return dx;
}

}  // namespace pagerec::detail
