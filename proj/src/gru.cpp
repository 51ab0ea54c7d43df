#include <cmath>

#include "backends.hpp"

namespace pagerec::detail {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Active rows at slot t: sequences whose slot t holds a real interaction.
// Left padding means a sequence stays active once it starts.
Eigen::VectorXd active_rows(const EncodedBatch& batch, std::size_t slot) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(batch.batch_size));
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    m(static_cast<Eigen::Index>(b)) = batch.is_pad(b * batch.max_len + slot) ? 0.0 : 1.0;
  }
  return m;
}

Matrix gather_slot(const Matrix& m, const EncodedBatch& batch, std::size_t slot) {
  Matrix out(static_cast<Eigen::Index>(batch.batch_size), m.cols());
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    out.row(static_cast<Eigen::Index>(b)) = m.row(static_cast<Eigen::Index>(b * batch.max_len + slot));
  }
  return out;
}

void scatter_slot(Matrix& m, const Matrix& rows, const EncodedBatch& batch, std::size_t slot) {
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    m.row(static_cast<Eigen::Index>(b * batch.max_len + slot)) = rows.row(static_cast<Eigen::Index>(b));
  }
}

}  // namespace

Matrix gru_forward(const ModelParams& params, const EncodedBatch& batch, const Matrix& h0,
                   GruCache& cache) {
  const auto& t = params.tensors;
  const auto d = static_cast<Eigen::Index>(params.config.d);
  const auto n_seq = static_cast<Eigen::Index>(batch.batch_size);
  cache.layers.assign(params.layout.gru.size(), {});
  Matrix x = h0;
  for (std::size_t l = 0; l < params.layout.gru.size(); ++l) {
    const auto& ids = params.layout.gru[l];
    auto& c = cache.layers[l];
    c.x_in = x;
    Matrix input_proj = x * t[ids.w_input];
    input_proj.rowwise() += t[ids.b_input].row(0);
    Matrix out = Matrix::Zero(x.rows(), d);
    Matrix h = Matrix::Zero(n_seq, d);
    c.steps.resize(batch.max_len);
    for (std::size_t slot = 0; slot < batch.max_len; ++slot) {
      auto& s = c.steps[slot];
      const Eigen::VectorXd active = active_rows(batch, slot);
      Matrix xi = gather_slot(input_proj, batch, slot);
      Matrix hh = h * t[ids.w_hidden];
      hh.rowwise() += t[ids.b_hidden].row(0);
      s.h_prev = h;
      s.r = (xi.leftCols(d) + hh.leftCols(d)).unaryExpr([](double v) { return sigmoid(v); });
      s.z = (xi.middleCols(d, d) + hh.middleCols(d, d)).unaryExpr([](double v) { return sigmoid(v); });
      s.hidden_n = hh.rightCols(d);
      s.n = (xi.rightCols(d) + s.r.cwiseProduct(s.hidden_n)).array().tanh().matrix();
      Matrix h_new = (1.0 - s.z.array()) * s.n.array() + s.z.array() * h.array();
      h = active.asDiagonal() * h_new + (1.0 - active.array()).matrix().asDiagonal() * h;
      scatter_slot(out, h, batch, slot);
    }
    x = std::move(out);
  }
  return x;
}

Matrix gru_backward(const ModelParams& params, const EncodedBatch& batch, const GruCache& cache,
                    const Matrix& d_out, ParamSet& grads) {
  const auto& t = params.tensors;
  const auto d = static_cast<Eigen::Index>(params.config.d);
  const auto n_seq = static_cast<Eigen::Index>(batch.batch_size);
  Matrix d_x = d_out;
  for (std::size_t l = params.layout.gru.size(); l-- > 0;) {
    const auto& ids = params.layout.gru[l];
    const auto& c = cache.layers[l];
    Matrix d_input_proj = Matrix::Zero(d_x.rows(), 3 * d);
    Matrix dh_next = Matrix::Zero(n_seq, d);
    const Matrix& w_hidden = t[ids.w_hidden];
    for (std::size_t slot = batch.max_len; slot-- > 0;) {
      const auto& s = c.steps[slot];
      const Eigen::VectorXd active = active_rows(batch, slot);
      Matrix dh = gather_slot(d_x, batch, slot) + dh_next;
      Matrix dh_new = active.asDiagonal() * dh;
      Matrix dh_prev = (1.0 - active.array()).matrix().asDiagonal() * dh;

      Matrix dn = dh_new.cwiseProduct((1.0 - s.z.array()).matrix());
      Matrix dz = dh_new.cwiseProduct(s.h_prev - s.n);
      dh_prev += dh_new.cwiseProduct(s.z);
      Matrix dn_pre = dn.array() * (1.0 - s.n.array().square());
      Matrix dr = dn_pre.cwiseProduct(s.hidden_n);
      Matrix dr_pre = dr.array() * s.r.array() * (1.0 - s.r.array());
      Matrix dz_pre = dz.array() * s.z.array() * (1.0 - s.z.array());

      Matrix d_xi(n_seq, 3 * d);
      d_xi << dr_pre, dz_pre, dn_pre;
      Matrix d_hh(n_seq, 3 * d);
      d_hh << dr_pre, dz_pre, dn_pre.cwiseProduct(s.r);

      grads[ids.w_hidden] += s.h_prev.transpose() * d_hh;
      grads[ids.b_hidden].row(0) += d_hh.colwise().sum();
      dh_prev += d_hh * w_hidden.transpose();
      scatter_slot(d_input_proj, d_xi, batch, slot);
      dh_next = std::move(dh_prev);
    }
    grads[ids.w_input] += c.x_in.transpose() * d_input_proj;
    grads[ids.b_input].row(0) += d_input_proj.colwise().sum();
    d_x = d_input_proj * t[ids.w_input].transpose();
  }
  return d_x;
}

}  // namespace pagerec::detail
