#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pagerec/model.hpp"

namespace pagerec {

std::string_view name(Backend b) {
  return b == Backend::SelfAttention ? "self_attention" : "gru";
}

Backend parse_backend(std::string_view text) {
  if (text == "self_attention" || text == "sasrec") return Backend::SelfAttention;
  if (text == "gru" || text == "gru4rec") return Backend::Gru;
  throw std::invalid_argument("unknown backend '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (d == 0 || max_len < 2 || layers == 0) throw std::invalid_argument("model sizes must be positive");
  if (vocab_size < 2) throw std::invalid_argument("vocabulary too small");
  if (backend == Backend::SelfAttention) {
    if (heads == 0 || d % heads != 0) throw std::invalid_argument("d must be divisible by heads");
    if (inner == 0) throw std::invalid_argument("inner size must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["backend"] = name(c.backend);
  j["d"] = c.d;
  j["max_len"] = c.max_len;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["inner"] = c.inner;
  j["dropout"] = c.dropout;
  j["vocab_size"] = c.vocab_size;
  j["n_attrs"] = c.n_attrs;
  j["dense_dim"] = c.dense_dim;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.backend = parse_backend(j.at("backend").get<std::string>());
  c.d = j.at("d").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.inner = j.at("inner").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.n_attrs = j.at("n_attrs").get<std::size_t>();
  c.dense_dim = j.at("dense_dim").get<std::size_t>();
  return c;
}

std::size_t ParamSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  names_.push_back(std::move(name));
  values_.push_back(Matrix::Zero(rows, cols));
  return values_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamSet::n_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

void ParamSet::set_zero() {
  for (auto& v : values_) v.setZero();
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.values_.size(); ++i) {
    const auto& x = a.values_[i];
    const auto& y = b.values_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (x.size() && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) != 0) return false;
  }
  return true;
}

ModelParams make_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  auto& t = p.tensors;
  auto& l = p.layout;
  const auto d = static_cast<Eigen::Index>(config.d);
  l.item_embedding = t.add("item_embedding", static_cast<Eigen::Index>(config.vocab_size), d);
  if (config.uses_position()) {
    l.position_embedding = t.add("position_embedding", static_cast<Eigen::Index>(config.max_len), d);
  }
  if (config.n_attrs) {
    l.attr_weight = t.add("attr_weight", static_cast<Eigen::Index>(config.n_attrs), d);
    l.attr_bias = t.add("attr_bias", 1, d);
  }
  if (config.dense_dim) {
    l.dense_weight = t.add("dense_weight", static_cast<Eigen::Index>(config.dense_dim), d);
    l.dense_bias = t.add("dense_bias", 1, d);
  }
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string pre = "layer" + std::to_string(i) + ".";
    if (config.backend == Backend::SelfAttention) {
      const auto inner = static_cast<Eigen::Index>(config.inner);
      AttentionLayerIds a{};
      a.ln1_gain = t.add(pre + "ln1_gain", 1, d);
      a.ln1_bias = t.add(pre + "ln1_bias", 1, d);
      a.wq = t.add(pre + "q_weight", d, d);
      a.bq = t.add(pre + "q_bias", 1, d);
      a.wk = t.add(pre + "k_weight", d, d);
      a.bk = t.add(pre + "k_bias", 1, d);
      a.wv = t.add(pre + "v_weight", d, d);
      a.bv = t.add(pre + "v_bias", 1, d);
      a.wo = t.add(pre + "out_weight", d, d);
      a.bo = t.add(pre + "out_bias", 1, d);
      a.ln2_gain = t.add(pre + "ln2_gain", 1, d);
      a.ln2_bias = t.add(pre + "ln2_bias", 1, d);
      a.w1 = t.add(pre + "ffn1_weight", d, inner);
      a.b1 = t.add(pre + "ffn1_bias", 1, inner);
      a.w2 = t.add(pre + "ffn2_weight", inner, d);
      a.b2 = t.add(pre + "ffn2_bias", 1, d);
      l.attention.push_back(a);
    } else {
      GruLayerIds g{};
      g.w_input = t.add(pre + "gru_input_weight", d, 3 * d);
      g.b_input = t.add(pre + "gru_input_bias", 1, 3 * d);
      g.w_hidden = t.add(pre + "gru_hidden_weight", d, 3 * d);
      g.b_hidden = t.add(pre + "gru_hidden_bias", 1, 3 * d);
      l.gru.push_back(g);
    }
  }
  if (config.backend == Backend::SelfAttention) {
    l.final_ln_gain = t.add("final_ln_gain", 1, d);
    l.final_ln_bias = t.add("final_ln_bias", 1, d);
  }
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = make_params(config);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d));
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& nm = p.tensors.name(i);
    Matrix& m = p.tensors[i];
    const bool is_gain = nm.ends_with("_gain");
    const bool is_bias = nm.ends_with("_bias");
    if (is_gain) {
      m.setOnes();
    } else if (!is_bias) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-scale, scale);
      }
    }
  }
  return p;
}

}  // namespace pagerec
