#include "pagerec/train.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pagerec/batch.hpp"
#include "pagerec/csv.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/rng.hpp"

namespace pagerec {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = to_json(c.model);
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["non_item_targets"] = c.non_item_targets;
  j["valid_protocol"] = name(c.valid_protocol);
  return j;
}

ModelConfig sized_config(ModelConfig base, const Vocab& vocab, const ReprStrategy& strategy) {
  base.vocab_size = vocab.size();
  base.n_attrs = strategy.uses_attrs() ? vocab.attribute_tokens().size() : 0;
  base.dense_dim = strategy.uses_dense() ? vocab.dense_dim() : 0;
  return base;
}

std::string log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,valid_hr10,valid_ndcg10\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << csv::format_double(e.train_loss) << ','
        << (e.valid_hr10 ? csv::format_double(*e.valid_hr10) : "") << ','
        << (e.valid_ndcg10 ? csv::format_double(*e.valid_ndcg10) : "") << '\n';
  }
  return out.str();
}

Adam::Adam(const ParamSet& like, double lr, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

namespace {

std::vector<const Session*> trainable_sessions(const Corpus& corpus, const Vocab& vocab) {
  std::vector<const Session*> out;
  for (const auto& s : corpus.sessions) {
    std::size_t known = 0;
    for (const auto& e : s.events) {
      if (vocab.token_of(e, corpus.attribute_vocab)) ++known;
      if (known >= 2) break;
    }
    if (known >= 2) out.push_back(&s);
  }
  return out;
}

// Streams derived from the run seed; fixed so reruns match bit for bit.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

}  // namespace

TrainResult train_model(const Corpus& train, const Corpus* valid, const Vocab& vocab,
                        const ReprStrategy& strategy, const TrainConfig& config) {
  config.validate();
  strategy.validate();
  const ModelConfig mc = sized_config(config.model, vocab, strategy);
  mc.validate();

  TrainResult result;
  result.params = init_params(mc, Rng(config.seed, kInitStream).next_u64());
  if (config.epochs == 0) return result;

  const auto sessions = trainable_sessions(train, vocab);
  if (sessions.empty()) throw DataError("no training session has two known interactions");
  const Encoder encoder(vocab, strategy, train.attribute_vocab, {mc.max_len, config.non_item_targets});
  const bool has_valid = valid && !valid->sessions.empty();

  ModelParams current = result.params;
  Adam adam(current.tensors, config.lr, config.beta1, config.beta2, config.eps);
  double best_ndcg = -1.0;
  std::size_t since_best = 0;
  std::vector<const Session*> order = sessions;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(config.seed, kShuffleStream + 16 * epoch);
    Rng dropout_rng(config.seed, kDropoutStream + 16 * epoch);
    order = sessions;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t target_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const auto end = std::min(order.size(), start + config.batch_size);
      const auto batch = encoder.encode(std::span<const Session* const>(order.data() + start, end - start));
      if (batch.n_targets() == 0) continue;
      try {
        auto lg = loss_and_grad(current, batch, mc.dropout > 0.0 ? &dropout_rng : nullptr);
        adam.step(current.tensors, lg.grads);
        if (!current.tensors.all_finite()) throw NumericError("non-finite parameters after update");
        loss_sum += lg.loss * static_cast<double>(lg.n_targets);
        target_sum += lg.n_targets;
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) +
                           ": " + e.what());
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = target_sum ? loss_sum / static_cast<double>(target_sum) : 0.0;
    if (has_valid) {
      const auto report =
          evaluate_model({current, vocab, strategy}, *valid, kDefaultKs, config.valid_protocol);
      entry.valid_hr10 = report.hr(10);
      entry.valid_ndcg10 = report.ndcg(10);
    }
    result.log.push_back(entry);

    if (!has_valid) {
      result.params = current;
      result.best_epoch = epoch;
      continue;
    }
    if (*entry.valid_ndcg10 > best_ndcg) {
      best_ndcg = *entry.valid_ndcg10;
      result.params = current;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace pagerec
