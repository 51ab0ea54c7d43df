#pragma once

// Mini-batch Adam training with early stopping on validation NDCG@10.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pagerec/corpus.hpp"
#include "pagerec/eval.hpp"
#include "pagerec/model.hpp"
#include "pagerec/vocab.hpp"

namespace pagerec {

struct TrainConfig {
  ModelConfig model;  // vocab_size / n_attrs / dense_dim are filled from the vocabulary
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  bool non_item_targets = true;
  EvalProtocol valid_protocol = EvalProtocol::LastItem;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);

/// Model config with the sizes implied by a vocabulary and strategy.
ModelConfig sized_config(ModelConfig base, const Vocab& vocab, const ReprStrategy& strategy);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_hr10, valid_ndcg10;
};

/// `epoch,train_loss,valid_hr10,valid_ndcg10`; validation fields stay empty
/// when no validation data was given.
std::string log_csv(const std::vector<EpochLog>& log);

struct TrainResult {
  ModelParams params;  // best epoch by validation NDCG@10, else the last
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 = initial parameters
};

/// Deterministic for a fixed config and seed. Sessions with fewer than two
/// known interactions are skipped. Throws NumericError naming the epoch and
/// batch when the loss or parameters stop being finite.
TrainResult train_model(const Corpus& train, const Corpus* valid, const Vocab& vocab,
                        const ReprStrategy& strategy, const TrainConfig& config);

class Adam {
 public:
  Adam(const ParamSet& like, double lr, double beta1, double beta2, double eps);
  void step(ParamSet& params, const ParamSet& grads);
  std::size_t steps() const { return t_; }

 private:
  ParamSet m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace pagerec
