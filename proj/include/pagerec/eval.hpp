#pragma once

// Ranking evaluation with non-item filtering, and the attribute-conditioned
// popularity baseline.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pagerec/corpus.hpp"
#include "pagerec/model.hpp"
#include "pagerec/vocab.hpp"

namespace pagerec {

struct MetricAt {
  double hr = 0.0;
  double ndcg = 0.0;
};

/// Single relevant item: hr@k = [rank <= k], ndcg@k = 1/log2(1+rank) if
/// rank <= k. A missing rank is a miss at every k.
std::map<std::size_t, MetricAt> compute_metrics(std::optional<std::size_t> rank,
                                                std::span<const std::size_t> ks);

/// 1-based rank of `target` among the eligible tokens of `scores`. PAD is
/// never eligible; pages are eligible only when filter_non_items is false.
/// Equal scores rank by ascending token id.
std::optional<std::size_t> rank_of(std::span<const double> scores, TokenId target,
                                   const Vocab& vocab, bool filter_non_items = true);

/// Top-k eligible tokens, best first, ties by ascending token id.
std::vector<TokenId> top_k_tokens(std::span<const double> scores, const Vocab& vocab,
                                  std::size_t k, bool filter_non_items = true);

enum class EvalProtocol { LastItem, AllItemTargets };

std::string_view name(EvalProtocol p);
EvalProtocol parse_protocol(std::string_view text);

inline const std::vector<std::size_t> kDefaultKs{1, 5, 10};

struct EvalReport {
  std::map<std::string, double> metrics;  // "HR@10", "NDCG@10", ...
  std::size_t n_targets = 0;
  nlohmann::ordered_json config;

  double hr(std::size_t k) const { return metrics.at("HR@" + std::to_string(k)); }
  double ndcg(std::size_t k) const { return metrics.at("NDCG@" + std::to_string(k)); }
  /// HR@1 = NDCG@1, HR non-decreasing in k, NDCG@k <= HR@k.
  bool invariants_hold(double tol = 1e-12) const;
};

nlohmann::ordered_json to_json(const EvalReport& r);
/// `model,strategy,hr1,hr5,hr10,ndcg5,ndcg10,n_targets` header plus one row.
std::string report_csv(const EvalReport& r, const std::string& model, const std::string& strategy);

/// Sums per-target metrics; merging is associative so evaluation order does
/// not matter.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<std::size_t> ks = kDefaultKs);
  void add(std::optional<std::size_t> rank);
  void merge(const MetricAccumulator& other);
  EvalReport report() const;
  std::size_t count() const { return count_; }

 private:
  std::vector<std::size_t> ks_;
  std::map<std::size_t, MetricAt> sums_;
  std::size_t count_ = 0;
};

struct EvalTarget {
  const Session* session;
  std::size_t position;  // index of the target event; prefix is [0, position)
};

/// Targets per protocol. Throws DataError for LastItem when a session does
/// not end with an item.
std::vector<EvalTarget> eval_targets(const Corpus& corpus, EvalProtocol protocol);

struct ModelBundle {
  const ModelParams& params;
  const Vocab& vocab;
  const ReprStrategy& strategy;
};

/// Next-item scores for each prefix, |prefixes| x |vocab|.
Matrix score_prefixes(const ModelBundle& model, const AttributeVocab& corpus_attrs,
                      std::span<const std::span<const Interaction>> prefixes);

EvalReport evaluate_model(const ModelBundle& model, const Corpus& corpus,
                          std::span<const std::size_t> ks, EvalProtocol protocol,
                          std::size_t batch_size = 256);

/// Top-k item ids for a session prefix.
std::vector<std::string> predict_topk(const ModelBundle& model, const AttributeVocab& corpus_attrs,
                                      std::span<const Interaction> prefix, std::size_t k,
                                      bool filter_non_items = true);

/// Items ranked by training interaction count within their exact attribute
/// combination; unknown combinations fall back to global popularity.
class GenrePop {
 public:
  explicit GenrePop(const Corpus& train);

  std::vector<std::string> query(const AttrSet& attrs, std::size_t k) const;
  std::optional<std::size_t> rank_of(const AttrSet& attrs, const std::string& item) const;
  const std::vector<std::string>& global() const { return global_; }

 private:
  const std::vector<std::string>& list_for(const AttrSet& attrs) const;

  std::map<AttrSet, std::vector<std::string>> by_combo_;
  std::vector<std::string> global_;
};

/// Each target is queried with its own attribute combination.
EvalReport evaluate_genre_pop(const GenrePop& baseline, const Corpus& corpus,
                              std::span<const std::size_t> ks, EvalProtocol protocol);

}  // namespace pagerec
