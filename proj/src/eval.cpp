#include "pagerec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pagerec/batch.hpp"
#include "pagerec/csv.hpp"
#include "pagerec/errors.hpp"

namespace pagerec {

std::map<std::size_t, MetricAt> compute_metrics(std::optional<std::size_t> rank,
                                                std::span<const std::size_t> ks) {
  std::map<std::size_t, MetricAt> out;
  for (auto k : ks) {
    if (k == 0) throw std::invalid_argument("cutoff k must be positive");
    MetricAt m;
    if (rank && *rank <= k) {
      m.hr = 1.0;
      m.ndcg = 1.0 / std::log2(1.0 + static_cast<double>(*rank));
    }
    out[k] = m;
  }
  return out;
}

namespace {

bool eligible(TokenId t, const Vocab& vocab, bool filter) {
  if (t == Vocab::kPad) return false;
  return !filter || vocab.is_item(t);
}

}  // namespace

std::optional<std::size_t> rank_of(std::span<const double> scores, TokenId target,
                                   const Vocab& vocab, bool filter_non_items) {
  if (scores.size() != vocab.size()) throw std::invalid_argument("score vector does not match vocabulary");
  if (target >= vocab.size() || !eligible(target, vocab, filter_non_items)) return std::nullopt;
  const double s = scores[target];
  std::size_t rank = 1;
  for (TokenId t = 0; t < scores.size(); ++t) {
    if (t == target || !eligible(t, vocab, filter_non_items)) continue;
    if (scores[t] > s || (scores[t] == s && t < target)) ++rank;
  }
  return rank;
}

std::vector<TokenId> top_k_tokens(std::span<const double> scores, const Vocab& vocab, std::size_t k,
                                  bool filter_non_items) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (scores.size() != vocab.size()) throw std::invalid_argument("score vector does not match vocabulary");
  std::vector<TokenId> ids;
  for (TokenId t = 0; t < scores.size(); ++t) {
    if (eligible(t, vocab, filter_non_items)) ids.push_back(t);
  }
  const auto better = [&](TokenId a, TokenId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  const auto n = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), better);
  ids.resize(n);
  return ids;
}

std::string_view name(EvalProtocol p) {
  return p == EvalProtocol::LastItem ? "last_item" : "all_item_targets";
}

EvalProtocol parse_protocol(std::string_view text) {
  if (text == "last_item") return EvalProtocol::LastItem;
  if (text == "all_item_targets") return EvalProtocol::AllItemTargets;
  throw std::invalid_argument("unknown evaluation protocol: " + std::string(text));
}

bool EvalReport::invariants_hold(double tol) const {
  std::vector<std::size_t> ks;
  for (const auto& [key, _] : metrics) {
    if (key.rfind("HR@", 0) == 0) ks.push_back(std::stoul(key.substr(3)));
  }
  std::sort(ks.begin(), ks.end());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ndcg(ks[i]) > hr(ks[i]) + tol) return false;
    if (i > 0 && hr(ks[i]) + tol < hr(ks[i - 1])) return false;
    if (ks[i] == 1 && std::abs(hr(1) - ndcg(1)) > tol) return false;
  }
  return true;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["config"] = r.config;
  // Sorted by k, HR before NDCG.
  std::vector<std::size_t> ks;
  for (const auto& [key, _] : r.metrics) {
    if (key.rfind("HR@", 0) == 0) ks.push_back(std::stoul(key.substr(3)));
  }
  std::sort(ks.begin(), ks.end());
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (auto k : ks) m["HR@" + std::to_string(k)] = r.hr(k);
  for (auto k : ks) m["NDCG@" + std::to_string(k)] = r.ndcg(k);
  j["metrics"] = m;
  j["n_targets"] = r.n_targets;
  return j;
}

std::string report_csv(const EvalReport& r, const std::string& model, const std::string& strategy) {
  auto get = [&](const std::string& key) {
    auto it = r.metrics.find(key);
    return it == r.metrics.end() ? std::string() : csv::format_double(it->second);
  };
  std::ostringstream out;
  out << "model,strategy,hr1,hr5,hr10,ndcg5,ndcg10,n_targets\n";
  out << csv::escape(model) << ',' << csv::escape(strategy) << ',' << get("HR@1") << ',' << get("HR@5")
      << ',' << get("HR@10") << ',' << get("NDCG@5") << ',' << get("NDCG@10") << ',' << r.n_targets
      << '\n';
  return out.str();
}

MetricAccumulator::MetricAccumulator(std::vector<std::size_t> ks) : ks_(std::move(ks)) {
  if (ks_.empty()) throw std::invalid_argument("no cutoffs given");
  for (auto k : ks_) {
    if (k == 0) throw std::invalid_argument("cutoff k must be positive");
    sums_[k] = {};
  }
}

void MetricAccumulator::add(std::optional<std::size_t> rank) {
  for (const auto& [k, m] : compute_metrics(rank, ks_)) {
    sums_[k].hr += m.hr;
    sums_[k].ndcg += m.ndcg;
  }
  ++count_;
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  if (other.ks_ != ks_) throw std::invalid_argument("merging accumulators with different cutoffs");
  for (const auto& [k, m] : other.sums_) {
    sums_[k].hr += m.hr;
    sums_[k].ndcg += m.ndcg;
  }
  count_ += other.count_;
}

EvalReport MetricAccumulator::report() const {
  EvalReport r;
  r.n_targets = count_;
  const double n = count_ ? static_cast<double>(count_) : 1.0;
  for (const auto& [k, m] : sums_) {
    r.metrics["HR@" + std::to_string(k)] = m.hr / n;
    r.metrics["NDCG@" + std::to_string(k)] = m.ndcg / n;
  }
  return r;
}

std::vector<EvalTarget> eval_targets(const Corpus& corpus, EvalProtocol protocol) {
  std::vector<EvalTarget> out;
  for (const auto& s : corpus.sessions) {
    if (s.events.size() < 2) continue;
    if (protocol == EvalProtocol::LastItem) {
      if (s.events.back().kind != InteractionKind::Item) {
        throw DataError("session of user " + s.user_id + " does not end with an item");
      }
      out.push_back({&s, s.events.size() - 1});
    } else {
      for (std::size_t p = 1; p < s.events.size(); ++p) {
        if (s.events[p].kind == InteractionKind::Item) out.push_back({&s, p});
      }
    }
  }
  return out;
}

Matrix score_prefixes(const ModelBundle& model, const AttributeVocab& corpus_attrs,
                      std::span<const std::span<const Interaction>> prefixes) {
  Encoder enc(model.vocab, model.strategy, corpus_attrs, {model.params.config.max_len, true});
  const auto batch = enc.encode_prefixes(prefixes);
  return score_last(model.params, batch);
}

EvalReport evaluate_model(const ModelBundle& model, const Corpus& corpus,
                          std::span<const std::size_t> ks, EvalProtocol protocol,
                          std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const auto targets = eval_targets(corpus, protocol);
  MetricAccumulator acc({ks.begin(), ks.end()});
  Encoder enc(model.vocab, model.strategy, corpus.attribute_vocab, {model.params.config.max_len, true});
  for (std::size_t start = 0; start < targets.size(); start += batch_size) {
    const auto end = std::min(targets.size(), start + batch_size);
    std::vector<std::span<const Interaction>> prefixes;
    for (auto i = start; i < end; ++i) {
      prefixes.emplace_back(targets[i].session->events.data(), targets[i].position);
    }
    const Matrix scores = score_last(model.params, enc.encode_prefixes(prefixes));
    for (auto i = start; i < end; ++i) {
      const auto& target = targets[i].session->events[targets[i].position];
      const auto tok = model.vocab.item_token(target.entity_id);
      if (!tok) {
        acc.add(std::nullopt);
        continue;
      }
      const Eigen::RowVectorXd row = scores.row(static_cast<Eigen::Index>(i - start));
      acc.add(rank_of({row.data(), static_cast<std::size_t>(row.size())}, *tok, model.vocab, true));
    }
  }
  auto report = acc.report();
  report.config["protocol"] = name(protocol);
  return report;
}

std::vector<std::string> predict_topk(const ModelBundle& model, const AttributeVocab& corpus_attrs,
                                      std::span<const Interaction> prefix, std::size_t k,
                                      bool filter_non_items) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  const std::span<const Interaction> one[] = {prefix};
  const Matrix scores = score_prefixes(model, corpus_attrs, one);
  const Eigen::RowVectorXd row = scores.row(0);
  std::vector<std::string> out;
  for (auto t : top_k_tokens({row.data(), static_cast<std::size_t>(row.size())}, model.vocab, k,
                             filter_non_items)) {
    out.push_back(model.vocab.token(t));
  }
  return out;
}

namespace {

std::vector<std::string> rank_by_count(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  // Map order is ascending id, so a stable sort breaks ties by id.
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(v.size());
  for (auto& [id, _] : v) out.push_back(id);
  return out;
}

}  // namespace

GenrePop::GenrePop(const Corpus& train) {
  std::map<std::string, std::size_t> global;
  std::map<AttrSet, std::map<std::string, std::size_t>> combos;
  for (const auto& s : train.sessions) {
    for (const auto& e : s.events) {
      if (e.kind != InteractionKind::Item) continue;
      ++global[e.entity_id];
      ++combos[e.attrs][e.entity_id];
    }
  }
  global_ = rank_by_count(global);
  for (const auto& [attrs, counts] : combos) by_combo_[attrs] = rank_by_count(counts);
}

const std::vector<std::string>& GenrePop::list_for(const AttrSet& attrs) const {
  auto it = by_combo_.find(attrs);
  return it == by_combo_.end() ? global_ : it->second;
}

std::vector<std::string> GenrePop::query(const AttrSet& attrs, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("k must be positive");
  const auto& list = list_for(attrs);
  return {list.begin(), list.begin() + static_cast<std::ptrdiff_t>(std::min(k, list.size()))};
}

std::optional<std::size_t> GenrePop::rank_of(const AttrSet& attrs, const std::string& item) const {
  const auto& list = list_for(attrs);
  auto it = std::find(list.begin(), list.end(), item);
  if (it == list.end()) return std::nullopt;
  return static_cast<std::size_t>(it - list.begin()) + 1;
}

EvalReport evaluate_genre_pop(const GenrePop& baseline, const Corpus& corpus,
                              std::span<const std::size_t> ks, EvalProtocol protocol) {
  MetricAccumulator acc({ks.begin(), ks.end()});
  for (const auto& t : eval_targets(corpus, protocol)) {
    const auto& e = t.session->events[t.position];
    acc.add(baseline.rank_of(e.attrs, e.entity_id));
  }
  auto report = acc.report();
  report.config["protocol"] = name(protocol);
  return report;
}

}  // namespace pagerec
