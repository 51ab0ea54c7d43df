#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pagerec/errors.hpp"
#include "pagerec/eval.hpp"
#include "pagerec/rng.hpp"
#include "test_support.hpp"

namespace pagerec {
namespace {

using testing::brute_force_metrics;
using testing::brute_force_rank;
using testing::item;
using testing::make_corpus;
using testing::page;
using testing::random_corpus;

TEST(Metrics, SingleRelevantItem) {
  const std::vector<std::size_t> ks{1, 5, 10};
  auto m = compute_metrics(1, ks);
  EXPECT_EQ(m[10].hr, 1.0);
  EXPECT_EQ(m[10].ndcg, 1.0);
  m = compute_metrics(3, ks);
  EXPECT_EQ(m[10].ndcg, 0.5);
  EXPECT_EQ(m[1].hr, 0.0);
  m = compute_metrics(11, ks);
  EXPECT_EQ(m[10].hr, 0.0);
  EXPECT_EQ(m[10].ndcg, 0.0);
  m = compute_metrics(std::nullopt, ks);
  EXPECT_EQ(m[10].hr, 0.0);
}

// PAD, v1, v2, p1.
Vocab small_vocab() {
  const auto c = make_corpus({{"u", {item("v1"), page("p1", {0}), item("v2")}}}, 1);
  ReprStrategy s;
  s.mode = PageMode::Upid;
  return build_vocab(c, s);
}

TEST(Ranking, PagesAreFilteredBeforeTopK) {
  const auto vocab = small_vocab();
  const std::vector<double> scores{5.0, 0.9, 0.5, 0.95};
  EXPECT_EQ(top_k_tokens(scores, vocab, 2), (std::vector<TokenId>{1, 2}));
  EXPECT_EQ(top_k_tokens(scores, vocab, 2, false), (std::vector<TokenId>{3, 1}));
  EXPECT_EQ(top_k_tokens(scores, vocab, 50), (std::vector<TokenId>{1, 2}));
  EXPECT_THROW(top_k_tokens(scores, vocab, 0), std::invalid_argument);
  // The page outranks v2 only without filtering.
  EXPECT_EQ(rank_of(scores, 2, vocab), 2u);
  EXPECT_EQ(rank_of(scores, 2, vocab, false), 3u);
  EXPECT_EQ(rank_of(scores, 3, vocab), std::nullopt);
}

TEST(Ranking, MatchesSortAndScanOracle) {
  const auto c = random_corpus(1, 10, 12, 6, 3, 0, 2, 8);
  ReprStrategy s;
  s.mode = PageMode::Upid;
  const auto vocab = build_vocab(c, s);
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> scores(vocab.size());
    // Coarse values force ties.
    for (auto& v : scores) v = std::round(rng.normal() * 2.0) / 2.0;
    const auto target = static_cast<TokenId>(rng.below(vocab.size()));
    for (bool filter : {true, false}) {
      const auto expected = brute_force_rank(scores, target, vocab, filter);
      EXPECT_EQ(rank_of(scores, target, vocab, filter), expected);
      for (std::size_t k : {1, 5, 10}) {
        const auto m = compute_metrics(rank_of(scores, target, vocab, filter), std::vector<std::size_t>{k});
        const auto [hr, ndcg] = brute_force_metrics(expected, k);
        EXPECT_EQ(m.at(k).hr, hr);
        EXPECT_EQ(m.at(k).ndcg, ndcg);
      }
    }
  }
}

TEST(Report, InvariantsCsvAndJson) {
  MetricAccumulator acc;
  for (std::size_t r : {1, 2, 7, 30}) acc.add(r);
  acc.add(std::nullopt);
  const auto report = acc.report();
  EXPECT_EQ(report.n_targets, 5u);
  EXPECT_TRUE(report.invariants_hold());
  EXPECT_DOUBLE_EQ(report.hr(10), 3.0 / 5.0);
  const auto csv = report_csv(report, "self_attention", "cpid");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,strategy,hr1,hr5,hr10,ndcg5,ndcg10,n_targets");
  const auto j = to_json(report);
  EXPECT_EQ(j["metrics"].size(), 6u);
  EXPECT_EQ(j["metrics"].begin().key(), "HR@1");
}

TEST(Report, MergingIsOrderIndependent) {
  MetricAccumulator a, b, all;
  for (std::size_t r = 1; r < 20; ++r) {
    (r % 3 ? a : b).add(r);
    all.add(r);
  }
  MetricAccumulator ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  EXPECT_EQ(ab.report().metrics, ba.report().metrics);
  for (const auto& [key, v] : all.report().metrics) EXPECT_NEAR(ab.report().metrics.at(key), v, 1e-15);
}

// Zero network, final layer norm reduced to its bias: every position scores
// token t with <bias, E_V[t]>.
ModelParams constant_scorer(const Vocab& vocab, const std::vector<double>& token_scores) {
  ModelConfig c;
  c.d = 2;
  c.max_len = 4;
  c.heads = 1;
  c.layers = 1;
  c.inner = 2;
  c.vocab_size = vocab.size();
  auto p = make_params(c);
  p.tensors[*p.layout.final_ln_bias](0, 0) = 1.0;
  for (std::size_t t = 0; t < token_scores.size(); ++t) p.tensors[p.layout.item_embedding](static_cast<Eigen::Index>(t), 0) = token_scores[t];
  return p;
}

TEST(EvaluateModel, TopScoredTargetGivesHitAtOne) {
  const auto vocab = small_vocab();
  ReprStrategy s;
  s.mode = PageMode::Upid;
  const auto p = constant_scorer(vocab, {0.0, 0.1, 0.9, 5.0});
  const auto c = make_corpus({{"u", {item("v1"), item("v2")}}}, 1);
  const auto r = evaluate_model({p, vocab, s}, c, kDefaultKs, EvalProtocol::LastItem);
  EXPECT_EQ(r.n_targets, 1u);
  EXPECT_EQ(r.hr(1), 1.0);
  EXPECT_TRUE(r.invariants_hold());
  EXPECT_EQ(predict_topk({p, vocab, s}, c.attribute_vocab, c.sessions[0].events, 2),
            (std::vector<std::string>{"v2", "v1"}));
  EXPECT_EQ(predict_topk({p, vocab, s}, c.attribute_vocab, c.sessions[0].events, 1, false),
            (std::vector<std::string>{"p1"}));
  EXPECT_THROW(predict_topk({p, vocab, s}, c.attribute_vocab, c.sessions[0].events, 0), std::invalid_argument);
}

TEST(EvaluateModel, UnknownTargetCountsAsMiss) {
  const auto vocab = small_vocab();
  ReprStrategy s;
  s.mode = PageMode::Upid;
  const auto p = constant_scorer(vocab, {0.0, 0.1, 0.9, 5.0});
  const auto c = make_corpus({{"u", {item("v1"), item("v-new")}}}, 1);
  const auto r = evaluate_model({p, vocab, s}, c, kDefaultKs, EvalProtocol::LastItem);
  EXPECT_EQ(r.n_targets, 1u);
  EXPECT_EQ(r.hr(10), 0.0);
}

TEST(EvaluateModel, LastItemNeedsItemEnding) {
  const auto vocab = small_vocab();
  ReprStrategy s;
  s.mode = PageMode::Upid;
  const auto p = constant_scorer(vocab, {0.0, 0.1, 0.9, 5.0});
  const auto c = make_corpus({{"u", {item("v1"), page("p1", {0})}}}, 1);
  EXPECT_THROW(evaluate_model({p, vocab, s}, c, kDefaultKs, EvalProtocol::LastItem), DataError);
  EXPECT_EQ(evaluate_model({p, vocab, s}, c, kDefaultKs, EvalProtocol::AllItemTargets).n_targets, 0u);
}

struct Trained {
  Corpus corpus;
  ReprStrategy strategy;
  Vocab vocab;
  ModelParams params;
};

Trained random_model(Backend backend) {
  Trained t;
  t.corpus = random_corpus(8, 12, 7, 4, 3, 0, 3, 9);
  t.strategy.mode = PageMode::Cpid;
  t.vocab = build_vocab(t.corpus, t.strategy);
  ModelConfig c;
  c.backend = backend;
  c.d = 8;
  c.max_len = 5;
  c.heads = 2;
  c.inner = 8;
  c.vocab_size = t.vocab.size();
  t.params = init_params(c, 3);
  return t;
}

TEST(EvaluateModel, SessionOrderAndBatchSizeDoNotMatter) {
  for (auto backend : {Backend::SelfAttention, Backend::Gru}) {
    auto t = random_model(backend);
    const auto base = evaluate_model({t.params, t.vocab, t.strategy}, t.corpus, kDefaultKs, EvalProtocol::AllItemTargets);
    auto shuffled = t.corpus;
    std::reverse(shuffled.sessions.begin(), shuffled.sessions.end());
    const auto r = evaluate_model({t.params, t.vocab, t.strategy}, shuffled, kDefaultKs, EvalProtocol::AllItemTargets, 3);
    EXPECT_EQ(r.n_targets, base.n_targets);
    for (const auto& [key, v] : base.metrics) EXPECT_NEAR(r.metrics.at(key), v, 1e-15) << key;
    EXPECT_TRUE(base.invariants_hold());
  }
}

TEST(EvaluateModel, PageScoresDoNotAffectFilteredReport) {
  auto t = random_model(Backend::SelfAttention);
  const auto items_only = remove_pages(t.corpus);
  const auto base = evaluate_model({t.params, t.vocab, t.strategy}, items_only, kDefaultKs, EvalProtocol::AllItemTargets);
  auto p = t.params;
  for (TokenId tok = 0; tok < t.vocab.size(); ++tok) {
    if (tok != Vocab::kPad && !t.vocab.is_item(tok)) p.tensors[p.layout.item_embedding].row(tok).array() += 100.0;
  }
  const auto r = evaluate_model({p, t.vocab, t.strategy}, items_only, kDefaultKs, EvalProtocol::AllItemTargets);
  EXPECT_EQ(r.metrics, base.metrics);
}

TEST(GenrePop, CountsWithinCombinationAndFallsBack) {
  std::vector<Session> sessions;
  for (int i = 0; i < 5; ++i) sessions.push_back({"a" + std::to_string(i), {item("v1", {0})}});
  for (int i = 0; i < 3; ++i) sessions.push_back({"b" + std::to_string(i), {item("v2", {0})}});
  for (int i = 0; i < 9; ++i) sessions.push_back({"c" + std::to_string(i), {item("v3", {1})}});
  const GenrePop pop(make_corpus(sessions, 3));
  EXPECT_EQ(pop.query({0}, 2), (std::vector<std::string>{"v1", "v2"}));
  EXPECT_EQ(pop.query({2}, 3), (std::vector<std::string>{"v3", "v1", "v2"}));
  EXPECT_EQ(pop.rank_of({0}, "v2"), 2u);
  EXPECT_EQ(pop.rank_of({0}, "v3"), std::nullopt);

  const auto test = make_corpus({{"x", {item("v3", {1}), item("v2", {0})}}}, 3);
  const auto r = evaluate_genre_pop(pop, test, kDefaultKs, EvalProtocol::LastItem);
  EXPECT_EQ(r.hr(1), 0.0);
  EXPECT_EQ(r.hr(5), 1.0);
  EXPECT_DOUBLE_EQ(r.ndcg(5), 1.0 / std::log2(3.0));
}

TEST(GenrePop, TiesBreakByItemId) {
  const GenrePop pop(make_corpus({{"u", {item("b", {0}), item("a", {0})}}}, 1));
  EXPECT_EQ(pop.query({0}, 2), (std::vector<std::string>{"a", "b"}));
}

}  // namespace
}  // namespace pagerec
