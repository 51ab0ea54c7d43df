#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pagerec/checkpoint.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/synthgen.hpp"
#include "pagerec/train.hpp"
#include "test_support.hpp"

namespace pagerec {
namespace {

Corpus toy_corpus(std::size_t users, std::uint64_t seed) {
  ToySpec spec;
  spec.n_users = users;
  return synthesize(make_toy_ratings(spec, seed), SynthVariant::prev(), seed);
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.d = 16;
  c.model.max_len = 12;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.inner = 32;
  c.model.dropout = 0.1;
  c.batch_size = 16;
  c.epochs = 3;
  c.lr = 5e-3;
  c.seed = 7;
  return c;
}

ReprStrategy cpid() {
  ReprStrategy s;
  s.mode = PageMode::Cpid;
  return s;
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  const auto corpus = toy_corpus(20, 1);
  const auto vocab = build_vocab(corpus, cpid());
  auto config = small_config();
  config.epochs = 0;
  const auto r = train_model(corpus, nullptr, vocab, cpid(), config);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.best_epoch, 0u);
  const auto again = train_model(corpus, nullptr, vocab, cpid(), config);
  EXPECT_TRUE(r.params.tensors == again.params.tensors);
}

TEST(Train, SameSeedSameParameters) {
  const auto corpus = toy_corpus(30, 2);
  const auto vocab = build_vocab(corpus, cpid());
  for (auto backend : {Backend::SelfAttention, Backend::Gru}) {
    auto config = small_config();
    config.model.backend = backend;
    config.epochs = 2;
    const auto a = train_model(corpus, nullptr, vocab, cpid(), config);
    const auto b = train_model(corpus, nullptr, vocab, cpid(), config);
    EXPECT_TRUE(a.params.tensors == b.params.tensors);
    config.seed = 8;
    const auto c = train_model(corpus, nullptr, vocab, cpid(), config);
    EXPECT_FALSE(a.params.tensors == c.params.tensors);
  }
}

TEST(Train, LossDecreasesOnToyData) {
  const auto corpus = toy_corpus(80, 3);
  const auto vocab = build_vocab(corpus, cpid());
  auto config = small_config();
  config.epochs = 5;
  const auto r = train_model(corpus, nullptr, vocab, cpid(), config);
  ASSERT_EQ(r.log.size(), 5u);
  EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
  EXPECT_LT(r.log.front().train_loss, std::log(static_cast<double>(vocab.size())) + 0.5);
  EXPECT_EQ(r.best_epoch, 5u);
}

TEST(Train, EarlyStoppingKeepsBestEpoch) {
  const auto corpus = toy_corpus(60, 4);
  const auto valid = toy_corpus(20, 5);
  const auto vocab = build_vocab(corpus, cpid());
  auto config = small_config();
  config.epochs = 8;
  config.patience = 1;
  const auto r = train_model(corpus, &valid, vocab, cpid(), config);
  ASSERT_FALSE(r.log.empty());
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : r.log) {
    ASSERT_TRUE(e.valid_ndcg10.has_value());
    if (*e.valid_ndcg10 > best) {
      best = *e.valid_ndcg10;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_LE(r.log.size(), std::max<std::size_t>(best_epoch, 1) + config.patience);
  // The returned parameters reproduce the best validation score.
  const auto report = evaluate_model({r.params, vocab, cpid()}, valid, kDefaultKs, EvalProtocol::LastItem);
  EXPECT_NEAR(report.ndcg(10), best, 1e-12);
}

TEST(Train, LogCsv) {
  std::vector<EpochLog> log{{1, 2.5, std::nullopt, std::nullopt}, {2, 2.0, 0.5, 0.25}};
  const auto text = log_csv(log);
  std::istringstream in(text);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "epoch,train_loss,valid_hr10,valid_ndcg10");
  EXPECT_EQ(first, "1,2.5,,");
  EXPECT_EQ(second.substr(0, 2), "2,");
}

TEST(Train, InvalidConfigRejected) {
  auto c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet p;
  p.add("w", 1, 3);
  p[0] << 1.0, -2.0, 0.5;
  auto g = p.zeros_like();
  g[0] << 4.0, -0.01, 0.0;
  Adam adam(p, 0.1, 0.9, 0.999, 1e-8);
  adam.step(p, g);
  EXPECT_EQ(adam.steps(), 1u);
  // After bias correction m/sqrt(v) = g/|g|.
  EXPECT_NEAR(p[0](0, 0), 1.0 - 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p[0](0, 1), -2.0 + 0.1 * 0.01 / (0.01 + 1e-8), 1e-12);
  EXPECT_EQ(p[0](0, 2), 0.5);

  // Second step with the same gradient: m_hat = g, v_hat = g^2.
  adam.step(p, g);
  EXPECT_NEAR(p[0](0, 0), 1.0 - 2 * 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto corpus = testing::random_corpus(3, 6, 8, 4, 3, 5, 2, 6);
  for (auto mode : {PageMode::Upid, PageMode::Cpid, PageMode::Pe}) {
    ReprStrategy s;
    s.mode = mode;
    s.pe_dense = mode == PageMode::Pe;
    const auto vocab = build_vocab(corpus, s);
    ModelConfig base;
    base.d = 6;
    base.max_len = 5;
    base.inner = 7;
    base.heads = 3;
    base.backend = mode == PageMode::Cpid ? Backend::Gru : Backend::SelfAttention;
    const Checkpoint ckpt{init_params(sized_config(base, vocab, s), 11), vocab, s, {5, true}};
    std::stringstream buf;
    write_checkpoint(buf, ckpt);
    const auto back = read_checkpoint(buf);
    EXPECT_TRUE(back.params.tensors == ckpt.params.tensors);
    EXPECT_EQ(back.vocab, ckpt.vocab);
    EXPECT_EQ(back.strategy.mode, s.mode);
    EXPECT_EQ(back.strategy.pe_dense, s.pe_dense);
    EXPECT_EQ(back.encode.max_len, 5u);
    EXPECT_EQ(to_json(back.params.config), to_json(ckpt.params.config));
  }
}

TEST(Checkpoint, CorruptInputIsDataError) {
  std::stringstream bad("NOTACKPT and more");
  EXPECT_THROW(read_checkpoint(bad), DataError);

  const auto corpus = testing::random_corpus(4, 4, 5, 2, 2, 0, 2, 4);
  const auto vocab = build_vocab(corpus, cpid());
  ModelConfig base;
  base.d = 4;
  base.max_len = 4;
  base.inner = 4;
  const Checkpoint ckpt{init_params(sized_config(base, vocab, cpid()), 1), vocab, cpid(), {4, true}};
  std::stringstream buf;
  write_checkpoint(buf, ckpt);
  const auto full = buf.str();
  std::stringstream truncated(full.substr(0, full.size() - 9));
  EXPECT_THROW(read_checkpoint(truncated), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.bin"), DataError);
}

}  // namespace
}  // namespace pagerec
