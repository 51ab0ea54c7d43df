#include <gtest/gtest.h>

#include <cmath>

#include "pagerec/batch.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/model.hpp"
#include "pagerec/vocab.hpp"
#include "test_support.hpp"

namespace pagerec {
namespace {

using testing::finite_difference_check;
using testing::random_corpus;

ModelConfig tiny_config(Backend backend, const Vocab& vocab, const ReprStrategy& strategy) {
  ModelConfig c;
  c.backend = backend;
  c.d = 8;
  c.max_len = 6;
  c.layers = 2;
  c.heads = 2;
  c.inner = 16;
  c.dropout = 0.2;
  c.vocab_size = vocab.size();
  c.n_attrs = strategy.uses_attrs() ? vocab.attribute_tokens().size() : 0;
  c.dense_dim = strategy.uses_dense() ? vocab.dense_dim() : 0;
  return c;
}

struct Fixture {
  Corpus corpus;
  ReprStrategy strategy;
  Vocab vocab;
  EncodedBatch batch;
};

Fixture make_fixture(PageMode mode, bool dense, std::uint64_t seed, bool non_item_targets = true) {
  Fixture f;
  f.corpus = random_corpus(seed, 3, 9, 4, 4, 3, 3, 9);
  f.strategy.mode = mode;
  f.strategy.pe_attrs = !dense;
  f.strategy.pe_dense = dense;
  f.vocab = build_vocab(f.corpus, f.strategy);
  Encoder enc(f.vocab, f.strategy, f.corpus.attribute_vocab, {6, non_item_targets});
  f.batch = enc.encode(std::span<const Session>(f.corpus.sessions));
  return f;
}

TEST(EmbedInput, SumsIdAndPosition) {
  ModelConfig c;
  c.d = 2;
  c.max_len = 2;
  c.heads = 1;
  c.inner = 2;
  c.vocab_size = 3;
  auto p = make_params(c);
  p.tensors[p.layout.item_embedding].row(1) << 1, 0;
  p.tensors[*p.layout.position_embedding].row(1) << 0, 1;
  EncodedBatch b;
  b.batch_size = 1;
  b.max_len = 2;
  b.token_ids = {0, 1};
  b.positions = {0, 1};
  b.attr_multihot = Matrix::Zero(2, 0);
  b.dense_reps = Matrix::Zero(2, 0);
  const Matrix h = embed_input(p, b);
  EXPECT_DOUBLE_EQ(h(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(h(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(h(0, 0), 0.0);
}

TEST(EmbedInput, AttributeMultiHotIsLinearMap) {
  ModelConfig c;
  c.backend = Backend::Gru;
  c.d = 2;
  c.max_len = 2;
  c.vocab_size = 3;
  c.n_attrs = 3;
  auto p = make_params(c);
  p.tensors[*p.layout.attr_weight] << 1, 1, 5, 5, 2, 0;
  EncodedBatch b;
  b.batch_size = 1;
  b.max_len = 2;
  b.token_ids = {1, 2};
  b.positions = {0, 1};
  b.attr_multihot = Matrix::Zero(2, 3);
  b.attr_multihot(1, 0) = 1.0;
  b.attr_multihot(1, 2) = 1.0;
  b.dense_reps = Matrix::Zero(2, 0);
  p.tensors[*p.layout.attr_bias] << 0.5, 0.5;
  const Matrix h = embed_input(p, b);
  EXPECT_DOUBLE_EQ(h(1, 0), 3.5);
  EXPECT_DOUBLE_EQ(h(1, 1), 1.5);
  // Bias only where an attribute bit is set.
  EXPECT_DOUBLE_EQ(h(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(h(0, 1), 0.0);
}

TEST(EmbedInput, ZeroDenseRowIsGatedOff) {
  ModelConfig c;
  c.backend = Backend::Gru;
  c.d = 2;
  c.max_len = 2;
  c.vocab_size = 3;
  c.dense_dim = 2;
  auto p = make_params(c);
  p.tensors[*p.layout.dense_bias] << 7, 7;
  EncodedBatch b;
  b.batch_size = 1;
  b.max_len = 2;
  b.token_ids = {1, 2};
  b.positions = {0, 1};
  b.attr_multihot = Matrix::Zero(2, 0);
  b.dense_reps = Matrix::Zero(2, 2);
  EXPECT_TRUE(embed_input(p, b).isZero());
}

TEST(EmbedInput, FusionAdditivityWithoutSideFeatures) {
  auto f = make_fixture(PageMode::Cpid, false, 3);
  auto c = tiny_config(Backend::SelfAttention, f.vocab, f.strategy);
  const auto p = init_params(c, 9);
  const Matrix h = embed_input(p, f.batch);
  for (std::size_t r = 0; r < f.batch.rows(); ++r) {
    const Eigen::RowVectorXd expected =
        p.tensors[p.layout.item_embedding].row(f.batch.token_ids[r]) +
        p.tensors[*p.layout.position_embedding].row(f.batch.positions[r]);
    EXPECT_EQ(h.row(static_cast<Eigen::Index>(r)), expected);
  }
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
  auto f = make_fixture(PageMode::Upid, false, 4);
  for (auto backend : {Backend::SelfAttention, Backend::Gru}) {
    auto c = tiny_config(backend, f.vocab, f.strategy);
    auto p = make_params(c);
    const Matrix logits = forward(p, f.batch);
    EXPECT_EQ(logits.rows(), static_cast<Eigen::Index>(f.batch.rows()));
    EXPECT_EQ(logits.cols(), static_cast<Eigen::Index>(f.vocab.size()));
    EXPECT_DOUBLE_EQ(logits.maxCoeff(), logits.minCoeff());
    EXPECT_NEAR(loss_only(p, f.batch), std::log(static_cast<double>(f.vocab.size())), 1e-12);
  }
}

TEST(Forward, ZeroWeightsTwentyTokenVocabularyLoss) {
  ModelConfig c;
  c.d = 8;
  c.max_len = 4;
  c.heads = 2;
  c.inner = 8;
  c.vocab_size = 20;
  const auto p = make_params(c);
  EncodedBatch b;
  b.batch_size = 1;
  b.max_len = 4;
  b.token_ids = {0, 3, 5, 7};
  b.positions = {0, 1, 2, 3};
  b.target_ids = {0, 5, 7, 19};
  b.loss_mask = {0, 1, 1, 1};
  b.attr_multihot = Matrix::Zero(4, 0);
  b.dense_reps = Matrix::Zero(4, 0);
  EXPECT_NEAR(loss_only(p, b), std::log(20.0), 1e-12);
  EXPECT_NEAR(std::log(20.0), 2.9957, 1e-4);
  EXPECT_EQ(forward(p, b).rows(), 4);
}

TEST(Forward, SelfAttentionIsCausal) {
  auto f = make_fixture(PageMode::Cpid, false, 5);
  auto c = tiny_config(Backend::SelfAttention, f.vocab, f.strategy);
  const auto p = init_params(c, 11);
  const Matrix base = forward(p, f.batch);
  const std::size_t n = f.batch.max_len;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    auto perturbed = f.batch;
    for (std::size_t b = 0; b < perturbed.batch_size; ++b) {
      auto& tok = perturbed.token_ids[b * n + t + 1];
      tok = static_cast<TokenId>(1 + (tok % (f.vocab.size() - 1)));
    }
    const Matrix out = forward(p, perturbed);
    for (std::size_t b = 0; b < perturbed.batch_size; ++b) {
      for (std::size_t s = 0; s <= t; ++s) {
        if (f.batch.is_pad(b * n + s) != perturbed.is_pad(b * n + s)) continue;
        EXPECT_EQ(out.row(static_cast<Eigen::Index>(b * n + s)),
                  base.row(static_cast<Eigen::Index>(b * n + s)))
            << "slot " << s << " changed after perturbing slot " << t + 1;
      }
    }
  }
}

TEST(Loss, DuplicatedSessionsLeaveLossUnchanged) {
  auto f = make_fixture(PageMode::Cpid, false, 6);
  auto sessions = f.corpus.sessions;
  sessions.insert(sessions.end(), f.corpus.sessions.begin(), f.corpus.sessions.end());
  Encoder enc(f.vocab, f.strategy, f.corpus.attribute_vocab, {6, true});
  const auto doubled = enc.encode(std::span<const Session>(sessions));
  for (auto backend : {Backend::SelfAttention, Backend::Gru}) {
    const auto p = init_params(tiny_config(backend, f.vocab, f.strategy), 2);
    EXPECT_NEAR(loss_only(p, f.batch), loss_only(p, doubled), 1e-12);
  }
}

TEST(Loss, AllMaskedBatchIsRejected) {
  auto f = make_fixture(PageMode::Cpid, false, 6);
  std::fill(f.batch.loss_mask.begin(), f.batch.loss_mask.end(), 0);
  const auto p = init_params(tiny_config(Backend::Gru, f.vocab, f.strategy), 2);
  EXPECT_THROW(loss_and_grad(p, f.batch), std::invalid_argument);
}

TEST(Forward, NonFiniteParametersAreReported) {
  auto f = make_fixture(PageMode::Cpid, false, 6);
  auto p = init_params(tiny_config(Backend::Gru, f.vocab, f.strategy), 2);
  p.tensors[p.layout.item_embedding](1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(forward(p, f.batch), NumericError);
}

struct GradCase {
  Backend backend;
  PageMode mode;
  bool dense;
  bool dropout;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto gc = GetParam();
  auto f = make_fixture(gc.mode, gc.dense, 21);
  const auto p = init_params(tiny_config(gc.backend, f.vocab, f.strategy), 77);
  const auto result = finite_difference_check(
      p, f.batch, gc.dropout ? std::optional<std::uint64_t>(5) : std::nullopt);
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
  EXPECT_EQ(result.checked, p.tensors.n_scalars());
}

INSTANTIATE_TEST_SUITE_P(
    Backends, GradientCheck,
    ::testing::Values(GradCase{Backend::SelfAttention, PageMode::Upid, false, false},
                      GradCase{Backend::SelfAttention, PageMode::Cpid, false, true},
                      GradCase{Backend::SelfAttention, PageMode::Pe, false, true},
                      GradCase{Backend::SelfAttention, PageMode::Pe, true, false},
                      GradCase{Backend::Gru, PageMode::Upid, false, false},
                      GradCase{Backend::Gru, PageMode::Cpid, false, false},
                      GradCase{Backend::Gru, PageMode::Pe, false, false},
                      GradCase{Backend::Gru, PageMode::Pe, true, false}));

}  // namespace
}  // namespace pagerec
