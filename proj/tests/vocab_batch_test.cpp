#include <gtest/gtest.h>

#include "pagerec/batch.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/vocab.hpp"
#include "test_support.hpp"

namespace pagerec {
namespace {

using testing::item;
using testing::make_corpus;
using testing::page;
using testing::random_corpus;

ReprStrategy strategy(PageMode mode, bool attrs = true, bool dense = false) {
  ReprStrategy s;
  s.mode = mode;
  s.pe_attrs = attrs;
  s.pe_dense = dense;
  return s;
}

Corpus three_pages() {
  return make_corpus({{"u", {item("v1"), page("p1", {0}), item("v2"), page("p2", {0}), page("p3", {1}), item("v1")}}}, 2);
}

TEST(Vocab, SizesPerMode) {
  const auto c = three_pages();
  EXPECT_EQ(build_vocab(c, strategy(PageMode::Upid)).size(), 1u + 2u + 3u);
  EXPECT_EQ(build_vocab(c, strategy(PageMode::Cpid)).size(), 1u + 2u + 2u);
  const auto pe = build_vocab(c, strategy(PageMode::Pe));
  EXPECT_EQ(pe.size(), 1u + 2u + 1u);
  EXPECT_EQ(pe.token(3), "[PAGE]");
  EXPECT_EQ(pe.token(Vocab::kPad), "[PAD]");
  EXPECT_FALSE(pe.is_item(Vocab::kPad));
  EXPECT_TRUE(pe.is_item(1));
  EXPECT_FALSE(pe.is_item(3));
}

TEST(Vocab, PeSizeIgnoresNewPages) {
  auto c = three_pages();
  const auto before = build_vocab(c, strategy(PageMode::Pe)).size();
  c.sessions[0].events.insert(c.sessions[0].events.begin(), page("brand-new", {1}));
  c.refresh_entity_sets();
  EXPECT_EQ(build_vocab(c, strategy(PageMode::Pe)).size(), before);
}

TEST(Vocab, CpidNeedsPageAttributes) {
  auto c = make_corpus({{"u", {page("bare"), item("v")}}}, 1);
  EXPECT_THROW(build_vocab(c, strategy(PageMode::Cpid)), DataError);
  EXPECT_NO_THROW(build_vocab(c, strategy(PageMode::Upid)));
}

TEST(Vocab, PeWithoutSourcesIsInvalid) {
  EXPECT_THROW(strategy(PageMode::Pe, false, false).validate(), std::invalid_argument);
}

TEST(Vocab, JsonRoundTripAndDeterminism) {
  const auto c = random_corpus(5, 8, 6, 4, 3, 2, 2, 7);
  for (auto mode : {PageMode::Upid, PageMode::Cpid, PageMode::Pe}) {
    const auto v = build_vocab(c, strategy(mode, true, true));
    EXPECT_EQ(Vocab::from_json(v.to_json()), v);
    EXPECT_EQ(build_vocab(c, strategy(mode, true, true)), v);
  }
  const auto s = strategy(PageMode::Pe, false, true);
  const auto back = strategy_from_json(to_json(s));
  EXPECT_EQ(back.mode, s.mode);
  EXPECT_EQ(back.pe_dense, s.pe_dense);
  EXPECT_EQ(back.pe_attrs, s.pe_attrs);
}

TEST(Encode, PageUnderPeCarriesAttributes) {
  const auto c = make_corpus({{"u", {item("v1"), page("p1", {0}), item("v2")}}}, 2);
  const auto s = strategy(PageMode::Pe);
  const auto vocab = build_vocab(c, s);
  const auto page_tok = vocab.token_of(c.sessions[0].events[1], c.attribute_vocab);
  ASSERT_TRUE(page_tok);
  EXPECT_EQ(vocab.token(*page_tok), "[PAGE]");

  Encoder with_pages(vocab, s, c.attribute_vocab, {2, true});
  const auto b = with_pages.encode(std::span<const Session>(c.sessions));
  EXPECT_EQ(b.token_ids, (std::vector<TokenId>{*vocab.item_token("v1"), *page_tok}));
  EXPECT_EQ(b.target_ids, (std::vector<TokenId>{*page_tok, *vocab.item_token("v2")}));
  EXPECT_EQ(b.loss_mask, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_TRUE(b.attr_multihot.row(0).isZero());
  EXPECT_EQ(b.attr_multihot(1, 0), 1.0);
  EXPECT_EQ(b.attr_multihot(1, 1), 0.0);

  Encoder items_only(vocab, s, c.attribute_vocab, {2, false});
  EXPECT_EQ(items_only.encode(std::span<const Session>(c.sessions)).loss_mask, (std::vector<std::uint8_t>{0, 1}));
}

TEST(Encode, PageUnderCpidHasNoSideFeatures) {
  const auto c = make_corpus({{"u", {item("v1"), page("p1", {0}), item("v2")}}}, 2);
  const auto s = strategy(PageMode::Cpid);
  const auto vocab = build_vocab(c, s);
  Encoder enc(vocab, s, c.attribute_vocab, {2, true});
  const auto b = enc.encode(std::span<const Session>(c.sessions));
  EXPECT_EQ(vocab.token(b.token_ids[1]), "cpid:a0");
  EXPECT_TRUE(b.attr_multihot.isZero());
  EXPECT_TRUE(b.dense_reps.isZero());
}

TEST(Encode, LeftPaddingAndTruncation) {
  const auto c = make_corpus({{"u", {item("a"), item("b"), item("c"), item("d"), item("e")}}, {"w", {item("a"), item("b")}}});
  const auto s = strategy(PageMode::Cpid);
  const auto vocab = build_vocab(c, s);
  Encoder enc(vocab, s, c.attribute_vocab, {3, true});
  const auto b = enc.encode(std::span<const Session>(c.sessions));
  const auto tok = [&](const char* id) { return *vocab.item_token(id); };
  // First session keeps its last four events: inputs b c d, targets c d e.
  EXPECT_EQ(std::vector<TokenId>(b.token_ids.begin(), b.token_ids.begin() + 3), (std::vector<TokenId>{tok("b"), tok("c"), tok("d")}));
  EXPECT_EQ(b.target_ids[2], tok("e"));
  // Second session: two pads, then a -> b.
  EXPECT_EQ(b.token_ids[3], Vocab::kPad);
  EXPECT_EQ(b.token_ids[4], Vocab::kPad);
  EXPECT_EQ(b.token_ids[5], tok("a"));
  EXPECT_EQ(b.target_ids[5], tok("b"));
  EXPECT_EQ(b.loss_mask, (std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1}));
  EXPECT_EQ(b.n_targets(), 4u);
  EXPECT_EQ(b.positions[5], 2u);
}

TEST(Encode, ShortSessionsAreRejected) {
  const auto c = make_corpus({{"u", {item("a")}}});
  const auto s = strategy(PageMode::Cpid);
  const auto vocab = build_vocab(c, s);
  Encoder enc(vocab, s, c.attribute_vocab, {3, true});
  EXPECT_THROW(enc.encode(std::span<const Session>(c.sessions)), std::invalid_argument);
}

TEST(Encode, DenseVectorsOnlyOnPagesUnderPe) {
  const auto c = random_corpus(12, 6, 5, 3, 3, 4, 3, 9);
  const auto s = strategy(PageMode::Pe, true, true);
  const auto vocab = build_vocab(c, s);
  Encoder enc(vocab, s, c.attribute_vocab, {6, true});
  const auto b = enc.encode(std::span<const Session>(c.sessions));
  ASSERT_EQ(b.dense_reps.cols(), 4);
  for (std::size_t r = 0; r < b.rows(); ++r) {
    const bool is_page = !b.is_pad(r) && !vocab.is_item(b.token_ids[r]);
    EXPECT_EQ(is_page, !b.dense_reps.row(static_cast<Eigen::Index>(r)).isZero()) << r;
    EXPECT_EQ(is_page, !b.attr_multihot.row(static_cast<Eigen::Index>(r)).isZero()) << r;
  }
}

TEST(Encode, ItemAttributesWhenConfigured) {
  const auto c = make_corpus({{"u", {item("v1", {1}), page("p1", {0}), item("v2", {1})}}}, 2);
  auto s = strategy(PageMode::Pe);
  s.item_attrs = true;
  const auto vocab = build_vocab(c, s);
  Encoder enc(vocab, s, c.attribute_vocab, {2, true});
  const auto b = enc.encode(std::span<const Session>(c.sessions));
  EXPECT_EQ(b.attr_multihot(0, 1), 1.0);
  EXPECT_EQ(b.attr_multihot(1, 0), 1.0);
}

TEST(Encode, UnknownEntitiesAreDroppedFromPrefixes) {
  const auto train = make_corpus({{"u", {item("a"), item("b")}}});
  const auto s = strategy(PageMode::Cpid);
  const auto vocab = build_vocab(train, s);
  Encoder enc(vocab, s, train.attribute_vocab, {3, true});
  const std::vector<Interaction> prefix{item("a"), item("never-seen"), item("b")};
  const std::span<const Interaction> prefixes[] = {prefix};
  std::vector<std::size_t> kept;
  const auto b = enc.encode_prefixes(prefixes, &kept);
  EXPECT_EQ(kept, (std::vector<std::size_t>{2}));
  EXPECT_EQ(b.token_ids, (std::vector<TokenId>{Vocab::kPad, *vocab.item_token("a"), *vocab.item_token("b")}));
}

}  // namespace
}  // namespace pagerec
