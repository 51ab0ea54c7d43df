#pragma once

// Turning sessions into fixed-length, left-padded model inputs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pagerec/corpus.hpp"
#include "pagerec/vocab.hpp"

namespace pagerec {

/// B sequences of N slots, stored row-major as row = b * N + t. The most
/// recent interaction sits in slot N - 1.
struct EncodedBatch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::vector<TokenId> token_ids;
  Eigen::MatrixXd attr_multihot;  // (B*N) x |A|
  Eigen::MatrixXd dense_reps;     // (B*N) x R
  std::vector<std::uint32_t> positions;
  std::vector<TokenId> target_ids;  // kPad where there is no target
  std::vector<std::uint8_t> loss_mask;

  std::size_t rows() const { return batch_size * max_len; }
  bool is_pad(std::size_t row) const { return token_ids[row] == Vocab::kPad; }
  std::size_t n_targets() const;
};

struct EncodeOptions {
  std::size_t max_len = 50;
  bool train_on_non_item_targets = true;
};

/// Maps interactions to token ids and side features for a fixed vocabulary.
/// Interactions unknown to the vocabulary are dropped from the input. The
/// vocabulary and attribute vocabulary must outlive the encoder.
class Encoder {
 public:
  Encoder(const Vocab& vocab, const ReprStrategy& strategy, const AttributeVocab& corpus_attrs,
          EncodeOptions options);

  /// Training view: each session is cut to its last N+1 known interactions;
  /// slot t predicts the interaction after it. Throws std::invalid_argument
  /// for a session with fewer than two known interactions.
  EncodedBatch encode(std::span<const Session* const> sessions) const;
  EncodedBatch encode(std::span<const Session> sessions) const;

  /// Inference view: each prefix fills the last slots, no targets. Returns the
  /// number of known interactions kept per prefix through `kept` when given.
  EncodedBatch encode_prefixes(std::span<const std::span<const Interaction>> prefixes,
                               std::vector<std::size_t>* kept = nullptr) const;

  const Vocab& vocab() const { return vocab_; }
  const EncodeOptions& options() const { return options_; }

 private:
  struct Step {
    TokenId token;
    const Interaction* event;
  };
  std::vector<Step> known_steps(std::span<const Interaction> events) const;
  void fill_slot(EncodedBatch& batch, std::size_t row, const Step& step) const;
  EncodedBatch allocate(std::size_t batch_size) const;

  const Vocab& vocab_;
  ReprStrategy strategy_;
  EncodeOptions options_;
  /// corpus attribute id -> vocabulary attribute id (or -1).
  std::vector<std::int64_t> attr_remap_;
  const AttributeVocab* corpus_attrs_ = nullptr;
};

}  // namespace pagerec
