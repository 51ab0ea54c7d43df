#include "pagerec/batch.hpp"

#include <map>
#include <stdexcept>

#include "pagerec/errors.hpp"

namespace pagerec {

std::size_t EncodedBatch::n_targets() const {
  std::size_t n = 0;
  for (auto m : loss_mask) n += m;
  return n;
}

Encoder::Encoder(const Vocab& vocab, const ReprStrategy& strategy,
                 const AttributeVocab& corpus_attrs, EncodeOptions options)
    : vocab_(vocab), strategy_(strategy), options_(options) {
  strategy_.validate();
  if (strategy_.mode != vocab.mode()) throw std::invalid_argument("strategy and vocabulary disagree");
  if (options_.max_len < 2) throw std::invalid_argument("max_len must be at least 2");
  std::map<std::string, std::int64_t> model_ids;
  for (std::size_t i = 0; i < vocab.attribute_tokens().size(); ++i) {
    model_ids.emplace(vocab.attribute_tokens()[i], static_cast<std::int64_t>(i));
  }
  attr_remap_.assign(corpus_attrs.size(), -1);
  for (std::size_t i = 0; i < corpus_attrs.size(); ++i) {
    if (auto it = model_ids.find(corpus_attrs.token(static_cast<AttrId>(i))); it != model_ids.end()) {
      attr_remap_[i] = it->second;
    }
  }
  corpus_attrs_ = &corpus_attrs;
}

std::vector<Encoder::Step> Encoder::known_steps(std::span<const Interaction> events) const {
  std::vector<Step> steps;
  steps.reserve(events.size());
  for (const auto& e : events) {
    if (auto tok = vocab_.token_of(e, *corpus_attrs_)) steps.push_back({*tok, &e});
  }
  return steps;
}

EncodedBatch Encoder::allocate(std::size_t batch_size) const {
  EncodedBatch b;
  b.batch_size = batch_size;
  b.max_len = options_.max_len;
  const auto rows = b.rows();
  b.token_ids.assign(rows, Vocab::kPad);
  b.positions.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) b.positions[r] = static_cast<std::uint32_t>(r % b.max_len);
  b.target_ids.assign(rows, Vocab::kPad);
  b.loss_mask.assign(rows, 0);
  b.attr_multihot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                          static_cast<Eigen::Index>(vocab_.attribute_tokens().size()));
  b.dense_reps = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(vocab_.dense_dim()));
  return b;
}

void Encoder::fill_slot(EncodedBatch& batch, std::size_t row, const Step& step) const {
  batch.token_ids[row] = step.token;
  const Interaction& e = *step.event;
  const bool page = !e.is_item();
  const auto r = static_cast<Eigen::Index>(row);
  const bool with_attrs = page ? (strategy_.mode == PageMode::Pe && strategy_.pe_attrs)
                               : strategy_.item_attrs;
  if (with_attrs) {
    for (AttrId a : e.attrs) {
      if (a < attr_remap_.size() && attr_remap_[a] >= 0) {
        batch.attr_multihot(r, static_cast<Eigen::Index>(attr_remap_[a])) = 1.0;
      }
    }
  }
  if (page && strategy_.uses_dense() && e.dense_vec) {
    if (e.dense_vec->size() != vocab_.dense_dim()) {
      throw DataError("dense vector of '" + e.entity_id + "' has length " +
                      std::to_string(e.dense_vec->size()) + ", model expects " +
                      std::to_string(vocab_.dense_dim()));
    }
    for (std::size_t i = 0; i < e.dense_vec->size(); ++i) {
      batch.dense_reps(r, static_cast<Eigen::Index>(i)) = (*e.dense_vec)[i];
    }
  }
}

EncodedBatch Encoder::encode(std::span<const Session* const> sessions) const {
  auto batch = allocate(sessions.size());
  const std::size_t n = options_.max_len;
  for (std::size_t b = 0; b < sessions.size(); ++b) {
    auto steps = known_steps(sessions[b]->events);
    if (steps.size() > n + 1) steps.erase(steps.begin(), steps.end() - static_cast<std::ptrdiff_t>(n + 1));
    if (steps.size() < 2) {
      throw std::invalid_argument("session of user '" + sessions[b]->user_id +
                                  "' has fewer than two known interactions");
    }
    const std::size_t n_inputs = steps.size() - 1;
    const std::size_t offset = n - n_inputs;
    for (std::size_t i = 0; i < n_inputs; ++i) {
      const std::size_t row = b * n + offset + i;
      fill_slot(batch, row, steps[i]);
      const auto& next = steps[i + 1];
      batch.target_ids[row] = next.token;
      const bool item_target = vocab_.is_item(next.token);
      batch.loss_mask[row] = (item_target || options_.train_on_non_item_targets) ? 1 : 0;
    }
  }
  return batch;
}

EncodedBatch Encoder::encode(std::span<const Session> sessions) const {
  std::vector<const Session*> ptrs;
  ptrs.reserve(sessions.size());
  for (const auto& s : sessions) ptrs.push_back(&s);
  return encode(std::span<const Session* const>(ptrs));
}

EncodedBatch Encoder::encode_prefixes(std::span<const std::span<const Interaction>> prefixes,
                                      std::vector<std::size_t>* kept) const {
  auto batch = allocate(prefixes.size());
  const std::size_t n = options_.max_len;
  if (kept) kept->assign(prefixes.size(), 0);
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    auto steps = known_steps(prefixes[b]);
    if (steps.size() > n) steps.erase(steps.begin(), steps.end() - static_cast<std::ptrdiff_t>(n));
    const std::size_t offset = n - steps.size();
    for (std::size_t i = 0; i < steps.size(); ++i) fill_slot(batch, b * n + offset + i, steps[i]);
    if (kept) (*kept)[b] = steps.size();
  }
  return batch;
}

}  // namespace pagerec
