#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pagerec/corpus.hpp"

namespace pagerec {

using TokenId = std::uint32_t;

/// How non-item pages become model inputs.
///   Upid: one token per page id.
///   Cpid: one token per distinct page attribute combination.
///   Pe:   a single [PAGE] token; content enters through the attribute
///         multi-hot and/or the dense vector.
enum class PageMode { Upid, Cpid, Pe };

std::string_view name(PageMode mode);
PageMode parse_page_mode(std::string_view text);

struct ReprStrategy {
  PageMode mode = PageMode::Cpid;
  bool pe_attrs = true;
  bool pe_dense = false;
  /// Also feed item attributes through the attribute layer.
  bool item_attrs = false;

  /// Throws std::invalid_argument when PE has no source.
  void validate() const;
  bool uses_attrs() const { return (mode == PageMode::Pe && pe_attrs) || item_attrs; }
  bool uses_dense() const { return mode == PageMode::Pe && pe_dense; }
};

nlohmann::ordered_json to_json(const ReprStrategy& s);
ReprStrategy strategy_from_json(const nlohmann::json& j);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kPageToken = "[PAGE]";

  Vocab() = default;

  PageMode mode() const { return mode_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t n_items() const { return item_index_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  bool is_item(TokenId id) const { return is_item_.at(id) != 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> item_token(std::string_view item_id) const;
  /// Token for an interaction under this vocabulary's page mode; empty for
  /// entities the vocabulary has not seen.
  std::optional<TokenId> token_of(const Interaction& event, const AttributeVocab& attrs) const;

  /// Attribute tokens of the corpus the vocabulary was built from, in id order.
  const std::vector<std::string>& attribute_tokens() const { return attribute_tokens_; }
  std::size_t dense_dim() const { return dense_dim_; }

  nlohmann::ordered_json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  friend Vocab build_vocab(const Corpus& corpus, const ReprStrategy& strategy);
  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.mode_ == b.mode_ && a.tokens_ == b.tokens_ && a.is_item_ == b.is_item_ &&
           a.attribute_tokens_ == b.attribute_tokens_ && a.dense_dim_ == b.dense_dim_;
  }

 private:
  void add(std::string token, bool is_item);
  std::string page_key(const Interaction& event, const AttributeVocab& attrs) const;

  PageMode mode_ = PageMode::Upid;
  std::vector<std::string> tokens_;
  std::vector<std::uint8_t> is_item_;
  std::map<std::string, TokenId, std::less<>> item_index_;
  std::map<std::string, TokenId, std::less<>> page_index_;
  std::vector<std::string> attribute_tokens_;
  std::size_t dense_dim_ = 0;
};

/// [PAD], items in ascending id order, then page tokens in ascending key
/// order. Throws DataError for CPID when a page has no attributes.
Vocab build_vocab(const Corpus& corpus, const ReprStrategy& strategy);

}  // namespace pagerec
