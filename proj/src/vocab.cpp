#include "pagerec/vocab.hpp"

#include <set>
#include <stdexcept>

#include "pagerec/errors.hpp"

namespace pagerec {

std::string_view name(PageMode mode) {
  switch (mode) {
    case PageMode::Upid: return "upid";
    case PageMode::Cpid: return "cpid";
    case PageMode::Pe: return "pe";
  }
  return "?";
}

PageMode parse_page_mode(std::string_view text) {
  if (text == "upid") return PageMode::Upid;
  if (text == "cpid") return PageMode::Cpid;
  if (text == "pe") return PageMode::Pe;
  throw std::invalid_argument("unknown page mode '" + std::string(text) + "'");
}

void ReprStrategy::validate() const {
  if (mode == PageMode::Pe && !pe_attrs && !pe_dense) {
    throw std::invalid_argument("page embedding needs attributes or dense vectors");
  }
}

nlohmann::ordered_json to_json(const ReprStrategy& s) {
  nlohmann::ordered_json j;
  j["mode"] = name(s.mode);
  j["pe_attrs"] = s.pe_attrs;
  j["pe_dense"] = s.pe_dense;
  j["item_attrs"] = s.item_attrs;
  return j;
}

ReprStrategy strategy_from_json(const nlohmann::json& j) {
  ReprStrategy s;
  s.mode = parse_page_mode(j.at("mode").get<std::string>());
  s.pe_attrs = j.at("pe_attrs").get<bool>();
  s.pe_dense = j.at("pe_dense").get<bool>();
  s.item_attrs = j.at("item_attrs").get<bool>();
  return s;
}

void Vocab::add(std::string token, bool is_item) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (id != kPad) {
    auto& index = is_item ? item_index_ : page_index_;
    if (!index.emplace(token, id).second) throw std::logic_error("duplicate token " + token);
  }
  tokens_.push_back(std::move(token));
  is_item_.push_back(is_item ? 1 : 0);
}

std::string Vocab::page_key(const Interaction& event, const AttributeVocab& attrs) const {
  switch (mode_) {
    case PageMode::Upid: return event.entity_id;
    case PageMode::Cpid: return "cpid:" + attrs.join(event.attrs);
    case PageMode::Pe: return std::string(kPageToken);
  }
  return {};
}

std::optional<TokenId> Vocab::item_token(std::string_view item_id) const {
  if (auto it = item_index_.find(item_id); it != item_index_.end()) return it->second;
  return std::nullopt;
}

std::optional<TokenId> Vocab::token_of(const Interaction& event, const AttributeVocab& attrs) const {
  if (event.is_item()) return item_token(event.entity_id);
  if (mode_ == PageMode::Cpid && event.attrs.empty()) return std::nullopt;
  if (auto it = page_index_.find(page_key(event, attrs)); it != page_index_.end()) return it->second;
  return std::nullopt;
}

nlohmann::ordered_json Vocab::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = name(mode_);
  j["tokens"] = tokens_;
  j["is_item"] = is_item_;
  j["attribute_tokens"] = attribute_tokens_;
  j["dense_dim"] = dense_dim_;
  return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  v.mode_ = parse_page_mode(j.at("mode").get<std::string>());
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  const auto flags = j.at("is_item").get<std::vector<std::uint8_t>>();
  if (tokens.size() != flags.size() || tokens.empty() || tokens[0] != kPadToken) {
    throw DataError("malformed vocabulary");
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) v.add(tokens[i], flags[i] != 0);
  v.attribute_tokens_ = j.at("attribute_tokens").get<std::vector<std::string>>();
  v.dense_dim_ = j.at("dense_dim").get<std::size_t>();
  return v;
}

Vocab build_vocab(const Corpus& corpus, const ReprStrategy& strategy) {
  strategy.validate();
  Vocab v;
  v.mode_ = strategy.mode;
  v.attribute_tokens_ = corpus.attribute_vocab.tokens();
  v.dense_dim_ = corpus.dense_dim.value_or(0);
  v.add(std::string(Vocab::kPadToken), false);
  for (const auto& item : corpus.item_ids) v.add(item, true);

  std::set<std::string> page_keys;
  for (const auto& s : corpus.sessions) {
    for (const auto& e : s.events) {
      if (e.is_item()) continue;
      if (strategy.mode == PageMode::Cpid && e.attrs.empty()) {
        throw DataError("CPID vocabulary: page '" + e.entity_id + "' has no attributes");
      }
      page_keys.insert(v.page_key(e, corpus.attribute_vocab));
    }
  }
  if (strategy.mode == PageMode::Pe) {
    page_keys = {std::string(Vocab::kPageToken)};
  }
  for (const auto& key : page_keys) v.add(key, false);
  return v;
}

}  // namespace pagerec
