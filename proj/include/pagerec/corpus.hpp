#pragma once

// Session-log data model: items and non-item pages, file ingestion, and the
// preprocessing pipeline (dedupe, occurrence filter, end-with-item, length).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace pagerec {

using AttrId = std::uint32_t;
/// Sorted, duplicate-free list of attribute ids.
using AttrSet = std::vector<AttrId>;

AttrSet make_attr_set(std::vector<AttrId> ids);

/// Bijection between attribute strings ("genre:Comedy") and dense ids.
class AttributeVocab {
 public:
  AttrId intern(std::string_view token);
  std::optional<AttrId> find(std::string_view token) const;
  const std::string& token(AttrId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  /// Human-readable canonical key of an attribute set, e.g. "genre:A|genre:B".
  std::string join(const AttrSet& attrs, std::string_view sep = "|") const;

  friend bool operator==(const AttributeVocab& a, const AttributeVocab& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, AttrId> index_;
};

enum class InteractionKind { Item, NonItem };

struct Interaction {
  InteractionKind kind = InteractionKind::Item;
  std::string entity_id;
  AttrSet attrs;
  std::optional<std::vector<double>> dense_vec;
  /// Present only on list pages (search results, category listings).
  std::optional<std::vector<std::string>> list_items;
  std::int64_t timestamp = 0;

  bool is_item() const { return kind == InteractionKind::Item; }
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct Session {
  std::string user_id;
  std::vector<Interaction> events;

  friend bool operator==(const Session&, const Session&) = default;
};

struct Corpus {
  std::vector<Session> sessions;
  AttributeVocab attribute_vocab;
  std::set<std::string> item_ids;
  std::set<std::string> page_ids;
  std::optional<std::size_t> dense_dim;

  /// Recomputes item_ids/page_ids from the sessions. Throws DataError if an
  /// entity id is used both as an item and as a page.
  void refresh_entity_sets();
};

struct CorpusStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_pages = 0;
  std::size_t n_attrs = 0;
  std::size_t n_cpids = 0;
  std::size_t n_item_interactions = 0;
  std::size_t n_page_interactions = 0;
  double avg_len_items = 0.0;
  double avg_len_all = 0.0;
};

// ---------------------------------------------------------------------------
// Ingestion

/// Reads the JSON Lines session format. When dense_dim is empty it is inferred
/// from the first vector seen. Errors carry the 1-based line number.
Corpus parse_sessions(std::istream& in, std::optional<std::size_t> dense_dim = {});
Corpus load_sessions(const std::filesystem::path& path,
                     std::optional<std::size_t> dense_dim = {});

void write_sessions(std::ostream& out, const Corpus& corpus);
void save_sessions(const std::filesystem::path& path, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessConfig {
  bool dedupe = true;
  std::size_t min_occurrence = 1;
  std::size_t min_len = 1;
  std::size_t max_len = std::numeric_limits<std::size_t>::max();
  bool end_with_item = true;
  /// Repeat the whole pipeline until nothing changes. Off by default: the
  /// occurrence filter then counts once, before removal.
  bool until_fixpoint = false;
};

/// dedupe -> min_occurrence -> end_with_item -> length, in that order.
Corpus preprocess(const Corpus& corpus, const PreprocessConfig& cfg);

/// Merges consecutive events with equal (kind, entity_id); keeps the first.
void dedupe_consecutive(std::vector<Interaction>& events);

/// Drops every non-item event. Used for items-only baselines.
Corpus remove_pages(const Corpus& corpus);

/// item id -> attribute set, taken from the first occurrence of each item.
std::map<std::string, AttrSet> item_catalog(const Corpus& corpus);

enum class ListPageMode { FirstItemProxy, FirstItemAttributes, TopKFrequentAttributes };

struct ListPageFeatures {
  ListPageMode mode = ListPageMode::TopKFrequentAttributes;
  std::size_t k = 3;
};

/// Rewrites the attributes of list pages (pages carrying list_items) from the
/// attributes of the listed items.
Corpus derive_list_page_features(const Corpus& corpus,
                                 const std::map<std::string, AttrSet>& item_catalog_attrs,
                                 ListPageFeatures features);

// ---------------------------------------------------------------------------
// Splitting and statistics

struct SplitStrategy {
  enum class Kind { ByUser, ByTime };
  Kind kind = Kind::ByUser;
  double train = 0.8;
  double valid = 0.1;
};

struct CorpusSplit {
  Corpus train;
  Corpus valid;
  Corpus test;
};

CorpusSplit split(const Corpus& corpus, const SplitStrategy& strategy, std::uint64_t seed);

CorpusStats stats(const Corpus& corpus);
nlohmann::ordered_json to_json(const CorpusStats& s);
/// Header line plus one data row.
std::string stats_csv(const CorpusStats& s);

}  // namespace pagerec
