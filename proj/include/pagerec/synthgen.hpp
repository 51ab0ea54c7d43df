#pragma once

// Enriched synthetic datasets: a ratings history per user plus one genre
// page per movie (Prev), per genre change (Group), or with shuffled genres
// (Random-x).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pagerec/corpus.hpp"

namespace pagerec {

struct Rating {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

struct RatingsTable {
  std::vector<Rating> rows;
  /// Attribute tokens live in this vocab ("genre:<name>").
  AttributeVocab attribute_vocab;
  std::map<std::string, AttrSet> item_genres;
};

/// ratings CSV `userId,movieId,rating,timestamp`, metadata CSV
/// `movieId,title,genres` with '|'-separated genres. Both with header rows.
RatingsTable load_ratings(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& metadata_path);

struct SynthVariant {
  enum class Kind { Prev, Group, Random };
  Kind kind = Kind::Prev;
  /// Fraction of pages whose genre sets are shuffled (Random only).
  double shuffle_fraction = 0.0;

  static SynthVariant prev() { return {Kind::Prev, 0.0}; }
  static SynthVariant group() { return {Kind::Group, 0.0}; }
  static SynthVariant random(double x) { return {Kind::Random, x}; }
};

/// One session per user, users in ascending id order.
Corpus synthesize(const RatingsTable& ratings, SynthVariant variant, std::uint64_t seed);

/// Page entity id for a genre set, "lp:" followed by the sorted genre tokens.
std::string page_id_for(const AttributeVocab& vocab, const AttrSet& genres);

struct PageStats {
  double pages_per_session = 0.0;
  double avg_genres_per_page = 0.0;
};

PageStats page_stats(const Corpus& corpus);

/// Toy ratings for desk-scale experiments: items are partitioned into
/// `n_combos` attribute combinations over a small genre alphabet; each step
/// draws a combination uniformly and then an item of that combination
/// uniformly. Combined with Prev, the page before each item announces the
/// item's combination.
struct ToySpec {
  std::size_t n_users = 500;
  std::size_t n_items = 50;
  std::size_t n_combos = 10;
  std::size_t items_per_user = 10;
};

RatingsTable make_toy_ratings(const ToySpec& spec, std::uint64_t seed);

}  // namespace pagerec
