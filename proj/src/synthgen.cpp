#include "pagerec/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pagerec/csv.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/rng.hpp"

namespace pagerec {

namespace {

std::int64_t parse_int(const std::string& field, std::size_t line_no, const char* what) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
  }
  return value;
}

}  // namespace

RatingsTable load_ratings(const std::filesystem::path& ratings_path,
                          const std::filesystem::path& metadata_path) {
  RatingsTable table;

  std::ifstream meta(metadata_path);
  if (!meta) throw DataError("cannot open " + metadata_path.string());
  std::string line;
  std::size_t line_no = 0;
  std::getline(meta, line);  // header
  ++line_no;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    try {
      fields = csv::split_record(line);
    } catch (const DataError& e) {
      throw DataError(metadata_path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() < 3) {
      throw DataError(metadata_path.string() + " line " + std::to_string(line_no) +
                      ": expected movieId,title,genres");
    }
    const std::string& genres = fields.back();
    std::vector<AttrId> ids;
    std::size_t start = 0;
    while (start <= genres.size()) {
      const auto bar = std::min(genres.find('|', start), genres.size());
      if (bar > start) {
        ids.push_back(table.attribute_vocab.intern("genre:" + genres.substr(start, bar - start)));
      }
      start = bar + 1;
    }
    if (ids.empty()) {
      throw DataError(metadata_path.string() + " line " + std::to_string(line_no) + ": empty genres");
    }
    table.item_genres[fields[0]] = make_attr_set(std::move(ids));
  }

  std::ifstream ratings(ratings_path);
  if (!ratings) throw DataError("cannot open " + ratings_path.string());
  line_no = 0;
  std::getline(ratings, line);
  ++line_no;
  while (std::getline(ratings, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split_record(line);
    if (fields.size() != 4) {
      throw DataError(ratings_path.string() + " line " + std::to_string(line_no) +
                      ": expected userId,movieId,rating,timestamp");
    }
    if (!table.item_genres.contains(fields[1])) {
      throw DataError(ratings_path.string() + " line " + std::to_string(line_no) +
                      ": movie '" + fields[1] + "' missing from metadata");
    }
    table.rows.push_back({fields[0], fields[1], parse_int(fields[3], line_no, "timestamp")});
  }
  return table;
}

std::string page_id_for(const AttributeVocab& vocab, const AttrSet& genres) {
  return "lp:" + vocab.join(genres);
}

Corpus synthesize(const RatingsTable& ratings, SynthVariant variant, std::uint64_t seed) {
  if (ratings.rows.empty()) throw std::invalid_argument("synthesize: empty ratings");
  if (variant.kind == SynthVariant::Kind::Random &&
      !(variant.shuffle_fraction >= 0.0 && variant.shuffle_fraction <= 1.0)) {
    throw std::invalid_argument("synthesize: shuffle fraction must lie in [0, 1]");
  }

  std::map<std::string, std::vector<const Rating*>> by_user;
  for (const auto& r : ratings.rows) by_user[r.user_id].push_back(&r);

  Corpus corpus;
  corpus.attribute_vocab = ratings.attribute_vocab;
  const auto& vocab = corpus.attribute_vocab;
  auto genres_of = [&](const std::string& item) -> const AttrSet& {
    auto it = ratings.item_genres.find(item);
    if (it == ratings.item_genres.end()) throw DataError("no genres for item '" + item + "'");
    return it->second;
  };

  for (auto& [user, rows] : by_user) {
    std::stable_sort(rows.begin(), rows.end(), [](const Rating* a, const Rating* b) {
      if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
      return a->item_id < b->item_id;
    });
    Session session{user, {}};
    session.events.reserve(rows.size() * 2);
    const AttrSet* previous = nullptr;
    for (const Rating* r : rows) {
      const AttrSet& genres = genres_of(r->item_id);
      const bool add_page = variant.kind != SynthVariant::Kind::Group || previous == nullptr ||
                            *previous != genres;
      if (add_page) {
        Interaction page;
        page.kind = InteractionKind::NonItem;
        page.entity_id = page_id_for(vocab, genres);
        page.attrs = genres;
        page.timestamp = r->timestamp;
        session.events.push_back(std::move(page));
      }
      Interaction item;
      item.kind = InteractionKind::Item;
      item.entity_id = r->item_id;
      item.attrs = genres;
      item.timestamp = r->timestamp;
      session.events.push_back(std::move(item));
      previous = &genres;
    }
    corpus.sessions.push_back(std::move(session));
  }

  if (variant.kind == SynthVariant::Kind::Random) {
    std::vector<Interaction*> pages;
    for (auto& s : corpus.sessions) {
      for (auto& e : s.events) {
        if (!e.is_item()) pages.push_back(&e);
      }
    }
    const auto total = pages.size();
    const auto n_selected =
        static_cast<std::size_t>(std::floor(variant.shuffle_fraction * static_cast<double>(total)));
    Rng rng(seed);
    // Partial Fisher-Yates: the first n_selected slots become a uniform sample.
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    for (std::size_t i = 0; i < n_selected; ++i) {
      std::swap(order[i], order[i + rng.below(total - i)]);
    }
    std::vector<AttrSet> genre_sets;
    genre_sets.reserve(n_selected);
    for (std::size_t i = 0; i < n_selected; ++i) genre_sets.push_back(pages[order[i]]->attrs);
    rng.shuffle(genre_sets);
    for (std::size_t i = 0; i < n_selected; ++i) {
      Interaction& page = *pages[order[i]];
      page.attrs = std::move(genre_sets[i]);
      page.entity_id = page_id_for(vocab, page.attrs);
    }
  }

  corpus.refresh_entity_sets();
  return corpus;
}

PageStats page_stats(const Corpus& corpus) {
  std::size_t n_pages = 0;
  std::size_t n_genres = 0;
  for (const auto& s : corpus.sessions) {
    for (const auto& e : s.events) {
      if (e.is_item()) continue;
      ++n_pages;
      n_genres += e.attrs.size();
    }
  }
  PageStats st;
  if (!corpus.sessions.empty()) {
    st.pages_per_session = static_cast<double>(n_pages) / static_cast<double>(corpus.sessions.size());
  }
  if (n_pages) st.avg_genres_per_page = static_cast<double>(n_genres) / static_cast<double>(n_pages);
  return st;
}

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

int digits_for(std::size_t n) { return static_cast<int>(std::to_string(n > 0 ? n - 1 : 0).size()); }

}  // namespace

RatingsTable make_toy_ratings(const ToySpec& spec, std::uint64_t seed) {
  if (spec.n_combos == 0 || spec.n_items < spec.n_combos) {
    throw std::invalid_argument("toy corpus needs at least one item per combination");
  }
  // Smallest genre alphabet whose non-empty subsets cover n_combos.
  std::size_t n_genres = 1;
  while ((std::size_t{1} << n_genres) - 1 < spec.n_combos) ++n_genres;

  RatingsTable table;
  std::vector<AttrId> genre_ids;
  for (std::size_t g = 0; g < n_genres; ++g) {
    genre_ids.push_back(table.attribute_vocab.intern("genre:G" + std::to_string(g)));
  }
  // Subsets ordered by size, then lexicographically.
  std::vector<AttrSet> combos;
  for (std::size_t size = 1; size <= n_genres && combos.size() < spec.n_combos; ++size) {
    std::vector<bool> pick(n_genres, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(size), true);
    do {
      AttrSet set;
      for (std::size_t g = 0; g < n_genres; ++g) {
        if (pick[g]) set.push_back(genre_ids[g]);
      }
      combos.push_back(set);
    } while (combos.size() < spec.n_combos && std::prev_permutation(pick.begin(), pick.end()));
  }

  const int item_width = digits_for(spec.n_items);
  std::vector<std::vector<std::string>> items_by_combo(spec.n_combos);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    const auto id = padded("m", i, item_width);
    items_by_combo[i % spec.n_combos].push_back(id);
    table.item_genres[id] = combos[i % spec.n_combos];
  }

  Rng rng(seed);
  const int user_width = digits_for(spec.n_users);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    const auto user = padded("u", u, user_width);
    for (std::size_t step = 0; step < spec.items_per_user; ++step) {
      const auto& pool = items_by_combo[rng.below(spec.n_combos)];
      table.rows.push_back({user, pool[rng.below(pool.size())],
                            static_cast<std::int64_t>(1000 * step + u)});
    }
  }
  return table;
}

}  // namespace pagerec
