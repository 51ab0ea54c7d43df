#include "pagerec/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pagerec/csv.hpp"
#include "pagerec/errors.hpp"
#include "pagerec/rng.hpp"

namespace pagerec {

AttrSet make_attr_set(std::vector<AttrId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

AttrId AttributeVocab::intern(std::string_view token) {
  std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<AttrId>(tokens_.size());
  tokens_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<AttrId> AttributeVocab::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::string AttributeVocab::join(const AttrSet& attrs, std::string_view sep) const {
  std::vector<std::string> names;
  names.reserve(attrs.size());
  for (AttrId a : attrs) names.push_back(token(a));
  std::sort(names.begin(), names.end());
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += sep;
    out += names[i];
  }
  return out;
}

void Corpus::refresh_entity_sets() {
  item_ids.clear();
  page_ids.clear();
  for (const auto& s : sessions) {
    for (const auto& e : s.events) {
      (e.is_item() ? item_ids : page_ids).insert(e.entity_id);
    }
  }
  for (const auto& id : item_ids) {
    if (page_ids.contains(id)) {
      throw DataError("entity '" + id + "' appears both as item and as page");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

Interaction parse_event(const nlohmann::json& j, Corpus& corpus, std::size_t line_no) {
  if (!j.is_object()) fail_line(line_no, "event is not an object");
  Interaction ev;
  try {
    ev.timestamp = j.at("t").get<std::int64_t>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "item") {
      ev.kind = InteractionKind::Item;
    } else if (kind == "page") {
      ev.kind = InteractionKind::NonItem;
    } else {
      fail_line(line_no, "unknown event kind '" + kind + "'");
    }
    ev.entity_id = j.at("id").get<std::string>();
    if (auto it = j.find("attrs"); it != j.end()) {
      std::vector<AttrId> ids;
      for (const auto& a : *it) ids.push_back(corpus.attribute_vocab.intern(a.get<std::string>()));
      ev.attrs = make_attr_set(std::move(ids));
    }
    if (auto it = j.find("vec"); it != j.end()) {
      ev.dense_vec = it->get<std::vector<double>>();
    }
    if (auto it = j.find("list_items"); it != j.end()) {
      ev.list_items = it->get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail_line(line_no, e.what());
  }
  if (ev.is_item() && ev.list_items) fail_line(line_no, "item event '" + ev.entity_id + "' has list_items");
  if (ev.dense_vec) {
    if (!corpus.dense_dim) corpus.dense_dim = ev.dense_vec->size();
    if (ev.dense_vec->size() != *corpus.dense_dim) {
      fail_line(line_no, "dense vector of length " + std::to_string(ev.dense_vec->size()) +
                             ", expected " + std::to_string(*corpus.dense_dim));
    }
  }
  return ev;
}

}  // namespace

Corpus parse_sessions(std::istream& in, std::optional<std::size_t> dense_dim) {
  Corpus corpus;
  corpus.dense_dim = dense_dim;
  std::unordered_map<std::string, InteractionKind> kinds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail_line(line_no, e.what());
    }
    Session session;
    try {
      session.user_id = j.at("user").get<std::string>();
      for (const auto& ej : j.at("events")) {
        session.events.push_back(parse_event(ej, corpus, line_no));
      }
    } catch (const nlohmann::json::exception& e) {
      fail_line(line_no, e.what());
    }
    for (std::size_t i = 0; i < session.events.size(); ++i) {
      const auto& ev = session.events[i];
      if (i && ev.timestamp < session.events[i - 1].timestamp) {
        fail_line(line_no, "timestamps decrease within session");
      }
      auto [it, inserted] = kinds.emplace(ev.entity_id, ev.kind);
      if (!inserted && it->second != ev.kind) {
        fail_line(line_no, "entity '" + ev.entity_id + "' appears both as item and as page");
      }
    }
    corpus.sessions.push_back(std::move(session));
  }
  corpus.refresh_entity_sets();
  return corpus;
}

Corpus load_sessions(const std::filesystem::path& path, std::optional<std::size_t> dense_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_sessions(in, dense_dim);
}

void write_sessions(std::ostream& out, const Corpus& corpus) {
  const auto& vocab = corpus.attribute_vocab;
  for (const auto& s : corpus.sessions) {
    nlohmann::ordered_json line;
    line["user"] = s.user_id;
    auto events = nlohmann::ordered_json::array();
    for (const auto& e : s.events) {
      nlohmann::ordered_json ej;
      ej["t"] = e.timestamp;
      ej["kind"] = e.is_item() ? "item" : "page";
      ej["id"] = e.entity_id;
      if (!e.attrs.empty()) {
        auto attrs = nlohmann::ordered_json::array();
        for (AttrId a : e.attrs) attrs.push_back(vocab.token(a));
        ej["attrs"] = std::move(attrs);
      }
      if (e.dense_vec) ej["vec"] = *e.dense_vec;
      if (e.list_items) ej["list_items"] = *e.list_items;
      events.push_back(std::move(ej));
    }
    line["events"] = std::move(events);
    out << line.dump() << '\n';
  }
}

void save_sessions(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_sessions(out, corpus);
}

// ---------------------------------------------------------------------------

void dedupe_consecutive(std::vector<Interaction>& events) {
  auto same = [](const Interaction& a, const Interaction& b) {
    return a.kind == b.kind && a.entity_id == b.entity_id;
  };
  events.erase(std::unique(events.begin(), events.end(), same), events.end());
}

namespace {

Corpus preprocess_once(const Corpus& corpus, const PreprocessConfig& cfg) {
  Corpus out;
  out.attribute_vocab = corpus.attribute_vocab;
  out.dense_dim = corpus.dense_dim;
  out.sessions = corpus.sessions;

  if (cfg.dedupe) {
    for (auto& s : out.sessions) dedupe_consecutive(s.events);
  }

  if (cfg.min_occurrence > 1) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& s : out.sessions) {
      for (const auto& e : s.events) ++counts[e.entity_id];
    }
    for (auto& s : out.sessions) {
      std::erase_if(s.events, [&](const Interaction& e) {
        return counts[e.entity_id] < cfg.min_occurrence;
      });
    }
  }

  if (cfg.end_with_item) {
    for (auto& s : out.sessions) {
      while (!s.events.empty() && !s.events.back().is_item()) s.events.pop_back();
    }
  }

  std::vector<Session> kept;
  kept.reserve(out.sessions.size());
  for (auto& s : out.sessions) {
    if (s.events.size() > cfg.max_len) {
      s.events.erase(s.events.begin(),
                     s.events.end() - static_cast<std::ptrdiff_t>(cfg.max_len));
    }
    if (s.events.size() >= cfg.min_len && !s.events.empty()) kept.push_back(std::move(s));
  }
  out.sessions = std::move(kept);
  out.refresh_entity_sets();
  return out;
}

}  // namespace

Corpus preprocess(const Corpus& corpus, const PreprocessConfig& cfg) {
  if (cfg.min_occurrence < 1) throw std::invalid_argument("min_occurrence must be >= 1");
  if (cfg.min_len < 1) throw std::invalid_argument("min_len must be >= 1");
  if (cfg.max_len < cfg.min_len) throw std::invalid_argument("max_len must be >= min_len");
  Corpus out = preprocess_once(corpus, cfg);
  if (cfg.until_fixpoint) {
    for (;;) {
      Corpus next = preprocess_once(out, cfg);
      if (next.sessions == out.sessions) break;
      out = std::move(next);
    }
  }
  return out;
}

Corpus remove_pages(const Corpus& corpus) {
  Corpus out = corpus;
  for (auto& s : out.sessions) {
    std::erase_if(s.events, [](const Interaction& e) { return !e.is_item(); });
  }
  out.refresh_entity_sets();
  return out;
}

std::map<std::string, AttrSet> item_catalog(const Corpus& corpus) {
  std::map<std::string, AttrSet> catalog;
  for (const auto& s : corpus.sessions) {
    for (const auto& e : s.events) {
      if (e.is_item()) catalog.try_emplace(e.entity_id, e.attrs);
    }
  }
  return catalog;
}

Corpus derive_list_page_features(const Corpus& corpus,
                                 const std::map<std::string, AttrSet>& catalog,
                                 ListPageFeatures features) {
  auto lookup = [&](const std::string& item) -> const AttrSet& {
    auto it = catalog.find(item);
    if (it == catalog.end()) throw DataError("list page references unknown item '" + item + "'");
    return it->second;
  };

  Corpus out = corpus;
  for (auto& s : out.sessions) {
    bool rewrote_kind = false;
    for (auto& e : s.events) {
      if (e.is_item() || !e.list_items) continue;
      const auto& items = *e.list_items;
      if (items.empty()) throw DataError("list page '" + e.entity_id + "' has no list_items");
      for (const auto& item : items) lookup(item);

      switch (features.mode) {
        case ListPageMode::FirstItemAttributes:
          e.attrs = lookup(items.front());
          break;
        case ListPageMode::TopKFrequentAttributes: {
          std::map<AttrId, std::size_t> freq;
          for (const auto& item : items) {
            for (AttrId a : lookup(item)) ++freq[a];
          }
          std::vector<std::pair<AttrId, std::size_t>> ranked(freq.begin(), freq.end());
          std::stable_sort(ranked.begin(), ranked.end(),
                           [](const auto& a, const auto& b) { return a.second > b.second; });
          std::vector<AttrId> top;
          for (std::size_t i = 0; i < ranked.size() && i < features.k; ++i) {
            top.push_back(ranked[i].first);
          }
          e.attrs = make_attr_set(std::move(top));
          break;
        }
        case ListPageMode::FirstItemProxy:
          e.kind = InteractionKind::Item;
          e.entity_id = items.front();
          e.attrs = lookup(items.front());
          e.list_items.reset();
          e.dense_vec.reset();
          rewrote_kind = true;
          break;
      }
    }
    if (rewrote_kind) dedupe_consecutive(s.events);
  }
  out.refresh_entity_sets();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Corpus with_sessions(const Corpus& like, std::vector<Session> sessions) {
  Corpus out;
  out.attribute_vocab = like.attribute_vocab;
  out.dense_dim = like.dense_dim;
  out.sessions = std::move(sessions);
  out.refresh_entity_sets();
  return out;
}

std::array<std::size_t, 2> floor_cuts(std::size_t n, const SplitStrategy& st) {
  const auto n_train = static_cast<std::size_t>(std::floor(st.train * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::floor(st.valid * static_cast<double>(n)));
  return {n_train, n_train + n_valid};
}

}  // namespace

CorpusSplit split(const Corpus& corpus, const SplitStrategy& strategy, std::uint64_t seed) {
  if (!(strategy.train > 0.0) || !(strategy.valid > 0.0) || strategy.train + strategy.valid >= 1.0) {
    throw std::invalid_argument("split fractions must be positive and sum to less than 1");
  }
  if (corpus.sessions.empty()) throw std::invalid_argument("cannot split an empty corpus");

  std::vector<Session> train, valid, test;
  if (strategy.kind == SplitStrategy::Kind::ByUser) {
    std::vector<std::string> users;
    for (const auto& s : corpus.sessions) users.push_back(s.user_id);
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    Rng rng(seed);
    rng.shuffle(users);
    const auto cuts = floor_cuts(users.size(), strategy);
    std::unordered_map<std::string, int> part;
    for (std::size_t i = 0; i < users.size(); ++i) {
      part[users[i]] = i < cuts[0] ? 0 : (i < cuts[1] ? 1 : 2);
    }
    for (const auto& s : corpus.sessions) {
      const int p = part.at(s.user_id);
      (p == 0 ? train : p == 1 ? valid : test).push_back(s);
    }
  } else {
    std::vector<std::size_t> order(corpus.sessions.size());
    std::iota(order.begin(), order.end(), 0);
    auto last_t = [&](std::size_t i) {
      const auto& ev = corpus.sessions[i].events;
      return ev.empty() ? std::numeric_limits<std::int64_t>::min() : ev.back().timestamp;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ta = last_t(a), tb = last_t(b);
      if (ta != tb) return ta < tb;
      return corpus.sessions[a].user_id < corpus.sessions[b].user_id;
    });
    const auto cuts = floor_cuts(order.size(), strategy);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& s = corpus.sessions[order[i]];
      (i < cuts[0] ? train : i < cuts[1] ? valid : test).push_back(s);
    }
  }
  return {with_sessions(corpus, std::move(train)), with_sessions(corpus, std::move(valid)),
          with_sessions(corpus, std::move(test))};
}

CorpusStats stats(const Corpus& corpus) {
  CorpusStats st;
  std::set<std::string> users, items, pages;
  std::set<AttrSet> cpids;
  for (const auto& s : corpus.sessions) {
    users.insert(s.user_id);
    for (const auto& e : s.events) {
      if (e.is_item()) {
        items.insert(e.entity_id);
        ++st.n_item_interactions;
      } else {
        pages.insert(e.entity_id);
        cpids.insert(e.attrs);
        ++st.n_page_interactions;
      }
    }
  }
  st.n_users = users.size();
  st.n_items = items.size();
  st.n_pages = pages.size();
  st.n_attrs = corpus.attribute_vocab.size();
  st.n_cpids = cpids.size();
  if (!corpus.sessions.empty()) {
    const auto n = static_cast<double>(corpus.sessions.size());
    st.avg_len_items = static_cast<double>(st.n_item_interactions) / n;
    st.avg_len_all = static_cast<double>(st.n_item_interactions + st.n_page_interactions) / n;
  }
  return st;
}

nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["n_users"] = s.n_users;
  j["n_items"] = s.n_items;
  j["n_pages"] = s.n_pages;
  j["n_attrs"] = s.n_attrs;
  j["n_cpids"] = s.n_cpids;
  j["n_item_interactions"] = s.n_item_interactions;
  j["n_page_interactions"] = s.n_page_interactions;
  j["avg_len_items"] = s.avg_len_items;
  j["avg_len_all"] = s.avg_len_all;
  return j;
}

std::string stats_csv(const CorpusStats& s) {
  std::ostringstream out;
  out << "n_users,n_items,n_pages,n_attrs,n_cpids,n_item_interactions,n_page_interactions,"
         "avg_len_items,avg_len_all\n";
  out << s.n_users << ',' << s.n_items << ',' << s.n_pages << ',' << s.n_attrs << ','
      << s.n_cpids << ',' << s.n_item_interactions << ',' << s.n_page_interactions << ','
      << csv::format_double(s.avg_len_items) << ',' << csv::format_double(s.avg_len_all) << '\n';
  return out.str();
}

}  // namespace pagerec
