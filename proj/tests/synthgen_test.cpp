#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pagerec/errors.hpp"
#include "pagerec/synthgen.hpp"

namespace pagerec {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("pagerec_synth_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                                 "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return path_ / name;
  }

 private:
  fs::path path_;
};

const char* kMovies =
    "movieId,title,genres\n"
    "1,Alien (1979),Horror|Sci-Fi\n"
    "2,Jaws (1975),Action|Horror\n"
    "3,Shrek (2001),Adventure|Children\n"
    "4,\"Thing, The (1982)\",Horror|Sci-Fi\n"
    "5,Toy Story,Adventure|Children\n"
    "6,Unknown Film,(no genres listed)\n";

// Renders a session as genre joins for pages and titles for items.
std::vector<std::string> render(const Corpus& c, const Session& s) {
  static const std::map<std::string, std::string> titles{{"1", "Alien"}, {"2", "Jaws"}, {"3", "Shrek"}, {"4", "The Thing"}};
  std::vector<std::string> out;
  for (const auto& e : s.events) {
    if (e.is_item()) {
      out.push_back(titles.at(e.entity_id));
    } else {
      std::string j = c.attribute_vocab.join(e.attrs);
      for (std::size_t pos; (pos = j.find("genre:")) != std::string::npos;) j.erase(pos, 6);
      out.push_back(j);
    }
  }
  return out;
}

TEST(LoadRatings, SplitsGenresIntoAttributes) {
  TempDir dir;
  const auto ratings = dir.write("r.csv", "userId,movieId,rating,timestamp\n1,5,4.0,10\n1,6,3.0,11\n");
  const auto t = load_ratings(ratings, dir.write("m.csv", kMovies));
  ASSERT_EQ(t.rows.size(), 2u);
  const auto& toy = t.item_genres.at("5");
  ASSERT_EQ(toy.size(), 2u);
  EXPECT_EQ(t.attribute_vocab.join(toy), "genre:Adventure|genre:Children");
  EXPECT_EQ(t.attribute_vocab.join(t.item_genres.at("6")), "genre:(no genres listed)");
}

TEST(LoadRatings, UnknownMovieNamesTheId) {
  TempDir dir;
  const auto ratings = dir.write("r.csv", "userId,movieId,rating,timestamp\n1,99,4.0,10\n");
  try {
    load_ratings(ratings, dir.write("m.csv", kMovies));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos) << e.what();
  }
}

TEST(LoadRatings, UnparseableRowIsAnError) {
  TempDir dir;
  const auto ratings = dir.write("r.csv", "userId,movieId,rating,timestamp\n1,1,4.0,notatime\n");
  EXPECT_THROW(load_ratings(ratings, dir.write("m.csv", kMovies)), DataError);
}

RatingsTable history(const std::string& rows) {
  TempDir dir;
  return load_ratings(dir.write("r.csv", "userId,movieId,rating,timestamp\n" + rows), dir.write("m.csv", kMovies));
}

TEST(Synthesize, PrevExampleSequence) {
  const auto t = history("7,1,5,100\n7,2,5,200\n7,3,5,300\n");
  const auto c = synthesize(t, SynthVariant::prev(), 0);
  ASSERT_EQ(c.sessions.size(), 1u);
  EXPECT_EQ(render(c, c.sessions[0]), (std::vector<std::string>{"Horror|Sci-Fi", "Alien", "Action|Horror", "Jaws",
                                                                 "Adventure|Children", "Shrek"}));
  // Pages share their movie's timestamp and sit before it.
  EXPECT_EQ(c.sessions[0].events[0].timestamp, 100);
  EXPECT_EQ(c.sessions[0].events[0].entity_id, "lp:genre:Horror|genre:Sci-Fi");
}

TEST(Synthesize, GroupExampleSequence) {
  const auto t = history("7,4,5,100\n7,1,5,200\n7,2,5,300\n");
  const auto c = synthesize(t, SynthVariant::group(), 0);
  EXPECT_EQ(render(c, c.sessions[0]),
            (std::vector<std::string>{"Horror|Sci-Fi", "The Thing", "Alien", "Action|Horror", "Jaws"}));
}

TEST(Synthesize, ChronologicalOrderWithItemTieBreak) {
  const auto t = history("7,2,5,100\n7,1,5,100\n7,3,5,50\n");
  const auto c = remove_pages(synthesize(t, SynthVariant::prev(), 0));
  std::vector<std::string> ids;
  for (const auto& e : c.sessions[0].events) ids.push_back(e.entity_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"3", "1", "2"}));
}

TEST(Synthesize, EmptyRatingsAreRejected) {
  EXPECT_THROW(synthesize(RatingsTable{}, SynthVariant::prev(), 0), std::invalid_argument);
}

std::vector<std::vector<std::string>> item_sequences(const Corpus& c) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : c.sessions) {
    out.emplace_back();
    for (const auto& e : s.events) {
      if (e.is_item()) out.back().push_back(e.entity_id);
    }
  }
  return out;
}

std::vector<AttrSet> page_genres(const Corpus& c) {
  std::vector<AttrSet> out;
  for (const auto& s : c.sessions) {
    for (const auto& e : s.events) {
      if (!e.is_item()) out.push_back(e.attrs);
    }
  }
  return out;
}

TEST(Synthesize, VariantInvariantsOnToyRatings) {
  ToySpec spec;
  spec.n_users = 60;
  const auto t = make_toy_ratings(spec, 4);
  const auto prev = synthesize(t, SynthVariant::prev(), 1);
  const auto group = synthesize(t, SynthVariant::group(), 1);
  for (const auto& s : prev.sessions) {
    const auto pages = std::count_if(s.events.begin(), s.events.end(), [](const auto& e) { return !e.is_item(); });
    EXPECT_EQ(static_cast<std::size_t>(pages) * 2, s.events.size());
  }
  for (const auto& s : group.sessions) {
    const auto pages = std::count_if(s.events.begin(), s.events.end(), [](const auto& e) { return !e.is_item(); });
    EXPECT_LE(static_cast<std::size_t>(pages) * 2, s.events.size());
  }
  EXPECT_EQ(item_sequences(prev), item_sequences(group));
  EXPECT_EQ(item_sequences(remove_pages(prev)), item_sequences(prev));

  auto prev_genres = page_genres(prev);
  for (double x : {0.0, 0.3, 1.0}) {
    const auto rnd = synthesize(t, SynthVariant::random(x), 99);
    auto g = page_genres(rnd);
    EXPECT_EQ(item_sequences(rnd), item_sequences(prev));
    if (x == 0.0) {
      EXPECT_EQ(rnd.sessions, prev.sessions);
    } else {
      EXPECT_NE(g, prev_genres);
    }
    // Page ids follow the shuffled genres.
    for (const auto& s : rnd.sessions) {
      for (const auto& e : s.events) {
        if (!e.is_item()) EXPECT_EQ(e.entity_id, page_id_for(rnd.attribute_vocab, e.attrs));
      }
    }
    std::sort(g.begin(), g.end());
    auto sorted_prev = prev_genres;
    std::sort(sorted_prev.begin(), sorted_prev.end());
    EXPECT_EQ(g, sorted_prev) << "shuffling must permute genre sets, x=" << x;
  }
}

TEST(Synthesize, Deterministic) {
  const auto t = make_toy_ratings({}, 2);
  std::ostringstream a, b;
  write_sessions(a, synthesize(t, SynthVariant::random(0.5), 8));
  write_sessions(b, synthesize(t, SynthVariant::random(0.5), 8));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_THROW(synthesize(t, SynthVariant::random(1.5), 8), std::invalid_argument);
}

TEST(PageStats, AverageGenresPerPage) {
  Corpus c;
  const auto g1 = c.attribute_vocab.intern("genre:g1");
  const auto g2 = c.attribute_vocab.intern("genre:g2");
  Interaction p;
  p.kind = InteractionKind::NonItem;
  p.entity_id = "lp";
  p.attrs = {g1, g2};
  Interaction v;
  v.entity_id = "v";
  c.sessions = {{"u", {p, v}}};
  c.refresh_entity_sets();
  const auto s = page_stats(c);
  EXPECT_DOUBLE_EQ(s.avg_genres_per_page, 2.0);
  EXPECT_DOUBLE_EQ(s.pages_per_session, 1.0);
}

TEST(ToyRatings, ShapeMatchesDefaults) {
  ToySpec spec;
  spec.n_users = 30;
  const auto t = make_toy_ratings(spec, 1);
  EXPECT_EQ(t.rows.size(), 300u);
  EXPECT_EQ(t.item_genres.size(), 50u);
  std::set<AttrSet> combos;
  for (const auto& [_, g] : t.item_genres) combos.insert(g);
  EXPECT_EQ(combos.size(), 10u);
}

}  // namespace
}  // namespace pagerec
