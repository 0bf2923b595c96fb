#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "rdt/dataset.hpp"
#include "rdt/error.hpp"
#include "rdt/rng.hpp"

using rdt::CooccurrenceStats;
using rdt::GenreVocabulary;
using rdt::MultiHotLabel;
using rdt::PosterManifest;
using rdt::PosterRecord;
using rdt::SplitAssignment;
using rdt::SplitRatios;

namespace {

GenreVocabulary abc() { return GenreVocabulary({"A", "B", "C"}); }

PosterManifest parse(const std::string& text, const GenreVocabulary& vocab) {
  std::istringstream in(text);
  return rdt::parse_manifest(in, vocab, "mem");
}

// The hand-counted five-record fixture used throughout: labels
// {1}, {1,2}, {2,3}, {1,2,3}, {3} over three genres.
PosterManifest toy_manifest() {
  return parse(
      "a.ppm\tm1\t1\n"
      "b.ppm\tm2\t1;2\n"
      "c.ppm\tm3\t2;3\n"
      "d.ppm\tm4\t1;2;3\n"
      "e.ppm\tm5\t3\n",
      abc());
}

PosterManifest random_manifest(rdt::Rng& rng, int n, int delta) {
  PosterManifest m;
  for (int i = 0; i < n; ++i) {
    std::vector<int> ids;
    const int count = 1 + static_cast<int>(rng.index(
                              static_cast<std::uint64_t>(delta)));
    std::vector<int> pool(static_cast<std::size_t>(delta));
    for (int g = 0; g < delta; ++g) pool[static_cast<std::size_t>(g)] = g + 1;
    rng.shuffle(pool);
    ids.assign(pool.begin(), pool.begin() + count);
    m.records.push_back({"p" + std::to_string(i) + ".ppm",
                         "m" + std::to_string(i),
                         MultiHotLabel::from_ids(ids, delta)});
  }
  return m;
}

}  // namespace

TEST_CASE("default vocabulary lists the 13 genres in class-id order") {
  const GenreVocabulary v = GenreVocabulary::imdb13();
  REQUIRE(v.size() == 13);
  CHECK(v.label_for_id(1) == "Action");
  CHECK(v.label_for_id(2) == "Adventure");
  CHECK(v.label_for_id(3) == "Animation");
  CHECK(v.label_for_id(4) == "Biography");
  CHECK(v.label_for_id(5) == "Comedy");
  CHECK(v.label_for_id(6) == "Crime");
  CHECK(v.label_for_id(7) == "Drama");
  CHECK(v.label_for_id(8) == "Fantasy");
  CHECK(v.label_for_id(9) == "Horror");
  CHECK(v.label_for_id(10) == "Mystery");
  CHECK(v.label_for_id(11) == "Romance");
  CHECK(v.label_for_id(12) == "Sci-Fi");
  CHECK(v.label_for_id(13) == "Thriller");
  for (int id = 1; id <= 13; ++id)
    CHECK(v.id_for_label(v.label_for_id(id)) == id);
  CHECK(v.id_for_label("Western") == 0);
}

TEST_CASE("vocabulary construction validates its label list") {
  CHECK_THROWS_AS(GenreVocabulary({"solo"}), rdt::DomainError);
  CHECK_THROWS_AS(GenreVocabulary({"A", "A"}), rdt::DomainError);
  CHECK_THROWS_AS(GenreVocabulary({"A", ""}), rdt::DomainError);
  CHECK_THROWS_AS(GenreVocabulary(std::vector<std::string>{}),
                  rdt::DomainError);
}

TEST_CASE("multi-hot labels round-trip through class-id lists") {
  const MultiHotLabel label = MultiHotLabel::from_ids({3, 1}, 5);
  CHECK(label.bits == std::vector<std::uint8_t>{1, 0, 1, 0, 0});
  CHECK(label.count() == 2);
  CHECK(label.ids() == std::vector<int>{1, 3});
  CHECK(label.test_id(1));
  CHECK_FALSE(label.test_id(2));
  CHECK(label.test_id(3));
  CHECK_THROWS_AS(label.test_id(0), rdt::DomainError);
  CHECK_THROWS_AS(label.test_id(6), rdt::DomainError);
}

TEST_CASE("a single-genre manifest line maps to the right class bit") {
  const PosterManifest m =
      parse("p1.ppm\tm1\t7\n", GenreVocabulary::imdb13());
  REQUIRE(m.size() == 1);
  const MultiHotLabel& label = m.records[0].label;
  CHECK(label.count() == 1);
  CHECK(label.test_id(7));  // Drama
  CHECK(m.records[0].path == "p1.ppm");
  CHECK(m.records[0].movie_id == "m1");
}

TEST_CASE("the toy manifest parses to the hand-counted labels") {
  const PosterManifest m = toy_manifest();
  REQUIRE(m.size() == 5);
  CHECK(m.records[0].label.ids() == std::vector<int>{1});
  CHECK(m.records[1].label.ids() == std::vector<int>{1, 2});
  CHECK(m.records[2].label.ids() == std::vector<int>{2, 3});
  CHECK(m.records[3].label.ids() == std::vector<int>{1, 2, 3});
  CHECK(m.records[4].label.ids() == std::vector<int>{3});
}

TEST_CASE("manifest ids may arrive in any order but not duplicated") {
  const PosterManifest m = parse("a.ppm\tm1\t3;1\n", abc());
  CHECK(m.records[0].label.ids() == std::vector<int>{1, 3});
  CHECK_THROWS_AS(parse("a.ppm\tm1\t2;2\n", abc()), rdt::ParseError);
}

TEST_CASE("malformed manifests fail with the offending line number") {
  auto expect_error = [](const std::string& text, const char* fragment) {
    try {
      parse(text, abc());
      FAIL_CHECK("expected a parse error for: " << text);
    } catch (const rdt::ParseError& e) {
      const std::string msg = e.what();
      CHECK_MESSAGE(msg.find(fragment) != std::string::npos,
                    "message '" << msg << "' lacks '" << fragment << "'");
    }
  };
  expect_error("a.ppm\tm1\t1\n\nb.ppm\tm2\t2\n", "mem:2");
  expect_error("a.ppm\tm1\n", "mem:1");
  expect_error("a.ppm\tm1\t1\textra\n", "mem:1");
  expect_error("a.ppm\tm1\tx\n", "genre id");
  expect_error("a.ppm\tm1\t0\n", "unknown genre id");
  expect_error("a.ppm\tm1\t4\n", "unknown genre id");
  expect_error("a.ppm\tm1\t\n", "mem:1");
  expect_error("a.ppm\tm1\t1\na.ppm\tm2\t2\n", "duplicate");
  CHECK_THROWS_AS(parse("", abc()), rdt::ParseError);
  CHECK_THROWS_AS(rdt::load_manifest("/nonexistent/m.tsv", abc()),
                  rdt::IoError);
}

TEST_CASE("splits of 20 records come out 16/2/2") {
  rdt::Rng rng(11);
  const PosterManifest m = random_manifest(rng, 20, 4);
  const SplitAssignment split = rdt::split_dataset(m, SplitRatios{}, 5);
  CHECK(split.train.size() == 16);
  CHECK(split.val.size() == 2);
  CHECK(split.test.size() == 2);
}

TEST_CASE("splitting fewer than 10 records is rejected") {
  rdt::Rng rng(3);
  const PosterManifest m = random_manifest(rng, 9, 3);
  CHECK_THROWS_AS(rdt::split_dataset(m, SplitRatios{}, 1), rdt::DomainError);
}

TEST_CASE("split sizes stay within one of the exact ratio") {
  rdt::Rng rng(17);
  for (int n : {10, 11, 13, 37, 100, 199}) {
    const PosterManifest m = random_manifest(rng, n, 5);
    const SplitAssignment s = rdt::split_dataset(m, SplitRatios{}, 99);
    const double nd = static_cast<double>(n);
    CHECK(std::abs(static_cast<double>(s.train.size()) - 0.8 * nd) < 1.0);
    CHECK(std::abs(static_cast<double>(s.val.size()) - 0.1 * nd) < 1.0);
    CHECK(std::abs(static_cast<double>(s.test.size()) - 0.1 * nd) < 1.0);
    CHECK(s.train.size() + s.val.size() + s.test.size() ==
          static_cast<std::size_t>(n));
  }
}

TEST_CASE("splits are deterministic, disjoint, and covering over 100 seeds") {
  rdt::Rng rng(23);
  const PosterManifest m = random_manifest(rng, 40, 6);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SplitAssignment a = rdt::split_dataset(m, SplitRatios{}, seed);
    const SplitAssignment b = rdt::split_dataset(m, SplitRatios{}, seed);
    REQUIRE(a.train == b.train);
    REQUIRE(a.val == b.val);
    REQUIRE(a.test == b.test);
    std::set<std::size_t> seen;
    for (const auto* part : {&a.train, &a.val, &a.test})
      for (std::size_t idx : *part) {
        REQUIRE(idx < m.size());
        REQUIRE(seen.insert(idx).second);  // disjoint
      }
    REQUIRE(seen.size() == m.size());  // covering
  }
  // And different seeds actually move records around at least once.
  const SplitAssignment s0 = rdt::split_dataset(m, SplitRatios{}, 0);
  bool any_different = false;
  for (std::uint64_t seed = 1; seed < 20 && !any_different; ++seed)
    any_different = rdt::split_dataset(m, SplitRatios{}, seed).train != s0.train;
  CHECK(any_different);
}

TEST_CASE("every split receives a positive of every genre when feasible") {
  // 30 single-label records, 10 per genre; targets 24/3/3 leave room for one
  // positive of each genre in the small splits.
  PosterManifest m;
  for (int i = 0; i < 30; ++i)
    m.records.push_back({"p" + std::to_string(i), "m" + std::to_string(i),
                         MultiHotLabel::from_ids({1 + i % 3}, 3)});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SplitAssignment s = rdt::split_dataset(m, SplitRatios{}, seed);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      std::vector<int> positives(3, 0);
      for (std::size_t idx : *part)
        for (int g = 0; g < 3; ++g)
          positives[static_cast<std::size_t>(g)] +=
              m.records[idx].label.bits[static_cast<std::size_t>(g)];
      for (int g = 0; g < 3; ++g) CHECK(positives[static_cast<std::size_t>(g)] >= 1);
    }
  }
}

TEST_CASE("toy manifest co-occurrence matches the hand count") {
  const PosterManifest m = toy_manifest();
  std::vector<std::size_t> all{0, 1, 2, 3, 4};
  const CooccurrenceStats stats = rdt::compute_cooccurrence(m, all);
  CHECK(stats.subset_size == 5);
  CHECK(stats.single == std::vector<long long>{3, 3, 3});
  CHECK(stats.pair_at(0, 1) == 2);
  CHECK(stats.pair_at(1, 0) == 2);
  CHECK(stats.pair_at(0, 2) == 1);
  CHECK(stats.pair_at(1, 2) == 2);
  CHECK(stats.triple_at(0, 1, 2) == 1);
  for (int j = 0; j < 3; ++j) {
    CHECK(stats.pair_at(j, j) == stats.single[static_cast<std::size_t>(j)]);
    for (int k = 0; k < 3; ++k)
      CHECK(stats.triple_at(j, j, k) == stats.pair_at(j, k));
  }
  // imbalance = positives / negatives = 3 / 2 per genre here.
  for (double ratio : stats.imbalance) CHECK(ratio == doctest::Approx(1.5));
}

TEST_CASE("co-occurrence rejects empty subsets and bad indices") {
  const PosterManifest m = toy_manifest();
  CHECK_THROWS_AS(rdt::compute_cooccurrence(m, {}), rdt::DomainError);
  CHECK_THROWS_AS(rdt::compute_cooccurrence(m, {99}), rdt::DomainError);
}

TEST_CASE("a genre positive in every record has infinite imbalance") {
  const PosterManifest m = parse(
      "a.ppm\tm1\t1\n"
      "b.ppm\tm2\t1;2\n",
      abc());
  const CooccurrenceStats stats = rdt::compute_cooccurrence(m, {0, 1});
  CHECK(std::isinf(stats.imbalance[0]));
  CHECK(stats.imbalance[1] == doctest::Approx(1.0));
  CHECK(stats.imbalance[2] == 0.0);
}

TEST_CASE("counting oracle: stats equal brute-force set intersections") {
  rdt::Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int delta = 2 + static_cast<int>(rng.index(5));  // 2..6
    const int n = 1 + static_cast<int>(rng.index(50));     // 1..50
    const PosterManifest m = random_manifest(rng, n, delta);
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (rng.uniform01() < 0.8) subset.push_back(i);
    if (subset.empty()) subset.push_back(0);
    const CooccurrenceStats stats = rdt::compute_cooccurrence(m, subset);

    // Independent oracle: materialize each genre's record set and intersect.
    std::vector<std::set<std::size_t>> z(static_cast<std::size_t>(delta));
    for (std::size_t idx : subset)
      for (int id : m.records[idx].label.ids())
        z[static_cast<std::size_t>(id - 1)].insert(idx);
    for (int j = 0; j < delta; ++j) {
      REQUIRE(stats.single[static_cast<std::size_t>(j)] ==
              static_cast<long long>(z[static_cast<std::size_t>(j)].size()));
      for (int k = 0; k < delta; ++k) {
        long long pair_count = 0;
        for (std::size_t idx : z[static_cast<std::size_t>(j)])
          pair_count += z[static_cast<std::size_t>(k)].count(idx);
        REQUIRE(stats.pair_at(j, k) == pair_count);
        REQUIRE(stats.pair_at(j, k) <= stats.single[static_cast<std::size_t>(j)]);
        for (int l = 0; l < delta; ++l) {
          long long triple_count = 0;
          for (std::size_t idx : z[static_cast<std::size_t>(j)])
            if (z[static_cast<std::size_t>(k)].count(idx) &&
                z[static_cast<std::size_t>(l)].count(idx))
              ++triple_count;
          REQUIRE(stats.triple_at(j, k, l) == triple_count);
          REQUIRE(stats.triple_at(j, k, l) <= stats.pair_at(j, k));
        }
      }
    }
  }
}

TEST_CASE("co-occurrence CSV export matches a golden rendering") {
  const PosterManifest m = toy_manifest();
  const CooccurrenceStats stats =
      rdt::compute_cooccurrence(m, {0, 1, 2, 3, 4});
  std::ostringstream out;
  rdt::write_cooccurrence_csv(out, stats, abc());
  CHECK(out.str() ==
        "genre,A,B,C\n"
        "A,3,2,1\n"
        "B,2,3,2\n"
        "C,1,2,3\n"
        "single,3,3,3\n"
        "imbalance,1.50000,1.50000,1.50000\n");
}
