#include <cmath>
#include <random>

#include "curate/dedup.hpp"
#include "curate/text.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace curate;

namespace {

// Two base-hash sets with |A∩B| = shared and |A\B| = |B\A| = unique.
std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> pair_with(std::mt19937_64& rng, int shared,
                                                                            int unique) {
  std::vector<std::uint64_t> a, b;
  for (int i = 0; i < shared; ++i) {
    const auto h = rng();
    a.push_back(h);
    b.push_back(h);
  }
  for (int i = 0; i < unique; ++i) {
    a.push_back(rng());
    b.push_back(rng());
  }
  return {a, b};
}

bool any_band_equal(const MinHashSignature& x, const MinHashSignature& y, const LshConfig& cfg) {
  for (std::size_t band = 0; band < cfg.num_bands; ++band) {
    bool equal = true;
    for (std::size_t r = 0; r < cfg.rows_per_band; ++r) {
      const std::size_t k = band * cfg.rows_per_band + r;
      equal = equal && x.values[k] == y.values[k];
    }
    if (equal) return true;
  }
  return false;
}

std::string random_text(std::mt19937_64& rng, int words) {
  std::string s;
  for (int i = 0; i < words; ++i) s += "w" + std::to_string(rng() % 5000) + " ";
  return s;
}

}  // namespace

TEST_CASE("shingles are distinct sorted word k-grams") {
  CHECK(shingles("a b c a b c", 2) == std::vector<std::string>{"a b", "b c", "c a"});
  CHECK(shingles("A, b", 5) == std::vector<std::string>{"a , b"});
  CHECK(shingles("   ", 3).empty());
  CHECK_THROWS_AS(shingles("a", 0), Error);
  CHECK(shingle_hashes("a b c", 2).size() == 2);
}

TEST_CASE("config validation and json") {
  LshConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.num_bands = 13;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const auto parsed = LshConfig::from_json(nlohmann::json::parse(R"({"num_hashes": 20, "num_bands": 5, "rows_per_band": 4})"));
  CHECK(parsed.num_hashes == 20);
  CHECK(parsed.shingle_size == 5);
  CHECK(LshConfig::from_json(parsed.to_json()).to_json() == parsed.to_json());
  CHECK_THROWS_AS(LshConfig::from_json(nlohmann::json::parse(R"({"num_hashes": 20})")), Error);
}

TEST_CASE("signatures are deterministic and depend on the set only") {
  LshConfig cfg;
  const MinHasher hasher(cfg);
  const std::vector<std::uint64_t> h{5, 9, 1, 9};
  const std::vector<std::uint64_t> perm{1, 9, 5};
  CHECK(hasher.sign(h).values == hasher.sign(perm).values);
  CHECK(hasher.sign(h).values.size() == 112);
  CHECK(signature({"x y"}, cfg).values == hasher.sign(std::vector<std::string>{"x y"}).values);
  CHECK_THROWS_AS(hasher.sign(std::vector<std::uint64_t>{}), Error);
  LshConfig other = cfg;
  other.seed ^= 1;
  CHECK(MinHasher(other).sign(h).values != hasher.sign(h).values);
}

TEST_CASE("signature agreement estimates Jaccard") {
  std::mt19937_64 rng(11);
  const MinHasher hasher(LshConfig{});
  double agree = 0;
  const int pairs = 300;
  for (int p = 0; p < pairs; ++p) {
    auto [a, b] = pair_with(rng, 100, 50);  // J = 0.5
    const auto sa = hasher.sign(a), sb = hasher.sign(b);
    for (std::size_t k = 0; k < sa.values.size(); ++k) agree += sa.values[k] == sb.values[k];
  }
  CHECK(agree / (pairs * 112.0) == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("band collision rate follows the S-curve") {
  std::mt19937_64 rng(12);
  const LshConfig cfg;
  const MinHasher hasher(cfg);
  for (const auto& [shared, unique] : {std::pair{150, 25}, std::pair{100, 50}}) {
    const double s = static_cast<double>(shared) / (shared + 2 * unique);
    const double expected = 1.0 - std::pow(1.0 - std::pow(s, 8), 14);
    int hits = 0;
    const int pairs = 2000;
    for (int p = 0; p < pairs; ++p) {
      auto [a, b] = pair_with(rng, shared, unique);
      hits += any_band_equal(hasher.sign(a), hasher.sign(b), cfg);
    }
    const double sd = std::sqrt(expected * (1 - expected) / pairs);
    CHECK(std::abs(hits / static_cast<double>(pairs) - expected) < 4 * sd + 1e-3);
  }
}

TEST_CASE("ClusterSet keeps the smallest member as root") {
  ClusterSet set(6);
  set.unite(4, 2);
  set.unite(5, 4);
  set.unite(3, 1);
  CHECK(set.find(5) == 2);
  CHECK(set.same(1, 3));
  CHECK_FALSE(set.same(0, 1));
  CHECK(set.is_representative(0));
  CHECK_FALSE(set.is_representative(4));
  CHECK(set.clusters() == std::vector<std::vector<std::size_t>>{{1, 3}, {2, 4, 5}});
  CHECK_THROWS_AS(set.find(6), Error);
}

TEST_CASE("deduplicate keeps the first of each near-duplicate cluster") {
  std::mt19937_64 rng(4);
  std::vector<Document> docs;
  const std::string base = random_text(rng, 300);
  docs.push_back(testing::doc(random_text(rng, 300), "web", "a"));
  docs.push_back(testing::doc(base, "web", "b"));
  docs.push_back(testing::doc(random_text(rng, 300), "web", "c"));
  docs.push_back(testing::doc(base, "web", "d"));
  docs.push_back(testing::doc(base + " tail", "web", "e"));
  docs.push_back(testing::doc("", "web", "empty"));
  docs.push_back(testing::doc("", "web", "empty2"));

  const auto clusters = cluster_documents(docs, LshConfig{}, 2);
  const auto result = deduplicate(docs, clusters);
  std::vector<std::string> urls;
  for (const auto& d : result.kept) urls.push_back(d.url);
  CHECK(urls == std::vector<std::string>{"a", "b", "c", "empty", "empty2"});
  CHECK(result.report.removed() == 2);
  CHECK(result.report.clusters == 1);
  CHECK(result.report.before.samples == 7);
  CHECK(result.report.after.tokens < result.report.before.tokens);
  const auto j = result.report.to_json();
  CHECK(j["rows"][1]["dedup"] == true);
  CHECK(j["rows"][0]["threshold"].is_null());

  // Dedup is idempotent on its own output.
  const auto again = deduplicate(result.kept, cluster_documents(result.kept, LshConfig{}));
  CHECK(again.kept == result.kept);
}

TEST_CASE("per-source shards never cross sources") {
  const std::string text = "the same long text appears in two different places right here";
  std::vector<Document> docs{testing::doc(text, "a"), testing::doc(text, "b"), testing::doc(text, "a")};
  const auto sharded = cluster_documents(docs, LshConfig{}, 1, true);
  CHECK_FALSE(sharded.same(0, 1));
  CHECK(sharded.same(0, 2));
  CHECK(cluster_documents(docs, LshConfig{}).same(0, 1));
}

TEST_CASE("threads do not change clusters") {
  std::mt19937_64 rng(6);
  std::vector<Document> docs;
  for (int i = 0; i < 200; ++i) {
    docs.push_back(testing::doc(i % 5 == 0 && i > 0 ? docs[static_cast<std::size_t>(i - 3)].content : random_text(rng, 80)));
  }
  const auto one = cluster_documents(docs, LshConfig{}, 1);
  const auto four = cluster_documents(docs, LshConfig{}, 4);
  CHECK(one.clusters() == four.clusters());
  CHECK(one.clusters().size() == 39);
}

TEST_CASE("signature files round-trip") {
  testing::TempDir dir;
  LshConfig cfg;
  cfg.num_hashes = 12;
  cfg.num_bands = 3;
  cfg.rows_per_band = 4;
  const MinHasher hasher(cfg);
  std::vector<MinHashSignature> sigs{hasher.sign(std::vector<std::uint64_t>{1, 2}, 7),
                                     hasher.sign(std::vector<std::uint64_t>{3}, 9)};
  write_signatures(dir / "s.bin", cfg, sigs);
  LshConfig back_cfg;
  const auto back = read_signatures(dir / "s.bin", &back_cfg);
  REQUIRE(back.size() == 2);
  CHECK(back[1].doc_id == 9);
  CHECK(back[0].values == sigs[0].values);
  CHECK(back_cfg.to_json() == cfg.to_json());

  const auto clusters = find_duplicates(back, cfg);
  CHECK(clusters.size() == 10);
  testing::write_file(dir / "junk.bin", "nope");
  CHECK_THROWS_AS(read_signatures(dir / "junk.bin"), Error);
}

TEST_CASE("ngram_overlap finds shared n-grams with witnesses") {
  const std::vector<std::string> a{"one two three four five", "alpha beta gamma"};
  const std::vector<std::string> b{"zero one two three", "beta gamma delta", "x two three four"};
  const auto r = ngram_overlap(a, b, 3);
  CHECK(r.count == 2);
  REQUIRE(r.matches.size() == 2);
  CHECK(r.matches[0].ngram == "one two three");
  CHECK(r.matches[0].a_index == 0);
  CHECK(r.matches[0].b_index == 0);
  CHECK(r.matches[1].ngram == "two three four");
  CHECK(r.matches[1].b_index == 2);
  CHECK(r.to_json(false).contains("matches") == false);

  CHECK(ngram_overlap({"a b"}, {"a b"}, 3).count == 0);
  CHECK(ngram_overlap({"A, b"}, {"a , b"}, 3).count == 1);
  CHECK_THROWS_AS(ngram_overlap(a, b, 0), Error);
}
