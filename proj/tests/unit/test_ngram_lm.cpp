#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "curate/text.hpp"
#include "curate/ngram_lm.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "kn_oracle.hpp"

using namespace curate;

namespace {

using testing::Gram;
using testing::KneserNeyOracle;

std::vector<Document> docs(std::initializer_list<const char*> texts) {
  std::vector<Document> out;
  for (const char* t : texts) out.push_back(testing::doc(t));
  return out;
}

}  // namespace

TEST_CASE("add-1 unigram worked example") {
  const auto model = NGramModel::train(docs({"a a b"}), 1, Smoothing::add_k(1.0));
  CHECK(model.predictable_size() == 3);
  CHECK(std::abs(model.prob(Gram{}, "a") - 0.5) < 1e-12);
  CHECK(std::abs(model.prob(Gram{}, "b") - 2.0 / 6.0) < 1e-12);
  CHECK(std::abs(model.prob(Gram{}, "<unk>") - 1.0 / 6.0) < 1e-12);
  CHECK(std::abs(model.prob(Gram{}, "never") - 1.0 / 6.0) < 1e-12);
  CHECK(std::abs(model.perplexity("a a") - 2.0) < 1e-12);
}

TEST_CASE("uniform corpus approaches 1/V as k shrinks") {
  std::string text;
  for (int rep = 0; rep < 3; ++rep) {
    for (int i = 0; i < 10; ++i) text += "w" + std::to_string(i) + " ";
  }
  const auto model = NGramModel::train(docs({text.c_str()}), 1, Smoothing::add_k(1e-9));
  for (int i = 0; i < 10; ++i) CHECK(model.prob(Gram{}, "w" + std::to_string(i)) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(model.perplexity("w1 w2 w3") == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("conditional distributions sum to one") {
  std::mt19937_64 rng(3);
  std::vector<Document> corpus;
  for (int s = 0; s < 40; ++s) {
    std::string line;
    const int len = 1 + static_cast<int>(rng() % 8);
    for (int k = 0; k < len; ++k) line += "t" + std::to_string(rng() % 12) + " ";
    corpus.push_back(testing::doc(line));
  }
  for (const auto smoothing : {Smoothing::kneser_ney(0.75), Smoothing::add_k(0.5)}) {
    for (int order : {1, 2, 3, 5}) {
      const auto model = NGramModel::train(corpus, order, smoothing);
      const auto ids = model.predictable_ids();
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint32_t> ctx;
        for (int k = 0; k < order - 1; ++k) ctx.push_back(ids[rng() % ids.size()]);
        double sum = 0;
        for (auto w : ids) {
          const double p = model.prob(ctx, w);
          REQUIRE(p > 0.0);
          REQUIRE(p <= 1.0);
          sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("larger k moves add-k toward uniform") {
  const auto corpus = docs({"x x x x y z", "x y"});
  double prev = 1.0;
  for (double k : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const auto model = NGramModel::train(corpus, 2, Smoothing::add_k(k));
    const double p = model.prob(Gram{"<s>"}, "x");
    CHECK(p <= prev);
    prev = p;
  }
}

TEST_CASE("Kneser-Ney matches a hand-built oracle") {
  const std::vector<Gram> sentences{{"the", "cat", "sat"}, {"the", "dog", "sat"}, {"a", "cat", "ran", "fast"}};
  const auto model = NGramModel::train(docs({"The cat sat", "the dog sat", "a cat ran fast"}), 3, Smoothing::kneser_ney(0.75));
  const KneserNeyOracle oracle(sentences, 3, 0.75);

  const std::vector<std::string> words{"the", "cat", "sat", "dog", "a", "ran", "fast", "</s>", "<unk>"};
  std::vector<std::string> contexts{"<s>", "the", "cat", "dog", "a", "ran", "sat", "fast"};
  for (const auto& c1 : contexts) {
    for (const auto& c2 : contexts) {
      if (c2 == "<s>" && c1 != "<s>") continue;
      for (const auto& w : words) {
        const double got = model.prob(Gram{c2, c1}, w);
        const double want = oracle.p(3, Gram{c2, c1}, w);
        CHECK(std::abs(got - want) < 1e-9);
      }
    }
  }

  // Unseen trigram "the cat ran": interpolation weight of (the cat) times the bigram probability.
  const double gamma = 0.75 * 1 / 1.0;
  CHECK(oracle.count(3, {"the", "cat", "ran"}) == 0);
  CHECK(std::abs(model.prob(Gram{"the", "cat"}, "ran") - gamma * oracle.p(2, Gram{"the", "cat"}, "ran")) < 1e-12);
}

TEST_CASE("perplexity of training text beats a scrambled vocabulary") {
  std::mt19937_64 rng(8);
  std::vector<Document> corpus;
  std::vector<std::string> lines;
  for (int s = 0; s < 200; ++s) {
    // a strongly patterned language
    std::string line;
    for (int k = 0; k < 6; ++k) line += "w" + std::to_string((s + k) % 20) + " ";
    corpus.push_back(testing::doc(line));
    lines.push_back(line);
  }
  const auto model = NGramModel::train(corpus, 3);
  std::string train_text;
  for (const auto& l : lines) train_text += l + "\n";
  const double base = model.perplexity(train_text);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::string scrambled;
    for (int s = 0; s < 200; ++s) {
      for (int k = 0; k < 6; ++k) scrambled += "w" + std::to_string(perm[(s + k) % 20]) + " ";
      scrambled += "\n";
    }
    // the identity permutation is allowed to tie
    CHECK(base <= model.perplexity(scrambled) + 1e-9);
  }
}

TEST_CASE("perplexity rejects empty text and maps unknown tokens") {
  const auto model = NGramModel::train(docs({"a b c"}), 2);
  CHECK_THROWS_AS(model.perplexity("   \n "), Error);
  CHECK(model.prob(Gram{"a"}, "zzz") == model.prob(Gram{"a"}, "<unk>"));
  CHECK_THROWS_AS(NGramModel::train({}, 3), Error);
  CHECK_THROWS_AS(NGramModel::train(docs({"x"}), 2, Smoothing::kneser_ney(1.5)), Error);
  CHECK_THROWS_AS(NGramModel::train(docs({"x"}), 2, Smoothing::add_k(0)), Error);
}

TEST_CASE("serialization is deterministic and round-trips") {
  const auto corpus = docs({"one two three", "two three four", "four five"});
  const auto a = NGramModel::train(corpus, 3);
  const auto b = NGramModel::train(corpus, 3);
  std::ostringstream sa, sb;
  a.save(sa);
  b.save(sb);
  CHECK(sa.str() == sb.str());
  std::istringstream in(sa.str());
  const auto back = NGramModel::load(in);
  CHECK(back.vocab() == a.vocab());
  CHECK(back.perplexity("two three five") == a.perplexity("two three five"));

  std::istringstream bad("XXXX");
  CHECK_THROWS_AS(NGramModel::load(bad), Error);
  std::istringstream truncated(sa.str().substr(0, sa.str().size() / 2));
  CHECK_THROWS_AS(NGramModel::load(truncated), Error);
}

TEST_CASE("sharded counters merge to the same model") {
  const auto corpus = docs({"one two three", "two three four", "four five", "five one"});
  NGramCounter left(3), right(3), all(3);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (i % 2 ? right : left).add(corpus[i]);
    all.add(corpus[i]);
  }
  right.merge(left);
  std::ostringstream merged, whole;
  right.build(Smoothing::kneser_ney()).save(merged);
  all.build(Smoothing::kneser_ney()).save(whole);
  CHECK(merged.str() == whole.str());
  CHECK(right.sentences() == 4);
  CHECK_THROWS_AS(right.merge(NGramCounter(2)), Error);
}

TEST_CASE("lm_filter applies per-source thresholds") {
  const auto model = NGramModel::train(docs({"a b", "a c", "b c"}), 1, Smoothing::add_k(1.0));
  auto good = testing::doc("a a a", "wiki");
  auto bad = testing::doc("zz qq", "web");
  const double pg = model.perplexity(good.content);
  const double pb = model.perplexity(bad.content);
  REQUIRE(pg < pb);

  ThresholdTable table({{"wiki", pg}, {"web", pb - 0.01}});
  auto result = lm_filter({good, bad}, model, table);
  REQUIRE(result.kept.size() == 1);
  CHECK(result.kept[0] == good);
  CHECK(result.report.docs_dropped_by_rule.at("lm:perplexity") == 1);

  ThresholdTable open({}, std::numeric_limits<double>::infinity());
  CHECK(lm_filter({good, bad}, model, open).kept.size() == 2);

  ThresholdTable strict({{"wiki", 100.0}});
  CHECK_THROWS_WITH_AS(lm_filter({bad}, model, strict), doctest::Contains("web"), Error);

  const auto parsed = ThresholdTable::from_json(nlohmann::json::parse(R"({"wiki": 5, "*": 7})"));
  CHECK(parsed.for_source("wiki") == 5);
  CHECK(parsed.for_source("other") == 7);
  CHECK_THROWS_AS(ThresholdTable::from_json(nlohmann::json::parse(R"({"wiki": -1})")), Error);
}
