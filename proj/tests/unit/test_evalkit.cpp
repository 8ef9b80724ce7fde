#include <algorithm>
#include <cmath>
#include <random>

#include "curate/text.hpp"
#include "curate/evalkit.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace curate;

namespace {

PredictionRecord label(std::string pred, std::string gold) {
  PredictionRecord r;
  r.predicted = std::move(pred);
  r.gold = std::move(gold);
  return r;
}

PredictionRecord number(double pred, double gold) {
  PredictionRecord r;
  r.predicted = pred;
  r.gold = gold;
  return r;
}

PredictionRecord conf(double c, bool ok) {
  PredictionRecord r;
  r.confidence = c;
  r.correct = ok;
  return r;
}

}  // namespace

TEST_CASE("accuracy, mad and token F1 examples") {
  CHECK(accuracy({label("A", "A"), label("B", "C")}) == 0.5);
  CHECK(mad({number(7.5, 7.5), number(5.0, 6.0)}) == 0.5);
  CHECK(token_f1({label("T1059, T1105", "T1059")}) == doctest::Approx(2.0 / 3.0));
  CHECK(token_f1({label("a b", "b a")}) == 1.0);
  CHECK(token_f1({label("", "")}) == 1.0);
  CHECK(token_f1({label("x", "y")}) == 0.0);
  CHECK_THROWS_AS(accuracy({}), Error);
  CHECK_THROWS_AS(mad({label("A", "A")}), Error);
}

TEST_CASE("token F1 is micro-averaged") {
  // tp = 1 + 2, fp = 1 + 0, fn = 0 + 1
  const double f1 = token_f1({label("a b", "a"), label("c d", "c d e")});
  const double p = 3.0 / 4.0, r = 3.0 / 4.0;
  CHECK(f1 == doctest::Approx(2 * p * r / (p + r)));
}

TEST_CASE("records parse from json") {
  const auto r = PredictionRecord::from_json(nlohmann::json::parse(R"({"id":"1","predicted":["a","b"],"gold":"a b"})"));
  CHECK(r.is_correct() == false);
  const auto s = PredictionRecord::from_json(nlohmann::json::parse(R"({"id":"2","predicted":"B","gold":"B","confidence":0.4})"));
  CHECK(s.is_correct() == true);
  CHECK(*s.confidence == 0.4);
  const auto t = PredictionRecord::from_json(nlohmann::json::parse(R"({"id":"3","confidence":0.4,"correct":false})"));
  CHECK(t.is_correct() == false);
  CHECK_THROWS_AS(PredictionRecord::from_json(nlohmann::json::parse(R"({"id":"4","confidence":1.5})")), Error);

  testing::TempDir dir;
  testing::write_file(dir / "p.jsonl", R"({"id":"a","predicted":"A","gold":"A"})" "\n" R"({"id":"b","predicted":"A","gold":"B"})" "\n");
  CHECK(accuracy(read_predictions((dir / "p.jsonl").string())) == 0.5);
}

TEST_CASE("ECE hand example and edge cases") {
  const auto rep = ece({conf(0.9, true), conf(0.8, true), conf(0.7, false), conf(0.6, true)}, 10);
  CHECK(std::abs(rep.ece - 0.35) < 1e-12);
  CHECK(rep.total == 4);
  CHECK(rep.bins.size() == 10);
  CHECK(rep.bins[9].count == 1);
  CHECK(ece({conf(1.0, true), conf(1.0, true)}).ece == 0.0);
  CHECK(ece({conf(0.0, false)}).bins[0].count == 1);
  CHECK_THROWS_AS(ece({PredictionRecord{}}), Error);
  CHECK_THROWS_AS(ece({conf(0.5, true)}, 0), Error);
}

TEST_CASE("ECE properties") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 500; ++i) recs.push_back(conf(u(rng), u(rng) < 0.6));
  const auto base = ece(recs, 10);
  CHECK(base.ece >= 0.0);
  CHECK(base.ece <= 1.0);
  auto shuffled = recs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(ece(shuffled, 10).ece == doctest::Approx(base.ece).epsilon(1e-12));

  double acc = 0, mean_conf = 0;
  for (const auto& r : recs) {
    acc += *r.correct;
    mean_conf += *r.confidence;
  }
  CHECK(ece(recs, 1).ece == doctest::Approx(std::abs(acc - mean_conf) / 500.0));

  // merging partial reports equals the report of the whole stream
  auto left = ece({recs.begin(), recs.begin() + 200}, 10);
  left.merge(ece({recs.begin() + 200, recs.end()}, 10));
  CHECK(left.total == 500);
  CHECK(left.ece == doctest::Approx(base.ece).epsilon(1e-12));
  CHECK_THROWS_AS(left.merge(ece(recs, 5)), Error);
  CHECK(base.to_json()["bins"].size() == 10);
}

TEST_CASE("aggregate_cyber negates mad scores and validates the suite") {
  const std::vector<BenchmarkScore> llama{{"CISSP", 0.7073, Metric::accuracy}, {"MCQ", 0.6420, Metric::accuracy},
                                          {"RCM", 0.5910, Metric::accuracy},   {"VSP", 1.2712, Metric::mad},
                                          {"ATE", 0.2721, Metric::f1},         {"CMCQ", 0.8560, Metric::accuracy},
                                          {"CRCM", 0.4966, Metric::accuracy}};
  const double agg = aggregate_cyber(llama);
  CHECK(std::abs(agg - 2.2938) < 1e-9);
  CHECK(format_fixed(agg) == "2.29");

  auto scaled = llama;
  for (auto& s : scaled) s.value *= 0.5;
  CHECK(aggregate_cyber(scaled) == doctest::Approx(0.5 * agg));

  std::vector<std::string> expected{"CISSP", "MCQ", "RCM", "VSP", "ATE", "CMCQ", "CRCM"};
  CHECK(aggregate_cyber(llama, &expected) == agg);
  auto dup = llama;
  dup.push_back(llama[0]);
  CHECK_THROWS_WITH_AS(aggregate_cyber(dup, &expected), doctest::Contains("CISSP"), Error);
  auto missing = llama;
  missing.pop_back();
  CHECK_THROWS_WITH_AS(aggregate_cyber(missing, &expected), doctest::Contains("CRCM"), Error);
  auto zero = llama;
  for (auto& s : zero) s.value = 0;
  CHECK(aggregate_cyber(zero) == 0.0);
  auto bad = llama;
  bad[0].value = 1.5;
  CHECK_THROWS_AS(aggregate_cyber(bad), Error);
}

TEST_CASE("weighted aggregate and improvement formatting") {
  CHECK(format_fixed(aggregate_weighted(8.3491, 2.2938)) == "4.11");
  CHECK(std::abs(aggregate_weighted(8.3491, 2.2938) - 4.11039) < 1e-9);
  CHECK(aggregate_weighted(5.0, 1.0, 1.0, 0.0) == 5.0);
  CHECK_THROWS_AS(aggregate_weighted(1, 1, 0.5, 0.6), Error);
  CHECK(improvement_pct(2.0, 2.5) == doctest::Approx(25.0));
  CHECK(format_change(15.94) == "+15.9%");
  CHECK(format_change(-2.0) == "-2.0%");
  CHECK(mae_agreement({8, 9}, {7, 9}) == 0.5);
  CHECK(mae_agreement({1, 2}, {1, 2}) == 0.0);
  CHECK_THROWS_AS(mae_agreement({1}, {1, 2}), Error);
}

TEST_CASE("metric names") {
  CHECK(parse_metric("mad") == Metric::mad);
  CHECK(metric_name(Metric::f1) == "f1");
  CHECK_THROWS_AS(parse_metric("bleu"), Error);
}
