#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "curate/param_merge.hpp"
#include "curate/text.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace curate;

namespace {

TaskVector tv1(std::initializer_list<double> values) {
  TaskVector tv;
  TaskVector::Array a(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) a[i++] = v;
  tv.entries.emplace("w", a);
  return tv;
}

ParameterMap pm(std::initializer_list<float> values) {
  ParameterMap m;
  ParameterMap::Array a(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (float v : values) a[i++] = v;
  m.entries.emplace("w", a);
  return m;
}

std::vector<double> values(const TaskVector& tv) {
  const auto& a = tv.entries.at("w");
  return {a.data(), a.data() + a.size()};
}

ParameterMap random_map(std::mt19937_64& rng) {
  std::normal_distribution<float> nd(0.0f, 0.02f);
  ParameterMap m;
  for (const auto& [name, len] : {std::pair{"layer.0.weight", 300}, std::pair{"layer.0.bias", 17}, std::pair{"head", 64}}) {
    ParameterMap::Array a(len);
    for (auto& x : a) x = nd(rng);
    m.entries.emplace(name, a);
  }
  m.metadata["arch"] = "toy";
  return m;
}

}  // namespace

TEST_CASE("task vectors subtract and reapply") {
  const auto base = pm({1, 2});
  const auto model = pm({3, 1});
  CHECK(values(task_vector(model, base)) == std::vector<double>{2, -1});
  CHECK(apply_task_vector(base, task_vector(model, base)) == model);
  CHECK(values(task_vector(base, base)) == std::vector<double>{0, 0});

  auto other = pm({1, 2, 3});
  CHECK_THROWS_WITH_AS(task_vector(other, base), doctest::Contains("w (length"), Error);
  other.entries.emplace("extra", ParameterMap::Array::Zero(1));
  CHECK_THROWS_WITH_AS(task_vector(other, base), doctest::Contains("extra"), Error);
}

TEST_CASE("dare drops and rescales with stateless draws") {
  const auto tv = tv1({2, 4});
  CHECK(dare(tv, 0.0, 1) == tv);
  CHECK_THROWS_AS(dare(tv, 1.0, 1), Error);

  // Find a seed whose draw drops index 0 and keeps index 1, from the draw function itself.
  const std::uint64_t stream = hash64("w");
  std::uint64_t seed = 0;
  while (!(counter_uniform(seed, stream, 0) < 0.5 && counter_uniform(seed, stream, 1) >= 0.5)) ++seed;
  CHECK(values(dare(tv, 0.5, seed)) == std::vector<double>{0, 8});
  CHECK(dare(tv, 0.5, seed) == dare(tv, 0.5, seed));
}

TEST_CASE("dare is unbiased") {
  const auto tv = tv1({1, 1, 1, 1});
  std::vector<double> sum(4, 0.0);
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    const auto v = values(dare(tv, 0.3, static_cast<std::uint64_t>(s)));
    for (int i = 0; i < 4; ++i) sum[i] += v[i];
  }
  for (double x : sum) CHECK(std::abs(x / draws - 1.0) < 0.01);
}

TEST_CASE("ties trim keeps the largest magnitudes per array") {
  CHECK(values(ties_trim(tv1({3, 1, -2, 0.5}), 0.5)) == std::vector<double>{3, 0, -2, 0});
  CHECK(values(ties_trim(tv1({1, -1, 1, 1}), 0.5)) == std::vector<double>{1, -1, 0, 0});
  CHECK(values(ties_trim(tv1({1, 2, 3, 4, 5, 6}), 0.5)) == std::vector<double>{0, 0, 0, 4, 5, 6});
  CHECK(values(ties_trim(tv1({1, 2, 3}), 0.1)) == std::vector<double>{0, 0, 3});
  CHECK_THROWS_AS(ties_trim(tv1({1}), 0.0), Error);
}

TEST_CASE("ties_merge hand-traced example") {
  const auto merged = ties_merge({{tv1({2, -2, 1}), 1.0}, {tv1({1, -1, -3}), 1.0}}, 1.0);
  CHECK(values(merged) == std::vector<double>{1.5, -1.5, -3});
  CHECK(ties_merge({{tv1({2, -2, 1}), 1.0}}, 1.0) == tv1({2, -2, 1}));
  // exact zero sum elects +
  CHECK(values(ties_merge({{tv1({1}), 1.0}, {tv1({-1}), 1.0}}, 1.0)) == std::vector<double>{1});
  CHECK_THROWS_AS(ties_merge({}, 1.0), Error);
  CHECK_THROWS_AS(ties_merge({{tv1({1}), -1.0}}, 1.0), Error);
}

TEST_CASE("ties_merge output agrees with the elected sign") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<TaskVector, double>> tvs;
    for (int m = 0; m < 3; ++m) {
      TaskVector tv;
      TaskVector::Array a(20);
      for (auto& x : a) x = nd(rng);
      tv.entries.emplace("w", a);
      tvs.emplace_back(tv, std::uniform_real_distribution<double>(0.1, 1.0)(rng));
    }
    const auto merged = values(ties_merge(tvs, 0.6));
    std::vector<TaskVector> trimmed;
    for (const auto& [tv, w] : tvs) trimmed.push_back(ties_trim(tv, 0.6));
    for (Eigen::Index i = 0; i < 20; ++i) {
      double elected = 0;
      for (std::size_t m = 0; m < 3; ++m) elected += tvs[m].second * trimmed[m].entries.at("w")[i];
      const double out = merged[static_cast<std::size_t>(i)];
      CHECK((out == 0.0 || (out > 0) == (elected >= 0)));
    }
  }
}

TEST_CASE("dare_ties identity chain is bitwise exact") {
  std::mt19937_64 rng(7);
  const auto base = random_map(rng);
  const auto model = random_map(rng);
  const auto out = dare_ties(base, {{&model, 1.0}}, MergeOptions{0.0, 1.0, 3});
  CHECK(out == model);
  for (const auto& [name, a] : model.entries) {
    CHECK(std::memcmp(a.data(), out.entries.at(name).data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0);
  }
  CHECK(dare_ties(base, {{&base, 0.7}}, MergeOptions{}) == base);
  const auto x = dare_ties(base, {{&model, 0.75}, {&base, 0.25}}, MergeOptions{0.5, 0.5, 9});
  CHECK(x == dare_ties(base, {{&model, 0.75}, {&base, 0.25}}, MergeOptions{0.5, 0.5, 9}));
}

TEST_CASE("grid_search recovers a known optimum") {
  // Coordinate j holds a = +1 and b = -x_j. The elected sign is + exactly when
  // (0.5 + w) / (0.5 - w) >= x_j, so counting positive coordinates recovers w.
  ParameterMap base, a, b;
  const int n = 10;
  ParameterMap::Array zero = ParameterMap::Array::Zero(n), pa(n), pb(n);
  for (int j = 0; j < n; ++j) {
    const double mid = 0.05 * j + 0.025;
    pa[j] = 1.0f;
    pb[j] = -static_cast<float>((0.5 + mid) / (0.5 - mid));
  }
  base.entries.emplace("w", zero);
  a.entries.emplace("w", pa);
  b.entries.emplace("w", pb);
  const auto decode = [](const ParameterMap& m) { return 0.05 * (m.entries.at("w") > 0.0f).count(); };
  const MergeOptions exact{0.0, 1.0, 0};

  int calls = 0;
  const auto result = grid_search(base, a, b, [&](const ParameterMap& m) {
    ++calls;
    return -std::abs(decode(m) - 0.25);
  }, 0.05, exact);
  CHECK(calls == 11);
  CHECK(result.table.size() == 11);
  CHECK(result.best.w == doctest::Approx(0.25));
  CHECK(result.best.weight_a() == doctest::Approx(0.75));
  for (const auto& p : result.table) CHECK(decode(dare_ties(base, {{&a, 0.5 + p.w}, {&b, 0.5 - p.w}}, exact)) == doctest::Approx(p.w));

  const auto flat = grid_search(base, a, b, [](const ParameterMap&) { return 1.0; }, 0.05, exact);
  CHECK(flat.best.w == 0.0);

  const auto partial = grid_search(base, a, b, [&](const ParameterMap& m) {
    if (decode(m) < 0.2) throw std::runtime_error("scorer crashed");
    return decode(m) > 0.4 ? std::nan("") : 1.0;
  }, 0.1, exact);
  CHECK(partial.table.size() == 6);
  CHECK(partial.best.w == doctest::Approx(0.2));
  CHECK(partial.table[0].error == "scorer crashed");
  CHECK(partial.table[5].error == "non-finite score");
  CHECK(partial.to_json()["table"][0]["score"].is_null());

  CHECK_THROWS_AS(grid_search(base, a, b, [](const ParameterMap&) -> double { throw std::runtime_error("x"); }), Error);
  CHECK_THROWS_AS(grid_search(base, a, b, [](const ParameterMap&) { return 0.0; }, 0.07), Error);
}

TEST_CASE("parameter maps save and load") {
  testing::TempDir dir;
  std::mt19937_64 rng(1);
  auto m = random_map(rng);
  m.entries.emplace("weird/name:1", ParameterMap::Array::Ones(3));
  save_parameter_map(m, dir / "m");
  const auto back = load_parameter_map(dir / "m");
  CHECK(back == m);
  CHECK(back.metadata == m.metadata);
  CHECK(back.num_parameters() == 300 + 17 + 64 + 3);

  auto bad = m;
  bad.entries.at("head")[0] = std::numeric_limits<float>::quiet_NaN();
  save_parameter_map(bad, dir / "bad");
  CHECK_THROWS_AS(load_parameter_map(dir / "bad"), Error);
  CHECK_THROWS_AS(load_parameter_map(dir / "missing"), Error);
}
