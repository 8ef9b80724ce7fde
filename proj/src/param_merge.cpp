#include "curate/param_merge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

namespace curate {

TaskVector task_vector(const ParameterMap& model, const ParameterMap& base) {
  check_compatible(model, base);
  TaskVector tv;
  tv.metadata = model.metadata;
  for (const auto& [name, b] : base.entries) {
    tv.entries.emplace(name, model.entries.at(name).cast<double>() - b.cast<double>());
  }
  return tv;
}

ParameterMap apply_task_vector(const ParameterMap& base, const TaskVector& tv) {
  check_compatible(base, tv);
  ParameterMap out;
  out.metadata = base.metadata;
  for (const auto& [name, b] : base.entries) {
    out.entries.emplace(name, (b.cast<double>() + tv.entries.at(name)).cast<float>());
  }
  return out;
}

TaskVector dare(const TaskVector& tv, double drop_prob, std::uint64_t seed) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw Error("drop probability must be in [0, 1)");
  if (drop_prob == 0.0) return tv;
  const double scale = 1.0 / (1.0 - drop_prob);
  TaskVector out;
  out.metadata = tv.metadata;
  for (const auto& [name, a] : tv.entries) {
    const std::uint64_t stream = hash64(name);
    TaskVector::Array r(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const bool drop = counter_uniform(seed, stream, static_cast<std::uint64_t>(i)) < drop_prob;
      r[i] = drop ? 0.0 : a[i] * scale;
    }
    out.entries.emplace(name, std::move(r));
  }
  return out;
}

TaskVector ties_trim(const TaskVector& tv, double density) {
  if (!(density > 0.0 && density <= 1.0)) throw Error("density must be in (0, 1]");
  TaskVector out;
  out.metadata = tv.metadata;
  for (const auto& [name, a] : tv.entries) {
    const auto len = static_cast<std::size_t>(a.size());
    // The small slack keeps products like 0.5 * 6 from rounding up to 4.
    const auto k = std::min(len, static_cast<std::size_t>(std::ceil(density * static_cast<double>(len) - 1e-9)));
    if (k == len) {
      out.entries.emplace(name, a);
      continue;
    }
    std::vector<std::size_t> idx(len);
    std::iota(idx.begin(), idx.end(), 0);
    auto larger = [&](std::size_t x, std::size_t y) {
      const double ax = std::abs(a[static_cast<Eigen::Index>(x)]);
      const double ay = std::abs(a[static_cast<Eigen::Index>(y)]);
      return ax > ay || (ax == ay && x < y);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), larger);
    TaskVector::Array r = TaskVector::Array::Zero(a.size());
    for (std::size_t j = 0; j < k; ++j) {
      const auto i = static_cast<Eigen::Index>(idx[j]);
      r[i] = a[i];
    }
    out.entries.emplace(name, std::move(r));
  }
  return out;
}

TaskVector ties_merge(const std::vector<std::pair<TaskVector, double>>& tvs, double density) {
  if (tvs.empty()) throw Error("ties_merge needs at least one task vector");
  for (const auto& [tv, w] : tvs) {
    if (!(w >= 0.0)) throw Error("merge weights must be >= 0");
    check_compatible(tvs.front().first, tv);
  }
  std::vector<TaskVector> trimmed;
  trimmed.reserve(tvs.size());
  for (const auto& [tv, _] : tvs) trimmed.push_back(ties_trim(tv, density));

  TaskVector out;
  out.metadata = tvs.front().first.metadata;
  for (const auto& [name, first] : trimmed.front().entries) {
    const Eigen::Index n = first.size();
    TaskVector::Array elected = TaskVector::Array::Zero(n);
    for (std::size_t m = 0; m < trimmed.size(); ++m) elected += tvs[m].second * trimmed[m].entries.at(name);
    TaskVector::Array num = TaskVector::Array::Zero(n);
    TaskVector::Array den = TaskVector::Array::Zero(n);
    for (std::size_t m = 0; m < trimmed.size(); ++m) {
      const auto& v = trimmed[m].entries.at(name);
      const double w = tvs[m].second;
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool agrees = elected[i] >= 0.0 ? v[i] > 0.0 : v[i] < 0.0;
        if (agrees) {
          num[i] += w * v[i];
          den[i] += w;
        }
      }
    }
    TaskVector::Array r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = den[i] > 0.0 ? num[i] / den[i] : 0.0;
    out.entries.emplace(name, std::move(r));
  }
  return out;
}

ParameterMap dare_ties(const ParameterMap& base, const std::vector<std::pair<const ParameterMap*, double>>& models,
                       const MergeOptions& options) {
  if (models.empty()) throw Error("dare_ties needs at least one model");
  std::vector<std::pair<TaskVector, double>> tvs;
  tvs.reserve(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::uint64_t seed = mix64(options.seed ^ mix64(i + 1));
    tvs.emplace_back(dare(task_vector(*models[i].first, base), options.drop_prob, seed), models[i].second);
  }
  return apply_task_vector(base, ties_merge(tvs, options.density));
}

nlohmann::json GridResult::to_json() const {
  nlohmann::json j;
  j["best"] = {{"w", best.w}, {"weight_a", best.weight_a()}, {"weight_b", best.weight_b()}};
  j["table"] = nlohmann::json::array();
  for (const auto& p : table) {
    nlohmann::json row{{"w", p.w}};
    row["score"] = p.score ? nlohmann::json(*p.score) : nlohmann::json(nullptr);
    if (!p.error.empty()) row["error"] = p.error;
    j["table"].push_back(std::move(row));
  }
  return j;
}

GridResult grid_search(const ParameterMap& base, const ParameterMap& model_a, const ParameterMap& model_b,
                       const MergeScorer& scorer, double step, const MergeOptions& options) {
  if (!(step > 0.0 && step <= 0.5)) throw Error("step must be in (0, 0.5]");
  const long n = std::lround(0.5 / step);
  if (std::abs(static_cast<double>(n) * step - 0.5) > 1e-9) throw Error("step must divide 0.5");
  check_compatible(base, model_a);
  check_compatible(base, model_b);

  GridResult result;
  std::optional<double> best_score;
  for (long k = 0; k <= n; ++k) {
    GridPoint point;
    point.w = 0.5 * static_cast<double>(k) / static_cast<double>(n);
    const MergeRatio ratio{point.w};
    try {
      const auto merged =
          dare_ties(base, {{&model_a, ratio.weight_a()}, {&model_b, ratio.weight_b()}}, options);
      point.score = scorer(merged);
      if (!std::isfinite(*point.score)) {
        point.error = "non-finite score";
        point.score.reset();
      }
    } catch (const std::exception& e) {
      point.error = e.what();
    }
    if (point.score && (!best_score || *point.score > *best_score)) {
      best_score = point.score;
      result.best = ratio;
    }
    result.table.push_back(std::move(point));
  }
  if (!best_score) throw Error("every grid point failed to score");
  return result;
}

// ---------------------------------------------------------------------------

namespace {

std::string file_name_for(const std::string& name, std::size_t i) {
  std::string safe;
  for (char c : name) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return std::to_string(i) + "_" + safe + ".f32";
}

}  // namespace

void save_parameter_map(const ParameterMap& map, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  std::size_t i = 0;
  for (const auto& [name, a] : map.entries) {
    const auto file = file_name_for(name, i++);
    std::ofstream os(dir / file, std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / file).string());
    for (Eigen::Index k = 0; k < a.size(); ++k) le::write_f32(os, a[k]);
    if (!os) throw Error("failed writing " + (dir / file).string());
    manifest[name] = {{"length", a.size()}, {"dtype", "f32"}, {"file", file}};
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  if (!map.metadata.empty()) std::ofstream(dir / "metadata.json") << nlohmann::json(map.metadata).dump(2) << "\n";
}

ParameterMap load_parameter_map(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw Error("no manifest.json in " + dir.string());
  const auto manifest = nlohmann::json::parse(mf, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) throw Error("invalid manifest in " + dir.string());
  ParameterMap map;
  for (const auto& [name, entry] : manifest.items()) {
    if (entry.value("dtype", "") != "f32") throw Error(name + ": only dtype f32 is supported");
    const auto length = entry.at("length").get<std::size_t>();
    const auto file = dir / entry.at("file").get<std::string>();
    if (!std::filesystem::exists(file) || std::filesystem::file_size(file) != 4 * length) {
      throw Error(name + ": " + file.string() + " does not hold " + std::to_string(length) + " floats");
    }
    std::ifstream is(file, std::ios::binary);
    ParameterMap::Array a(static_cast<Eigen::Index>(length));
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      a[k] = le::read_f32(is);
      if (!std::isfinite(a[k])) throw Error(name + ": non-finite value at index " + std::to_string(k));
    }
    map.entries.emplace(name, std::move(a));
  }
  if (std::ifstream md(dir / "metadata.json"); md) {
    const auto j = nlohmann::json::parse(md, nullptr, false);
    if (j.is_object()) {
      for (const auto& [k, v] : j.items()) map.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return map;
}

}  // namespace curate
