#pragma once

// Task-vector model merging (DARE drop-and-rescale, TIES trim/elect/merge)
// over named flat parameter arrays, and the merge-ratio grid search.
//
// Weights are stored as float32; task vectors are kept in double so that
// base + (model - base) reproduces model bit for bit after rounding back.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "curate/text.hpp"
#include "json.hpp"

namespace curate {

template <typename Scalar>
struct BasicParameterMap {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  std::map<std::string, Array> entries;
  std::map<std::string, std::string> metadata;

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& [_, a] : entries) n += static_cast<std::size_t>(a.size());
    return n;
  }

  template <typename Other>
  BasicParameterMap<Other> cast() const {
    BasicParameterMap<Other> out;
    out.metadata = metadata;
    for (const auto& [name, a] : entries) out.entries.emplace(name, a.template cast<Other>());
    return out;
  }

  friend bool operator==(const BasicParameterMap& a, const BasicParameterMap& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (auto ia = a.entries.begin(), ib = b.entries.begin(); ia != a.entries.end(); ++ia, ++ib) {
      if (ia->first != ib->first || ia->second.size() != ib->second.size()) return false;
      if ((ia->second != ib->second).any()) return false;
    }
    return true;
  }
};

using ParameterMap = BasicParameterMap<float>;
using TaskVector = BasicParameterMap<double>;

/// Throws Error listing every name that is missing on either side or whose
/// length differs.
template <typename A, typename B>
void check_compatible(const BasicParameterMap<A>& a, const BasicParameterMap<B>& b) {
  std::string bad;
  auto note = [&](const std::string& what) { bad += (bad.empty() ? "" : ", ") + what; };
  for (const auto& [name, arr] : a.entries) {
    auto it = b.entries.find(name);
    if (it == b.entries.end()) {
      note(name + " (missing)");
    } else if (it->second.size() != arr.size()) {
      note(name + " (length " + std::to_string(arr.size()) + " vs " + std::to_string(it->second.size()) + ")");
    }
  }
  for (const auto& [name, _] : b.entries) {
    if (!a.entries.contains(name)) note(name + " (unexpected)");
  }
  if (!bad.empty()) throw Error("parameter maps differ: " + bad);
}

/// model - base, elementwise per name.
TaskVector task_vector(const ParameterMap& model, const ParameterMap& base);
/// base + tv rounded to float32.
ParameterMap apply_task_vector(const ParameterMap& base, const TaskVector& tv);

/// Drops every element with probability p and rescales survivors by
/// 1/(1-p). The draw for element i of array `name` depends only on
/// (seed, name, i).
TaskVector dare(const TaskVector& tv, double drop_prob, std::uint64_t seed);

/// Keeps the ceil(density * len) largest-magnitude entries of each array
/// (ties broken by lower index).
TaskVector ties_trim(const TaskVector& tv, double density);

/// Trim, elect the sign of the weighted sum per coordinate (zero elects +),
/// then take the weighted mean of the nonzero entries agreeing with it.
TaskVector ties_merge(const std::vector<std::pair<TaskVector, double>>& tvs, double density);

struct MergeOptions {
  double drop_prob = 0.5;
  double density = 0.5;
  std::uint64_t seed = 0;
};

/// base + ties_merge(dare(model_i - base)). Model i uses seed mixed with i.
ParameterMap dare_ties(const ParameterMap& base, const std::vector<std::pair<const ParameterMap*, double>>& models,
                       const MergeOptions& options);

struct MergeRatio {
  double w = 0.0;
  double weight_a() const { return 0.5 + w; }
  double weight_b() const { return 0.5 - w; }
};

struct GridPoint {
  double w = 0.0;
  std::optional<double> score;
  std::string error;
};

struct GridResult {
  MergeRatio best;
  std::vector<GridPoint> table;
  nlohmann::json to_json() const;
};

using MergeScorer = std::function<double(const ParameterMap&)>;

/// Evaluates w = 0, step, ..., 0.5 with weights (0.5+w, 0.5-w). The best
/// score wins, ties going to the smaller w. Scorer exceptions are recorded
/// and the point skipped; if every point fails an Error is thrown.
GridResult grid_search(const ParameterMap& base, const ParameterMap& model_a, const ParameterMap& model_b,
                       const MergeScorer& scorer, double step = 0.05, const MergeOptions& options = {});

/// Directory layout: manifest.json {name: {length, dtype: "f32", file}},
/// optional metadata.json, one raw little-endian float32 file per name.
void save_parameter_map(const ParameterMap& map, const std::filesystem::path& dir);
/// Throws Error on non-finite values, size mismatches or unknown dtypes.
ParameterMap load_parameter_map(const std::filesystem::path& dir);

}  // namespace curate
