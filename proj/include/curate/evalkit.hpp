#pragma once

// Benchmark metrics: accuracy, mean absolute deviation, token-set F1,
// expected calibration error, and the aggregate scores used to compare
// models across a benchmark suite.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace curate {

/// A label, a number, or a set of tokens.
using PredValue = std::variant<std::string, double, std::vector<std::string>>;

struct PredictionRecord {
  std::string id;
  std::optional<PredValue> predicted;
  std::optional<PredValue> gold;
  std::optional<double> confidence;
  std::optional<bool> correct;

  /// Explicit `correct` if given, otherwise predicted == gold.
  std::optional<bool> is_correct() const;

  static PredictionRecord from_json(const nlohmann::json& j);
};

std::vector<PredictionRecord> read_predictions(const std::string& path);

double accuracy(const std::vector<PredictionRecord>& records);
double mad(const std::vector<PredictionRecord>& records);
/// Micro-averaged F1 over token sets. Strings are split on commas and
/// whitespace. If neither side ever has a token the score is 1.
double token_f1(const std::vector<PredictionRecord>& records);

struct CalibrationBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
  double confidence_sum = 0.0;
  std::size_t correct = 0;

  double mean_confidence() const { return count ? confidence_sum / static_cast<double>(count) : 0.0; }
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

struct CalibrationReport {
  std::size_t num_bins = 10;
  std::vector<CalibrationBin> bins;
  std::size_t total = 0;
  double ece = 0.0;

  /// Adds the per-bin counts and sums of another report with the same bins.
  void merge(const CalibrationReport& other);
  nlohmann::json to_json() const;
};

/// Bin b is [b/n, (b+1)/n); the last bin also takes confidence 1.
CalibrationReport ece(const std::vector<PredictionRecord>& records, std::size_t num_bins = 10);

enum class Metric { accuracy, mad, f1 };
std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view s);

struct BenchmarkScore {
  std::string name;
  double value = 0.0;
  Metric metric = Metric::accuracy;
};

/// Sum of all scores with mad scores negated (lower is better for them).
/// With `expected`, every listed benchmark must be present exactly once and
/// nothing else may appear.
double aggregate_cyber(const std::vector<BenchmarkScore>& scores,
                       const std::vector<std::string>* expected = nullptr);

double aggregate_weighted(double mt_bench, double cyber_agg, double w_mt = 0.3, double w_cyber = 0.7);

double mae_agreement(const std::vector<double>& a, const std::vector<double>& b);

/// (new - old) / old * 100.
double improvement_pct(double old_value, double new_value);

/// "2.29" style two-decimal rendering, and "+15.9%" style changes.
std::string format_fixed(double v, int decimals = 2);
std::string format_change(double pct);

}  // namespace curate
