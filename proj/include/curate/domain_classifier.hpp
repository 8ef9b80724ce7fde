#pragma once

// Binary relevance classifier over hashed word n-gram features, plus the
// score-bin calibration used to pick a filtering threshold.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

/// Sorted (index, value) pairs, L2-normalized.
using SparseFeatures = std::vector<std::pair<std::uint32_t, float>>;

struct LabeledDoc {
  Document doc;
  int label = 0;  // 1 = in-domain
};

struct ClassifierScore {
  double value = 0.5;
  bool empty_input = false;  // no features; value is sigmoid(bias)
};

class LinearClassifier {
 public:
  static constexpr std::size_t kDefaultDim = std::size_t{1} << 20;
  static constexpr std::uint64_t kDefaultHashSeed = 0x6c8e9cf570932bd5ULL;

  explicit LinearClassifier(std::size_t feature_dim = kDefaultDim, std::uint64_t hash_seed = kDefaultHashSeed,
                            int max_ngram = 2);

  std::size_t feature_dim() const { return static_cast<std::size_t>(weights_.size()); }
  std::uint64_t hash_seed() const { return hash_seed_; }
  int max_ngram() const { return max_ngram_; }

  Eigen::VectorXf& weights() { return weights_; }
  const Eigen::VectorXf& weights() const { return weights_; }
  float& bias() { return bias_; }
  float bias() const { return bias_; }

  /// Bucket of a single n-gram string ("a" or "a b").
  std::uint32_t bucket(std::string_view gram) const;
  /// Term frequencies of word 1..max_ngram grams, hashed and L2-normalized.
  SparseFeatures features(std::string_view text) const;

  double margin(const SparseFeatures& x) const;
  ClassifierScore score(std::string_view text) const;
  ClassifierScore score(const Document& doc) const { return score(doc.content); }

  void save(std::ostream& os) const;
  void save(const std::filesystem::path& path) const;
  static LinearClassifier load(std::istream& is);
  static LinearClassifier load(const std::filesystem::path& path);

 private:
  Eigen::VectorXf weights_;
  float bias_ = 0.0f;
  std::uint64_t hash_seed_;
  int max_ngram_;
};

/// Numerically stable logistic function, clamped into the open interval (0,1).
double sigmoid(double margin);

/// All positives (label 1) plus a seeded uniform sample of
/// neg_ratio * |positives| background documents (label 0), shuffled.
/// Throws Error if the background is too small.
std::vector<LabeledDoc> assemble_training_set(const std::vector<Document>& positives,
                                              const std::vector<Document>& background, std::size_t neg_ratio = 10,
                                              std::uint64_t seed = 0);

struct TrainOptions {
  int epochs = 5;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
  std::size_t feature_dim = LinearClassifier::kDefaultDim;
  std::uint64_t hash_seed = LinearClassifier::kDefaultHashSeed;
  int max_ngram = 2;
};

struct TrainResult {
  LinearClassifier model;
  double train_accuracy = 0.0;
};

/// Logistic regression by seeded SGD. Throws Error on single-class data.
TrainResult train_classifier(const std::vector<LabeledDoc>& data, const TrainOptions& options = {});

struct ScoreBin {
  double low = 0.0;
  double high = 1.0;
  std::size_t population = 0;
  std::size_t sampled = 0;
  std::size_t relevant = 0;
  std::optional<double> ratio;  // absent when nothing was sampled
};

struct BinReport {
  std::vector<ScoreBin> bins;  // ordered from the highest scores down
  std::optional<double> threshold_selected;
  nlohmann::json to_json() const;
  static BinReport from_json(const nlohmann::json& j);
};

/// 1, 0.9, 0.8, ..., 0.1, 0.05, 0.03, 0.01, 0.005, 0.003, 0.001, 0:
/// finer bins where low scores hold most of the volume.
std::vector<double> default_bin_edges();

using Labeler = std::function<bool(const Document&)>;

/// Bins are (low, high] with the lowest bin closed at 0; edges must be
/// strictly decreasing from 1 to 0. Each bin is sampled uniformly (seeded)
/// up to sample_per_bin documents, which the labeler judges.
BinReport bin_calibration(const std::vector<std::pair<Document, double>>& scored, const std::vector<double>& edges,
                          std::size_t sample_per_bin, const Labeler& labeler, std::uint64_t seed);

/// Smallest lower edge such that every populated bin at or above it has
/// ratio >= min_ratio. Throws Error if even the top populated bin fails.
double select_threshold(const BinReport& report, double min_ratio = 0.5);

}  // namespace curate
