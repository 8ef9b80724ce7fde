#pragma once

// Order-N word language model with add-k or interpolated Kneser-Ney
// smoothing, used to score documents by perplexity.
//
// Every order m stores two tables:
//   alpha_m(h, w)  discounted mass of an observed m-gram h·w
//   gamma_m(h)     interpolation weight handed to order m-1 for context h
// and P_m(w | h) = alpha_m(h, w) + gamma_m(h) * P_{m-1}(w | h'), where h' drops
// the oldest word of h. A context absent from order m has gamma = 1 and
// alpha = 0. P_0 is uniform over the predictable vocabulary.
//
// Sentences are the non-empty lines of a document. For order N >= 2 each
// sentence is padded with N-1 <s> and terminated by </s>; an order-1 model
// has no sentence markers and is a plain bag-of-tokens unigram.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "curate/corpus_io.hpp"
#include "curate/quality_filters.hpp"

namespace curate {

enum class SmoothingKind : std::uint32_t { add_k = 0, kneser_ney = 1 };

struct Smoothing {
  SmoothingKind kind = SmoothingKind::kneser_ney;
  double param = 0.75;  // k for add_k, discount for kneser_ney

  static Smoothing add_k(double k) { return {SmoothingKind::add_k, k}; }
  static Smoothing kneser_ney(double discount = 0.75) { return {SmoothingKind::kneser_ney, discount}; }
  void validate() const;
};

class NGramModel;

/// Raw highest-order n-gram counts. Counters built on separate shards merge
/// associatively; the resulting model does not depend on shard order.
class NGramCounter {
 public:
  explicit NGramCounter(int order);

  void add_text(std::string_view text);
  void add(const Document& doc) { add_text(doc.content); }
  NGramCounter& merge(const NGramCounter& other);

  int order() const { return order_; }
  std::size_t sentences() const { return sentences_; }
  std::size_t tokens() const { return tokens_; }

  /// Throws Error if nothing was counted.
  NGramModel build(Smoothing smoothing) const;

 private:
  std::uint32_t intern(const std::string& token);

  int order_;
  std::vector<std::string> vocab_;  // local ids; 0..2 are <unk>, <s>, </s>
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::unordered_map<std::string, std::uint64_t> counts_;  // packed local ids
  std::size_t sentences_ = 0;
  std::size_t tokens_ = 0;
};

class NGramModel {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr std::uint32_t kBos = 1;
  static constexpr std::uint32_t kEos = 2;

  /// Trains on the corpus. Throws Error when the corpus yields no tokens.
  static NGramModel train(const std::vector<Document>& corpus, int order = 5,
                          Smoothing smoothing = Smoothing::kneser_ney());

  int order() const { return order_; }
  const Smoothing& smoothing() const { return smoothing_; }
  const std::vector<std::string>& vocab() const { return vocab_; }

  std::uint32_t id(std::string_view token) const;
  /// Ids that can be predicted: everything except <s>, and except </s> for order 1.
  std::vector<std::uint32_t> predictable_ids() const;
  std::size_t predictable_size() const;

  /// P(word | context). Only the last order-1 entries of the context are used;
  /// shorter contexts are left-padded with <s>.
  double prob(std::span<const std::uint32_t> context, std::uint32_t word) const;
  double prob(const std::vector<std::string>& context, const std::string& word) const;

  /// exp(-mean ln P) over scored tokens (words plus </s>, never <s>).
  /// Throws Error if the text has no tokens.
  double perplexity(std::string_view text) const;

  void save(std::ostream& os) const;
  void save(const std::filesystem::path& path) const;
  static NGramModel load(std::istream& is);
  static NGramModel load(const std::filesystem::path& path);

 private:
  friend class NGramCounter;
  NGramModel() = default;

  double prob_at(int m, std::span<const std::uint32_t> context, std::uint32_t word) const;

  int order_ = 0;
  Smoothing smoothing_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  // index m-1 holds order m
  std::vector<std::unordered_map<std::string, double>> alpha_;
  std::vector<std::unordered_map<std::string, double>> gamma_;
};

struct PerplexityThreshold {
  std::string source;
  double max_perplexity;
};

struct LmFilterResult {
  std::vector<Document> kept;
  FilterReport report;
};

/// Per-source perplexity thresholds with an optional fallback.
class ThresholdTable {
 public:
  ThresholdTable() = default;
  ThresholdTable(const std::vector<PerplexityThreshold>& thresholds,
                 std::optional<double> default_threshold = std::nullopt);

  /// {"source": max_perplexity, ...}; the key "*" sets the default.
  static ThresholdTable from_json(const nlohmann::json& j);

  /// Throws Error naming the source when no threshold applies.
  double for_source(const std::string& source) const;
  void set_default(double value) { default_ = value; }

 private:
  std::map<std::string, double> by_source_;
  std::optional<double> default_;
};

/// Keeps documents whose perplexity is <= their source's threshold.
/// Documents with no scorable tokens are dropped under rule "lm:empty".
std::optional<Document> lm_filter_one(const Document& doc, const NGramModel& model,
                                      const ThresholdTable& thresholds, FilterReport* report = nullptr);
LmFilterResult lm_filter(const std::vector<Document>& docs, const NGramModel& model,
                         const ThresholdTable& thresholds);

}  // namespace curate
