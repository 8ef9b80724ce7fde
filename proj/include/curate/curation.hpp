#pragma once

// LLM-in-the-loop curation: style rewriting, judge-score filtering and
// rejection sampling against verified answers.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curate/completion_client.hpp"
#include "curate/corpus_io.hpp"

namespace curate {

enum class Style { blog, textbook, qa };

std::string_view style_name(Style s);
Style parse_style(std::string_view name);

/// A prompt template with exactly one {TEXT} placeholder.
class StyleTemplate {
 public:
  static constexpr std::string_view kPlaceholder = "{TEXT}";

  /// Throws Error unless the placeholder occurs exactly once.
  StyleTemplate(Style style, std::string text);
  static StyleTemplate load(Style style, const std::filesystem::path& path);

  Style style() const { return style_; }
  const std::string& text() const { return text_; }
  /// Single-pass substitution: placeholders inside `value` are left alone.
  std::string render(std::string_view value) const;

 private:
  Style style_;
  std::string text_;
  std::size_t pos_;
};

/// Throws Error on empty content.
std::string render_rewrite_prompt(const Document& doc, const StyleTemplate& tpl);

struct AugmentOptions {
  std::uint64_t seed = 0;
  RetryPolicy retry;
  std::size_t max_concurrency = 1;
  std::size_t error_budget = 100;  // failed documents tolerated before aborting
};

struct AugmentFailure {
  std::size_t index;
  std::string url;
  std::string client;
  std::string reason;
};

struct AugmentReport {
  std::size_t total = 0;
  std::size_t rewritten = 0;
  std::vector<AugmentFailure> failures;
  std::map<std::string, std::size_t> per_client;
  std::map<std::string, std::size_t> per_style;
  nlohmann::json to_json() const;
};

struct AugmentResult {
  std::vector<Document> docs;
  AugmentReport report;
};

/// Rewrites each document with a seeded uniformly chosen (template, client)
/// pair. Output keeps url/source/time and input order; failed documents are
/// skipped and reported. Throws Error once failures exceed the error budget.
/// Clients must be safe to call concurrently when max_concurrency > 1.
AugmentResult augment(const std::vector<Document>& docs, const std::vector<StyleTemplate>& templates,
                      const std::vector<Completer*>& clients, const AugmentOptions& options);

struct JudgedSample {
  ChatRecord record;
  int judge_score = 0;
  std::string judge_rationale;
  std::string task;  // grouping label for per-task truncation
};

/// Reads judge_score / judge_rationale / task from a record's extra fields.
/// Throws Error if judge_score is missing or outside 1..10.
JudgedSample judged_from_record(const ChatRecord& rec);
ChatRecord to_record(const JudgedSample& s);

/// First integer 1..10 after "score" (case-insensitive) in a judge reply.
std::optional<int> parse_judge_score(std::string_view reply);

/// Formats a conversation for a judge template.
std::string render_conversation(const ChatSample& s);

/// Keeps samples scoring >= min_score, at most top_k per task (highest
/// first, ties in input order); the result is ordered by score descending.
std::vector<JudgedSample> judge_filter(const std::vector<JudgedSample>& samples, int min_score, std::size_t top_k);

struct AcceptanceCount {
  std::size_t accepted = 0;
  std::size_t total = 0;
  std::string fraction() const { return std::to_string(accepted) + "/" + std::to_string(total); }
};

struct RejectionReport {
  std::map<std::string, AcceptanceCount> per_dataset;
  nlohmann::json to_json() const;
};

struct RejectionResult {
  std::vector<ChatRecord> kept;
  RejectionReport report;
};

struct AnswerRecord {
  ChatRecord record;
  std::string extracted_answer;
};

std::string normalize_answer(std::string_view a);

/// Keeps records whose normalized extracted answer equals the key for their
/// prompt_id. The dataset label is the "dataset" field, else "task", else
/// "all". Throws Error naming the first prompt_id without a key.
RejectionResult rejection_sample(const std::vector<AnswerRecord>& samples,
                                 const std::map<std::string, std::string>& answer_key);

/// Pulls the answer from the last "Answer: X" line of a response. Only that
/// literal pattern is recognized; markdown emphasis and a trailing period
/// around X are stripped.
std::optional<std::string> extract_answer(std::string_view response);

}  // namespace curate
