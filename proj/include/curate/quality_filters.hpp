#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

struct ScoreWindow {
  double low;
  double high;
};

struct FilterConfig {
  std::vector<std::string> drop_line_substrings{"javascript", "terms-of-use", "terms of use",
                                                "cookie policy"};
  std::vector<std::string> drop_doc_substrings{"lorem ipsum"};
  std::vector<std::string> heuristic_doc_substrings{"your download will begin in a few seconds"};
  std::size_t min_doc_words = 50;
  std::size_t min_doc_chars = 0;
  std::optional<ScoreWindow> score_window;
  bool apply_terminal_punct = false;
  bool apply_curly_brace = false;

  /// Throws Error on an inverted window or non-lowercase substrings.
  void validate() const;

  /// Missing keys keep their defaults.
  static FilterConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Per-stage accounting. docs_out + sum(docs_dropped_by_rule) == docs_in.
struct FilterReport {
  std::size_t docs_in = 0;
  std::size_t docs_out = 0;
  std::map<std::string, std::size_t> docs_dropped_by_rule;
  std::map<std::string, std::size_t> lines_dropped_by_rule;

  void keep() {
    ++docs_in;
    ++docs_out;
  }
  void drop(const std::string& rule) {
    ++docs_in;
    ++docs_dropped_by_rule[rule];
  }
  std::size_t docs_dropped() const;
  bool reconciles() const { return docs_out + docs_dropped() == docs_in; }

  FilterReport& merge(const FilterReport& other);
  nlohmann::json to_json() const;
};

/// C4-style line and document filtering. Lines containing any
/// drop_line_substring (case-insensitive) are removed, as are lines without
/// terminal punctuation when enabled. The document is dropped if it contains
/// a drop_doc_substring, a '{' (when enabled), or too few words remain.
std::optional<Document> c4_filter(const Document& doc, const FilterConfig& cfg,
                                  FilterReport* report = nullptr);

/// Drops documents containing any heuristic phrase.
std::optional<Document> heuristic_filter(const Document& doc, const FilterConfig& cfg,
                                         FilterReport* report = nullptr);

/// length > min_doc_chars and score strictly inside the window (if any).
bool window_filter(const Document& doc, double score, std::size_t length, const FilterConfig& cfg);

/// window_filter using the document's own score column and code-point length.
/// Documents without a score are dropped under rule "window:missing_score".
std::optional<Document> window_filter_doc(const Document& doc, const FilterConfig& cfg,
                                          FilterReport* report = nullptr);

std::size_t utf8_length(std::string_view s);

}  // namespace curate
