#include "curate/quality_filters.hpp"

#include <numeric>

#include "curate/text.hpp"

namespace curate {

namespace {

void require_lowercase(const std::vector<std::string>& list, const char* name) {
  for (const auto& s : list) {
    if (to_lower(s) != s) throw Error(std::string(name) + " entry '" + s + "' is not lowercase");
  }
}

bool ends_with_terminal_punct(std::string_view line) {
  line = trim(line);
  if (line.empty()) return false;
  const char c = line.back();
  return c == '.' || c == '!' || c == '?' || c == '"';
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void FilterConfig::validate() const {
  if (score_window && !(score_window->low < score_window->high)) {
    throw Error("score_window.low must be < score_window.high");
  }
  require_lowercase(drop_line_substrings, "drop_line_substrings");
  require_lowercase(drop_doc_substrings, "drop_doc_substrings");
  require_lowercase(heuristic_doc_substrings, "heuristic_doc_substrings");
}

FilterConfig FilterConfig::from_json(const nlohmann::json& j) {
  FilterConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw Error("filter config must be an object");
  try {
    read_if(j, "drop_line_substrings", cfg.drop_line_substrings);
    read_if(j, "drop_doc_substrings", cfg.drop_doc_substrings);
    read_if(j, "heuristic_doc_substrings", cfg.heuristic_doc_substrings);
    read_if(j, "min_doc_words", cfg.min_doc_words);
    read_if(j, "min_doc_chars", cfg.min_doc_chars);
    read_if(j, "apply_terminal_punct", cfg.apply_terminal_punct);
    read_if(j, "apply_curly_brace", cfg.apply_curly_brace);
    if (j.contains("score_window") && !j["score_window"].is_null()) {
      const auto& w = j["score_window"];
      if (w.is_array() && w.size() == 2) {
        cfg.score_window = ScoreWindow{w[0].get<double>(), w[1].get<double>()};
      } else {
        cfg.score_window = ScoreWindow{w.at("low").get<double>(), w.at("high").get<double>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid filter config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json FilterConfig::to_json() const {
  nlohmann::json j;
  j["drop_line_substrings"] = drop_line_substrings;
  j["drop_doc_substrings"] = drop_doc_substrings;
  j["heuristic_doc_substrings"] = heuristic_doc_substrings;
  j["min_doc_words"] = min_doc_words;
  j["min_doc_chars"] = min_doc_chars;
  j["apply_terminal_punct"] = apply_terminal_punct;
  j["apply_curly_brace"] = apply_curly_brace;
  if (score_window) {
    j["score_window"] = {{"low", score_window->low}, {"high", score_window->high}};
  } else {
    j["score_window"] = nullptr;
  }
  return j;
}

std::size_t FilterReport::docs_dropped() const {
  return std::accumulate(docs_dropped_by_rule.begin(), docs_dropped_by_rule.end(), std::size_t{0},
                         [](std::size_t acc, const auto& kv) { return acc + kv.second; });
}

FilterReport& FilterReport::merge(const FilterReport& other) {
  docs_in += other.docs_in;
  docs_out += other.docs_out;
  for (const auto& [rule, n] : other.docs_dropped_by_rule) docs_dropped_by_rule[rule] += n;
  for (const auto& [rule, n] : other.lines_dropped_by_rule) lines_dropped_by_rule[rule] += n;
  return *this;
}

nlohmann::json FilterReport::to_json() const {
  nlohmann::json j;
  j["docs_in"] = docs_in;
  j["docs_out"] = docs_out;
  j["docs_dropped_by_rule"] = docs_dropped_by_rule;
  j["lines_dropped_by_rule"] = lines_dropped_by_rule;
  return j;
}

std::optional<Document> c4_filter(const Document& doc, const FilterConfig& cfg, FilterReport* report) {
  const std::string lowered = to_lower(doc.content);
  auto drop = [&](const std::string& rule) -> std::optional<Document> {
    if (report) report->drop(rule);
    return std::nullopt;
  };
  for (const auto& s : cfg.drop_doc_substrings) {
    if (contains_ci(lowered, s)) return drop("doc:" + s);
  }
  if (cfg.apply_curly_brace && doc.content.find('{') != std::string::npos) return drop("doc:curly_brace");

  std::string kept;
  kept.reserve(doc.content.size());
  bool first = true;
  std::map<std::string, std::size_t> line_drops;
  const auto lines = split_lines(doc.content);
  const auto lowered_lines = split_lines(lowered);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view low = lowered_lines[i];
    const std::string* hit = nullptr;
    for (const auto& s : cfg.drop_line_substrings) {
      if (contains_ci(low, s)) {
        hit = &s;
        break;
      }
    }
    if (hit) {
      ++line_drops["line:" + *hit];
      continue;
    }
    if (cfg.apply_terminal_punct && !trim(lines[i]).empty() && !ends_with_terminal_punct(lines[i])) {
      ++line_drops["line:terminal_punct"];
      continue;
    }
    if (!first) kept.push_back('\n');
    kept += lines[i];
    first = false;
  }
  if (report) {
    for (const auto& [rule, n] : line_drops) report->lines_dropped_by_rule[rule] += n;
  }
  const std::size_t words = count_whitespace_tokens(kept);
  if (words == 0) return drop("doc:empty");
  if (words < cfg.min_doc_words) return drop("doc:too_short");
  if (report) report->keep();
  Document out = doc;
  out.content = std::move(kept);
  return out;
}

std::optional<Document> heuristic_filter(const Document& doc, const FilterConfig& cfg, FilterReport* report) {
  const std::string lowered = to_lower(doc.content);
  for (const auto& s : cfg.heuristic_doc_substrings) {
    if (contains_ci(lowered, s)) {
      if (report) report->drop("heuristic:" + s);
      return std::nullopt;
    }
  }
  if (report) report->keep();
  return doc;
}

bool window_filter(const Document&, double score, std::size_t length, const FilterConfig& cfg) {
  if (length <= cfg.min_doc_chars) return false;
  if (cfg.score_window) return cfg.score_window->low < score && score < cfg.score_window->high;
  return true;
}

std::optional<Document> window_filter_doc(const Document& doc, const FilterConfig& cfg, FilterReport* report) {
  if (!doc.score) {
    if (report) report->drop("window:missing_score");
    return std::nullopt;
  }
  const std::size_t length = utf8_length(doc.content);
  if (length <= cfg.min_doc_chars) {
    if (report) report->drop("window:too_short");
    return std::nullopt;
  }
  if (!window_filter(doc, *doc.score, length, cfg)) {
    if (report) report->drop("window:score");
    return std::nullopt;
  }
  if (report) report->keep();
  return doc;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

}  // namespace curate
