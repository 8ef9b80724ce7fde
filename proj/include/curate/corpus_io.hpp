#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace curate {

using ordered_json = nlohmann::ordered_json;

/// One corpus record. Serialized with the keys url, source, content, time
/// (in that order); classifier-scored corpora carry an extra numeric "score".
struct Document {
  std::string url;
  std::string source;
  std::string content;
  std::string time;
  std::optional<double> score;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Normalizes an ISO 8601 timestamp. A bare year "YYYY" becomes
/// "YYYY-12-31T00:00:00"; other accepted forms are returned unchanged.
/// Throws Error on anything that is not ISO 8601.
std::string normalize_time(std::string_view time);

/// Parses one JSONL line. Throws Error with a reason if the line is not a
/// valid Document (bad JSON, missing/non-string keys, empty or invalid UTF-8
/// content, unparseable time).
Document parse_document(std::string_view line);
ordered_json to_json(const Document& doc);

struct MalformedLine {
  std::size_t line_number;  // 1-based
  std::string reason;
};

/// Streaming JSONL reader. Malformed lines are recorded and skipped.
class JsonlReader {
 public:
  explicit JsonlReader(const std::filesystem::path& path);

  std::optional<Document> next();

  std::size_t skipped() const { return malformed_.size(); }
  const std::vector<MalformedLine>& malformed() const { return malformed_; }

 private:
  std::ifstream in_;
  std::size_t line_number_ = 0;
  std::vector<MalformedLine> malformed_;
};

struct ReadResult {
  std::vector<Document> docs;
  std::size_t skipped = 0;
  std::vector<MalformedLine> malformed;
};

ReadResult read_jsonl(const std::filesystem::path& path);

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);

  void write(const Document& doc);
  void write_json(const ordered_json& obj);
  std::size_t count() const { return count_; }
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

/// Writes all documents; returns the number written. On I/O failure throws
/// Error stating how many records made it to disk.
std::size_t write_jsonl(const std::vector<Document>& docs, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Chat-format samples (messages / prompt / prompt_id).

enum class Role { user, assistant };

struct Message {
  Role role;
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatSample {
  std::vector<Message> messages;
  std::string prompt;
  std::string prompt_id;
  friend bool operator==(const ChatSample&, const ChatSample&) = default;
};

/// A chat sample plus the full JSON object it was read from, so that extra
/// columns (task, judge_score, extracted_answer, ...) pass through untouched.
struct ChatRecord {
  ChatSample sample;
  ordered_json fields;
};

std::string_view role_name(Role r);
ChatSample parse_chat_sample(const ordered_json& obj);
ordered_json to_json(const ChatSample& s);
/// Throws Error if roles do not alternate from user or prompt differs from
/// the first message.
void validate(const ChatSample& s);

struct ChatReadResult {
  std::vector<ChatRecord> records;
  std::vector<MalformedLine> malformed;
};

/// Reads chat JSONL. Invalid samples and repeated prompt_ids are skipped and
/// reported like malformed lines.
ChatReadResult read_chat_jsonl(const std::filesystem::path& path);
std::size_t write_chat_jsonl(const std::vector<ChatRecord>& records,
                             const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// HTML to Markdown.

std::string html_to_markdown(std::string_view html);

// ---------------------------------------------------------------------------
// Category graph expansion.

struct CategoryGraph {
  std::string root;
  std::set<std::string> nodes;
  std::map<std::string, std::vector<std::string>> edges;

  /// Builds a graph from {"root": str, "edges": {str: [str]}}. Every name
  /// mentioned anywhere becomes a node.
  static CategoryGraph from_json(const nlohmann::json& j);
  static CategoryGraph load(const std::filesystem::path& path);
};

/// Breadth-first expansion from the root. A node's children are explored
/// only when the predicate accepts the node; each node is evaluated at most
/// once. Returns accepted nodes in visit order.
std::vector<std::string> expand_categories(const CategoryGraph& graph,
                                           const std::function<bool(const std::string&)>& predicate);

}  // namespace curate
