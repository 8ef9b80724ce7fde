#include "curate/corpus_io.hpp"

#include <deque>
#include <regex>
#include <unordered_set>

#include "curate/text.hpp"

namespace curate {

namespace {

const std::regex& iso8601_pattern() {
  static const std::regex re(
      R"(^(\d{4})(-(\d{2})(-(\d{2})(T(\d{2}):(\d{2})(:(\d{2})(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?)?)?$)");
  return re;
}

std::string require_string(const ordered_json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(std::string("missing key '") + key + "'");
  if (!it->is_string()) throw Error(std::string("key '") + key + "' is not a string");
  return it->get<std::string>();
}

}  // namespace

std::string normalize_time(std::string_view time) {
  std::smatch m;
  const std::string s(time);
  if (!std::regex_match(s, m, iso8601_pattern())) {
    throw Error("time is not ISO 8601: '" + s + "'");
  }
  auto in_range = [&](int group, int lo, int hi) {
    if (!m[group].matched) return true;
    const int v = std::stoi(m[group].str());
    return v >= lo && v <= hi;
  };
  if (!in_range(3, 1, 12) || !in_range(5, 1, 31) || !in_range(7, 0, 23) || !in_range(8, 0, 59) ||
      !in_range(10, 0, 60)) {
    throw Error("time field out of range: '" + s + "'");
  }
  if (s.size() == 4) return s + "-12-31T00:00:00";
  return s;
}

Document parse_document(std::string_view line) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw Error("line is not a JSON object");
  Document doc;
  doc.url = require_string(obj, "url");
  doc.source = require_string(obj, "source");
  doc.content = require_string(obj, "content");
  doc.time = normalize_time(require_string(obj, "time"));
  if (doc.content.empty()) throw Error("empty content");
  if (!is_valid_utf8(doc.content)) throw Error("content is not valid UTF-8");
  if (auto it = obj.find("score"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) throw Error("score is not a number");
    doc.score = it->get<double>();
  }
  return doc;
}

ordered_json to_json(const Document& doc) {
  ordered_json obj;
  obj["url"] = doc.url;
  obj["source"] = doc.source;
  obj["content"] = doc.content;
  obj["time"] = doc.time;
  if (doc.score) obj["score"] = *doc.score;
  return obj;
}

JsonlReader::JsonlReader(const std::filesystem::path& path) : in_(path) {
  if (!in_) throw Error("cannot open " + path.string());
}

std::optional<Document> JsonlReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    try {
      return parse_document(line);
    } catch (const Error& e) {
      malformed_.push_back({line_number_, e.what()});
    }
  }
  if (in_.bad()) throw Error("read error at line " + std::to_string(line_number_));
  return std::nullopt;
}

ReadResult read_jsonl(const std::filesystem::path& path) {
  JsonlReader reader(path);
  ReadResult result;
  while (auto doc = reader.next()) result.docs.push_back(std::move(*doc));
  result.skipped = reader.skipped();
  result.malformed = reader.malformed();
  return result;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
}

void JsonlWriter::write(const Document& doc) { write_json(to_json(doc)); }

void JsonlWriter::write_json(const ordered_json& obj) {
  out_ << obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) << '\n';
  if (!out_) {
    throw Error("write to " + path_.string() + " failed after " + std::to_string(count_) + " records");
  }
  ++count_;
}

void JsonlWriter::close() {
  out_.flush();
  if (!out_) {
    throw Error("flush of " + path_.string() + " failed; " + std::to_string(count_) +
                " records may be incomplete");
  }
  out_.close();
}

std::size_t write_jsonl(const std::vector<Document>& docs, const std::filesystem::path& path) {
  JsonlWriter writer(path);
  for (const auto& doc : docs) writer.write(doc);
  writer.close();
  return writer.count();
}

// ---------------------------------------------------------------------------

std::string_view role_name(Role r) { return r == Role::user ? "user" : "assistant"; }

void validate(const ChatSample& s) {
  if (s.messages.empty()) throw Error("sample has no messages");
  for (std::size_t i = 0; i < s.messages.size(); ++i) {
    const Role expected = (i % 2 == 0) ? Role::user : Role::assistant;
    if (s.messages[i].role != expected) {
      throw Error("message " + std::to_string(i) + " breaks user/assistant alternation");
    }
  }
  if (s.prompt != s.messages.front().content) throw Error("prompt differs from first message");
  if (s.prompt_id.empty()) throw Error("empty prompt_id");
}

ChatSample parse_chat_sample(const ordered_json& obj) {
  if (!obj.is_object()) throw Error("chat sample is not a JSON object");
  ChatSample s;
  auto msgs = obj.find("messages");
  if (msgs == obj.end() || !msgs->is_array()) throw Error("missing 'messages' array");
  for (const auto& m : *msgs) {
    if (!m.is_object()) throw Error("message is not an object");
    const std::string role = require_string(m, "role");
    Message msg;
    if (role == "user") {
      msg.role = Role::user;
    } else if (role == "assistant") {
      msg.role = Role::assistant;
    } else {
      throw Error("unknown role '" + role + "'");
    }
    msg.content = require_string(m, "content");
    s.messages.push_back(std::move(msg));
  }
  s.prompt = require_string(obj, "prompt");
  s.prompt_id = require_string(obj, "prompt_id");
  validate(s);
  return s;
}

ordered_json to_json(const ChatSample& s) {
  ordered_json obj;
  obj["messages"] = ordered_json::array();
  for (const auto& m : s.messages) {
    obj["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  obj["prompt"] = s.prompt;
  obj["prompt_id"] = s.prompt_id;
  return obj;
}

ChatReadResult read_chat_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  ChatReadResult result;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    try {
      ordered_json obj;
      try {
        obj = ordered_json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid JSON: ") + e.what());
      }
      ChatSample s = parse_chat_sample(obj);
      if (!seen_ids.insert(s.prompt_id).second) throw Error("duplicate prompt_id '" + s.prompt_id + "'");
      result.records.push_back({std::move(s), std::move(obj)});
    } catch (const Error& e) {
      result.malformed.push_back({line_number, e.what()});
    }
  }
  return result;
}

std::size_t write_chat_jsonl(const std::vector<ChatRecord>& records, const std::filesystem::path& path) {
  JsonlWriter writer(path);
  for (const auto& rec : records) {
    ordered_json obj = to_json(rec.sample);
    if (rec.fields.is_object()) {
      for (const auto& [key, value] : rec.fields.items()) {
        if (!obj.contains(key)) obj[key] = value;
      }
    }
    writer.write_json(obj);
  }
  writer.close();
  return writer.count();
}

// ---------------------------------------------------------------------------

CategoryGraph CategoryGraph::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("root") || !j["root"].is_string()) {
    throw Error("category graph needs a string 'root'");
  }
  CategoryGraph g;
  g.root = j["root"].get<std::string>();
  g.nodes.insert(g.root);
  if (j.contains("edges")) {
    if (!j["edges"].is_object()) throw Error("'edges' must be an object");
    for (const auto& [parent, children] : j["edges"].items()) {
      if (!children.is_array()) throw Error("edges of '" + parent + "' must be an array");
      g.nodes.insert(parent);
      auto& out = g.edges[parent];
      for (const auto& c : children) {
        if (!c.is_string()) throw Error("child of '" + parent + "' is not a string");
        out.push_back(c.get<std::string>());
        g.nodes.insert(c.get<std::string>());
      }
    }
  }
  return g;
}

CategoryGraph CategoryGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid category graph " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> expand_categories(const CategoryGraph& graph,
                                           const std::function<bool(const std::string&)>& predicate) {
  if (!graph.nodes.contains(graph.root)) throw Error("root '" + graph.root + "' is not in the graph");
  std::vector<std::string> accepted;
  std::set<std::string> visited{graph.root};
  std::deque<std::string> queue{graph.root};
  while (!queue.empty()) {
    std::string node = std::move(queue.front());
    queue.pop_front();
    if (!predicate(node)) continue;
    accepted.push_back(node);
    auto it = graph.edges.find(node);
    if (it == graph.edges.end()) continue;
    for (const auto& child : it->second) {
      if (visited.insert(child).second) queue.push_back(child);
    }
  }
  return accepted;
}

}  // namespace curate
