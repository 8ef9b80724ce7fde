#include "curate/curation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace curate {

std::string_view style_name(Style s) {
  switch (s) {
    case Style::blog: return "blog";
    case Style::textbook: return "textbook";
    case Style::qa: return "qa";
  }
  return "blog";
}

Style parse_style(std::string_view name) {
  if (name == "blog") return Style::blog;
  if (name == "textbook") return Style::textbook;
  if (name == "qa") return Style::qa;
  throw Error("unknown style: " + std::string(name));
}

StyleTemplate::StyleTemplate(Style style, std::string text) : style_(style), text_(std::move(text)) {
  pos_ = text_.find(kPlaceholder);
  if (pos_ == std::string::npos) throw Error("template has no {TEXT} placeholder");
  if (text_.find(kPlaceholder, pos_ + 1) != std::string::npos) {
    throw Error("template has more than one {TEXT} placeholder");
  }
}

StyleTemplate StyleTemplate::load(Style style, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open template " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return StyleTemplate(style, ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string StyleTemplate::render(std::string_view value) const {
  std::string out;
  out.reserve(text_.size() + value.size());
  out.append(text_, 0, pos_);
  out.append(value);
  out.append(text_, pos_ + kPlaceholder.size());
  return out;
}

std::string render_rewrite_prompt(const Document& doc, const StyleTemplate& tpl) {
  if (doc.content.empty()) throw Error("cannot rewrite an empty document");
  return tpl.render(doc.content);
}

// ---------------------------------------------------------------------------

nlohmann::json AugmentReport::to_json() const {
  nlohmann::json j;
  j["total"] = total;
  j["rewritten"] = rewritten;
  j["skipped"] = failures.size();
  j["per_client"] = per_client;
  j["per_style"] = per_style;
  j["failures"] = nlohmann::json::array();
  for (const auto& f : failures) {
    j["failures"].push_back({{"index", f.index}, {"url", f.url}, {"client", f.client}, {"reason", f.reason}});
  }
  return j;
}

AugmentResult augment(const std::vector<Document>& docs, const std::vector<StyleTemplate>& templates,
                      const std::vector<Completer*>& clients, const AugmentOptions& options) {
  if (templates.empty()) throw Error("augment needs at least one template");
  if (clients.empty()) throw Error("augment needs at least one client");
  if (options.max_concurrency < 1) throw Error("max_concurrency must be >= 1");

  struct Choice {
    std::size_t tpl;
    std::size_t client;
  };
  std::vector<Choice> choices(docs.size());
  SeededRng rng(options.seed);
  for (auto& c : choices) {
    c.tpl = rng.below(templates.size());
    c.client = rng.below(clients.size());
  }

  std::vector<std::optional<std::string>> outputs(docs.size());
  std::vector<std::string> errors(docs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= docs.size()) return;
      try {
        const auto prompt = render_rewrite_prompt(docs[i], templates[choices[i].tpl]);
        outputs[i] = complete_with_retries(*clients[choices[i].client], prompt, options.retry);
      } catch (const Error& e) {
        errors[i] = e.what();
        if (failed.fetch_add(1) + 1 > options.error_budget) abort.store(true);
      }
    }
  };
  const std::size_t nthreads = std::min(options.max_concurrency, std::max<std::size_t>(docs.size(), 1));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (abort.load()) {
    throw Error("augmentation aborted: " + std::to_string(failed.load()) + " failures exceed the error budget of " +
                std::to_string(options.error_budget));
  }

  AugmentResult result;
  result.report.total = docs.size();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto client = clients[choices[i].client]->name();
    if (!outputs[i]) {
      result.report.failures.push_back({i, docs[i].url, client, errors[i]});
      continue;
    }
    Document d{docs[i].url, docs[i].source, std::move(*outputs[i]), docs[i].time, std::nullopt};
    result.docs.push_back(std::move(d));
    ++result.report.rewritten;
    ++result.report.per_client[client];
    ++result.report.per_style[std::string(style_name(templates[choices[i].tpl].style()))];
  }
  return result;
}

// ---------------------------------------------------------------------------

JudgedSample judged_from_record(const ChatRecord& rec) {
  JudgedSample s;
  s.record = rec;
  const auto& f = rec.fields;
  if (!f.contains("judge_score") || !f["judge_score"].is_number_integer()) {
    throw Error("sample " + rec.sample.prompt_id + " has no integer judge_score");
  }
  s.judge_score = f["judge_score"].get<int>();
  if (s.judge_score < 1 || s.judge_score > 10) {
    throw Error("sample " + rec.sample.prompt_id + " has judge_score outside 1..10");
  }
  if (f.contains("judge_rationale") && f["judge_rationale"].is_string()) {
    s.judge_rationale = f["judge_rationale"].get<std::string>();
  }
  if (f.contains("task") && f["task"].is_string()) s.task = f["task"].get<std::string>();
  return s;
}

ChatRecord to_record(const JudgedSample& s) {
  ChatRecord r = s.record;
  if (r.fields.is_null()) r.fields = to_json(r.sample);
  r.fields["judge_score"] = s.judge_score;
  r.fields["judge_rationale"] = s.judge_rationale;
  if (!s.task.empty()) r.fields["task"] = s.task;
  return r;
}

std::optional<int> parse_judge_score(std::string_view reply) {
  static const std::regex re(R"(score\D{0,20}?(\d+))", std::regex::icase);
  const std::string text(reply);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto digits = (*it)[1].str();
    if (digits.size() > 2) continue;
    const int v = std::stoi(digits);
    if (v >= 1 && v <= 10) return v;
  }
  return std::nullopt;
}

std::string render_conversation(const ChatSample& s) {
  std::string out;
  for (const auto& m : s.messages) {
    if (!out.empty()) out += "\n\n";
    out += m.role == Role::user ? "User: " : "Assistant: ";
    out += m.content;
  }
  return out;
}

std::vector<JudgedSample> judge_filter(const std::vector<JudgedSample>& samples, int min_score, std::size_t top_k) {
  if (min_score < 1 || min_score > 10) throw Error("min_score must be in 1..10");
  if (top_k < 1) throw Error("top_k must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].judge_score >= min_score) by_task[samples[i].task].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (auto& [_, idx] : by_task) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].judge_score > samples[b].judge_score; });
    if (idx.size() > top_k) idx.resize(top_k);
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  std::stable_sort(keep.begin(), keep.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].judge_score > samples[b].judge_score; });
  std::vector<JudgedSample> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(samples[i]);
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json RejectionReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  std::size_t acc = 0, tot = 0;
  for (const auto& [name, c] : per_dataset) {
    j.push_back({{"dataset", name}, {"accepted", c.accepted}, {"total", c.total}, {"ratio", c.fraction()}});
    acc += c.accepted;
    tot += c.total;
  }
  return {{"datasets", j}, {"accepted", acc}, {"total", tot}};
}

std::string normalize_answer(std::string_view a) { return to_lower(trim(a)); }

namespace {

std::string dataset_of(const ChatRecord& r) {
  for (const char* key : {"dataset", "task"}) {
    if (r.fields.contains(key) && r.fields[key].is_string()) return r.fields[key].get<std::string>();
  }
  return "all";
}

}  // namespace

RejectionResult rejection_sample(const std::vector<AnswerRecord>& samples,
                                 const std::map<std::string, std::string>& answer_key) {
  for (const auto& s : samples) {
    if (!answer_key.contains(s.record.sample.prompt_id)) {
      throw Error("no answer key for prompt_id " + s.record.sample.prompt_id);
    }
  }
  RejectionResult result;
  for (const auto& s : samples) {
    auto& count = result.report.per_dataset[dataset_of(s.record)];
    ++count.total;
    if (normalize_answer(s.extracted_answer) == normalize_answer(answer_key.at(s.record.sample.prompt_id))) {
      ++count.accepted;
      result.kept.push_back(s.record);
    }
  }
  return result;
}

std::optional<std::string> extract_answer(std::string_view response) {
  static const std::regex re(R"(answer\s*:\s*(.*))", std::regex::icase);
  std::optional<std::string> found;
  for (auto line : split_lines(response)) {
    std::smatch m;
    const std::string s(line);
    if (!std::regex_search(s, m, re)) continue;
    std::string v(trim(m[1].str()));
    auto strip = [&](std::string_view chars) {
      while (!v.empty() && chars.find(v.front()) != std::string_view::npos) v.erase(v.begin());
      while (!v.empty() && chars.find(v.back()) != std::string_view::npos) v.pop_back();
    };
    strip("*_");
    if (!v.empty() && v.back() == '.') v.pop_back();
    strip("*_ ");
    if (!v.empty()) found = v;
  }
  return found;
}

}  // namespace curate
