#include "curate/pipeline.hpp"

#include <fstream>
#include <set>
#include <thread>

#include "curate/domain_classifier.hpp"
#include "curate/ngram_lm.hpp"
#include "curate/quality_filters.hpp"
#include "curate/text.hpp"

namespace fs = std::filesystem;

namespace curate {

void CorpusStats::add(const Document& doc) {
  const std::size_t n = count_whitespace_tokens(doc.content);
  ++total.samples;
  total.tokens += n;
  auto& s = per_source[doc.source];
  ++s.samples;
  s.tokens += n;
}

nlohmann::json CorpusStats::to_json() const {
  auto row = [](const CorpusCounts& c) {
    return nlohmann::json{{"samples", c.samples}, {"tokens", c.tokens}, {"avg_tokens", c.avg()}};
  };
  nlohmann::json j = row(total);
  j["per_source"] = nlohmann::json::object();
  for (const auto& [source, c] : per_source) j["per_source"][source] = row(c);
  return j;
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
  CorpusStats s;
  for (const auto& d : docs) s.add(d);
  return s;
}

CorpusStats corpus_stats(const fs::path& jsonl) {
  CorpusStats s;
  JsonlReader reader(jsonl);
  while (auto d = reader.next()) s.add(*d);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, std::set<std::string>>& known_ops() {
  static const std::set<std::string> filter_keys{"drop_line_substrings", "drop_doc_substrings",
                                                 "heuristic_doc_substrings", "min_doc_words",
                                                 "min_doc_chars", "score_window",
                                                 "apply_terminal_punct", "apply_curly_brace"};
  static const std::map<std::string, std::set<std::string>> ops{
      {"c4_filter", filter_keys},
      {"heuristic_filter", filter_keys},
      {"window_filter", filter_keys},
      {"lm_filter", {"model", "thresholds"}},
      {"dedup", {"shingle_size", "num_hashes", "num_bands", "rows_per_band", "seed", "per_source_shards"}},
      {"classify", {"model", "threshold"}},
  };
  return ops;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

LshConfig lsh_config_for(const StageSpec& stage, std::uint64_t pipeline_seed) {
  nlohmann::json params = stage.params;
  params.erase("per_source_shards");
  LshConfig cfg = LshConfig::from_json(params);
  if (!stage.params.contains("seed")) cfg.seed = mix64(pipeline_seed ^ hash64(stage.name));
  return cfg;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  PipelineConfig cfg;
  try {
    cfg.version = j.at("version").get<int>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.threads = j.value("threads", 1u);
    const auto& io = j.at("io");
    cfg.input = resolve(base_dir, io.at("input").get<std::string>());
    cfg.output = resolve(base_dir, io.at("output").get<std::string>());
    if (j.contains("report_path")) cfg.report_path = resolve(base_dir, j["report_path"].get<std::string>());
    for (const auto& s : j.value("stages", nlohmann::json::array())) {
      StageSpec spec;
      spec.name = s.at("name").get<std::string>();
      spec.op = s.at("op").get<std::string>();
      spec.params = s.value("params", nlohmann::json::object());
      if (!spec.params.is_object()) throw Error("stage " + spec.name + ": params must be an object");
      if (spec.params.contains("model") && spec.params["model"].is_string()) {
        spec.params["model"] = resolve(base_dir, spec.params["model"].get<std::string>()).string();
      }
      cfg.stages.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid pipeline config: ") + e.what());
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

void PipelineConfig::validate() const {
  if (version != 1) throw Error("unsupported pipeline config version " + std::to_string(version));
  if (threads < 1) throw Error("threads must be >= 1");
  if (!fs::exists(input)) throw Error("input " + input.string() + " does not exist");
  if (output.empty()) throw Error("no output path");
  std::set<std::string> names;
  for (const auto& s : stages) {
    const std::string where = "stage '" + s.name + "': ";
    if (!names.insert(s.name).second) throw Error(where + "duplicate stage name");
    auto op = known_ops().find(s.op);
    if (op == known_ops().end()) throw Error(where + "unknown op '" + s.op + "'");
    for (const auto& [key, _] : s.params.items()) {
      if (!op->second.contains(key)) throw Error(where + "unknown parameter '" + key + "'");
    }
    try {
      if (s.op == "c4_filter" || s.op == "heuristic_filter" || s.op == "window_filter") {
        FilterConfig::from_json(s.params);
      } else if (s.op == "dedup") {
        lsh_config_for(s, seed);
        if (s.params.contains("per_source_shards") && !s.params["per_source_shards"].is_boolean()) {
          throw Error("per_source_shards must be a boolean");
        }
      } else {
        if (!s.params.contains("model") || !s.params["model"].is_string()) throw Error("needs a model path");
        const fs::path model = s.params["model"].get<std::string>();
        if (!fs::exists(model)) throw Error("model " + model.string() + " does not exist");
        if (s.op == "lm_filter") {
          if (!s.params.contains("thresholds")) throw Error("needs thresholds");
          ThresholdTable::from_json(s.params["thresholds"]);
        } else if (s.params.contains("threshold") && !s.params["threshold"].is_number()) {
          throw Error("threshold must be a number");
        }
      }
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
}

// ---------------------------------------------------------------------------

bool RunReport::reconciles() const {
  if (stages.empty()) return true;
  if (stages.front().docs_in != before.total.samples) return false;
  for (std::size_t k = 1; k < stages.size(); ++k) {
    if (stages[k].docs_in != stages[k - 1].docs_out) return false;
  }
  return !ok || stages.back().docs_out == after.total.samples;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["ok"] = ok;
  if (!ok) {
    j["failed_stage"] = failed_stage;
    j["error"] = error;
  }
  j["input_malformed"] = input_malformed;
  j["before"] = before.to_json();
  j["after"] = after.to_json();
  j["stages"] = nlohmann::json::array();
  for (const auto& s : stages) {
    j["stages"].push_back(
        {{"name", s.name}, {"op", s.op}, {"docs_in", s.docs_in}, {"docs_out", s.docs_out}, {"report", s.report}});
  }
  j["reconciles"] = reconciles();
  return j;
}

namespace {

void run_filter_stage(const StageSpec& stage, const fs::path& in, JsonlWriter& out, StageResult& result) {
  const auto cfg = FilterConfig::from_json(stage.params);
  FilterReport report;
  JsonlReader reader(in);
  while (auto doc = reader.next()) {
    std::optional<Document> kept;
    if (stage.op == "c4_filter") {
      kept = c4_filter(*doc, cfg, &report);
    } else if (stage.op == "heuristic_filter") {
      kept = heuristic_filter(*doc, cfg, &report);
    } else {
      kept = window_filter_doc(*doc, cfg, &report);
    }
    if (kept) out.write(*kept);
  }
  result.docs_in = report.docs_in;
  result.docs_out = report.docs_out;
  result.report = report.to_json();
}

void run_lm_stage(const StageSpec& stage, const fs::path& in, JsonlWriter& out, StageResult& result) {
  const auto model = NGramModel::load(fs::path(stage.params["model"].get<std::string>()));
  const auto thresholds = ThresholdTable::from_json(stage.params["thresholds"]);
  FilterReport report;
  JsonlReader reader(in);
  while (auto doc = reader.next()) {
    if (auto kept = lm_filter_one(*doc, model, thresholds, &report)) out.write(*kept);
  }
  result.docs_in = report.docs_in;
  result.docs_out = report.docs_out;
  result.report = report.to_json();
}

void run_classify_stage(const StageSpec& stage, const fs::path& in, JsonlWriter& out, StageResult& result) {
  const auto model = LinearClassifier::load(fs::path(stage.params["model"].get<std::string>()));
  std::optional<double> threshold;
  if (stage.params.contains("threshold")) threshold = stage.params["threshold"].get<double>();
  FilterReport report;
  std::size_t empty_inputs = 0;
  JsonlReader reader(in);
  while (auto doc = reader.next()) {
    const auto s = model.score(*doc);
    empty_inputs += static_cast<std::size_t>(s.empty_input);
    if (threshold && !(s.value > *threshold)) {
      report.drop("classify:below_threshold");
      continue;
    }
    report.keep();
    doc->score = s.value;
    out.write(*doc);
  }
  result.docs_in = report.docs_in;
  result.docs_out = report.docs_out;
  result.report = report.to_json();
  result.report["empty_inputs"] = empty_inputs;
}

void run_dedup_stage(const StageSpec& stage, std::uint64_t seed, unsigned threads, const fs::path& in,
                     JsonlWriter& out, StageResult& result) {
  const LshConfig cfg = lsh_config_for(stage, seed);
  const bool per_source = stage.params.value("per_source_shards", false);
  const MinHasher hasher(cfg);

  // Pass 1: signatures only. Documents are signed in batches so that memory
  // stays bounded by the batch plus one signature per document.
  std::vector<MinHashSignature> sigs;
  std::vector<std::uint32_t> shards;
  std::map<std::string, std::uint32_t> shard_ids;
  DedupReport report;
  std::size_t n = 0;
  constexpr std::size_t kBatch = 4096;
  std::vector<Document> batch;
  std::vector<std::optional<MinHashSignature>> slots;
  auto flush = [&] {
    slots.assign(batch.size(), std::nullopt);
    const std::size_t nthreads = std::max<std::size_t>(1, std::min<std::size_t>(threads, batch.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < batch.size(); i += nthreads) {
          const auto hashes = shingle_hashes(batch[i].content, cfg.shingle_size);
          if (!hashes.empty()) slots[i] = hasher.sign(hashes, n - batch.size() + i);
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& s : slots) {
      if (s) sigs.push_back(std::move(*s));
    }
    batch.clear();
  };
  {
    JsonlReader reader(in);
    while (auto doc = reader.next()) {
      ++report.before.samples;
      report.before.tokens += count_whitespace_tokens(doc->content);
      shards.push_back(shard_ids.try_emplace(doc->source, static_cast<std::uint32_t>(shard_ids.size())).first->second);
      ++n;
      batch.push_back(std::move(*doc));
      if (batch.size() == kBatch) flush();
    }
    flush();
  }
  const ClusterSet found = find_duplicates(sigs, cfg, per_source ? &shards : nullptr, threads);
  ClusterSet clusters(n);
  for (std::size_t i = 0; i < found.size(); ++i) clusters.unite(i, found.find(i));
  report.clusters = clusters.clusters().size();

  // Pass 2: keep the first document of every cluster.
  JsonlReader reader(in);
  std::size_t i = 0;
  while (auto doc = reader.next()) {
    if (clusters.is_representative(i++)) {
      ++report.after.samples;
      report.after.tokens += count_whitespace_tokens(doc->content);
      out.write(*doc);
    }
  }
  result.docs_in = report.before.samples;
  result.docs_out = report.after.samples;
  result.report = report.to_json();
  result.report["lsh"] = cfg.to_json();
  result.report["per_source_shards"] = per_source;
}

void write_report(const RunReport& report, const fs::path& path) {
  if (path.empty()) return;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write report " + path.string());
  os << report.to_json().dump(2) << "\n";
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  RunReport report;
  if (cfg.output.has_parent_path()) fs::create_directories(cfg.output.parent_path());
  const fs::path work = fs::path(cfg.output.string() + ".work");
  fs::remove_all(work);
  fs::create_directories(work);
  fs::remove(fs::path(cfg.output.string() + ".partial"));

  // Stage 0 normalizes the input: malformed lines are dropped and counted.
  fs::path current = work / "stage_0.jsonl";
  {
    JsonlReader reader(cfg.input);
    JsonlWriter writer(current);
    while (auto doc = reader.next()) {
      report.before.add(*doc);
      writer.write(*doc);
    }
    writer.close();
    report.input_malformed = reader.skipped();
  }

  for (std::size_t k = 0; k < cfg.stages.size(); ++k) {
    const auto& stage = cfg.stages[k];
    const fs::path next = work / ("stage_" + std::to_string(k + 1) + ".jsonl");
    StageResult result;
    result.name = stage.name;
    result.op = stage.op;
    try {
      JsonlWriter writer(next);
      if (stage.op == "lm_filter") {
        run_lm_stage(stage, current, writer, result);
      } else if (stage.op == "classify") {
        run_classify_stage(stage, current, writer, result);
      } else if (stage.op == "dedup") {
        run_dedup_stage(stage, cfg.seed, cfg.threads, current, writer, result);
      } else {
        run_filter_stage(stage, current, writer, result);
      }
      writer.close();
    } catch (const std::exception& e) {
      report.ok = false;
      report.failed_stage = stage.name;
      report.error = e.what();
      report.stages.push_back(std::move(result));
      if (fs::exists(next)) fs::rename(next, cfg.output.string() + ".partial");
      fs::remove_all(work);
      write_report(report, cfg.report_path);
      return report;
    }
    report.stages.push_back(std::move(result));
    fs::remove(current);
    current = next;
  }

  fs::rename(current, cfg.output);
  fs::remove_all(work);
  report.after = corpus_stats(cfg.output);
  write_report(report, cfg.report_path);
  return report;
}

}  // namespace curate
