#pragma once

// Config-driven corpus pipeline. Stages run in order, each streaming the
// previous stage's JSONL output into its own; the run report records
// per-stage accounting and corpus statistics before and after.
//
// Config (JSON):
//   {"version": 1, "seed": 7, "threads": 4,
//    "io": {"input": "raw.jsonl", "output": "clean.jsonl"},
//    "report_path": "report.json",
//    "stages": [{"name": "c4", "op": "c4_filter", "params": {...}}, ...]}
//
// Ops: c4_filter, heuristic_filter, window_filter (FilterConfig params),
// lm_filter {model, thresholds}, dedup (LshConfig params plus
// per_source_shards), classify {model, threshold?}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "curate/corpus_io.hpp"
#include "curate/dedup.hpp"

namespace curate {

struct CorpusStats {
  CorpusCounts total;
  std::map<std::string, CorpusCounts> per_source;

  void add(const Document& doc);
  nlohmann::json to_json() const;
};

CorpusStats corpus_stats(const std::vector<Document>& docs);
CorpusStats corpus_stats(const std::filesystem::path& jsonl);

struct StageSpec {
  std::string name;
  std::string op;
  nlohmann::json params = nlohmann::json::object();
};

struct PipelineConfig {
  int version = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::filesystem::path input;
  std::filesystem::path output;
  std::filesystem::path report_path;
  std::vector<StageSpec> stages;

  /// Relative paths (io, report, model files) resolve against base_dir.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);

  /// Checks the schema version, stage name uniqueness, known ops, every
  /// stage's parameters, and that referenced files exist. Throws Error.
  void validate() const;
};

struct StageResult {
  std::string name;
  std::string op;
  std::size_t docs_in = 0;
  std::size_t docs_out = 0;
  nlohmann::json report;
};

struct RunReport {
  bool ok = true;
  std::string failed_stage;
  std::string error;
  std::size_t input_malformed = 0;
  CorpusStats before;
  CorpusStats after;
  std::vector<StageResult> stages;

  /// docs_out of every stage equals docs_in of the next, and the first
  /// stage consumes exactly the input.
  bool reconciles() const;
  nlohmann::json to_json() const;
};

/// Runs every stage, writes the output corpus and the report. On a stage
/// failure the stage's partial output is kept as <output>.partial, the
/// report records the failing stage, and ok is false.
RunReport run_pipeline(const PipelineConfig& cfg);

}  // namespace curate
