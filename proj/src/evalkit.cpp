#include "curate/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "curate/text.hpp"

namespace curate {

namespace {

std::set<std::string> token_set(const PredValue& v) {
  std::set<std::string> out;
  if (const auto* list = std::get_if<std::vector<std::string>>(&v)) {
    for (const auto& t : *list) {
      if (!trim(t).empty()) out.emplace(trim(t));
    }
  } else if (const auto* s = std::get_if<std::string>(&v)) {
    std::string cur;
    for (char c : *s + ",") {
      if (c == ',' || c == ' ' || c == '\t' || c == '\n') {
        if (!cur.empty()) out.insert(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
  } else {
    throw Error("token F1 needs labels or token lists, got a number");
  }
  return out;
}

PredValue value_from_json(const nlohmann::json& j, const std::string& field) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number()) return j.get<double>();
  if (j.is_array()) {
    std::vector<std::string> v;
    for (const auto& e : j) {
      if (!e.is_string()) throw Error(field + ": token lists must hold strings");
      v.push_back(e.get<std::string>());
    }
    return v;
  }
  throw Error(field + ": expected a string, number or array");
}

void require_nonempty(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw Error("no records");
}

}  // namespace

std::optional<bool> PredictionRecord::is_correct() const {
  if (correct) return correct;
  if (predicted && gold) return *predicted == *gold;
  return std::nullopt;
}

PredictionRecord PredictionRecord::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("prediction record must be an object");
  PredictionRecord r;
  r.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump()) : "";
  if (j.contains("predicted") && !j["predicted"].is_null()) r.predicted = value_from_json(j["predicted"], "predicted");
  if (j.contains("gold") && !j["gold"].is_null()) r.gold = value_from_json(j["gold"], "gold");
  if (j.contains("confidence") && !j["confidence"].is_null()) {
    if (!j["confidence"].is_number()) throw Error("confidence must be a number");
    r.confidence = j["confidence"].get<double>();
    if (!(*r.confidence >= 0.0 && *r.confidence <= 1.0)) throw Error("record " + r.id + " has confidence outside [0,1]");
  }
  if (j.contains("correct") && !j["correct"].is_null()) {
    if (j["correct"].is_boolean()) {
      r.correct = j["correct"].get<bool>();
    } else if (j["correct"].is_number()) {
      r.correct = j["correct"].get<double>() != 0.0;
    } else {
      throw Error("correct must be a boolean");
    }
  }
  return r;
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(path + ":" + std::to_string(n) + ": invalid JSON");
    try {
      out.push_back(PredictionRecord::from_json(j));
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

double accuracy(const std::vector<PredictionRecord>& records) {
  require_nonempty(records);
  std::size_t hits = 0;
  for (const auto& r : records) {
    const auto c = r.is_correct();
    if (!c) throw Error("record " + r.id + " has neither correct nor predicted/gold");
    hits += static_cast<std::size_t>(*c);
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double mad(const std::vector<PredictionRecord>& records) {
  require_nonempty(records);
  double sum = 0.0;
  for (const auto& r : records) {
    const double* p = r.predicted ? std::get_if<double>(&*r.predicted) : nullptr;
    const double* g = r.gold ? std::get_if<double>(&*r.gold) : nullptr;
    if (!p || !g) throw Error("record " + r.id + " needs numeric predicted and gold");
    sum += std::abs(*p - *g);
  }
  return sum / static_cast<double>(records.size());
}

double token_f1(const std::vector<PredictionRecord>& records) {
  require_nonempty(records);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& r : records) {
    if (!r.predicted || !r.gold) throw Error("record " + r.id + " needs predicted and gold");
    const auto p = token_set(*r.predicted);
    const auto g = token_set(*r.gold);
    for (const auto& t : p) (g.contains(t) ? tp : fp)++;
    for (const auto& t : g) fn += static_cast<std::size_t>(!p.contains(t));
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// ---------------------------------------------------------------------------

void CalibrationReport::merge(const CalibrationReport& other) {
  if (other.num_bins != num_bins) throw Error("cannot merge calibration reports with different bins");
  total += other.total;
  double e = 0.0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].count += other.bins[b].count;
    bins[b].confidence_sum += other.bins[b].confidence_sum;
    bins[b].correct += other.bins[b].correct;
    e += static_cast<double>(bins[b].count) * std::abs(bins[b].accuracy() - bins[b].mean_confidence());
  }
  ece = total ? e / static_cast<double>(total) : 0.0;
}

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json j;
  j["num_bins"] = num_bins;
  j["total"] = total;
  j["ece"] = ece;
  j["ece_pct"] = format_fixed(ece * 100.0, 2);
  j["bins"] = nlohmann::json::array();
  for (const auto& b : bins) {
    j["bins"].push_back({{"low", b.low},
                         {"high", b.high},
                         {"count", b.count},
                         {"mean_confidence", b.mean_confidence()},
                         {"accuracy", b.accuracy()}});
  }
  return j;
}

CalibrationReport ece(const std::vector<PredictionRecord>& records, std::size_t num_bins) {
  if (num_bins < 1) throw Error("num_bins must be >= 1");
  require_nonempty(records);
  CalibrationReport rep;
  rep.num_bins = num_bins;
  rep.bins.resize(num_bins);
  for (std::size_t b = 0; b < num_bins; ++b) {
    rep.bins[b].low = static_cast<double>(b) / static_cast<double>(num_bins);
    rep.bins[b].high = static_cast<double>(b + 1) / static_cast<double>(num_bins);
  }
  CalibrationReport empty = rep;
  for (const auto& r : records) {
    if (!r.confidence) throw Error("record " + r.id + " has no confidence");
    const double c = *r.confidence;
    if (!(c >= 0.0 && c <= 1.0)) throw Error("record " + r.id + " has confidence outside [0,1]");
    const auto ok = r.is_correct();
    if (!ok) throw Error("record " + r.id + " has no correctness");
    auto b = static_cast<std::size_t>(std::floor(c * static_cast<double>(num_bins)));
    b = std::min(b, num_bins - 1);
    ++rep.total;
    auto& bin = rep.bins[b];
    ++bin.count;
    bin.confidence_sum += c;
    bin.correct += static_cast<std::size_t>(*ok);
  }
  // Merging into an empty report computes total and ece from the bins.
  empty.merge(rep);
  return empty;
}

// ---------------------------------------------------------------------------

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::mad: return "mad";
    case Metric::f1: return "f1";
  }
  return "accuracy";
}

Metric parse_metric(std::string_view s) {
  if (s == "accuracy" || s == "acc") return Metric::accuracy;
  if (s == "mad") return Metric::mad;
  if (s == "f1") return Metric::f1;
  throw Error("unknown metric: " + std::string(s));
}

double aggregate_cyber(const std::vector<BenchmarkScore>& scores, const std::vector<std::string>* expected) {
  std::set<std::string> seen;
  double sum = 0.0;
  for (const auto& s : scores) {
    if (!seen.insert(s.name).second) throw Error("duplicate benchmark: " + s.name);
    if (s.metric == Metric::mad ? s.value < 0.0 : (s.value < 0.0 || s.value > 1.0)) {
      throw Error("benchmark " + s.name + " has an out-of-range " + std::string(metric_name(s.metric)));
    }
    sum += s.metric == Metric::mad ? -s.value : s.value;
  }
  if (expected) {
    const std::set<std::string> want(expected->begin(), expected->end());
    for (const auto& name : want) {
      if (!seen.contains(name)) throw Error("missing benchmark: " + name);
    }
    for (const auto& name : seen) {
      if (!want.contains(name)) throw Error("unexpected benchmark: " + name);
    }
  }
  return sum;
}

double aggregate_weighted(double mt_bench, double cyber_agg, double w_mt, double w_cyber) {
  if (std::abs(w_mt + w_cyber - 1.0) > 1e-9) throw Error("aggregate weights must sum to 1");
  return w_mt * mt_bench + w_cyber * cyber_agg;
}

double mae_agreement(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error("score lists differ in length (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw Error("no scores");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double improvement_pct(double old_value, double new_value) {
  if (old_value == 0.0) throw Error("improvement over a zero baseline is undefined");
  return (new_value - old_value) / std::abs(old_value) * 100.0;
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string format_change(double pct) { return (pct >= 0 ? "+" : "") + format_fixed(pct, 1) + "%"; }

}  // namespace curate
