#include "curate/domain_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "curate/text.hpp"

namespace curate {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

double sigmoid(double margin) {
  double s;
  if (margin >= 0) {
    s = 1.0 / (1.0 + std::exp(-margin));
  } else {
    const double e = std::exp(margin);
    s = e / (1.0 + e);
  }
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(s, lo, hi);
}

LinearClassifier::LinearClassifier(std::size_t feature_dim, std::uint64_t hash_seed, int max_ngram)
    : weights_(Eigen::VectorXf::Zero(static_cast<Eigen::Index>(feature_dim))),
      hash_seed_(hash_seed),
      max_ngram_(max_ngram) {
  if (feature_dim == 0 || feature_dim > std::numeric_limits<std::uint32_t>::max()) {
    throw Error("feature_dim must be in [1, 2^32)");
  }
  if (max_ngram < 1 || max_ngram > 2) throw Error("max_ngram must be 1 or 2");
}

std::uint32_t LinearClassifier::bucket(std::string_view gram) const {
  return static_cast<std::uint32_t>(hash64(gram, hash_seed_) % static_cast<std::uint64_t>(weights_.size()));
}

SparseFeatures LinearClassifier::features(std::string_view text) const {
  const auto tokens = tokenize(text);
  std::map<std::uint32_t, float> tf;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tf[bucket(tokens[i])] += 1.0f;
    if (max_ngram_ >= 2 && i + 1 < tokens.size()) tf[bucket(tokens[i] + " " + tokens[i + 1])] += 1.0f;
  }
  double norm = 0.0;
  for (const auto& [_, v] : tf) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  SparseFeatures x;
  x.reserve(tf.size());
  for (const auto& [j, v] : tf) x.emplace_back(j, static_cast<float>(v / norm));
  return x;
}

double LinearClassifier::margin(const SparseFeatures& x) const {
  double m = bias_;
  for (const auto& [j, v] : x) m += static_cast<double>(weights_[j]) * v;
  return m;
}

ClassifierScore LinearClassifier::score(std::string_view text) const {
  const auto x = features(text);
  return {sigmoid(margin(x)), x.empty()};
}

void LinearClassifier::save(std::ostream& os) const {
  os.write(kMagic, 4);
  le::write_u32(os, kVersion);
  le::write_u64(os, feature_dim());
  le::write_u64(os, hash_seed_);
  le::write_u32(os, static_cast<std::uint32_t>(max_ngram_));
  for (Eigen::Index i = 0; i < weights_.size(); ++i) le::write_f32(os, weights_[i]);
  le::write_f32(os, bias_);
  if (!os) throw Error("failed to write classifier");
}

void LinearClassifier::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  save(os);
}

LinearClassifier LinearClassifier::load(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw Error("not a classifier file");
  if (le::read_u32(is) != kVersion) throw Error("unsupported classifier version");
  const std::uint64_t dim = le::read_u64(is);
  const std::uint64_t seed = le::read_u64(is);
  const auto max_ngram = static_cast<int>(le::read_u32(is));
  LinearClassifier model(dim, seed, max_ngram);
  for (Eigen::Index i = 0; i < model.weights_.size(); ++i) model.weights_[i] = le::read_f32(is);
  model.bias_ = le::read_f32(is);
  return model;
}

LinearClassifier LinearClassifier::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return load(is);
}

// ---------------------------------------------------------------------------

std::vector<LabeledDoc> assemble_training_set(const std::vector<Document>& positives,
                                              const std::vector<Document>& background, std::size_t neg_ratio,
                                              std::uint64_t seed) {
  if (neg_ratio < 1) throw Error("neg_ratio must be >= 1");
  const std::size_t wanted = neg_ratio * positives.size();
  if (background.size() < wanted) {
    throw Error("background has " + std::to_string(background.size()) + " documents, need " +
                std::to_string(wanted) + " (short by " + std::to_string(wanted - background.size()) + ")");
  }
  SeededRng rng(seed);
  std::vector<LabeledDoc> out;
  out.reserve(positives.size() + wanted);
  for (const auto& d : positives) out.push_back({d, 1});
  for (std::size_t idx : rng.sample_indices(background.size(), wanted)) out.push_back({background[idx], 0});
  rng.shuffle(out);
  return out;
}

TrainResult train_classifier(const std::vector<LabeledDoc>& data, const TrainOptions& options) {
  std::size_t positives = 0;
  for (const auto& s : data) {
    if (s.label != 0 && s.label != 1) throw Error("labels must be 0 or 1");
    positives += static_cast<std::size_t>(s.label);
  }
  if (positives == 0 || positives == data.size()) throw Error("training data must contain both labels");
  if (options.epochs < 1) throw Error("epochs must be >= 1");
  if (!(options.learning_rate > 0)) throw Error("learning rate must be > 0");

  LinearClassifier model(options.feature_dim, options.hash_seed, options.max_ngram);
  std::vector<SparseFeatures> xs;
  xs.reserve(data.size());
  for (const auto& s : data) xs.push_back(model.features(s.doc.content));

  SeededRng rng(options.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto& w = model.weights();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double p = sigmoid(model.margin(xs[i]));
      const double step = options.learning_rate * (p - static_cast<double>(data[i].label));
      for (const auto& [j, v] : xs[i]) w[j] -= static_cast<float>(step * v);
      model.bias() -= static_cast<float>(step);
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool predicted = sigmoid(model.margin(xs[i])) > 0.5;
    correct += static_cast<std::size_t>(predicted == (data[i].label == 1));
  }
  return {std::move(model), static_cast<double>(correct) / static_cast<double>(data.size())};
}

// ---------------------------------------------------------------------------

std::vector<double> default_bin_edges() {
  return {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.03, 0.01, 0.005, 0.003, 0.001, 0.0};
}

nlohmann::json BinReport::to_json() const {
  nlohmann::json j;
  j["bins"] = nlohmann::json::array();
  for (const auto& b : bins) {
    nlohmann::json jb{{"low", b.low},           {"high", b.high},         {"population", b.population},
                      {"sampled", b.sampled}, {"relevant", b.relevant}};
    jb["ratio"] = b.ratio ? nlohmann::json(*b.ratio) : nlohmann::json(nullptr);
    j["bins"].push_back(std::move(jb));
  }
  j["threshold_selected"] = threshold_selected ? nlohmann::json(*threshold_selected) : nlohmann::json(nullptr);
  return j;
}

BinReport BinReport::from_json(const nlohmann::json& j) {
  BinReport r;
  try {
    for (const auto& jb : j.at("bins")) {
      ScoreBin b;
      b.low = jb.at("low").get<double>();
      b.high = jb.at("high").get<double>();
      b.population = jb.value("population", std::size_t{0});
      b.sampled = jb.value("sampled", std::size_t{0});
      b.relevant = jb.value("relevant", std::size_t{0});
      if (jb.contains("ratio") && !jb["ratio"].is_null()) b.ratio = jb["ratio"].get<double>();
      r.bins.push_back(b);
    }
    if (j.contains("threshold_selected") && !j["threshold_selected"].is_null()) {
      r.threshold_selected = j["threshold_selected"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid bin report: ") + e.what());
  }
  return r;
}

BinReport bin_calibration(const std::vector<std::pair<Document, double>>& scored, const std::vector<double>& edges,
                          std::size_t sample_per_bin, const Labeler& labeler, std::uint64_t seed) {
  if (edges.size() < 2) throw Error("need at least two bin edges");
  if (edges.front() < 1.0 || edges.back() > 0.0) throw Error("bin edges must span [0, 1]");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] < edges[i - 1])) throw Error("bin edges must be strictly decreasing");
  }
  const std::size_t nbins = edges.size() - 1;
  std::vector<std::vector<std::size_t>> members(nbins);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const double s = scored[i].second;
    std::size_t b = 0;
    while (b + 1 < nbins && !(s > edges[b + 1])) ++b;
    members[b].push_back(i);
  }
  BinReport report;
  for (std::size_t b = 0; b < nbins; ++b) {
    ScoreBin bin;
    bin.high = edges[b];
    bin.low = edges[b + 1];
    bin.population = members[b].size();
    SeededRng rng(mix64(seed) ^ mix64(b + 1));
    for (std::size_t k : rng.sample_indices(members[b].size(), sample_per_bin)) {
      ++bin.sampled;
      if (labeler(scored[members[b][k]].first)) ++bin.relevant;
    }
    if (bin.sampled > 0) bin.ratio = static_cast<double>(bin.relevant) / static_cast<double>(bin.sampled);
    report.bins.push_back(bin);
  }
  return report;
}

double select_threshold(const BinReport& report, double min_ratio) {
  if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw Error("min_ratio must be in (0,1)");
  std::vector<ScoreBin> bins = report.bins;
  std::stable_sort(bins.begin(), bins.end(), [](const ScoreBin& a, const ScoreBin& b) { return a.high > b.high; });
  std::optional<double> threshold;
  for (const auto& b : bins) {
    if (!b.ratio) continue;
    if (*b.ratio < min_ratio) break;
    threshold = b.low;
  }
  if (!threshold) throw Error("no score bin reaches the minimum relevance ratio");
  return *threshold;
}

}  // namespace curate
