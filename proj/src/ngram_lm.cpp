#include "curate/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "curate/text.hpp"

namespace curate {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'G', 'L'};
constexpr std::uint32_t kVersion = 1;

void append_id(std::string& key, std::uint32_t id) {
  for (int i = 0; i < 4; ++i) key.push_back(static_cast<char>((id >> (8 * i)) & 0xFF));
}

std::uint32_t id_at(std::string_view key, std::size_t index) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(key[4 * index + i])) << (8 * i);
  return v;
}

std::string pack(std::span<const std::uint32_t> ids) {
  std::string key;
  key.reserve(ids.size() * 4);
  for (auto id : ids) append_id(key, id);
  return key;
}

template <typename Map>
std::vector<std::pair<std::string, double>> sorted_entries(const Map& m) {
  std::vector<std::pair<std::string, double>> v(m.begin(), m.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return v;
}

const char* const kReserved[3] = {"<unk>", "<s>", "</s>"};

}  // namespace

void Smoothing::validate() const {
  if (kind == SmoothingKind::add_k && !(param > 0.0)) throw Error("add_k requires k > 0");
  if (kind == SmoothingKind::kneser_ney && !(param > 0.0 && param < 1.0)) {
    throw Error("Kneser-Ney discount must be in (0,1)");
  }
}

// ---------------------------------------------------------------------------

NGramCounter::NGramCounter(int order) : order_(order) {
  if (order < 1) throw Error("n-gram order must be >= 1");
  for (const char* r : kReserved) intern(r);
}

std::uint32_t NGramCounter::intern(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<std::uint32_t>(vocab_.size()));
  if (inserted) vocab_.push_back(token);
  return it->second;
}

void NGramCounter::add_text(std::string_view text) {
  const std::size_t pad = static_cast<std::size_t>(order_ - 1);
  std::vector<std::uint32_t> ids;
  for (std::string_view line : split_lines(text)) {
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    ids.assign(pad, NGramModel::kBos);
    for (const auto& t : tokens) ids.push_back(intern(t));
    if (order_ > 1) ids.push_back(NGramModel::kEos);
    for (std::size_t j = pad; j < ids.size(); ++j) {
      ++counts_[pack(std::span(ids).subspan(j - pad, pad + 1))];
    }
    ++sentences_;
    tokens_ += tokens.size();
  }
}

NGramCounter& NGramCounter::merge(const NGramCounter& other) {
  if (other.order_ != order_) throw Error("cannot merge counters of different order");
  std::vector<std::uint32_t> remap(other.vocab_.size());
  for (std::size_t i = 0; i < other.vocab_.size(); ++i) remap[i] = intern(other.vocab_[i]);
  for (const auto& [key, n] : other.counts_) {
    std::string mapped;
    mapped.reserve(key.size());
    for (std::size_t i = 0; i < key.size() / 4; ++i) append_id(mapped, remap[id_at(key, i)]);
    counts_[mapped] += n;
  }
  sentences_ += other.sentences_;
  tokens_ += other.tokens_;
  return *this;
}

NGramModel NGramCounter::build(Smoothing smoothing) const {
  smoothing.validate();
  if (counts_.empty()) throw Error("cannot train a language model on an empty corpus");

  NGramModel model;
  model.order_ = order_;
  model.smoothing_ = smoothing;
  // final vocabulary: reserved ids, then tokens sorted
  std::vector<std::string> words(vocab_.begin() + 3, vocab_.end());
  std::sort(words.begin(), words.end());
  model.vocab_.assign(std::begin(kReserved), std::end(kReserved));
  model.vocab_.insert(model.vocab_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < model.vocab_.size(); ++i) model.ids_[model.vocab_[i]] = static_cast<std::uint32_t>(i);
  std::vector<std::uint32_t> remap(vocab_.size());
  for (std::size_t i = 0; i < vocab_.size(); ++i) remap[i] = model.ids_.at(vocab_[i]);

  const auto n = static_cast<std::size_t>(order_);
  // per-order counts: raw at the top order, continuation counts below
  std::vector<std::unordered_map<std::string, std::uint64_t>> counts(n);
  for (const auto& [key, c] : counts_) {
    std::string mapped;
    for (std::size_t i = 0; i < n; ++i) append_id(mapped, remap[id_at(key, i)]);
    counts[n - 1][mapped] = c;
  }
  if (smoothing.kind == SmoothingKind::kneser_ney) {
    for (std::size_t m = n - 1; m >= 1; --m) {
      for (const auto& entry : counts[m]) {
        ++counts[m - 1][entry.first.substr(4)];  // drop the oldest word
      }
    }
  }

  model.alpha_.assign(n, {});
  model.gamma_.assign(n, {});
  const double vocab_size = static_cast<double>(model.predictable_size());
  const std::size_t lowest = smoothing.kind == SmoothingKind::kneser_ney ? 0 : n - 1;
  for (std::size_t m = lowest; m < n; ++m) {
    std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> context;  // total, types
    for (const auto& [key, c] : counts[m]) {
      auto& slot = context[key.substr(0, key.size() - 4)];
      slot.first += c;
      slot.second += 1;
    }
    auto& alpha = model.alpha_[m];
    auto& gamma = model.gamma_[m];
    if (smoothing.kind == SmoothingKind::kneser_ney) {
      const double d = smoothing.param;
      for (const auto& [key, c] : counts[m]) {
        const auto& ctx = context.at(key.substr(0, key.size() - 4));
        alpha[key] = std::max(static_cast<double>(c) - d, 0.0) / static_cast<double>(ctx.first);
      }
      for (const auto& [key, ctx] : context) {
        gamma[key] = d * static_cast<double>(ctx.second) / static_cast<double>(ctx.first);
      }
    } else {
      const double kv = smoothing.param * vocab_size;
      for (const auto& [key, c] : counts[m]) {
        const auto& ctx = context.at(key.substr(0, key.size() - 4));
        alpha[key] = static_cast<double>(c) / (static_cast<double>(ctx.first) + kv);
      }
      for (const auto& [key, ctx] : context) {
        gamma[key] = kv / (static_cast<double>(ctx.first) + kv);
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------

NGramModel NGramModel::train(const std::vector<Document>& corpus, int order, Smoothing smoothing) {
  NGramCounter counter(order);
  for (const auto& doc : corpus) counter.add(doc);
  return counter.build(smoothing);
}

std::uint32_t NGramModel::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::size_t NGramModel::predictable_size() const { return vocab_.size() - (order_ == 1 ? 2 : 1); }

std::vector<std::uint32_t> NGramModel::predictable_ids() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < vocab_.size(); ++i) {
    if (i == kBos || (order_ == 1 && i == kEos)) continue;
    out.push_back(i);
  }
  return out;
}

double NGramModel::prob_at(int m, std::span<const std::uint32_t> context, std::uint32_t word) const {
  if (m == 0) return 1.0 / static_cast<double>(predictable_size());
  const auto ctx = context.subspan(context.size() - static_cast<std::size_t>(m - 1));
  std::string key = pack(ctx);
  const auto& gamma = gamma_[static_cast<std::size_t>(m - 1)];
  auto g = gamma.find(key);
  if (g == gamma.end()) return prob_at(m - 1, context, word);
  append_id(key, word);
  const auto& alpha = alpha_[static_cast<std::size_t>(m - 1)];
  auto a = alpha.find(key);
  const double direct = a == alpha.end() ? 0.0 : a->second;
  return direct + g->second * prob_at(m - 1, context, word);
}

double NGramModel::prob(std::span<const std::uint32_t> context, std::uint32_t word) const {
  const auto need = static_cast<std::size_t>(order_ - 1);
  std::vector<std::uint32_t> ctx(need, kBos);
  const std::size_t take = std::min(need, context.size());
  std::copy(context.end() - static_cast<std::ptrdiff_t>(take), context.end(), ctx.end() - static_cast<std::ptrdiff_t>(take));
  return prob_at(order_, ctx, word);
}

double NGramModel::prob(const std::vector<std::string>& context, const std::string& word) const {
  std::vector<std::uint32_t> ids;
  for (const auto& t : context) {
    if (t == "<s>") {
      ids.push_back(kBos);
    } else {
      ids.push_back(id(t));
    }
  }
  return prob(ids, word == "</s>" ? kEos : id(word));
}

double NGramModel::perplexity(std::string_view text) const {
  const std::size_t pad = static_cast<std::size_t>(order_ - 1);
  double log_sum = 0.0;
  std::size_t scored = 0;
  std::vector<std::uint32_t> ids;
  for (std::string_view line : split_lines(text)) {
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    ids.assign(pad, kBos);
    for (const auto& t : tokens) ids.push_back(id(t));
    if (order_ > 1) ids.push_back(kEos);
    for (std::size_t j = pad; j < ids.size(); ++j) {
      log_sum += std::log(prob_at(order_, std::span(ids).subspan(j - pad, pad), ids[j]));
      ++scored;
    }
  }
  if (scored == 0) throw Error("perplexity of text with no tokens");
  return std::exp(-log_sum / static_cast<double>(scored));
}

void NGramModel::save(std::ostream& os) const {
  os.write(kMagic, 4);
  le::write_u32(os, kVersion);
  le::write_u32(os, static_cast<std::uint32_t>(order_));
  le::write_u32(os, static_cast<std::uint32_t>(smoothing_.kind));
  le::write_f64(os, smoothing_.param);
  le::write_u32(os, static_cast<std::uint32_t>(vocab_.size()));
  for (const auto& w : vocab_) le::write_str(os, w);
  for (std::size_t m = 0; m < static_cast<std::size_t>(order_); ++m) {
    for (const auto* table : {&gamma_[m], &alpha_[m]}) {
      const auto entries = sorted_entries(*table);
      le::write_u64(os, entries.size());
      for (const auto& [key, value] : entries) {
        le::write_str(os, key);
        le::write_f64(os, value);
      }
    }
  }
  if (!os) throw Error("failed to write language model");
}

void NGramModel::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  save(os);
}

NGramModel NGramModel::load(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw Error("not a language model file");
  const std::uint32_t version = le::read_u32(is);
  if (version != kVersion) throw Error("unsupported language model version " + std::to_string(version));
  NGramModel model;
  model.order_ = static_cast<int>(le::read_u32(is));
  if (model.order_ < 1 || model.order_ > 64) throw Error("corrupt language model order");
  model.smoothing_.kind = static_cast<SmoothingKind>(le::read_u32(is));
  model.smoothing_.param = le::read_f64(is);
  const std::uint32_t nv = le::read_u32(is);
  if (nv < 3) throw Error("corrupt language model vocabulary");
  model.vocab_.reserve(nv);
  for (std::uint32_t i = 0; i < nv; ++i) {
    model.vocab_.push_back(le::read_str(is));
    model.ids_[model.vocab_.back()] = i;
  }
  model.alpha_.assign(static_cast<std::size_t>(model.order_), {});
  model.gamma_.assign(static_cast<std::size_t>(model.order_), {});
  for (std::size_t m = 0; m < static_cast<std::size_t>(model.order_); ++m) {
    for (auto* table : {&model.gamma_[m], &model.alpha_[m]}) {
      const std::uint64_t count = le::read_u64(is);
      table->reserve(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        std::string key = le::read_str(is);
        (*table)[std::move(key)] = le::read_f64(is);
      }
    }
  }
  return model;
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return load(is);
}

// ---------------------------------------------------------------------------

ThresholdTable::ThresholdTable(const std::vector<PerplexityThreshold>& thresholds,
                               std::optional<double> default_threshold)
    : default_(default_threshold) {
  for (const auto& t : thresholds) {
    if (!(t.max_perplexity > 0.0)) throw Error("threshold for '" + t.source + "' must be > 0");
    if (!by_source_.emplace(t.source, t.max_perplexity).second) {
      throw Error("duplicate threshold for source '" + t.source + "'");
    }
  }
}

ThresholdTable ThresholdTable::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("thresholds must be a JSON object of source -> max perplexity");
  std::vector<PerplexityThreshold> list;
  std::optional<double> fallback;
  for (const auto& [source, value] : j.items()) {
    if (!value.is_number()) throw Error("threshold for '" + source + "' is not a number");
    if (source == "*") {
      fallback = value.get<double>();
    } else {
      list.push_back({source, value.get<double>()});
    }
  }
  return ThresholdTable(list, fallback);
}

double ThresholdTable::for_source(const std::string& source) const {
  auto it = by_source_.find(source);
  if (it != by_source_.end()) return it->second;
  if (default_) return *default_;
  throw Error("no perplexity threshold for source '" + source + "'");
}

std::optional<Document> lm_filter_one(const Document& doc, const NGramModel& model,
                                      const ThresholdTable& thresholds, FilterReport* report) {
  const double limit = thresholds.for_source(doc.source);
  double ppl;
  try {
    ppl = model.perplexity(doc.content);
  } catch (const Error&) {
    if (report) report->drop("lm:empty");
    return std::nullopt;
  }
  if (ppl <= limit) {
    if (report) report->keep();
    return doc;
  }
  if (report) report->drop("lm:perplexity");
  return std::nullopt;
}

LmFilterResult lm_filter(const std::vector<Document>& docs, const NGramModel& model,
                         const ThresholdTable& thresholds) {
  LmFilterResult result;
  for (const auto& doc : docs) {
    if (auto kept = lm_filter_one(doc, model, thresholds, &result.report)) result.kept.push_back(std::move(*kept));
  }
  return result;
}

}  // namespace curate
