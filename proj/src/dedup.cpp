#include "curate/dedup.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "curate/text.hpp"

namespace curate {

namespace {

constexpr char kSigMagic[4] = {'C', 'M', 'H', 'S'};
constexpr std::uint32_t kSigVersion = 1;

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string s;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

std::uint64_t band_hash(std::span<const std::uint64_t> slice, std::uint64_t salt) {
  std::uint64_t h = salt;
  for (auto v : slice) h = mix64(h ^ v);
  return h;
}

// Runs fn(begin, end) over [0, n) split into `threads` contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void LshConfig::validate() const {
  if (shingle_size < 1) throw Error("shingle_size must be >= 1");
  if (num_hashes < 1) throw Error("num_hashes must be >= 1");
  if (num_bands * rows_per_band != num_hashes) {
    throw Error("num_bands * rows_per_band (" + std::to_string(num_bands) + " * " + std::to_string(rows_per_band) +
                ") must equal num_hashes (" + std::to_string(num_hashes) + ")");
  }
}

LshConfig LshConfig::from_json(const nlohmann::json& j) {
  LshConfig cfg;
  if (j.is_null()) return cfg;
  try {
    if (j.contains("shingle_size")) cfg.shingle_size = j["shingle_size"].get<std::size_t>();
    if (j.contains("num_hashes")) cfg.num_hashes = j["num_hashes"].get<std::size_t>();
    if (j.contains("num_bands")) cfg.num_bands = j["num_bands"].get<std::size_t>();
    if (j.contains("rows_per_band")) cfg.rows_per_band = j["rows_per_band"].get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid LSH config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json LshConfig::to_json() const {
  return {{"shingle_size", shingle_size},
          {"num_hashes", num_hashes},
          {"num_bands", num_bands},
          {"rows_per_band", rows_per_band},
          {"seed", seed}};
}

std::vector<std::string> shingles(std::string_view text, std::size_t k) {
  if (k < 1) throw Error("shingle size must be >= 1");
  const auto tokens = tokenize(text);
  std::vector<std::string> out;
  if (tokens.empty()) return out;
  if (tokens.size() < k) {
    out.push_back(join_tokens(tokens, 0, tokens.size()));
    return out;
  }
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) out.push_back(join_tokens(tokens, i, i + k));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::uint64_t> shingle_hashes(std::string_view text, std::size_t k) {
  if (k < 1) throw Error("shingle size must be >= 1");
  const auto tokens = tokenize(text);
  std::vector<std::uint64_t> out;
  if (tokens.empty()) return out;
  if (tokens.size() < k) {
    out.push_back(hash64(join_tokens(tokens, 0, tokens.size())));
    return out;
  }
  out.reserve(tokens.size() - k + 1);
  std::string buf;
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
    buf.clear();
    for (std::size_t j = i; j < i + k; ++j) {
      if (j > i) buf.push_back(' ');
      buf += tokens[j];
    }
    out.push_back(hash64(buf));
  }
  return out;
}

MinHasher::MinHasher(const LshConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  salts_.resize(cfg_.num_hashes);
  for (std::size_t i = 0; i < cfg_.num_hashes; ++i) {
    salts_[i] = mix64(mix64(cfg_.seed) + 0x9e3779b97f4a7c15ULL * (i + 1));
  }
}

void MinHasher::sign_into(std::span<const std::uint64_t> base_hashes, std::span<std::uint64_t> out) const {
  if (base_hashes.empty()) throw Error("cannot sign an empty shingle set");
  const std::size_t m = salts_.size();
  std::fill(out.begin(), out.end(), std::numeric_limits<std::uint64_t>::max());
  const std::uint64_t* salts = salts_.data();
  std::uint64_t* dst = out.data();
  for (const std::uint64_t x : base_hashes) {
    for (std::size_t i = 0; i < m; ++i) {
      const std::uint64_t h = mix64(x ^ salts[i]);
      dst[i] = h < dst[i] ? h : dst[i];
    }
  }
}

MinHashSignature MinHasher::sign(std::span<const std::uint64_t> base_hashes, std::uint64_t doc_id) const {
  MinHashSignature sig;
  sig.doc_id = doc_id;
  sig.values.resize(cfg_.num_hashes);
  sign_into(base_hashes, sig.values);
  return sig;
}

MinHashSignature MinHasher::sign(const std::vector<std::string>& shingle_set, std::uint64_t doc_id) const {
  std::vector<std::uint64_t> hashes;
  hashes.reserve(shingle_set.size());
  for (const auto& s : shingle_set) hashes.push_back(hash64(s));
  return sign(hashes, doc_id);
}

MinHashSignature signature(const std::vector<std::string>& shingle_set, const LshConfig& cfg, std::uint64_t doc_id) {
  return MinHasher(cfg).sign(shingle_set, doc_id);
}

// ---------------------------------------------------------------------------

ClusterSet::ClusterSet(std::size_t n) : parent_(n) {
  for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
}

std::size_t ClusterSet::find(std::size_t x) const {
  if (x >= parent_.size()) throw Error("doc id " + std::to_string(x) + " outside cluster set");
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

void ClusterSet::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return;
  if (b < a) std::swap(a, b);
  parent_[b] = a;
}

std::vector<std::vector<std::size_t>> ClusterSet::clusters() const {
  // ids are visited in ascending order and roots are minimal, so each group
  // comes out sorted with its root first
  std::unordered_map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < parent_.size(); ++i) {
    groups[find(i)].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) {
    if (members.size() >= 2) out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return out;
}

ClusterSet find_duplicates(const std::vector<MinHashSignature>& signatures, const LshConfig& cfg,
                           const std::vector<std::uint32_t>* shards, unsigned threads) {
  cfg.validate();
  std::size_t n = 0;
  for (const auto& s : signatures) {
    if (s.values.size() != cfg.num_hashes) {
      throw Error("signature of doc " + std::to_string(s.doc_id) + " has " + std::to_string(s.values.size()) +
                  " values, expected " + std::to_string(cfg.num_hashes));
    }
    n = std::max<std::size_t>(n, s.doc_id + 1);
  }
  if (shards && shards->size() < n) throw Error("shard list shorter than doc id range");
  ClusterSet clusters(n);
  const std::size_t r = cfg.rows_per_band;

  // Collision collection per band (parallel across bands), clustering serial.
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> pairs(cfg.num_bands);
  auto process_bands = [&](std::size_t band_begin, std::size_t band_end) {
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
    for (std::size_t band = band_begin; band < band_end; ++band) {
      buckets.clear();
      buckets.reserve(signatures.size());
      const std::uint64_t salt = mix64(cfg.seed ^ (0xa0761d6478bd642fULL * (band + 1)));
      for (std::size_t i = 0; i < signatures.size(); ++i) {
        const auto slice = std::span(signatures[i].values).subspan(band * r, r);
        std::uint64_t key = band_hash(slice, salt);
        const std::uint32_t shard = shards ? (*shards)[signatures[i].doc_id] : 0;
        if (shards) key = mix64(key ^ shard);
        auto& reps = buckets[key];
        bool matched = false;
        for (const std::uint32_t rep : reps) {
          const auto other = std::span(signatures[rep].values).subspan(band * r, r);
          if (std::equal(slice.begin(), slice.end(), other.begin()) &&
              (!shards || (*shards)[signatures[rep].doc_id] == shard)) {
            pairs[band].emplace_back(rep, static_cast<std::uint32_t>(i));
            matched = true;
            break;
          }
        }
        if (!matched) reps.push_back(static_cast<std::uint32_t>(i));
      }
    }
  };
  parallel_chunks(cfg.num_bands, threads, process_bands);
  for (const auto& band_pairs : pairs) {
    for (const auto& [a, b] : band_pairs) clusters.unite(signatures[a].doc_id, signatures[b].doc_id);
  }
  return clusters;
}

nlohmann::json DedupReport::to_json() const {
  auto row = [&](bool dedup, const CorpusCounts& c) {
    nlohmann::json j;
    if (threshold) {
      j["threshold"] = *threshold;
    } else {
      j["threshold"] = nullptr;
    }
    j["dedup"] = dedup;
    j["samples"] = c.samples;
    j["tokens"] = c.tokens;
    j["avg"] = c.avg();
    return j;
  };
  nlohmann::json j;
  j["rows"] = {row(false, before), row(true, after)};
  j["clusters"] = clusters;
  j["removed"] = removed();
  j["tokenizer"] = tokenizer;
  return j;
}

DedupResult deduplicate(const std::vector<Document>& docs, const ClusterSet& clusters) {
  DedupResult result;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::size_t tokens = count_whitespace_tokens(docs[i].content);
    ++result.report.before.samples;
    result.report.before.tokens += tokens;
    if (i >= clusters.size() || clusters.is_representative(i)) {
      result.kept.push_back(docs[i]);
      ++result.report.after.samples;
      result.report.after.tokens += tokens;
    }
  }
  result.report.clusters = clusters.clusters().size();
  return result;
}

ClusterSet cluster_documents(const std::vector<Document>& docs, const LshConfig& cfg, unsigned threads,
                             bool per_source_shards) {
  const MinHasher hasher(cfg);
  std::vector<std::optional<MinHashSignature>> slots(docs.size());
  parallel_chunks(docs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto hashes = shingle_hashes(docs[i].content, cfg.shingle_size);
      if (!hashes.empty()) slots[i] = hasher.sign(hashes, i);
    }
  });
  std::vector<MinHashSignature> sigs;
  sigs.reserve(docs.size());
  for (auto& s : slots) {
    if (s) sigs.push_back(std::move(*s));
  }
  std::vector<std::uint32_t> shards;
  if (per_source_shards) {
    std::unordered_map<std::string, std::uint32_t> ids;
    shards.reserve(docs.size());
    for (const auto& d : docs) shards.push_back(ids.try_emplace(d.source, static_cast<std::uint32_t>(ids.size())).first->second);
  }
  ClusterSet found = find_duplicates(sigs, cfg, per_source_shards ? &shards : nullptr, threads);
  ClusterSet all(docs.size());
  for (std::size_t i = 0; i < found.size(); ++i) all.unite(i, found.find(i));
  return all;
}

void write_signatures(const std::filesystem::path& path, const LshConfig& cfg,
                      const std::vector<MinHashSignature>& signatures) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kSigMagic, 4);
  le::write_u32(os, kSigVersion);
  le::write_u64(os, cfg.shingle_size);
  le::write_u64(os, cfg.num_hashes);
  le::write_u64(os, cfg.num_bands);
  le::write_u64(os, cfg.rows_per_band);
  le::write_u64(os, cfg.seed);
  le::write_u64(os, signatures.size());
  for (const auto& s : signatures) {
    if (s.values.size() != cfg.num_hashes) throw Error("signature length does not match config");
    le::write_u64(os, s.doc_id);
    for (auto v : s.values) le::write_u64(os, v);
  }
  if (!os) throw Error("failed writing " + path.string());
}

std::vector<MinHashSignature> read_signatures(const std::filesystem::path& path, LshConfig* cfg_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kSigMagic)) throw Error("not a signature file");
  if (le::read_u32(is) != kSigVersion) throw Error("unsupported signature file version");
  LshConfig cfg;
  cfg.shingle_size = le::read_u64(is);
  cfg.num_hashes = le::read_u64(is);
  cfg.num_bands = le::read_u64(is);
  cfg.rows_per_band = le::read_u64(is);
  cfg.seed = le::read_u64(is);
  cfg.validate();
  const std::uint64_t count = le::read_u64(is);
  std::vector<MinHashSignature> sigs(count);
  for (auto& s : sigs) {
    s.doc_id = le::read_u64(is);
    s.values.resize(cfg.num_hashes);
    for (auto& v : s.values) v = le::read_u64(is);
  }
  if (cfg_out) *cfg_out = cfg;
  return sigs;
}

// ---------------------------------------------------------------------------

nlohmann::json OverlapResult::to_json(bool include_matches) const {
  nlohmann::json j;
  j["n"] = n;
  j["count"] = count;
  if (include_matches) {
    j["matches"] = nlohmann::json::array();
    for (const auto& m : matches) {
      j["matches"].push_back({{"ngram", m.ngram}, {"a_index", m.a_index}, {"b_index", m.b_index}});
    }
  }
  return j;
}

OverlapResult ngram_overlap(const std::vector<std::string>& corpus_a, const std::vector<std::string>& corpus_b,
                            std::size_t n) {
  if (n < 1) throw Error("n-gram size must be >= 1");
  constexpr std::uint32_t kUnknown = std::numeric_limits<std::uint32_t>::max();
  std::unordered_map<std::string, std::uint32_t> vocab;
  std::vector<std::string> words;
  std::vector<std::vector<std::uint32_t>> a_ids(corpus_a.size());
  for (std::size_t d = 0; d < corpus_a.size(); ++d) {
    for (auto& tok : tokenize(corpus_a[d])) {
      auto [it, inserted] = vocab.try_emplace(tok, static_cast<std::uint32_t>(words.size()));
      if (inserted) words.push_back(tok);
      a_ids[d].push_back(it->second);
    }
  }
  auto window_hash = [n](std::span<const std::uint32_t> w) {
    std::uint64_t h = 0x51ed2701f3a4c7b9ULL ^ n;
    for (auto id : w) h = mix64(h ^ id);
    return h;
  };
  // distinct n-grams of A: hash -> witnesses (doc, pos), one per distinct n-gram
  struct Witness {
    std::uint32_t doc;
    std::uint32_t pos;
  };
  std::unordered_map<std::uint64_t, std::vector<Witness>> table;
  auto slice_of = [&](const Witness& w) { return std::span(a_ids[w.doc]).subspan(w.pos, n); };
  for (std::uint32_t d = 0; d < a_ids.size(); ++d) {
    const auto& ids = a_ids[d];
    for (std::size_t p = 0; p + n <= ids.size(); ++p) {
      const auto w = std::span(ids).subspan(p, n);
      auto& entries = table[window_hash(w)];
      const bool seen = std::any_of(entries.begin(), entries.end(), [&](const Witness& e) {
        const auto other = slice_of(e);
        return std::equal(w.begin(), w.end(), other.begin());
      });
      if (!seen) entries.push_back({d, static_cast<std::uint32_t>(p)});
    }
  }

  OverlapResult result;
  result.n = n;
  std::unordered_set<std::uint64_t> found;  // (doc << 32 | pos) of the A witness
  std::vector<std::uint32_t> ids;
  for (std::size_t d = 0; d < corpus_b.size(); ++d) {
    ids.clear();
    for (const auto& tok : tokenize(corpus_b[d])) {
      auto it = vocab.find(tok);
      ids.push_back(it == vocab.end() ? kUnknown : it->second);
    }
    for (std::size_t p = 0; p + n <= ids.size(); ++p) {
      const auto w = std::span(ids).subspan(p, n);
      if (std::find(w.begin(), w.end(), kUnknown) != w.end()) continue;
      auto it = table.find(window_hash(w));
      if (it == table.end()) continue;
      for (const auto& e : it->second) {
        const auto other = slice_of(e);
        if (!std::equal(w.begin(), w.end(), other.begin())) continue;
        const std::uint64_t key = (static_cast<std::uint64_t>(e.doc) << 32) | e.pos;
        if (found.insert(key).second) {
          std::string gram;
          for (std::size_t k = 0; k < n; ++k) {
            if (k) gram.push_back(' ');
            gram += words[other[k]];
          }
          result.matches.push_back({std::move(gram), e.doc, d});
        }
        break;
      }
    }
  }
  result.count = found.size();
  return result;
}

}  // namespace curate
