#pragma once

// MinHash-LSH near-duplicate detection and exact n-gram decontamination.
//
// A document's word k-shingles (toolkit tokenizer) are hashed once with a
// base 64-bit hash; hash function i is mix64(base ^ salt_i) with salt_i
// derived from (seed, i). The signature is split into bands of
// rows_per_band values; two documents whose slices agree on any band are
// unioned. With b bands of r rows, a pair at Jaccard s is detected with
// probability 1 - (1 - s^r)^b.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curate/corpus_io.hpp"

namespace curate {

struct LshConfig {
  std::size_t shingle_size = 5;
  std::size_t num_hashes = 112;
  std::size_t num_bands = 14;
  std::size_t rows_per_band = 8;
  std::uint64_t seed = 0x1f2e3d4c5b6a7988ULL;

  /// num_bands * rows_per_band must equal num_hashes.
  void validate() const;
  static LshConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct MinHashSignature {
  std::uint64_t doc_id = 0;
  std::vector<std::uint64_t> values;
};

/// Distinct word k-grams (joined by single spaces), sorted. Fewer than k
/// tokens yields the whole token sequence as one shingle; no tokens yields
/// an empty set.
std::vector<std::string> shingles(std::string_view text, std::size_t k);

/// Base hashes of the shingles of a text (may contain repeats).
std::vector<std::uint64_t> shingle_hashes(std::string_view text, std::size_t k);

class MinHasher {
 public:
  explicit MinHasher(const LshConfig& cfg);

  const LshConfig& config() const { return cfg_; }
  /// Throws Error on an empty input.
  MinHashSignature sign(std::span<const std::uint64_t> base_hashes, std::uint64_t doc_id = 0) const;
  MinHashSignature sign(const std::vector<std::string>& shingle_set, std::uint64_t doc_id = 0) const;
  /// Writes the signature into out (size num_hashes).
  void sign_into(std::span<const std::uint64_t> base_hashes, std::span<std::uint64_t> out) const;

 private:
  LshConfig cfg_;
  std::vector<std::uint64_t> salts_;
};

MinHashSignature signature(const std::vector<std::string>& shingle_set, const LshConfig& cfg,
                           std::uint64_t doc_id = 0);

/// Union-find over doc ids 0..n-1. The root of every set is its smallest
/// member, so the root is also the first-seen document.
class ClusterSet {
 public:
  explicit ClusterSet(std::size_t n = 0);

  std::size_t size() const { return parent_.size(); }
  std::size_t find(std::size_t x) const;
  void unite(std::size_t a, std::size_t b);
  bool same(std::size_t a, std::size_t b) const { return find(a) == find(b); }
  bool is_representative(std::size_t x) const { return find(x) == x; }

  /// Clusters with at least two members, each sorted, ordered by smallest id.
  std::vector<std::vector<std::size_t>> clusters() const;

 private:
  mutable std::vector<std::size_t> parent_;
};

/// Bands every signature and unions colliding documents. Candidate
/// collisions on the band hash are confirmed by comparing the full slice.
/// When shards is given, only documents in the same shard are compared.
ClusterSet find_duplicates(const std::vector<MinHashSignature>& signatures, const LshConfig& cfg,
                           const std::vector<std::uint32_t>* shards = nullptr, unsigned threads = 1);

struct CorpusCounts {
  std::size_t samples = 0;
  std::size_t tokens = 0;
  double avg() const { return samples ? static_cast<double>(tokens) / static_cast<double>(samples) : 0.0; }
};

/// Before/after accounting in the layout of a dedup statistics table.
struct DedupReport {
  std::optional<double> threshold;
  CorpusCounts before;
  CorpusCounts after;
  std::size_t clusters = 0;
  std::string tokenizer = "whitespace";

  std::size_t removed() const { return before.samples - after.samples; }
  nlohmann::json to_json() const;
};

struct DedupResult {
  std::vector<Document> kept;
  DedupReport report;
};

/// Keeps one document per cluster: the lowest doc id.
DedupResult deduplicate(const std::vector<Document>& docs, const ClusterSet& clusters);

/// Signs every document (in parallel when threads > 1) and clusters them.
/// Documents without tokens are never clustered.
ClusterSet cluster_documents(const std::vector<Document>& docs, const LshConfig& cfg, unsigned threads = 1,
                             bool per_source_shards = false);

/// Signature container: magic, version, config, count, then fixed-width
/// records (doc_id + num_hashes values), all little-endian u64.
void write_signatures(const std::filesystem::path& path, const LshConfig& cfg,
                      const std::vector<MinHashSignature>& signatures);
std::vector<MinHashSignature> read_signatures(const std::filesystem::path& path, LshConfig* cfg = nullptr);

struct OverlapMatch {
  std::string ngram;
  std::size_t a_index;
  std::size_t b_index;
};

struct OverlapResult {
  std::size_t n = 0;
  std::size_t count = 0;  // distinct shared n-grams
  std::vector<OverlapMatch> matches;
  nlohmann::json to_json(bool include_matches = true) const;
};

/// Distinct word n-grams present in both corpora, with one witness sample
/// index per side. Samples shorter than n tokens contribute nothing.
OverlapResult ngram_overlap(const std::vector<std::string>& corpus_a, const std::vector<std::string>& corpus_b,
                            std::size_t n);

}  // namespace curate
