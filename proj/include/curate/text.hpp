#pragma once

// Shared tokenizer, hashing and seeded randomness used by every module.
//
// All randomness in the toolkit goes through SeededRng or the stateless
// counter hash below so that results are bit-identical across platforms and
// across serial/parallel execution.

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace curate {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ASCII lowercase; bytes >= 0x80 are left untouched so UTF-8 stays valid.
std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
bool contains_ci(std::string_view lowered_haystack, std::string_view lowered_needle);

// Splits on '\n'; a trailing '\r' is stripped from each line.
std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string_view> split_whitespace(std::string_view text);

// The toolkit tokenizer: lowercase, split on whitespace, then detach every
// leading and trailing ASCII punctuation character as its own token.
//   "Hello, (world)!" -> hello , ( world ) !
std::vector<std::string> tokenize(std::string_view text);

// Number of whitespace-separated tokens; the counter used in corpus reports.
std::size_t count_whitespace_tokens(std::string_view text);

bool is_valid_utf8(std::string_view s);

// 64-bit FNV-1a followed by a splitmix64 finalizer.
std::uint64_t hash64(std::string_view s, std::uint64_t seed = 0);

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stateless uniform draw in [0,1) keyed by (seed, stream, index).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// mt19937_64 with portable bounded-integer and real draws (the std
// distributions are implementation-defined, these are not).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, n), rejection sampled. n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

// Little-endian binary helpers for the model containers.
namespace le {
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_str(std::ostream& os, std::string_view s);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
std::string read_str(std::istream& is);
}  // namespace le

}  // namespace curate
