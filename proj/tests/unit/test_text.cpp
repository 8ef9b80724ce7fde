#include <set>
#include <sstream>

#include "curate/text.hpp"
#include "doctest.h"

using namespace curate;

TEST_CASE("tokenize lowercases and detaches edge punctuation") {
  const std::vector<std::string> want{"hello", ",", "(", "world", ")", "!"};
  CHECK(tokenize("Hello, (world)!") == want);
  CHECK(tokenize("  ") .empty());
  CHECK(tokenize("don't e.g.") == std::vector<std::string>{"don't", "e.g", "."});
  CHECK(tokenize("...") == std::vector<std::string>{".", ".", "."});
}

TEST_CASE("whitespace token counts") {
  CHECK(count_whitespace_tokens("a b\tc\n d") == 4);
  CHECK(count_whitespace_tokens("") == 0);
}

TEST_CASE("split_lines keeps empty lines and strips CR") {
  const auto lines = split_lines("a\r\n\nb");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "a");
  CHECK(lines[1].empty());
  CHECK(lines[2] == "b");
}

TEST_CASE("utf8 validation") {
  CHECK(is_valid_utf8("plain"));
  CHECK(is_valid_utf8("caf\xc3\xa9"));
  CHECK_FALSE(is_valid_utf8("\xc3"));
  CHECK_FALSE(is_valid_utf8("\xff"));
  CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));  // surrogate
}

TEST_CASE("hash64 is seeded and stable") {
  CHECK(hash64("abc") == hash64("abc"));
  CHECK(hash64("abc", 1) != hash64("abc", 2));
  CHECK(hash64("abc") != hash64("abd"));
}

TEST_CASE("counter_uniform is stateless and roughly uniform") {
  CHECK(counter_uniform(1, 2, 3) == counter_uniform(1, 2, 3));
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = counter_uniform(42, 7, static_cast<std::uint64_t>(i));
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("SeededRng draws are reproducible and in range") {
  SeededRng a(9), b(9);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.below(7);
    CHECK(x == b.below(7));
    CHECK(x < 7);
  }
  SeededRng r(3);
  const auto idx = r.sample_indices(50, 20);
  CHECK(idx.size() == 20);
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 20);
  CHECK(r.sample_indices(5, 10).size() == 5);
}

TEST_CASE("little-endian helpers round-trip") {
  std::stringstream ss;
  le::write_u32(ss, 0xdeadbeef);
  le::write_u64(ss, 0x0123456789abcdefULL);
  le::write_f32(ss, -1.5f);
  le::write_f64(ss, 3.25);
  le::write_str(ss, "hi");
  CHECK(ss.str().substr(0, 4) == std::string("\xef\xbe\xad\xde", 4));
  CHECK(le::read_u32(ss) == 0xdeadbeef);
  CHECK(le::read_u64(ss) == 0x0123456789abcdefULL);
  CHECK(le::read_f32(ss) == -1.5f);
  CHECK(le::read_f64(ss) == 3.25);
  CHECK(le::read_str(ss) == "hi");
  CHECK_THROWS_AS(le::read_u32(ss), Error);
}
