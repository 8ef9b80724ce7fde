#include <random>
#include <set>

#include "curate/corpus_io.hpp"
#include "curate/text.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace curate;
using testing::TempDir;

TEST_CASE("read_jsonl parses documents and normalizes bare years") {
  TempDir dir;
  testing::write_file(dir / "in.jsonl",
                      R"({"url":"u","source":"s","content":"hi","time":"2024-12-31T00:00:00"})"
                      "\n"
                      R"({"url":"u2","source":"s","content":"hi","time":"2024"})"
                      "\n");
  const auto r = read_jsonl(dir / "in.jsonl");
  REQUIRE(r.docs.size() == 2);
  CHECK(r.docs[0] == Document{"u", "s", "hi", "2024-12-31T00:00:00", std::nullopt});
  CHECK(r.docs[1].time == "2024-12-31T00:00:00");
  CHECK(r.skipped == 0);
}

TEST_CASE("malformed lines are skipped with line numbers") {
  TempDir dir;
  testing::write_file(dir / "in.jsonl",
                      R"({"url":"a","source":"s","content":"x","time":"2020"})"
                      "\n"
                      "{not json\n"
                      R"({"url":"b","source":"s","content":"y","time":"2021-01-02"})"
                      "\n"
                      R"({"url":"c","source":"s","content":"z","time":"2021-01-02T03:04:05Z"})"
                      "\n");
  const auto r = read_jsonl(dir / "in.jsonl");
  CHECK(r.docs.size() == 3);
  CHECK(r.skipped == 1);
  REQUIRE(r.malformed.size() == 1);
  CHECK(r.malformed[0].line_number == 2);
}

TEST_CASE("invalid records are rejected") {
  CHECK_THROWS_AS(parse_document(R"({"url":"a","source":"s","content":"","time":"2020"})"), Error);
  CHECK_THROWS_AS(parse_document(R"({"url":"a","source":"s","content":"x"})"), Error);
  CHECK_THROWS_AS(parse_document(R"({"url":1,"source":"s","content":"x","time":"2020"})"), Error);
  CHECK_THROWS_AS(parse_document(R"({"url":"a","source":"s","content":"x","time":"yesterday"})"), Error);
  CHECK_THROWS_AS(parse_document(R"({"url":"a","source":"s","content":"x","time":"2020-13-01"})"), Error);
  CHECK_THROWS_AS(parse_document("[1,2]"), Error);
  CHECK_THROWS_AS(read_jsonl("/nonexistent/file.jsonl"), Error);
}

TEST_CASE("write_jsonl round-trips, including escapes") {
  TempDir dir;
  CHECK(write_jsonl({}, dir / "empty.jsonl") == 0);
  CHECK(testing::read_file(dir / "empty.jsonl").empty());

  std::vector<Document> docs{testing::doc("line one\nline \"two\"\ttab"), testing::doc("caf\xc3\xa9 \xe2\x9c\x93")};
  docs[1].score = 0.25;
  CHECK(write_jsonl(docs, dir / "out.jsonl") == 2);
  const auto back = read_jsonl(dir / "out.jsonl");
  CHECK(back.docs == docs);
  const auto text = testing::read_file(dir / "out.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.rfind(R"({"url":"u","source":"web","content":)", 0) == 0);
}

TEST_CASE("round-trip property over random strings") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> alphabet{"a", "Z", " ", "\n", "\"", "\\", "{", "\xc3\xa9", "\xe4\xb8\xad",
                                          "\xf0\x9f\x98\x80", "\t", "/", "\x01"};
  std::vector<Document> docs;
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 40);
    for (int k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    docs.push_back(testing::doc(s, "src" + std::to_string(i % 3), "https://x/" + std::to_string(i)));
  }
  TempDir dir;
  write_jsonl(docs, dir / "r.jsonl");
  CHECK(read_jsonl(dir / "r.jsonl").docs == docs);
}

TEST_CASE("chat samples validate alternation and prompt") {
  const ordered_json good = ordered_json::parse(
      R"({"messages":[{"role":"user","content":"q"},{"role":"assistant","content":"a"}],"prompt":"q","prompt_id":"p1","task":"t"})");
  const auto s = parse_chat_sample(good);
  CHECK(s.prompt_id == "p1");
  CHECK(s.messages.size() == 2);

  auto bad_order = good;
  std::swap(bad_order["messages"][0], bad_order["messages"][1]);
  CHECK_THROWS_AS(parse_chat_sample(bad_order), Error);
  auto bad_prompt = good;
  bad_prompt["prompt"] = "other";
  CHECK_THROWS_AS(parse_chat_sample(bad_prompt), Error);
}

TEST_CASE("chat JSONL skips duplicate prompt ids and keeps extra fields") {
  TempDir dir;
  const std::string line =
      R"({"messages":[{"role":"user","content":"q"}],"prompt":"q","prompt_id":"p1","task":"t"})";
  testing::write_file(dir / "c.jsonl", line + "\n" + line + "\n");
  const auto r = read_chat_jsonl(dir / "c.jsonl");
  REQUIRE(r.records.size() == 1);
  CHECK(r.malformed.size() == 1);
  write_chat_jsonl(r.records, dir / "o.jsonl");
  CHECK(testing::read_file(dir / "o.jsonl") == line + "\n");
}

TEST_CASE("html_to_markdown tag mapping") {
  CHECK(html_to_markdown("<h1>Title</h1>") == "# Title");
  CHECK(html_to_markdown("<h3>Sub</h3>") == "### Sub");
  CHECK(html_to_markdown("<p>Hello <b>world</b></p>") == "Hello **world**");
  CHECK(html_to_markdown("<script>x()</script><p>hi</p>") == "hi");
  CHECK(html_to_markdown("<ul><li>a</li><li>b</li></ul>") == "- a\n- b");
  CHECK(html_to_markdown("<ol><li>a</li><li>b</li></ol>") == "1. a\n2. b");
  CHECK(html_to_markdown("<p>see <a href=\"https://x.org\">this</a></p>") == "see [this](https://x.org)");
  CHECK(html_to_markdown("<p><em>it</em> and <strong>bold</strong></p>") == "*it* and **bold**");
  CHECK(html_to_markdown("<p>one</p><p>two</p>") == "one\n\ntwo");
  CHECK(html_to_markdown("<nav>menu</nav><header>h</header><p>body</p><footer>f</footer>") == "body");
  CHECK(html_to_markdown("<p>a   b\n  c</p>") == "a b c");
  CHECK(html_to_markdown("<p>x &amp; y &lt;z&gt;</p>") == "x & y <z>");
  CHECK(html_to_markdown("<pre>int x;\nint y;</pre>") == "```\nint x;\nint y;\n```");
  CHECK(html_to_markdown("<div><span>plain</span> text</div>") == "plain text");
}

TEST_CASE("html_to_markdown degrades gracefully on broken markup") {
  CHECK_NOTHROW(html_to_markdown("<p>unclosed <b>bold"));
  CHECK_NOTHROW(html_to_markdown("<<<>>> </p></div><"));
  CHECK_NOTHROW(html_to_markdown("<script>never closed"));
  CHECK(html_to_markdown("a < b") == "a < b");
}

TEST_CASE("html_to_markdown is idempotent on tag-free text") {
  for (const std::string s : {"plain words here", "two\n\nparagraphs", "a - b"}) {
    const auto once = html_to_markdown(s);
    CHECK(html_to_markdown(once) == once);
  }
}

TEST_CASE("expand_categories follows accepted nodes breadth-first") {
  auto graph = CategoryGraph::from_json(nlohmann::json::parse(R"({"root":"R","edges":{"R":["A","B"],"A":["C"]}})"));
  auto accepted = expand_categories(graph, [](const std::string& c) { return c != "B"; });
  CHECK(accepted == std::vector<std::string>{"R", "A", "C"});

  auto single = CategoryGraph::from_json(nlohmann::json::parse(R"({"root":"R"})"));
  CHECK(expand_categories(single, [](const std::string&) { return true; }) == std::vector<std::string>{"R"});

  auto cyclic = CategoryGraph::from_json(nlohmann::json::parse(R"({"root":"R","edges":{"R":["A"],"A":["R"]}})"));
  int calls = 0;
  auto all = expand_categories(cyclic, [&](const std::string&) {
    ++calls;
    return true;
  });
  CHECK(all == std::vector<std::string>{"R", "A"});
  CHECK(calls == 2);

  // Rejected root stops the traversal.
  CHECK(expand_categories(graph, [](const std::string& c) { return c != "R"; }).empty());
}

TEST_CASE("always-true expansion equals the reachable set") {
  auto graph = CategoryGraph::from_json(
      nlohmann::json::parse(R"({"root":"R","edges":{"R":["A"],"A":["B","C"],"X":["Y"]}})"));
  auto all = expand_categories(graph, [](const std::string&) { return true; });
  CHECK(std::set<std::string>(all.begin(), all.end()) == std::set<std::string>{"R", "A", "B", "C"});
  graph.root = "missing";
  CHECK_THROWS_AS(expand_categories(graph, [](const std::string&) { return true; }), Error);
}
