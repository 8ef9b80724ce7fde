// Tolerant HTML to Markdown conversion.
//
// Tag mapping:
//   h1..h6        -> '#' x level
//   p, div, ...   -> paragraph (blank line between blocks)
//   ul/ol > li    -> "- item" / "N. item", nested lists indented two spaces
//   a             -> [text](href)
//   b, strong     -> **text**
//   i, em         -> *text*
//   pre           -> fenced code block, contents verbatim
//   code (inline) -> `text`
//   script, style, nav, header, footer, iframe -> dropped with contents
// Everything else is unwrapped to its text. Malformed markup degrades to
// text; nothing here throws.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "curate/corpus_io.hpp"
#include "curate/text.hpp"

namespace curate {

namespace {

constexpr std::array kDropped = {"script", "style", "nav", "header", "footer", "iframe"};
constexpr std::array kBlocks = {"p",       "div",     "section", "article", "main",  "blockquote",
                                "table",   "tr",      "td",      "th",      "thead", "tbody",
                                "figure",  "figcaption", "form", "aside",   "dl",    "dt",
                                "dd",      "hr",      "body",    "html",    "title", "address"};

template <std::size_t N>
bool one_of(const std::string& name, const std::array<const char*, N>& set) {
  return std::any_of(set.begin(), set.end(), [&](const char* s) { return name == s; });
}

int heading_level(const std::string& name) {
  if (name.size() == 2 && name[0] == 'h' && name[1] >= '1' && name[1] <= '6') return name[1] - '0';
  return 0;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const std::size_t semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const std::string_view name = s.substr(i + 1, semi - i - 1);
    bool ok = true;
    if (name == "amp") out.push_back('&');
    else if (name == "lt") out.push_back('<');
    else if (name == "gt") out.push_back('>');
    else if (name == "quot") out.push_back('"');
    else if (name == "apos" || name == "#39") out.push_back('\'');
    else if (name == "nbsp") out.push_back(' ');
    else if (name.size() > 1 && name[0] == '#') {
      std::uint32_t cp = 0;
      const bool hex = name[1] == 'x' || name[1] == 'X';
      const std::string_view digits = name.substr(hex ? 2 : 1);
      if (digits.empty()) ok = false;
      for (char c : digits) {
        int d = -1;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        if (d < 0 || cp > 0x10FFFF) {
          ok = false;
          break;
        }
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(d);
      }
      if (ok) append_utf8(out, cp);
    } else {
      ok = false;
    }
    if (ok) {
      i = semi;
    } else {
      out.push_back('&');
    }
  }
  return out;
}

struct Tag {
  std::string name;
  bool closing = false;
  bool self_closing = false;
  std::string href;
};

// Parses a tag starting at html[pos] == '<'. Returns the position after '>'
// or npos if this '<' does not start a tag.
std::size_t parse_tag(std::string_view html, std::size_t pos, Tag& tag) {
  std::size_t i = pos + 1;
  if (i < html.size() && html[i] == '/') {
    tag.closing = true;
    ++i;
  }
  const std::size_t name_start = i;
  while (i < html.size() && (std::isalnum(static_cast<unsigned char>(html[i])) || html[i] == '-')) ++i;
  if (i == name_start) return std::string_view::npos;
  tag.name = to_lower(html.substr(name_start, i - name_start));
  // attributes: find the closing '>' while respecting quotes
  char quote = 0;
  std::size_t attr_start = i;
  for (; i < html.size(); ++i) {
    const char c = html[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      break;
    }
  }
  if (i >= html.size()) return std::string_view::npos;
  std::string_view attrs = html.substr(attr_start, i - attr_start);
  if (!attrs.empty() && attrs.back() == '/') tag.self_closing = true;
  if (tag.name == "a") {
    const std::string lowered = to_lower(attrs);
    std::size_t h = lowered.find("href");
    while (h != std::string::npos) {
      std::size_t k = h + 4;
      while (k < attrs.size() && attrs[k] == ' ') ++k;
      if (k < attrs.size() && attrs[k] == '=') {
        ++k;
        while (k < attrs.size() && attrs[k] == ' ') ++k;
        if (k < attrs.size() && (attrs[k] == '"' || attrs[k] == '\'')) {
          const char q = attrs[k];
          const std::size_t end = attrs.find(q, k + 1);
          tag.href = std::string(attrs.substr(k + 1, (end == std::string_view::npos ? attrs.size() : end) - k - 1));
        } else {
          std::size_t end = k;
          while (end < attrs.size() && attrs[end] != ' ' && attrs[end] != '>') ++end;
          tag.href = std::string(attrs.substr(k, end - k));
        }
        tag.href = decode_entities(tag.href);
        break;
      }
      h = lowered.find("href", h + 4);
    }
  }
  return i + 1;
}

enum class BlockKind { paragraph, heading, list_item, code };

struct Block {
  BlockKind kind;
  std::string text;
  int level = 0;           // heading level or list depth
  std::string marker;      // list marker
};

class Builder {
 public:
  void text(std::string_view raw) {
    if (pre_depth_ > 0) {
      buf_ += raw;
      return;
    }
    for (char c : raw) {
      const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
      if (space) {
        pending_space_ = true;
      } else {
        if (pending_space_ && !buf_.empty() && buf_.back() != '\n') buf_.push_back(' ');
        pending_space_ = false;
        buf_.push_back(c);
      }
    }
  }

  // Opening markup takes a pending space before it; closing markup leaves
  // the space pending so it lands after the marker.
  void markup(std::string_view m, bool opening) {
    if (opening) {
      if (pending_space_ && !buf_.empty() && buf_.back() != '\n') buf_.push_back(' ');
      pending_space_ = false;
    }
    buf_ += m;
  }

  void line_break() {
    if (pre_depth_ > 0) {
      buf_.push_back('\n');
      return;
    }
    strip_trailing_space();
    if (!buf_.empty()) buf_.push_back('\n');
    pending_space_ = false;
  }

  void open_block(BlockKind kind, int level = 0, std::string marker = {}) {
    flush();
    current_ = Block{kind, {}, level, std::move(marker)};
  }

  void close_block() {
    flush();
    current_ = Block{BlockKind::paragraph, {}, 0, {}};
  }

  void enter_pre() {
    open_block(BlockKind::code);
    ++pre_depth_;
  }
  void leave_pre() {
    if (pre_depth_ == 0) return;
    --pre_depth_;
    if (pre_depth_ == 0) close_block();
  }
  bool in_pre() const { return pre_depth_ > 0; }

  std::string finish() {
    flush();
    std::string out;
    const Block* prev = nullptr;
    for (const auto& b : blocks_) {
      if (prev) {
        const bool tight = prev->kind == BlockKind::list_item && b.kind == BlockKind::list_item;
        out += tight ? "\n" : "\n\n";
      }
      switch (b.kind) {
        case BlockKind::heading:
          out += std::string(static_cast<std::size_t>(b.level), '#') + " " + b.text;
          break;
        case BlockKind::list_item:
          out += std::string(static_cast<std::size_t>(2 * b.level), ' ') + b.marker + " " + b.text;
          break;
        case BlockKind::code:
          out += "```\n" + b.text + "\n```";
          break;
        case BlockKind::paragraph:
          out += b.text;
          break;
      }
      prev = &b;
    }
    return out;
  }

 private:
  void strip_trailing_space() {
    while (!buf_.empty() && buf_.back() == ' ') buf_.pop_back();
  }

  void flush() {
    std::string text;
    if (current_.kind == BlockKind::code) {
      text = buf_;
      while (!text.empty() && text.front() == '\n') text.erase(text.begin());
      while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
    } else {
      // trim every line of the block
      std::string joined;
      for (std::string_view line : split_lines(buf_)) {
        line = trim(line);
        if (line.empty()) continue;
        if (!joined.empty()) joined.push_back('\n');
        joined += line;
      }
      text = std::move(joined);
    }
    buf_.clear();
    pending_space_ = false;
    if (text.empty()) return;
    Block b = current_;
    b.text = std::move(text);
    blocks_.push_back(std::move(b));
    // continuation text after a nested block inside the same item becomes a paragraph
    current_ = Block{BlockKind::paragraph, {}, 0, {}};
  }

  std::vector<Block> blocks_;
  Block current_{BlockKind::paragraph, {}, 0, {}};
  std::string buf_;
  bool pending_space_ = false;
  int pre_depth_ = 0;
};

struct ListFrame {
  bool ordered;
  int counter = 0;
};

}  // namespace

std::string html_to_markdown(std::string_view html) {
  Builder out;
  std::vector<ListFrame> lists;
  std::vector<std::string> anchors;  // pending hrefs for open <a>
  std::string dropping;              // name of the dropped subtree being skipped
  int drop_depth = 0;

  std::size_t i = 0;
  std::size_t text_start = 0;
  auto emit_text = [&](std::size_t end) {
    if (end > text_start && drop_depth == 0) out.text(decode_entities(html.substr(text_start, end - text_start)));
  };

  while (i < html.size()) {
    if (html[i] != '<') {
      ++i;
      continue;
    }
    // comments and doctype/processing instructions
    if (html.compare(i, 4, "<!--") == 0) {
      emit_text(i);
      const std::size_t end = html.find("-->", i + 4);
      i = (end == std::string_view::npos) ? html.size() : end + 3;
      text_start = i;
      continue;
    }
    if (i + 1 < html.size() && (html[i + 1] == '!' || html[i + 1] == '?')) {
      emit_text(i);
      const std::size_t end = html.find('>', i);
      i = (end == std::string_view::npos) ? html.size() : end + 1;
      text_start = i;
      continue;
    }
    Tag tag;
    const std::size_t after = parse_tag(html, i, tag);
    if (after == std::string_view::npos) {
      ++i;  // a stray '<' stays text
      continue;
    }
    emit_text(i);
    i = after;
    text_start = i;

    if (drop_depth > 0) {
      if (tag.name == dropping) {
        if (tag.closing) {
          --drop_depth;
        } else if (!tag.self_closing) {
          ++drop_depth;
        }
      }
      continue;
    }
    if (!tag.closing && !tag.self_closing && one_of(tag.name, kDropped)) {
      dropping = tag.name;
      drop_depth = 1;
      // raw-text elements: skip straight to the matching close tag
      if (tag.name == "script" || tag.name == "style") {
        const std::string close = "</" + tag.name;
        std::size_t pos = i;
        while (true) {
          pos = html.find('<', pos);
          if (pos == std::string_view::npos) break;
          if (to_lower(html.substr(pos, close.size())) == close) break;
          ++pos;
        }
        if (pos == std::string_view::npos) {
          i = html.size();
        } else {
          const std::size_t end = html.find('>', pos);
          i = (end == std::string_view::npos) ? html.size() : end + 1;
        }
        text_start = i;
        drop_depth = 0;
      }
      continue;
    }

    if (out.in_pre() && tag.name != "pre") {
      if (tag.name == "br") out.line_break();
      continue;  // inner tags of <pre> are unwrapped verbatim
    }

    const int level = heading_level(tag.name);
    if (level > 0) {
      if (tag.closing) {
        out.close_block();
      } else {
        out.open_block(BlockKind::heading, level);
      }
    } else if (tag.name == "ul" || tag.name == "ol") {
      if (tag.closing) {
        if (!lists.empty()) lists.pop_back();
        out.close_block();
      } else {
        out.close_block();
        lists.push_back({tag.name == "ol"});
      }
    } else if (tag.name == "li") {
      if (tag.closing) {
        out.close_block();
      } else {
        const int depth = lists.empty() ? 0 : static_cast<int>(lists.size()) - 1;
        std::string marker = "-";
        if (!lists.empty() && lists.back().ordered) marker = std::to_string(++lists.back().counter) + ".";
        out.open_block(BlockKind::list_item, depth, marker);
      }
    } else if (tag.name == "pre") {
      if (tag.closing) {
        out.leave_pre();
      } else {
        out.enter_pre();
      }
    } else if (tag.name == "br") {
      out.line_break();
    } else if (tag.name == "b" || tag.name == "strong") {
      out.markup("**", !tag.closing);
    } else if (tag.name == "i" || tag.name == "em") {
      out.markup("*", !tag.closing);
    } else if (tag.name == "code") {
      out.markup("`", !tag.closing);
    } else if (tag.name == "a") {
      if (tag.closing) {
        if (!anchors.empty()) {
          out.markup("](" + anchors.back() + ")", false);
          anchors.pop_back();
        }
      } else if (!tag.self_closing) {
        anchors.push_back(tag.href);
        out.markup("[", true);
      }
    } else if (one_of(tag.name, kBlocks)) {
      out.close_block();
    }
  }
  emit_text(html.size());
  // close anchors left open by malformed input
  while (!anchors.empty()) {
    out.markup("](" + anchors.back() + ")", false);
    anchors.pop_back();
  }
  return out.finish();
}

}  // namespace curate
