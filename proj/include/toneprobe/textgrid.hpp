#pragma once

// Praat TextGrid reader (long and short text variants) and a matching writer.
//
// Both variants are read by one token stream: numbers, "strings" (with ""
// escapes), <flags>, and bare words. In the long variant, `key =` labels and
// `item [n]:` headers are dropped; a bare word right after `=` is kept as a
// value so that malformed numbers surface as errors instead of being skipped.

#include <toneprobe/common.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace toneprobe::textgrid {

/// Times closer than this are considered equal.
inline constexpr double kTimeTolerance = 1e-6;

struct Interval {
  double start = 0.0;
  double end = 0.0;
  std::string label;

  bool operator==(const Interval&) const = default;
};

struct IntervalTier {
  std::string name;
  double xmin = 0.0;
  double xmax = 0.0;
  std::vector<Interval> intervals;

  bool operator==(const IntervalTier&) const = default;
};

struct TextGrid {
  double xmin = 0.0;
  double xmax = 0.0;
  std::vector<IntervalTier> tiers;

  bool operator==(const TextGrid&) const = default;
};

enum class Severity { warning, fatal };

struct ParseDiagnostic {
  std::size_t line = 1;
  Severity severity = Severity::fatal;
  std::string message;

  std::string to_string() const {
    return cat("line ", line, ": ", severity == Severity::fatal ? "error" : "warning", ": ", message);
  }
};

/// Either a grid (possibly with warnings) or at least one fatal diagnostic.
struct ParseResult {
  std::optional<TextGrid> grid;
  std::vector<ParseDiagnostic> diagnostics;

  bool ok() const { return grid.has_value(); }

  std::vector<ParseDiagnostic> warnings() const {
    std::vector<ParseDiagnostic> out;
    for (const auto& d : diagnostics)
      if (d.severity == Severity::warning) out.push_back(d);
    return out;
  }

  std::string error_summary() const {
    std::string out;
    for (const auto& d : diagnostics) {
      if (d.severity != Severity::fatal) continue;
      if (!out.empty()) out += "; ";
      out += d.to_string();
    }
    return out;
  }
};

enum class Format { long_text, short_text };

// ---------------------------------------------------------------------------
// text decoding

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
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

}  // namespace detail

/// Converts raw file bytes to UTF-8. A UTF-16 BOM (either byte order) selects
/// UTF-16 decoding; a UTF-8 BOM is stripped; anything else passes through.
/// Returns nullopt for undecodable UTF-16.
inline std::optional<std::string> decode_text(std::string_view bytes) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(bytes[i]); };
  if (bytes.size() >= 3 && byte(0) == 0xEF && byte(1) == 0xBB && byte(2) == 0xBF)
    return std::string(bytes.substr(3));
  const bool be = bytes.size() >= 2 && byte(0) == 0xFE && byte(1) == 0xFF;
  const bool le = bytes.size() >= 2 && byte(0) == 0xFF && byte(1) == 0xFE;
  if (!be && !le) return std::string(bytes);
  if (bytes.size() % 2 != 0) return std::nullopt;

  std::string out;
  out.reserve(bytes.size() / 2);
  const auto unit = [&](std::size_t i) -> char16_t {
    return be ? static_cast<char16_t>((byte(i) << 8) | byte(i + 1))
              : static_cast<char16_t>((byte(i + 1) << 8) | byte(i));
  };
  for (std::size_t i = 2; i < bytes.size(); i += 2) {
    const char16_t u = unit(i);
    if (u >= 0xD800 && u <= 0xDBFF) {
      if (i + 3 >= bytes.size()) return std::nullopt;
      const char16_t lo = unit(i + 2);
      if (lo < 0xDC00 || lo > 0xDFFF) return std::nullopt;
      detail::append_utf8(out, 0x10000 + ((static_cast<char32_t>(u) - 0xD800) << 10) + (lo - 0xDC00));
      i += 2;
    } else if (u >= 0xDC00 && u <= 0xDFFF) {
      return std::nullopt;
    } else {
      detail::append_utf8(out, u);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// tokenizer

namespace detail {

enum class TokenKind { number, string, flag, word };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t line;
  bool after_equals;
};

struct Tokenized {
  std::vector<Token> tokens;
  std::optional<ParseDiagnostic> error;
};

inline bool is_word_break(char c) {
  switch (c) {
    case ' ': case '\t': case '\r': case '\n': case '\f': case '\v':
    case '"': case '=': case '[': case ']': case '<': case '>': case ':': case '?': case '!':
      return true;
    default:
      return false;
  }
}

inline Tokenized tokenize(std::string_view text) {
  Tokenized out;
  std::size_t line = 1;
  bool pending_equals = false;
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto push = [&](TokenKind kind, std::string value, std::size_t at_line) {
    out.tokens.push_back(Token{kind, std::move(value), at_line, pending_equals});
    pending_equals = false;
  };

  while (i < n) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      pending_equals = false;
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
      ++i;
    } else if (c == '!') {
      while (i < n && text[i] != '\n') ++i;
    } else if (c == '"') {
      const std::size_t start_line = line;
      std::string value;
      ++i;
      bool closed = false;
      while (i < n) {
        if (text[i] == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            value.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        if (text[i] == '\n') ++line;
        value.push_back(text[i]);
        ++i;
      }
      if (!closed) {
        out.error = ParseDiagnostic{start_line, Severity::fatal, "unterminated string"};
        return out;
      }
      push(TokenKind::string, std::move(value), start_line);
    } else if (c == '<') {
      const auto close = text.find_first_of(">\n", i);
      if (close != std::string_view::npos && text[close] == '>') {
        push(TokenKind::flag, std::string(text.substr(i, close - i + 1)), line);
        i = close + 1;
      } else {
        ++i;
      }
    } else if (c == '[') {
      const auto close = text.find_first_of("]\n", i);
      i = (close == std::string_view::npos) ? n : (text[close] == ']' ? close + 1 : close);
    } else if (c == '=') {
      pending_equals = true;
      ++i;
    } else if (c == ']' || c == '>' || c == ':' || c == '?') {
      ++i;
    } else {
      const std::size_t b = i;
      while (i < n && !is_word_break(text[i])) ++i;
      std::string word(text.substr(b, i - b));
      const TokenKind kind = parse_double(word) ? TokenKind::number : TokenKind::word;
      push(kind, std::move(word), line);
    }
  }
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  ParseResult run() {
    ParseResult result;
    try {
      result.grid = parse_grid();
    } catch (const Fatal& f) {
      diagnostics_.push_back(ParseDiagnostic{f.line, Severity::fatal, f.message});
    }
    result.diagnostics = std::move(diagnostics_);
    return result;
  }

 private:
  struct Fatal {
    std::size_t line;
    std::string message;
  };

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::vector<ParseDiagnostic> diagnostics_;

  std::size_t last_line() const { return tokens_.empty() ? 1 : tokens_.back().line; }
  std::size_t here() const { return pos_ < tokens_.size() ? tokens_[pos_].line : last_line(); }
  bool at_end() const { return pos_ >= tokens_.size(); }
  const Token& peek() const { return tokens_[pos_]; }

  [[noreturn]] void fail(std::size_t line, std::string message) const {
    throw Fatal{line, std::move(message)};
  }

  std::string expect_string(const char* what, const char* on_end) {
    if (at_end()) fail(last_line(), on_end);
    const Token& t = tokens_[pos_];
    if (t.kind != TokenKind::string) fail(t.line, cat("expected quoted ", what, ", found '", t.text, "'"));
    ++pos_;
    return t.text;
  }

  double expect_time(const char* what, const char* on_end) {
    if (at_end()) fail(last_line(), on_end);
    const Token& t = tokens_[pos_];
    if (t.kind != TokenKind::number) fail(t.line, cat("non-numeric time for ", what, ": '", t.text, "'"));
    ++pos_;
    return *parse_double(t.text);
  }

  std::size_t expect_count(const char* what, const char* on_end) {
    if (at_end()) fail(last_line(), on_end);
    const Token& t = tokens_[pos_];
    const auto value = t.kind == TokenKind::number ? parse_int<std::int64_t>(t.text) : std::nullopt;
    if (!value || *value < 0) fail(t.line, cat("expected non-negative integer ", what, ", found '", t.text, "'"));
    ++pos_;
    return static_cast<std::size_t>(*value);
  }

  TextGrid parse_grid() {
    if (tokens_.empty()) fail(1, "malformed header: empty input");
    // header: two quoted strings; labels before them are ignored
    std::vector<std::string> header;
    while (!at_end() && header.size() < 2) {
      const Token& t = peek();
      if (t.kind == TokenKind::string) {
        header.push_back(t.text);
      } else if (t.kind != TokenKind::word || t.after_equals) {
        fail(t.line, cat("malformed header: unexpected '", t.text, "'"));
      }
      ++pos_;
    }
    if (header.size() < 2) fail(last_line(), "malformed header: missing file type or object class");
    if (header[0] != "ooTextFile" && header[0] != "ooTextFile short")
      fail(tokens_[pos_ - 1].line, cat("malformed header: file type '", header[0], "' is not ooTextFile"));
    if (header[1] != "TextGrid")
      fail(tokens_[pos_ - 1].line, cat("malformed header: object class '", header[1], "' is not TextGrid"));

    // Long files start the body with a bare label word; short files with a number.
    const bool long_variant = !at_end() && peek().kind == TokenKind::word && !peek().after_equals;
    std::vector<Token> body;
    for (std::size_t i = pos_; i < tokens_.size(); ++i) {
      const Token& t = tokens_[i];
      if (t.kind == TokenKind::word && long_variant && !t.after_equals) continue;
      body.push_back(t);
    }
    tokens_ = std::move(body);
    pos_ = 0;

    TextGrid grid;
    grid.xmin = expect_time("grid xmin", "malformed header: missing grid xmin");
    grid.xmax = expect_time("grid xmax", "malformed header: missing grid xmax");
    if (grid.xmin > grid.xmax) fail(here(), "grid xmin exceeds xmax");

    if (at_end() || peek().kind != TokenKind::flag)
      fail(here(), "malformed header: expected <exists> or <absent>");
    const std::string flag = peek().text;
    ++pos_;
    if (flag == "<absent>") {
      if (!at_end()) fail(here(), "tier count mismatch: content after <absent>");
      return grid;
    }
    if (flag != "<exists>") fail(here(), cat("malformed header: unknown flag ", flag));

    const std::size_t declared = expect_count("tier count", "malformed header: missing tier count");
    for (std::size_t k = 0; k < declared; ++k) {
      if (at_end()) fail(last_line(), cat("tier count mismatch: header declares ", declared, " tiers, found ", k));
      parse_tier(grid, k + 1);
    }
    if (!at_end())
      fail(here(), cat("tier count mismatch: header declares ", declared, " tiers but more content follows"));
    return grid;
  }

  void parse_tier(TextGrid& grid, std::size_t ordinal) {
    const std::size_t class_line = here();
    const std::string cls = expect_string("tier class", "tier count mismatch: missing tier class");
    const std::string name = expect_string("tier name", "malformed tier: missing name");
    const double xmin = expect_time("tier xmin", "malformed tier: missing xmin");
    const double xmax = expect_time("tier xmax", "malformed tier: missing xmax");
    const std::size_t count = expect_count("item count", "malformed tier: missing item count");

    if (xmin > xmax) fail(class_line, cat("tier '", name, "' has xmin > xmax"));
    if (xmin < grid.xmin - kTimeTolerance || xmax > grid.xmax + kTimeTolerance)
      fail(class_line, cat("tier '", name, "' range [", format_shortest(xmin), ", ", format_shortest(xmax),
                           "] exceeds grid range"));

    if (cls == "TextTier") {
      for (std::size_t i = 0; i < count; ++i) {
        expect_time("point time", "point count mismatch: fewer points than declared");
        expect_string("point mark", "point count mismatch: fewer points than declared");
      }
      diagnostics_.push_back(ParseDiagnostic{class_line, Severity::warning,
                                             cat("point tier '", name, "' (tier ", ordinal, ") skipped")});
      return;
    }
    if (cls != "IntervalTier") fail(class_line, cat("unknown tier class '", cls, "'"));

    IntervalTier tier{name, xmin, xmax, {}};
    for (std::size_t i = 0; i < count; ++i) {
      const char* short_msg = "interval count mismatch: fewer intervals than declared";
      if (at_end() || peek().kind == TokenKind::string)
        fail(here(), cat("interval count mismatch: tier '", name, "' declares ", count, " intervals, found ", i));
      const std::size_t line = here();
      Interval iv;
      iv.start = expect_time("interval xmin", short_msg);
      iv.end = expect_time("interval xmax", short_msg);
      iv.label = expect_string("interval text", short_msg);

      if (iv.start > iv.end || (iv.start == iv.end && !trim(iv.label).empty()))
        fail(line, cat("interval ", i + 1, " of tier '", name, "' has start ", format_shortest(iv.start),
                       " not before end ", format_shortest(iv.end)));
      if (iv.start < xmin - kTimeTolerance || iv.end > xmax + kTimeTolerance)
        fail(line, cat("interval ", i + 1, " of tier '", name, "' lies outside the tier range"));
      if (!tier.intervals.empty() && iv.start < tier.intervals.back().end - kTimeTolerance)
        fail(line, cat("intervals out of order: interval ", i + 1, " of tier '", name, "' starts at ",
                       format_shortest(iv.start), " before the previous interval ends at ",
                       format_shortest(tier.intervals.back().end)));
      tier.intervals.push_back(std::move(iv));
    }
    grid.tiers.push_back(std::move(tier));
  }
};

}  // namespace detail

/// Parses TextGrid text. Never throws; malformed input yields fatal diagnostics.
inline ParseResult parse_textgrid(std::string_view content) {
  const auto decoded = decode_text(content);
  if (!decoded) {
    ParseResult r;
    r.diagnostics.push_back(ParseDiagnostic{1, Severity::fatal, "undecodable UTF-16 content"});
    return r;
  }
  auto tokenized = detail::tokenize(*decoded);
  if (tokenized.error) {
    ParseResult r;
    r.diagnostics.push_back(*tokenized.error);
    return r;
  }
  return detail::Parser(std::move(tokenized.tokens)).run();
}

/// Reads and parses a file; I/O failure becomes a fatal diagnostic.
inline ParseResult load_textgrid(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    ParseResult r;
    r.diagnostics.push_back(ParseDiagnostic{1, Severity::fatal, e.what()});
    return r;
  }
  return parse_textgrid(bytes);
}

struct TierLookup {
  const IntervalTier* tier = nullptr;
  std::vector<std::string> warnings;

  bool found() const { return tier != nullptr; }
};

/// Case-sensitive lookup. Duplicate names resolve to the first tier with a warning.
inline TierLookup tier_by_name(const TextGrid& grid, std::string_view name) {
  TierLookup out;
  std::size_t matches = 0;
  for (const auto& tier : grid.tiers) {
    if (tier.name != name) continue;
    if (matches++ == 0) out.tier = &tier;
  }
  if (matches > 1)
    out.warnings.push_back(cat(matches, " tiers are named '", name, "'; using the first"));
  return out;
}

// ---------------------------------------------------------------------------
// writer

namespace detail {

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Serializes in Praat's text layout. Used for fixtures and synthetic corpora.
inline std::string serialize_textgrid(const TextGrid& grid, Format format = Format::long_text) {
  using detail::quote;
  std::ostringstream os;
  const auto num = [](double v) { return format_shortest(v); };
  os << "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n";
  if (format == Format::short_text) {
    os << num(grid.xmin) << '\n' << num(grid.xmax) << '\n';
    if (grid.tiers.empty()) {
      os << "<absent>\n";
      return os.str();
    }
    os << "<exists>\n" << grid.tiers.size() << '\n';
    for (const auto& tier : grid.tiers) {
      os << "\"IntervalTier\"\n" << quote(tier.name) << '\n' << num(tier.xmin) << '\n' << num(tier.xmax) << '\n'
         << tier.intervals.size() << '\n';
      for (const auto& iv : tier.intervals)
        os << num(iv.start) << '\n' << num(iv.end) << '\n' << quote(iv.label) << '\n';
    }
    return os.str();
  }
  os << "xmin = " << num(grid.xmin) << " \nxmax = " << num(grid.xmax) << " \n";
  if (grid.tiers.empty()) {
    os << "tiers? <absent> \n";
    return os.str();
  }
  os << "tiers? <exists> \nsize = " << grid.tiers.size() << " \nitem []: \n";
  for (std::size_t t = 0; t < grid.tiers.size(); ++t) {
    const auto& tier = grid.tiers[t];
    os << "    item [" << t + 1 << "]:\n"
       << "        class = \"IntervalTier\" \n"
       << "        name = " << quote(tier.name) << " \n"
       << "        xmin = " << num(tier.xmin) << " \n"
       << "        xmax = " << num(tier.xmax) << " \n"
       << "        intervals: size = " << tier.intervals.size() << " \n";
    for (std::size_t i = 0; i < tier.intervals.size(); ++i) {
      const auto& iv = tier.intervals[i];
      os << "        intervals [" << i + 1 << "]:\n"
         << "            xmin = " << num(iv.start) << " \n"
         << "            xmax = " << num(iv.end) << " \n"
         << "            text = " << quote(iv.label) << " \n";
    }
  }
  return os.str();
}

}  // namespace toneprobe::textgrid
