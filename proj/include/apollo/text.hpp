#pragma once

// Lexical helpers shared by every module that looks at Lean source: UTF-8
// column arithmetic, comment/string segmentation and identifier scans.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace apollo {

enum class ParseErrorKind { UnterminatedComment, UnterminatedString, NoProofBody, TabIndent };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

/// Decodes the code point starting at byte `i` and advances `i` past it.
/// Malformed sequences decode as U+FFFD and consume a single byte.
char32_t decode_utf8(std::string_view s, std::size_t& i);

std::size_t codepoint_count(std::string_view s);

/// Byte offset of 0-based code point column `col` in `line` (clamped to size).
std::size_t byte_offset_of_column(std::string_view line, std::size_t col);

/// Lean identifier continuation characters, including subscripts and the
/// Greek/letterlike blocks used for names like `h₀` or `ℝ`.
bool is_ident_char(char32_t c);

enum class SegmentKind { Code, LineComment, BlockComment, String, Char };

struct Segment {
  SegmentKind kind;
  std::size_t begin;
  std::size_t end;
};

/// Splits `text` into code, comment and literal segments. Block comments nest.
/// Throws ParseError on an unterminated block comment or string literal.
std::vector<Segment> lex_segments(std::string_view text);

/// Copy of `text` with every comment/literal byte replaced by a space,
/// newlines kept, so byte offsets and line structure are unchanged.
std::string mask_non_code(std::string_view text);

/// Byte offsets of whole-identifier occurrences of `word` in `masked`.
std::vector<std::size_t> find_word(std::string_view masked, std::string_view word);

/// Number of `sorry`/`admit` tokens outside comments and string literals.
std::size_t count_sorry_tokens(std::string_view text);

std::vector<std::string> split_lines(std::string_view text);
std::string join_lines(const std::vector<std::string>& lines);

std::string_view trim(std::string_view s);
std::string_view rtrim(std::string_view s);

/// Collapses runs of whitespace to single spaces and trims the ends.
std::string squash_whitespace(std::string_view s);

/// Trims trailing whitespace on every line and trailing blank lines.
std::string normalize_trailing_whitespace(std::string_view text);

bool starts_with_word(std::string_view s, std::string_view word);

}  // namespace apollo
