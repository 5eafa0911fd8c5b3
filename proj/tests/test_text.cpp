#include "apollo/text.hpp"
#include "doctest.h"

using namespace apollo;

TEST_CASE("code point columns") {
  CHECK(codepoint_count("h₀ : x") == 6);
  CHECK(byte_offset_of_column("h₀ : x", 2) == 4);
  CHECK(byte_offset_of_column("ab", 9) == 2);
}

TEST_CASE("identifier characters") {
  CHECK(is_ident_char(U'h'));
  CHECK(is_ident_char(U'₀'));
  CHECK(is_ident_char(U'ℝ'));
  CHECK(is_ident_char(U'α'));
  CHECK_FALSE(is_ident_char(U'λ'));
  CHECK_FALSE(is_ident_char(U'×'));
  CHECK_FALSE(is_ident_char(U' '));
}

TEST_CASE("segments: nested block comments, strings, char literals") {
  const std::string s = "a /- x /- y -/ z -/ b \"s -- t\" 'c' h' -- tail";
  const auto segs = lex_segments(s);
  std::vector<SegmentKind> kinds;
  for (const auto& g : segs) kinds.push_back(g.kind);
  CHECK(kinds == std::vector<SegmentKind>{SegmentKind::Code, SegmentKind::BlockComment, SegmentKind::Code,
                                          SegmentKind::String, SegmentKind::Code, SegmentKind::Char,
                                          SegmentKind::Code, SegmentKind::LineComment});
  CHECK(mask_non_code(s).size() == s.size());
}

TEST_CASE("unterminated regions throw") {
  CHECK_THROWS_AS(lex_segments("/- open"), ParseError);
  CHECK_THROWS_AS(lex_segments("\"open"), ParseError);
  try {
    lex_segments("x /- /- -/");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseErrorKind::UnterminatedComment);
  }
}

TEST_CASE("sorry tokens outside comments and strings") {
  CHECK(count_sorry_tokens("sorry") == 1);
  CHECK(count_sorry_tokens("-- sorry") == 0);
  CHECK(count_sorry_tokens("/- sorry -/ admit") == 1);
  CHECK(count_sorry_tokens("\"sorry\" sorry") == 1);
  CHECK(count_sorry_tokens("sorry_lemma nosorry h.sorry") == 0);
  CHECK(count_sorry_tokens("(by sorry)") == 1);
}

TEST_CASE("line helpers") {
  CHECK(split_lines("a\nb\n").size() == 3);
  CHECK(join_lines(split_lines("a\n\nb")) == "a\n\nb");
  CHECK(normalize_trailing_whitespace("a  \nb\t\n\n") == "a\nb");
  CHECK(squash_whitespace("  a \n  b  ") == "a b");
  CHECK(starts_with_word("have h", "have"));
  CHECK_FALSE(starts_with_word("haveI h", "have"));
}
