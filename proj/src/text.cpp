#include "apollo/text.hpp"

#include <algorithm>

namespace apollo {

char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

std::size_t codepoint_count(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size();) {
    decode_utf8(s, i);
    ++n;
  }
  return n;
}

std::size_t byte_offset_of_column(std::string_view line, std::size_t col) {
  std::size_t i = 0;
  for (std::size_t c = 0; c < col && i < line.size(); ++c) decode_utf8(line, i);
  return i;
}

bool is_ident_char(char32_t c) {
  if (c < 0x80) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '\'' || c == '!' || c == '?';
  }
  if (c >= 0xC0 && c <= 0x24F && c != 0xD7 && c != 0xF7) return true;
  if (c >= 0x391 && c <= 0x3C9) return c != 0x3BB && c != 0x3A0 && c != 0x3A3;
  if (c >= 0x2080 && c <= 0x209C) return true;  // subscripts
  if (c >= 0x2100 && c <= 0x214F) return true;  // letterlike: ℝ ℕ ℤ ...
  if (c >= 0x1D400 && c <= 0x1D7FF) return true;
  return false;
}

std::vector<Segment> lex_segments(std::string_view text) {
  std::vector<Segment> out;
  std::size_t code_start = 0;
  std::size_t i = 0;
  auto flush_code = [&](std::size_t upto) {
    if (upto > code_start) out.push_back({SegmentKind::Code, code_start, upto});
  };
  auto prev_is_ident = [&](std::size_t pos) {
    if (pos == 0) return false;
    std::size_t j = pos - 1;
    while (j > 0 && (static_cast<unsigned char>(text[j]) & 0xC0) == 0x80) --j;
    std::size_t k = j;
    return is_ident_char(decode_utf8(text, k));
  };

  while (i < text.size()) {
    const char c = text[i];
    if (c == '-' && i + 1 < text.size() && text[i + 1] == '-') {
      flush_code(i);
      std::size_t e = text.find('\n', i);
      if (e == std::string_view::npos) e = text.size();
      out.push_back({SegmentKind::LineComment, i, e});
      i = e;
      code_start = i;
    } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '-') {
      flush_code(i);
      const std::size_t start = i;
      int depth = 1;
      i += 2;
      while (i < text.size() && depth > 0) {
        if (text[i] == '/' && i + 1 < text.size() && text[i + 1] == '-') {
          ++depth;
          i += 2;
        } else if (text[i] == '-' && i + 1 < text.size() && text[i + 1] == '/') {
          --depth;
          i += 2;
        } else {
          ++i;
        }
      }
      if (depth > 0) throw ParseError(ParseErrorKind::UnterminatedComment, "unterminated block comment");
      out.push_back({SegmentKind::BlockComment, start, i});
      code_start = i;
    } else if (c == '"') {
      flush_code(i);
      const std::size_t start = i++;
      bool closed = false;
      while (i < text.size()) {
        if (text[i] == '\\') {
          i += 2;
        } else if (text[i] == '"') {
          ++i;
          closed = true;
          break;
        } else {
          ++i;
        }
      }
      if (!closed) throw ParseError(ParseErrorKind::UnterminatedString, "unterminated string literal");
      out.push_back({SegmentKind::String, start, std::min(i, text.size())});
      code_start = i;
    } else if (c == '\'' && !prev_is_ident(i)) {
      // char literal: 'x' or '\n'; a lone apostrophe stays code
      std::size_t j = i + 1;
      if (j < text.size() && text[j] == '\\') {
        j += 2;
      } else if (j < text.size()) {
        decode_utf8(text, j);
      }
      if (j < text.size() && text[j] == '\'' && j > i + 1) {
        flush_code(i);
        out.push_back({SegmentKind::Char, i, j + 1});
        i = j + 1;
        code_start = i;
      } else {
        ++i;
      }
    } else {
      ++i;
    }
  }
  flush_code(text.size());
  return out;
}

std::string mask_non_code(std::string_view text) {
  std::string masked(text);
  for (const auto& seg : lex_segments(text)) {
    if (seg.kind == SegmentKind::Code) continue;
    for (std::size_t k = seg.begin; k < seg.end; ++k) {
      if (masked[k] != '\n') masked[k] = ' ';
    }
  }
  return masked;
}

std::vector<std::size_t> find_word(std::string_view masked, std::string_view word) {
  std::vector<std::size_t> hits;
  std::size_t pos = 0;
  while ((pos = masked.find(word, pos)) != std::string_view::npos) {
    bool left_ok = true;
    if (pos > 0) {
      std::size_t j = pos - 1;
      while (j > 0 && (static_cast<unsigned char>(masked[j]) & 0xC0) == 0x80) --j;
      std::size_t k = j;
      const char32_t prev = decode_utf8(masked, k);
      left_ok = !is_ident_char(prev) && prev != '.';
    }
    bool right_ok = true;
    const std::size_t after = pos + word.size();
    if (after < masked.size()) {
      std::size_t k = after;
      right_ok = !is_ident_char(decode_utf8(masked, k));
    }
    if (left_ok && right_ok) hits.push_back(pos);
    pos += word.size();
  }
  return hits;
}

std::size_t count_sorry_tokens(std::string_view text) {
  const std::string masked = mask_non_code(text);
  return find_word(masked, "sorry").size() + find_word(masked, "admit").size();
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    const std::size_t e = text.find('\n', start);
    if (e == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, e - start));
    start = e + 1;
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string_view rtrim(std::string_view s) {
  const auto e = s.find_last_not_of(" \t\r\n");
  if (e == std::string_view::npos) return {};
  return s.substr(0, e + 1);
}

std::string squash_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = true;
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

std::string normalize_trailing_whitespace(std::string_view text) {
  auto lines = split_lines(text);
  for (auto& l : lines) l = std::string(rtrim(l));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return join_lines(lines);
}

bool starts_with_word(std::string_view s, std::string_view word) {
  if (s.substr(0, word.size()) != word) return false;
  if (s.size() == word.size()) return true;
  std::size_t k = word.size();
  return !is_ident_char(decode_utf8(s, k));
}

}  // namespace apollo
