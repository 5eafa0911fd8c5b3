#include "apollo/goal_extraction.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>

#include "apollo/sorrifier.hpp"
#include "apollo/text.hpp"

namespace apollo {

namespace {

constexpr std::string_view kDagger = "✝";

bool is_superscript_digit(char32_t c) { return c == U'¹' || c == U'²' || c == U'³' || (c >= 0x2070 && c <= 0x2079); }

// Hypothesis names as the pretty printer writes them: identifiers, possibly
// with a dagger and superscript index.
bool is_goal_name(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = 0;
  bool first = true;
  while (i < s.size()) {
    std::size_t k = i;
    const char32_t c = decode_utf8(s, k);
    const bool ok = is_ident_char(c) || c == U'✝' || is_superscript_digit(c) || (c == '.' && !first);
    if (!ok || (first && c >= '0' && c <= '9')) return false;
    first = false;
    i = k;
  }
  return true;
}

std::size_t top_level_colon(std::string_view s) {
  int depth = 0;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    const char c = s[i];
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') --depth;
    if (depth == 0 && c == ' ' && s[i + 1] == ':' && s[i + 2] == ' ') return i;
  }
  return std::string_view::npos;
}

bool name_char_at(std::string_view s, std::size_t i) {
  std::size_t k = i;
  const char32_t c = decode_utf8(s, k);
  return is_ident_char(c) || c == U'✝' || is_superscript_digit(c);
}

bool name_char_before(std::string_view s, std::size_t i) {
  if (i == 0) return false;
  std::size_t b = i - 1;
  while (b > 0 && (static_cast<unsigned char>(s[b]) & 0xC0) == 0x80) --b;
  return name_char_at(s, b);
}

std::string replace_name(const std::string& text, const std::string& from, const std::string& to) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto p = text.find(from, i);
    if (p == std::string::npos) break;
    const std::size_t e = p + from.size();
    const bool bounded = !name_char_before(text, p) && (e >= text.size() || !name_char_at(text, e));
    out += text.substr(i, p - i);
    out += bounded ? to : from;
    i = e;
  }
  return out + text.substr(std::min(i, text.size()));
}

std::string hex_nonce(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", h);
  return std::string(buf, 6);
}

[[noreturn]] void unparseable(const std::string& why) { throw ExtractError(ExtractError::Kind::UnparseableGoal, why); }

}  // namespace

std::set<std::string> identifiers_in(std::string_view text) {
  std::string masked;
  try {
    masked = mask_non_code(text);
  } catch (const ParseError&) {
    masked = std::string(text);
  }
  std::set<std::string> out;
  std::size_t i = 0;
  while (i < masked.size()) {
    std::size_t k = i;
    const char32_t c = decode_utf8(masked, k);
    if (!is_ident_char(c) || (c >= '0' && c <= '9')) {
      i = k;
      continue;
    }
    std::size_t e = k;
    while (e < masked.size()) {
      std::size_t q = e;
      const char32_t d = decode_utf8(masked, q);
      if (!is_ident_char(d) && d != '.') break;
      e = q;
    }
    std::string tok = masked.substr(i, e - i);
    while (!tok.empty() && tok.back() == '.') tok.pop_back();
    std::size_t start = 0;
    for (std::size_t dot = tok.find('.'); dot != std::string::npos; dot = tok.find('.', dot + 1)) {
      out.insert(tok.substr(start, dot - start));
      start = dot + 1;
    }
    out.insert(tok.substr(start));
    out.insert(tok);
    i = e;
  }
  out.erase("");
  return out;
}

std::string fresh_lemma_name(std::string_view base, int ordinal, const std::set<std::string>& taken) {
  const std::string plain = std::string(base) + "_sub" + std::to_string(ordinal);
  if (!taken.count(plain)) return plain;
  for (int n = 0;; ++n) {
    const std::string cand = plain + "_" + hex_nonce(plain + "#" + std::to_string(n));
    if (!taken.count(cand)) return cand;
  }
}

GoalContext parse_goal(std::string_view goal_text) {
  const std::string text(trim(goal_text));
  if (text.empty()) unparseable("empty goal");
  if (text.find("?m") != std::string::npos || text.find("?_") != std::string::npos)
    unparseable("goal mentions metavariables");

  // Logical lines: indented physical lines continue the previous one.
  std::vector<std::string> logical;
  for (const auto& raw : split_lines(text)) {
    if (trim(raw).empty()) {
      logical.emplace_back();  // goal separator
      continue;
    }
    const bool cont = !raw.empty() && (raw[0] == ' ' || raw[0] == '\t');
    if (cont && !logical.empty() && !logical.back().empty()) {
      logical.back() += " " + std::string(trim(raw));
    } else {
      logical.emplace_back(rtrim(raw));
    }
  }
  GoalContext ctx;
  int turnstiles = 0;
  for (const auto& l : logical) {
    if (l.empty()) {
      if (turnstiles > 0) unparseable("more than one goal");
      continue;
    }
    if (starts_with_word(l, "case")) unparseable("tagged goal");
    if (l.rfind("⊢", 0) == 0) {
      if (++turnstiles > 1) unparseable("more than one goal");
      ctx.target = std::string(trim(std::string_view(l).substr(std::string_view("⊢").size())));
      continue;
    }
    if (turnstiles > 0) unparseable("text after the target");
    const auto colon = top_level_colon(l);
    if (colon == std::string_view::npos) unparseable("hypothesis without a type: " + l);
    std::string type(trim(std::string_view(l).substr(colon + 3)));
    if (type.find(" := ") != std::string::npos) unparseable("let-bound hypothesis: " + l);
    const std::string names(trim(std::string_view(l).substr(0, colon)));
    std::size_t p = 0;
    bool any = false;
    while (p < names.size()) {
      const auto sp = names.find(' ', p);
      const std::string n = names.substr(p, sp == std::string::npos ? std::string::npos : sp - p);
      if (!n.empty()) {
        if (!is_goal_name(n)) unparseable("bad hypothesis name '" + n + "'");
        ctx.hypotheses.push_back({n, type, false});
        any = true;
      }
      if (sp == std::string::npos) break;
      p = sp + 1;
    }
    if (!any) unparseable("hypothesis without a name");
  }
  if (turnstiles != 1 || ctx.target.empty()) unparseable("no target");

  // Rename inaccessible hypotheses, longest names first so `x✝¹` beats `x✝`.
  std::set<std::string> used;
  for (const auto& h : ctx.hypotheses) used.insert(h.name);
  for (const auto& id : identifiers_in(ctx.target)) used.insert(id);
  for (const auto& h : ctx.hypotheses)
    for (const auto& id : identifiers_in(h.type)) used.insert(id);
  std::vector<std::pair<std::string, std::string>> renames;
  for (auto& h : ctx.hypotheses) {
    const auto d = h.name.find(kDagger);
    if (d == std::string::npos) continue;
    std::string base = h.name.substr(0, d);
    if (base.empty()) base = "x";
    std::string fresh;
    for (int n = 1;; ++n) {
      fresh = base + "_" + std::to_string(n);
      if (!used.count(fresh)) break;
    }
    used.insert(fresh);
    renames.emplace_back(h.name, fresh);
  }
  std::sort(renames.begin(), renames.end(),
            [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  for (const auto& [from, to] : renames) {
    for (auto& h : ctx.hypotheses) {
      if (h.name == from) {
        h.name = to;
        h.renamed = true;
      }
      h.type = replace_name(h.type, from, to);
    }
    ctx.target = replace_name(ctx.target, from, to);
  }
  std::set<std::string> seen;
  for (const auto& h : ctx.hypotheses)
    if (!seen.insert(h.name).second) unparseable("duplicate hypothesis name '" + h.name + "'");
  return ctx;
}

GoalContext extract_goal(const SorryInfo& sorry, int site, std::string_view theorem_name,
                         const std::set<std::string>& taken) {
  GoalContext ctx = parse_goal(sorry.goal);
  ctx.site = site;
  ctx.origin = sorry.pos;
  std::set<std::string> avoid = taken;
  for (const auto& h : ctx.hypotheses) avoid.insert(h.name);
  ctx.fresh_name = fresh_lemma_name(theorem_name, site, avoid);
  return ctx;
}

TheoremStatement transform_goal(const GoalContext& ctx, std::string_view header) {
  TheoremStatement st;
  st.name = ctx.fresh_name;
  st.header = std::string(header);
  if (!st.header.empty() && st.header.back() != '\n') st.header += '\n';
  std::string text = "theorem " + ctx.fresh_name;
  for (const auto& h : ctx.hypotheses) text += " (" + h.name + " : " + h.type + ")";
  text += " : " + ctx.target + " := by";
  st.statement_text = std::move(text);
  return st;
}

TheoremStatement transform_checked(const GoalContext& ctx, std::string_view header, Session& session,
                                   Seconds timeout) {
  TheoremStatement st = transform_goal(ctx, header);
  const StatementCheck check = validate_statement(st, session, timeout);
  if (!check.ok) {
    throw TransformError(TransformError::Kind::StatementRejected,
                         "sub-lemma " + st.name + " does not compile standalone (" +
                             std::string(to_string(check.result.status)) + ")",
                         check.diagnostics);
  }
  return st;
}

ProofScript splice_subproof(const ProofScript& parent, std::size_t ordinal, const ProofScript& sub,
                            const GoalContext& ctx, SpliceMode mode) {
  if (ordinal >= count_sorries(parent))
    throw SpliceError(SpliceError::Kind::SiteVanished, "no sorry with ordinal " + std::to_string(ordinal));
  // Inaccessible hypotheses get their fresh names at the site before use.
  std::string rename;
  for (const auto& h : ctx.hypotheses)
    if (h.renamed) rename += (rename.empty() ? "rename_i " : " ") + h.name;
  const std::string body = rename.empty() ? body_text(sub) : rename + "\n" + body_text(sub);

  auto standalone = [&] {
    std::string call = "exact " + ctx.fresh_name;
    for (const auto& h : ctx.hypotheses) call += " " + h.name;
    if (!rename.empty()) call = "(" + rename + "; " + call + ")";
    const ProofScript applied = replace_sorry(parent, ordinal, call);
    // Keep lemmas the sub-proof itself added above its declaration.
    const std::string full = serialize(sub);
    const std::string& own = sub.statement.header;
    const bool nested = !own.empty() && sub.header_text.rfind(own, 0) == 0;
    return insert_before_declaration(applied, std::string_view(full).substr(nested ? own.size() : sub.header_text.size()));
  };
  if (mode == SpliceMode::Standalone) return standalone();
  try {
    return replace_sorry_with_body(parent, ordinal, body);
  } catch (const EditError&) {
    // The sorry sits inside a term; a one-line proof still fits as `by tac`.
    if (body.find('\n') == std::string::npos) {
      const SourcePos site = sorry_positions(parent)[ordinal];
      const auto lines = split_lines(serialize(parent));
      const std::string& line = lines[static_cast<std::size_t>(site.line - 1)];
      const std::string_view before = rtrim(std::string_view(line).substr(0, byte_offset_of_column(line, site.col)));
      const bool after_assign = before.size() >= 2 && before.substr(before.size() - 2) == ":=";
      return replace_sorry(parent, ordinal, after_assign ? "by " + body : "(by " + body + ")");
    }
    return standalone();
  }
}

}  // namespace apollo
