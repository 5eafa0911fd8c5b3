#include "apollo/syntax_refiner.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "apollo/text.hpp"

namespace apollo {

using nlohmann::json;

namespace {

// Masked regions become private-use sentinels: U+E000, hex digits as
// U+E010..U+E01F, U+E001. No rule pattern can match inside one by accident.
constexpr std::string_view kOpen = "\xEE\x80\x80";
constexpr std::string_view kClose = "\xEE\x80\x81";

std::string hex_digit(unsigned d) {
  const char32_t cp = 0xE010 + d;
  std::string s(3, '\0');
  s[0] = static_cast<char>(0xE0 | (cp >> 12));
  s[1] = static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
  s[2] = static_cast<char>(0x80 | (cp & 0x3F));
  return s;
}

std::string sentinel(std::size_t index) {
  std::string digits;
  do {
    digits.insert(0, hex_digit(static_cast<unsigned>(index % 16)));
    index /= 16;
  } while (index);
  return std::string(kOpen) + digits + std::string(kClose);
}

struct Masked {
  std::string text;
  std::vector<std::string> pieces;
};

Masked mask(std::string_view source) {
  Masked m;
  for (const auto& seg : lex_segments(source)) {
    const auto part = source.substr(seg.begin, seg.end - seg.begin);
    if (seg.kind == SegmentKind::Code) {
      m.text += part;
      continue;
    }
    // one sentinel per physical line so line numbers survive masking
    std::size_t start = 0;
    while (true) {
      const auto nl = part.find('\n', start);
      const auto piece = part.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
      m.text += sentinel(m.pieces.size());
      m.pieces.emplace_back(piece);
      if (nl == std::string_view::npos) break;
      m.text += '\n';
      start = nl + 1;
    }
  }
  return m;
}

/// Restores sentinels; nullopt when they are missing, duplicated or reordered.
std::optional<std::string> unmask(std::string_view text, const std::vector<std::string>& pieces) {
  std::string out;
  std::size_t expected = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, kOpen.size(), kOpen) != 0) {
      out += text[i++];
      continue;
    }
    i += kOpen.size();
    std::size_t index = 0;
    int ndigits = 0;
    while (i + 3 <= text.size() && text.compare(i, kClose.size(), kClose) != 0) {
      std::size_t k = i;
      const char32_t cp = decode_utf8(text, k);
      if (cp < 0xE010 || cp > 0xE01F) return std::nullopt;
      index = index * 16 + (cp - 0xE010);
      ++ndigits;
      i = k;
    }
    if (ndigits == 0 || text.compare(i, kClose.size(), kClose) != 0) return std::nullopt;
    i += kClose.size();
    if (index != expected || index >= pieces.size()) return std::nullopt;
    out += pieces[index];
    ++expected;
  }
  if (expected != pieces.size()) return std::nullopt;
  return out;
}

/// Splits a masked line into code and a trailing run of whitespace/sentinels,
/// so per-line rules anchored at `$` see the line as if the comment were absent.
std::pair<std::string, std::string> detach_trailing(const std::string& line) {
  std::size_t cut = line.size();
  bool found = false;
  while (true) {
    std::size_t j = cut;
    while (j > 0 && (line[j - 1] == ' ' || line[j - 1] == '\t')) --j;
    if (j < kClose.size() || line.compare(j - kClose.size(), kClose.size(), kClose) != 0) break;
    const auto open = line.rfind(kOpen, j - kClose.size());
    if (open == std::string::npos) break;
    cut = open;
    found = true;
  }
  if (!found) return {line, {}};
  while (cut > 0 && (line[cut - 1] == ' ' || line[cut - 1] == '\t')) --cut;
  return {line.substr(0, cut), line.substr(cut)};
}

bool masks_to(std::string_view restored, const std::string& masked) {
  try {
    return mask(restored).text == masked;
  } catch (const ParseError&) {
    return false;
  }
}

std::regex compile(const RewriteRule& rule) {
  try {
    return std::regex(rule.pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw RefineError(RefineError::Kind::BadRule, "rule " + rule.id + ": " + e.what());
  }
}

std::string pass_masked(const std::string& masked, const RewriteRule& rule, const std::regex& re) {
  if (rule.scope == RuleScope::WholeFile) return std::regex_replace(masked, re, rule.replacement);
  auto lines = split_lines(masked);
  for (auto& line : lines) {
    auto [code, tail] = detach_trailing(line);
    line = std::regex_replace(code, re, rule.replacement) + tail;
  }
  return join_lines(lines);
}

std::string_view scope_name(RuleScope s) { return s == RuleScope::WholeFile ? "whole-file" : "per-line"; }

RuleScope parse_scope(const std::string& s) {
  if (s == "whole-file") return RuleScope::WholeFile;
  if (s == "per-line") return RuleScope::PerLine;
  throw RefineError(RefineError::Kind::BadRule, "unknown rule scope " + s);
}

}  // namespace

void validate_rules(const std::vector<RewriteRule>& rules) {
  std::set<std::string> ids;
  for (const auto& r : rules) {
    if (r.id.empty()) throw RefineError(RefineError::Kind::BadRule, "rule with empty id");
    if (!ids.insert(r.id).second) throw RefineError(RefineError::Kind::BadRule, "duplicate rule id " + r.id);
    compile(r);
  }
}

std::string apply_rule_once(std::string_view source, const RewriteRule& rule) {
  Masked m;
  try {
    m = mask(source);
  } catch (const ParseError&) {
    return std::string(source);
  }
  const auto re = compile(rule);
  const auto next = pass_masked(m.text, rule, re);
  auto restored = unmask(next, m.pieces);
  return restored ? *restored : std::string(source);
}

RefineResult refine(std::string_view source, const std::vector<RewriteRule>& rules) {
  validate_rules(rules);
  RefineResult result{std::string(source), {}};
  Masked m;
  try {
    m = mask(source);
  } catch (const ParseError&) {
    // an unterminated comment or string makes masking unsafe; leave the text alone
    return result;
  }
  std::vector<std::regex> compiled;
  for (const auto& r : rules) compiled.push_back(compile(r));

  std::set<std::string> changed;
  std::string cur = m.text;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool sweep_changed = false;
    for (std::size_t k = 0; k < rules.size(); ++k) {
      int passes = 0;
      while (true) {
        std::string next = pass_masked(cur, rules[k], compiled[k]);
        if (next == cur) break;
        auto restored = unmask(next, m.pieces);
        // a pass that damaged a masked region is discarded
        if (!restored || !masks_to(*restored, next)) break;
        cur = std::move(next);
        changed.insert(rules[k].id);
        sweep_changed = true;
        if (++passes >= kMaxPassesPerRule)
          throw RefineError(RefineError::Kind::RuleBudgetExceeded,
                            "rule " + rules[k].id + " did not reach a fixpoint in " +
                                std::to_string(kMaxPassesPerRule) + " passes");
      }
    }
    if (!sweep_changed) break;
  }
  result.text = *unmask(cur, m.pieces);
  for (const auto& r : rules)
    if (changed.count(r.id)) result.applied.push_back(r.id);
  return result;
}

std::vector<RewriteRule> default_ruleset() {
  return {
      {"from-by", R"(\bfrom\s+by\b)", ":= by", RuleScope::WholeFile,
       "Lean 3 `from by` term proofs become `:= by`"},
      {"begin-end", R"(\bbegin\b((?:(?!\bbegin\b)[\s\S])*?)\n?[ \t]*\bend\b)", "by$1", RuleScope::WholeFile,
       "Lean 3 `begin ... end` blocks become a `by` block, innermost first"},
      {"rw-brackets", R"(\b(rw|rwa|rewrite|erw)\s+((?:←\s*)?[^\s\[\],]+)(?=\s+at\b|\s*$))", "$1 [$2]",
       RuleScope::PerLine, "bare rewrite lemmas get the square brackets Lean 4 requires"},
      {"obtain-trailing-comma", R"(^(\s*obtain\s+⟨.*⟩\s*:=.*?)\s*,\s*$)", "$1", RuleScope::PerLine,
       "Lean 3 tactic separators after `obtain` are dropped"},
      {"assume-intro", R"(^(\s*)assume\b)", "$1intro", RuleScope::PerLine, "Lean 3 `assume` becomes `intro`"},
      {"lambda-comma", R"(λ\s*((?:[A-Za-z_][^\s,=>()]*\s*)+),)", "fun $1=>", RuleScope::WholeFile,
       "Lean 3 lambda `λ x, e` becomes `fun x => e`"},
      {"cases-with", R"(^(\s*)cases\s+([^\s,]+)\s+with\s+([^\s,⟨]+)\s+([^\s,]+)\s*,?\s*$)", "$1obtain ⟨$3, $4⟩ := $2",
       RuleScope::PerLine, "Lean 3 `cases h with a b` becomes an `obtain` pattern"},
      {"norm-num-brackets", R"(\b(norm_num|simp|nlinarith|linarith)\s+\[([^\]]*)\]\s*,\s*$)", "$1 [$2]",
       RuleScope::PerLine, "Lean 3 comma after a closing lemma list is dropped"},
  };
}

std::string dump_rules(const std::vector<RewriteRule>& rules) {
  std::string out;
  for (const auto& r : rules) {
    json j = {{"id", r.id},
              {"pattern", r.pattern},
              {"replacement", r.replacement},
              {"scope", std::string(scope_name(r.scope))},
              {"description", r.description}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<RewriteRule> parse_rules(std::string_view text) {
  std::vector<RewriteRule> rules;
  int lineno = 0;
  for (const auto& line : split_lines(text)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      const auto j = json::parse(t);
      RewriteRule r;
      r.id = j.at("id").get<std::string>();
      r.pattern = j.at("pattern").get<std::string>();
      r.replacement = j.at("replacement").get<std::string>();
      r.scope = parse_scope(j.value("scope", std::string("whole-file")));
      r.description = j.value("description", std::string());
      rules.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw RefineError(RefineError::Kind::BadRule, "rule file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate_rules(rules);
  return rules;
}

std::vector<RewriteRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RefineError(RefineError::Kind::BadRule, "cannot open rule file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rules(ss.str());
}

void save_rules(const std::filesystem::path& path, const std::vector<RewriteRule>& rules) {
  std::ofstream out(path);
  out << dump_rules(rules);
  if (!out) throw std::runtime_error("cannot write rule file " + path.string());
}

std::vector<int> rule_match_lines(std::string_view source, const std::vector<RewriteRule>& rules) {
  Masked m;
  try {
    m = mask(source);
  } catch (const ParseError&) {
    return {};
  }
  std::set<int> lines;
  auto line_of = [&](std::size_t off) {
    return 1 + static_cast<int>(std::count(m.text.begin(), m.text.begin() + static_cast<long>(off), '\n'));
  };
  for (const auto& rule : rules) {
    const auto re = compile(rule);
    if (rule.scope == RuleScope::WholeFile) {
      for (auto it = std::sregex_iterator(m.text.begin(), m.text.end(), re); it != std::sregex_iterator(); ++it) {
        const auto b = static_cast<std::size_t>(it->position(0));
        const int l0 = line_of(b);
        const int l1 = line_of(b + static_cast<std::size_t>(it->length(0)));
        for (int l = l0; l <= l1; ++l) lines.insert(l);
      }
    } else {
      const auto split = split_lines(m.text);
      for (std::size_t i = 0; i < split.size(); ++i) {
        const auto code = detach_trailing(split[i]).first;
        if (std::regex_search(code, re)) lines.insert(static_cast<int>(i) + 1);
      }
    }
  }
  return {lines.begin(), lines.end()};
}

bool should_refine(std::string_view source, const CompileResult& initial, const std::vector<RewriteRule>& rules) {
  if (initial.status != CompileStatus::Fail) return false;
  const auto lines = rule_match_lines(source, rules);
  if (lines.empty()) return false;
  for (const auto& d : initial.errors()) {
    const int lo = d.pos.line;
    const int hi = d.end_pos ? std::max(d.end_pos->line, lo) : lo;
    for (int l : lines)
      if (l >= lo && l <= hi) return true;
  }
  return false;
}

}  // namespace apollo
