#include "apollo/proof_model.hpp"

#include <algorithm>
#include <functional>

namespace apollo {

namespace {

constexpr std::string_view kModifiers[] = {"private", "protected", "noncomputable", "nonrec", "unsafe", "partial"};

struct DeclSite {
  std::size_t line_start;  // byte offset of the line holding the keyword
  std::size_t keyword;     // byte offset of `theorem`/`lemma`
  std::string name;
};

std::string spaces(int n) { return std::string(static_cast<std::size_t>(std::max(n, 0)), ' '); }

int leading_columns(std::string_view line) {
  int n = 0;
  for (char c : line) {
    if (c != ' ') break;
    ++n;
  }
  return n;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

// Masks a fragment that may cut through a multi-line comment.
std::string safe_mask(std::string_view s) {
  try {
    return mask_non_code(s);
  } catch (const ParseError&) {
    return std::string(s);
  }
}

// Scans masked text for declarations at column 0.
std::vector<DeclSite> find_declarations(std::string_view masked) {
  std::vector<DeclSite> out;
  std::size_t line_start = 0;
  while (line_start <= masked.size()) {
    std::size_t eol = masked.find('\n', line_start);
    if (eol == std::string_view::npos) eol = masked.size();
    std::string_view line = masked.substr(line_start, eol - line_start);
    std::size_t p = 0;
    bool progressed = true;
    while (progressed && p < line.size()) {
      progressed = false;
      if (line[p] == '@' && p + 1 < line.size() && line[p + 1] == '[') {
        int depth = 0;
        std::size_t q = p + 1;
        for (; q < line.size(); ++q) {
          if (line[q] == '[') ++depth;
          if (line[q] == ']' && --depth == 0) break;
        }
        p = q + 1;
        while (p < line.size() && line[p] == ' ') ++p;
        progressed = true;
        continue;
      }
      for (auto m : kModifiers) {
        if (starts_with_word(line.substr(p), m)) {
          p += m.size();
          while (p < line.size() && line[p] == ' ') ++p;
          progressed = true;
          break;
        }
      }
    }
    std::string_view rest = line.substr(std::min(p, line.size()));
    std::size_t kw_len = 0;
    if (starts_with_word(rest, "theorem")) kw_len = 7;
    if (starts_with_word(rest, "lemma")) kw_len = 5;
    if (kw_len) {
      std::size_t q = kw_len;
      while (q < rest.size() && rest[q] == ' ') ++q;
      std::size_t e = q;
      while (e < rest.size()) {
        std::size_t k = e;
        const char32_t c = decode_utf8(rest, k);
        if (!(is_ident_char(c) || c == '.' || c == 0xAB || c == 0xBB)) break;
        e = k;
      }
      out.push_back({line_start, line_start + p, std::string(rest.substr(q, e - q))});
    }
    if (eol == masked.size()) break;
    line_start = eol + 1;
  }
  return out;
}

bool is_open_bracket(std::string_view s, std::size_t i, std::size_t& len) {
  len = 1;
  if (s[i] == '(' || s[i] == '[' || s[i] == '{') return true;
  if (s.substr(i, 3) == "⟨") {
    len = 3;
    return true;
  }
  return false;
}

bool is_close_bracket(std::string_view s, std::size_t i, std::size_t& len) {
  len = 1;
  if (s[i] == ')' || s[i] == ']' || s[i] == '}') return true;
  if (s.substr(i, 3) == "⟩") {
    len = 3;
    return true;
  }
  return false;
}

int bracket_delta(std::string_view masked_line) {
  int d = 0;
  for (std::size_t i = 0; i < masked_line.size();) {
    std::size_t len = 1;
    if (is_open_bracket(masked_line, i, len)) {
      ++d;
    } else if (is_close_bracket(masked_line, i, len)) {
      --d;
    }
    i += len;
  }
  return d;
}

// Byte offset of the first `:=` at bracket depth 0 in `masked`, or npos.
std::size_t top_level_assign(std::string_view masked) {
  int depth = 0;
  for (std::size_t i = 0; i + 1 < masked.size();) {
    std::size_t len = 1;
    if (is_open_bracket(masked, i, len)) {
      ++depth;
    } else if (is_close_bracket(masked, i, len)) {
      depth = std::max(0, depth - 1);
    } else if (depth == 0 && masked[i] == ':' && masked[i + 1] == '=') {
      return i;
    }
    i += len;
  }
  return std::string_view::npos;
}

bool ends_with_continuation(std::string_view masked_line) {
  std::string_view t = rtrim(masked_line);
  if (t.empty()) return false;
  static constexpr std::string_view kTails[] = {
      ":=", "<;>", "=>", "=", "+", "-", "*", "/", ",", "^", ":", "→", "↔", "∧",
      "∨", "≤", "≥", "≠", "<", ">", "|"};
  for (auto tail : kTails) {
    if (t.size() >= tail.size() && t.substr(t.size() - tail.size()) == tail) {
      if (tail == "-" && t.size() >= 2 && t[t.size() - 2] == '-') return false;
      return true;
    }
  }
  return false;
}

bool is_alternative_line(std::string_view masked_line) {
  std::string_view t = trim(masked_line);
  return !t.empty() && (t.front() == '|' || t.substr(0, 3) == "<;>");
}

BlockKind classify(std::string_view masked_header, bool has_children) {
  std::string_view t = trim(masked_header);
  if (starts_with_word(t, "have") || starts_with_word(t, "haveI")) return BlockKind::HaveBlock;
  if (starts_with_word(t, "case") || starts_with_word(t, "next")) return BlockKind::CaseBlock;
  if (t.substr(0, 2) == "·" || starts_with_word(t, "calc") || starts_with_word(t, "focus")) {
    return BlockKind::AnonymousBlock;
  }
  if (t.size() >= 2 && t[0] == '.' && t[1] == ' ') return BlockKind::AnonymousBlock;
  return has_children ? BlockKind::AnonymousBlock : BlockKind::TacticLine;
}

struct FlatNode {
  ProofBlock block;
  int eff = 0;
  int parent = -1;
  std::vector<int> kids;
};

ProofBlock assemble(std::vector<FlatNode>& flat, int idx) {
  ProofBlock b = std::move(flat[idx].block);
  for (int k : flat[idx].kids) b.children.push_back(assemble(flat, k));
  b.kind = b.is_root() ? BlockKind::AnonymousBlock
                       : classify(safe_mask(b.header_text()), !b.children.empty());
  return b;
}

// Walks the tree assigning line numbers and spans.
void renumber(ProofScript& s) {
  const int first = s.decl_last_line();
  const int width = s.decl_last_line_width();
  int cur = first;
  std::function<void(ProofBlock&)> walk = [&](ProofBlock& b) {
    std::optional<SourcePos> start;
    SourcePos end{};
    for (auto& l : b.lines) {
      if (l.inline_head) {
        l.number = first;
      } else {
        l.number = ++cur;
      }
      if (!l.trivia) {
        const int base = l.inline_head ? width : 0;
        if (!start) start = SourcePos{l.number, b.indent};
        end = {l.number, base + static_cast<int>(codepoint_count(rtrim(l.text)))};
      }
    }
    for (auto& c : b.children) {
      walk(c);
      if (!start) start = c.span.start();
      end = std::max(end, c.span.end());
    }
    if (b.is_root()) {
      b.span = {first, width, end.line ? end.line : first, end.line ? end.col : width};
    } else if (start) {
      b.span = {start->line, start->col, end.line, end.col};
    }
  };
  walk(s.root);
}

ProofBlock* find_mut(ProofBlock& b, int id, ProofBlock** parent, std::size_t* index) {
  for (std::size_t i = 0; i < b.children.size(); ++i) {
    if (b.children[i].id == id) {
      if (parent) *parent = &b;
      if (index) *index = i;
      return &b.children[i];
    }
    if (auto* hit = find_mut(b.children[i], id, parent, index)) return hit;
  }
  return nullptr;
}

ProofBlock& dfs_last(ProofBlock& b) { return b.children.empty() ? b : dfs_last(b.children.back()); }

// Detaches the trivia that trails the subtree (it belongs to whatever follows).
std::vector<SourceLine> take_trailing_trivia(ProofBlock& subtree) {
  ProofBlock& last = dfs_last(subtree);
  std::vector<SourceLine> out;
  while (!last.lines.empty() && last.lines.back().trivia) {
    out.insert(out.begin(), last.lines.back());
    last.lines.pop_back();
  }
  return out;
}

ProofBlock make_sorry_node(ProofScript& s, int indent) {
  ProofBlock n;
  n.id = s.next_id++;
  n.kind = BlockKind::TacticLine;
  n.indent = indent;
  n.lines.push_back({spaces(indent) + "sorry", false, false, 0});
  return n;
}

int root_child_indent(const ProofScript& s) {
  for (const auto& c : s.root.children) {
    if (!c.lines.empty() && !c.lines.front().inline_head) return c.indent;
  }
  return 2;
}

// Removes child `index` of `parent` and rehomes the trivia that followed it.
void erase_child(ProofScript& s, ProofBlock& parent, std::size_t index) {
  auto trivia = take_trailing_trivia(parent.children[index]);
  parent.children.erase(parent.children.begin() + static_cast<std::ptrdiff_t>(index));
  if (s.root.children.empty()) {
    ProofBlock n = make_sorry_node(s, 2);
    n.lines.insert(n.lines.end(), trivia.begin(), trivia.end());
    s.root.children.push_back(std::move(n));
    return;
  }
  ProofBlock& pred = index > 0 ? dfs_last(parent.children[index - 1]) : parent;
  pred.lines.insert(pred.lines.end(), trivia.begin(), trivia.end());
}

std::string indent_block(std::string_view body, int indent) {
  auto lines = split_lines(body);
  while (!lines.empty() && is_blank(lines.back())) lines.pop_back();
  while (!lines.empty() && is_blank(lines.front())) lines.erase(lines.begin());
  int min_indent = 1 << 20;
  for (const auto& l : lines) {
    if (!is_blank(l)) min_indent = std::min(min_indent, leading_columns(l));
  }
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    if (is_blank(lines[i])) continue;
    out += spaces(indent) + lines[i].substr(static_cast<std::size_t>(min_indent));
  }
  return out;
}

// Parses a tactic body into nodes with fresh ids from `s`.
std::vector<ProofBlock> parse_body_nodes(ProofScript& s, std::string_view body, int indent) {
  const std::string text = "theorem splice_body : True := by\n" + indent_block(body, indent);
  ProofScript tmp = parse_script(text);
  std::function<void(ProofBlock&)> reid = [&](ProofBlock& b) {
    b.id = s.next_id++;
    for (auto& c : b.children) reid(c);
  };
  for (auto& c : tmp.root.children) reid(c);
  return std::move(tmp.root.children);
}

struct TokenSite {
  ProofBlock* node;
  std::size_t line_index;   // into node->lines
  std::size_t byte_offset;  // into line text
};

std::vector<TokenSite> sorry_sites(ProofScript& s) {
  const std::string text = serialize(s);
  const std::string masked = mask_non_code(text);
  const std::size_t body_begin = s.header_text.size() + s.decl_text.size();
  const std::size_t body_end = text.size() - s.trailer_text.size();
  std::vector<std::size_t> hits = find_word(masked, "sorry");
  auto admits = find_word(masked, "admit");
  hits.insert(hits.end(), admits.begin(), admits.end());
  std::sort(hits.begin(), hits.end());

  // Map absolute offsets to (node, line) by re-walking the serialization order.
  struct LineRef {
    ProofBlock* node;
    std::size_t index;
    std::size_t begin;  // absolute offset of the line text
  };
  std::vector<LineRef> refs;
  std::size_t pos = body_begin;
  std::function<void(ProofBlock&)> walk = [&](ProofBlock& b) {
    for (std::size_t i = 0; i < b.lines.size(); ++i) {
      if (!b.lines[i].inline_head) ++pos;  // newline
      refs.push_back({&b, i, pos});
      pos += b.lines[i].text.size();
    }
    for (auto& c : b.children) walk(c);
  };
  walk(s.root);

  std::vector<TokenSite> out;
  for (std::size_t h : hits) {
    if (h < body_begin || h >= body_end) continue;
    for (auto it = refs.rbegin(); it != refs.rend(); ++it) {
      if (it->begin <= h) {
        out.push_back({it->node, it->index, h - it->begin});
        break;
      }
    }
  }
  return out;
}

void check_tabs(std::string_view line) {
  for (char c : line) {
    if (c == '\t') throw ParseError(ParseErrorKind::TabIndent, "tab character in indentation");
    if (c != ' ') break;
  }
}

}  // namespace

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::HaveBlock:
      return "have-block";
    case BlockKind::CaseBlock:
      return "case-block";
    case BlockKind::AnonymousBlock:
      return "anonymous-block";
    case BlockKind::TacticLine:
      return "tactic-line";
  }
  return "?";
}

std::size_t ProofBlock::code_line_count() const {
  return static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [](const auto& l) { return !l.trivia; }));
}

std::size_t ProofBlock::subtree_code_lines() const {
  std::size_t n = code_line_count();
  for (const auto& c : children) n += c.subtree_code_lines();
  return n;
}

std::size_t ProofBlock::subtree_nodes() const {
  std::size_t n = children.size();
  for (const auto& c : children) n += c.subtree_nodes();
  return n;
}

std::string ProofBlock::header_text() const {
  std::string out;
  bool any = false;
  for (const auto& l : lines) {
    if (l.trivia) {
      if (any) break;
      continue;
    }
    if (any) out += '\n';
    out += l.text;
    any = true;
  }
  return out;
}

int ProofScript::decl_last_line() const {
  const std::string pre = header_text + decl_text;
  return 1 + static_cast<int>(std::count(pre.begin(), pre.end(), '\n'));
}

int ProofScript::decl_last_line_width() const {
  const std::string pre = header_text + decl_text;
  const auto nl = pre.rfind('\n');
  return static_cast<int>(codepoint_count(nl == std::string::npos ? pre : std::string_view(pre).substr(nl + 1)));
}

std::string ProofScript::raw_text() const { return serialize(*this); }

TheoremStatement parse_statement(std::string_view source, std::string_view name) {
  const std::string masked = mask_non_code(source);
  const auto decls = find_declarations(masked);
  const DeclSite* site = nullptr;
  for (const auto& d : decls) {
    if (name.empty() || d.name == name) site = &d;
    if (!name.empty() && d.name == name) break;
  }
  if (!site) throw ParseError(ParseErrorKind::NoProofBody, "no theorem/lemma declaration found");
  const std::size_t limit = [&] {
    for (const auto& d : decls) {
      if (d.line_start > site->line_start) return d.line_start;
    }
    return masked.size();
  }();
  std::string_view decl_masked = std::string_view(masked).substr(site->line_start, limit - site->line_start);
  const std::size_t assign = top_level_assign(decl_masked);
  if (assign == std::string_view::npos) throw ParseError(ParseErrorKind::NoProofBody, "declaration has no `:=`");
  std::size_t p = assign + 2;
  while (p < decl_masked.size() && (decl_masked[p] == ' ' || decl_masked[p] == '\n' || decl_masked[p] == '\r')) ++p;
  if (!starts_with_word(decl_masked.substr(p), "by")) {
    throw ParseError(ParseErrorKind::NoProofBody, "proof is not a tactic block (`:= by` missing)");
  }
  TheoremStatement st;
  st.name = site->name;
  st.statement_text = std::string(source.substr(site->line_start, p + 2));
  std::string before(source.substr(0, site->line_start));
  // A block comment directly above the declaration is the informal prefix.
  const auto segs = lex_segments(before);
  for (auto it = segs.rbegin(); it != segs.rend(); ++it) {
    const std::string_view txt = std::string_view(before).substr(it->begin, it->end - it->begin);
    if (it->kind == SegmentKind::Code && is_blank(txt)) continue;
    if (it->kind == SegmentKind::BlockComment) {
      std::size_t line_begin = 0;
      if (it->begin > 0) {
        const auto nl = before.rfind('\n', it->begin - 1);
        line_begin = nl == std::string::npos ? 0 : nl + 1;
      }
      if (is_blank(std::string_view(before).substr(line_begin, it->begin - line_begin))) {
        st.informal_prefix = before.substr(line_begin);
        before = before.substr(0, line_begin);
      }
    }
    break;
  }
  st.header = before;
  return st;
}

ProofScript parse_script(std::string_view source, const TheoremStatement& statement) {
  const std::string masked = mask_non_code(source);
  TheoremStatement derived = parse_statement(source, statement.name);
  ProofScript s;
  s.statement = statement;
  if (s.statement.name.empty()) s.statement.name = derived.name;
  if (s.statement.statement_text.empty()) s.statement.statement_text = derived.statement_text;
  if (s.statement.header.empty() && s.statement.informal_prefix.empty()) {
    s.statement.header = derived.header;
    s.statement.informal_prefix = derived.informal_prefix;
  }

  const std::size_t decl_start = derived.header.size() + derived.informal_prefix.size();
  const std::size_t by_end = decl_start + derived.statement_text.size();
  s.header_text = std::string(source.substr(0, decl_start));

  std::size_t eol = source.find('\n', by_end);
  if (eol == std::string_view::npos) eol = source.size();
  const bool inline_body = !is_blank(std::string_view(masked).substr(by_end, eol - by_end));
  const std::size_t body_start = inline_body ? by_end : eol;
  s.decl_text = std::string(source.substr(decl_start, body_start - decl_start));

  // Physical body lines; the first is the inline remainder when present.
  std::vector<std::string> phys;
  std::vector<std::string> phys_masked;
  std::vector<bool> phys_inline;
  if (inline_body) {
    phys.emplace_back(source.substr(by_end, eol - by_end));
    phys_masked.emplace_back(std::string_view(masked).substr(by_end, eol - by_end));
    phys_inline.push_back(true);
  }
  if (eol < source.size()) {
    auto rest = split_lines(source.substr(eol + 1));
    auto rest_m = split_lines(std::string_view(masked).substr(eol + 1));
    for (std::size_t i = 0; i < rest.size(); ++i) {
      phys.push_back(rest[i]);
      phys_masked.push_back(rest_m[i]);
      phys_inline.push_back(false);
    }
  }

  // Body ends at the first code line in column 0.
  std::size_t body_lines = phys.size();
  for (std::size_t i = 0; i < phys.size(); ++i) {
    if (phys_inline[i] || is_blank(phys_masked[i])) continue;
    if (phys[i][0] != ' ' && phys[i][0] != '\t') {
      body_lines = i;
      break;
    }
  }
  if (body_lines < phys.size()) {
    std::vector<std::string> trailer(phys.begin() + static_cast<std::ptrdiff_t>(body_lines), phys.end());
    s.trailer_text = "\n" + join_lines(trailer);
  }

  const int decl_width = s.decl_last_line_width();
  std::vector<FlatNode> flat(1);
  flat[0].block.id = 0;
  flat[0].block.indent = -1;
  flat[0].eff = -2;
  std::vector<int> stack{0};
  int last = 0;
  int next_id = 1;

  for (std::size_t i = 0; i < body_lines;) {
    const std::string& m = phys_masked[i];
    if (!phys_inline[i]) check_tabs(phys[i]);
    if (is_blank(m)) {
      flat[static_cast<std::size_t>(last)].block.lines.push_back({phys[i], phys_inline[i], true, 0});
      ++i;
      continue;
    }
    FlatNode node;
    node.block.id = next_id++;
    const int lead = static_cast<int>(codepoint_count(phys[i].substr(0, phys[i].find_first_not_of(' '))));
    node.block.indent = phys_inline[i] ? decl_width + lead : lead;
    node.eff = node.block.indent * 2 + (is_alternative_line(m) ? 1 : 0);
    int depth = bracket_delta(m);
    bool cont = ends_with_continuation(m);
    node.block.lines.push_back({phys[i], phys_inline[i], false, 0});
    ++i;
    while (i < body_lines && (depth > 0 || cont)) {
      check_tabs(phys[i]);
      if (!is_blank(phys_masked[i])) {
        depth += bracket_delta(phys_masked[i]);
        cont = ends_with_continuation(phys_masked[i]);
      }
      node.block.lines.push_back({phys[i], false, false, 0});
      ++i;
    }
    // Trailing blank continuation lines are trivia of the node.
    while (node.block.lines.size() > 1 && is_blank(node.block.lines.back().text)) {
      node.block.lines.back().trivia = true;
      break;
    }
    while (flat[static_cast<std::size_t>(stack.back())].eff >= node.eff) stack.pop_back();
    node.parent = stack.back();
    const int idx = static_cast<int>(flat.size());
    flat[static_cast<std::size_t>(node.parent)].kids.push_back(idx);
    flat.push_back(std::move(node));
    stack.push_back(idx);
    last = idx;
  }

  s.root = assemble(flat, 0);
  s.next_id = next_id;
  if (s.root.children.empty()) {
    ProofBlock n = make_sorry_node(s, 2);
    n.lines.insert(n.lines.end(), s.root.lines.begin(), s.root.lines.end());
    s.root.lines.clear();
    s.root.children.push_back(std::move(n));
  }
  renumber(s);
  return s;
}

std::string serialize(const ProofScript& script) {
  std::string out = script.header_text + script.decl_text;
  if (script.root.children.empty()) out += "\n  sorry";
  std::function<void(const ProofBlock&)> walk = [&](const ProofBlock& b) {
    for (const auto& l : b.lines) {
      if (!l.inline_head) out += '\n';
      out += l.text;
    }
    for (const auto& c : b.children) walk(c);
  };
  walk(script.root);
  out += script.trailer_text;
  return out;
}

std::size_t count_sorries(const ProofScript& script) { return count_sorry_tokens(serialize(script)); }

std::vector<SourcePos> sorry_positions(const ProofScript& script) {
  ProofScript copy = script;
  std::vector<SourcePos> out;
  const int width = copy.decl_last_line_width();
  for (const auto& site : sorry_sites(copy)) {
    const SourceLine& l = site.node->lines[site.line_index];
    const int base = l.inline_head ? width : 0;
    out.push_back({l.number, base + static_cast<int>(codepoint_count(std::string_view(l.text).substr(0, site.byte_offset)))});
  }
  return out;
}

const ProofBlock* find_block(const ProofScript& script, int id) {
  if (script.root.id == id) return &script.root;
  auto& root = const_cast<ProofBlock&>(script.root);
  return find_mut(root, id, nullptr, nullptr);
}

const ProofBlock* parent_of(const ProofScript& script, int id) {
  ProofBlock* parent = nullptr;
  auto& root = const_cast<ProofBlock&>(script.root);
  return find_mut(root, id, &parent, nullptr) ? parent : nullptr;
}

std::vector<const ProofBlock*> preorder(const ProofScript& script) {
  std::vector<const ProofBlock*> out;
  std::function<void(const ProofBlock&)> walk = [&](const ProofBlock& b) {
    out.push_back(&b);
    for (const auto& c : b.children) walk(c);
  };
  walk(script.root);
  return out;
}

const ProofBlock* block_at_line(const ProofScript& script, int line) {
  for (const ProofBlock* b : preorder(script)) {
    for (const auto& l : b->lines) {
      if (l.number == line && !(l.inline_head && b->is_root())) return b;
    }
  }
  return nullptr;
}

const ProofBlock* smallest_enclosing(const ProofScript& script, const SourceSpan& span) {
  const ProofBlock* best = &script.root;
  std::function<void(const ProofBlock&)> walk = [&](const ProofBlock& b) {
    for (const auto& c : b.children) {
      const SourceSpan widened{c.span.start_line, 0, c.span.end_line, 1 << 20};
      if (widened.contains(span)) {
        best = &c;
        walk(c);
        return;
      }
    }
  };
  walk(script.root);
  return best;
}

bool has_stated_goal(const ProofBlock& block) {
  if (block.kind != BlockKind::HaveBlock) return false;
  const std::string m = safe_mask(block.header_text());
  const std::size_t assign = top_level_assign(m);
  std::string_view head = std::string_view(m).substr(0, assign);
  int depth = 0;
  for (std::size_t i = 0; i < head.size();) {
    std::size_t len = 1;
    if (is_open_bracket(head, i, len)) {
      ++depth;
    } else if (is_close_bracket(head, i, len)) {
      --depth;
    } else if (depth == 0 && head[i] == ':' && (i + 1 >= head.size() || head[i + 1] != '=')) {
      return true;
    }
    i += len;
  }
  return false;
}

ProofScript remove_line(const ProofScript& script, const SourceSpan& span) {
  ProofScript s = script;
  const ProofBlock* target = block_at_line(s, span.start_line);
  if (!target || target->is_root()) {
    throw EditError(EditError::Kind::NodeNotFound, "no tactic line at line " + std::to_string(span.start_line));
  }
  ProofBlock* parent = nullptr;
  std::size_t index = 0;
  find_mut(s.root, target->id, &parent, &index);
  ProofBlock& node = parent->children[index];
  if (!node.children.empty()) {
    // Lift the children into the removed line's place.
    auto trivia_own = std::vector<SourceLine>();
    for (const auto& l : node.lines) {
      if (l.trivia) trivia_own.push_back(l);
    }
    std::vector<ProofBlock> kids = std::move(node.children);
    ProofBlock& pred = index > 0 ? dfs_last(parent->children[index - 1]) : *parent;
    pred.lines.insert(pred.lines.end(), trivia_own.begin(), trivia_own.end());
    parent->children.erase(parent->children.begin() + static_cast<std::ptrdiff_t>(index));
    parent->children.insert(parent->children.begin() + static_cast<std::ptrdiff_t>(index), kids.begin(), kids.end());
  } else {
    erase_child(s, *parent, index);
  }
  renumber(s);
  return s;
}

ProofScript remove_block(const ProofScript& script, int node_id) {
  ProofScript s = script;
  ProofBlock* parent = nullptr;
  std::size_t index = 0;
  if (!find_mut(s.root, node_id, &parent, &index)) {
    throw EditError(EditError::Kind::NodeNotFound, "no block with id " + std::to_string(node_id));
  }
  erase_child(s, *parent, index);
  renumber(s);
  return s;
}

ProofScript replace_block_with_sorry(const ProofScript& script, int node_id) {
  ProofScript s = script;
  ProofBlock* parent = nullptr;
  std::size_t index = 0;
  ProofBlock* node = find_mut(s.root, node_id, &parent, &index);
  if (!node) throw EditError(EditError::Kind::NodeNotFound, "no block with id " + std::to_string(node_id));
  auto trivia = take_trailing_trivia(*node);

  std::vector<SourceLine> head;
  for (const auto& l : node->lines) {
    if (l.trivia) {
      if (!head.empty()) break;
      continue;
    }
    head.push_back(l);
  }
  std::vector<SourceLine> fresh;
  if (has_stated_goal(*node)) {
    // Keep the statement, swap its proof for `by sorry`.
    std::string joined;
    for (std::size_t i = 0; i < head.size(); ++i) joined += (i ? "\n" : "") + head[i].text;
    const std::string m = safe_mask(joined);
    const std::size_t assign = top_level_assign(m);
    std::string kept;
    if (assign != std::string::npos) {
      kept = joined.substr(0, assign + 2);
    } else {
      // No `:=`: drop a dangling `by` and Lean 3 connectors (`from`, `,`) first.
      std::size_t end = rtrim(m).size();
      for (std::string_view tail : {"by", "from", ","}) {
        const std::string_view rest = rtrim(std::string_view(m).substr(0, end));
        const bool word = tail != "," && rest.size() > tail.size() &&
                          (rest[rest.size() - tail.size() - 1] == ' ' || rest[rest.size() - tail.size() - 1] == '\n');
        if (rest.ends_with(tail) && (word || tail == ",")) end = rest.size() - tail.size();
      }
      kept = std::string(rtrim(std::string_view(joined).substr(0, end))) + " :=";
    }
    auto kept_lines = split_lines(kept + " by sorry");
    for (std::size_t i = 0; i < kept_lines.size(); ++i) {
      fresh.push_back({kept_lines[i], i == 0 && head.front().inline_head, false, 0});
    }
  } else if (const std::string m = safe_mask(head.front().text); is_alternative_line(m) && m.find("=>") != std::string::npos) {
    // A match alternative keeps its pattern so it stays an alternative.
    const std::size_t arrow = m.find("=>");
    fresh.push_back({head.front().text.substr(0, arrow + 2) + " sorry", head.front().inline_head, false, 0});
    node->kind = BlockKind::TacticLine;
  } else {
    const bool inl = head.front().inline_head;
    fresh.push_back({inl ? " sorry" : spaces(node->indent) + "sorry", inl, false, 0});
    node->kind = BlockKind::TacticLine;
  }
  fresh.insert(fresh.end(), trivia.begin(), trivia.end());
  node->lines = std::move(fresh);
  node->children.clear();
  renumber(s);
  return s;
}

ProofScript insert_sorry_after(const ProofScript& script, const SourceSpan& span) {
  ProofScript s = script;
  const ProofBlock* target = block_at_line(s, span.start_line);
  if (!target || target->is_root()) {
    throw EditError(EditError::Kind::NodeNotFound, "no tactic at line " + std::to_string(span.start_line));
  }
  ProofBlock* parent = nullptr;
  std::size_t index = 0;
  find_mut(s.root, target->id, &parent, &index);
  ProofBlock& node = parent->children[index];
  const int indent = node.lines.front().inline_head ? root_child_indent(s) : node.indent;
  auto trivia = take_trailing_trivia(node);
  ProofBlock fresh = make_sorry_node(s, indent);
  fresh.lines.insert(fresh.lines.end(), trivia.begin(), trivia.end());
  parent->children.insert(parent->children.begin() + static_cast<std::ptrdiff_t>(index + 1), std::move(fresh));
  renumber(s);
  return s;
}

ProofScript insert_sorry_at_end(const ProofScript& script, int node_id) {
  ProofScript s = script;
  ProofBlock* node = node_id == s.root.id ? &s.root : find_mut(s.root, node_id, nullptr, nullptr);
  if (!node) throw EditError(EditError::Kind::NodeNotFound, "no block with id " + std::to_string(node_id));

  if (!node->children.empty()) {
    ProofBlock& last_child = node->children.back();
    auto trivia = take_trailing_trivia(last_child);
    const int indent = last_child.lines.front().inline_head ? root_child_indent(s) : last_child.indent;
    ProofBlock fresh = make_sorry_node(s, indent);
    fresh.lines.insert(fresh.lines.end(), trivia.begin(), trivia.end());
    node->children.push_back(std::move(fresh));
    renumber(s);
    return s;
  }
  if (node->is_root()) {
    node->children.push_back(make_sorry_node(s, 2));
    renumber(s);
    return s;
  }

  // Leaf: split an inline `by tac` so the sorry can follow it on its own line.
  auto trivia = take_trailing_trivia(*node);
  std::string header = node->header_text();
  const std::string m = safe_mask(header);
  const auto bys = find_word(m, "by");
  const auto bullet = trim(m).substr(0, 2) == "·";
  if (!bys.empty() && header.find('\n') == std::string::npos) {
    const std::size_t after = bys.back() + 2;
    std::string rest(trim(std::string_view(header).substr(after)));
    const bool inl = node->lines.front().inline_head;
    node->lines = {{header.substr(0, after), inl, false, 0}};
    const int child_indent = (inl ? 2 : node->indent + 2);
    if (!rest.empty()) {
      ProofBlock moved;
      moved.id = s.next_id++;
      moved.kind = BlockKind::TacticLine;
      moved.indent = child_indent;
      moved.lines.push_back({spaces(child_indent) + rest, false, false, 0});
      node->children.push_back(std::move(moved));
    }
    ProofBlock fresh = make_sorry_node(s, child_indent);
    fresh.lines.insert(fresh.lines.end(), trivia.begin(), trivia.end());
    node->children.push_back(std::move(fresh));
    if (node->kind == BlockKind::TacticLine) node->kind = BlockKind::AnonymousBlock;
  } else if (bullet) {
    const int col = node->indent + 2;
    ProofBlock fresh = make_sorry_node(s, col);
    fresh.lines.insert(fresh.lines.end(), trivia.begin(), trivia.end());
    node->children.push_back(std::move(fresh));
  } else {
    node->lines.insert(node->lines.end(), trivia.begin(), trivia.end());
    renumber(s);
    return insert_sorry_after(s, node->span);
  }
  renumber(s);
  return s;
}

ProofScript replace_sorry(const ProofScript& script, std::size_t ordinal, std::string_view tactic) {
  ProofScript s = script;
  auto sites = sorry_sites(s);
  if (ordinal >= sites.size()) {
    throw EditError(EditError::Kind::NodeNotFound, "no sorry with ordinal " + std::to_string(ordinal));
  }
  const auto& site = sites[ordinal];
  std::string& text = site.node->lines[site.line_index].text;
  text.replace(site.byte_offset, 5, tactic);
  renumber(s);
  return s;
}

ProofScript replace_sorry_with_body(const ProofScript& script, std::size_t ordinal, std::string_view body) {
  ProofScript s = script;
  auto sites = sorry_sites(s);
  if (ordinal >= sites.size()) {
    throw EditError(EditError::Kind::NodeNotFound, "no sorry with ordinal " + std::to_string(ordinal));
  }
  const auto site = sites[ordinal];
  ProofBlock* node = site.node;
  SourceLine& line = node->lines[site.line_index];
  const std::string masked_line = safe_mask(line.text);
  const std::string_view before = rtrim(std::string_view(masked_line).substr(0, site.byte_offset));
  const std::string_view after = trim(std::string_view(masked_line).substr(site.byte_offset + 5));
  if (!after.empty()) throw EditError(EditError::Kind::NotApplicable, "sorry is followed by more code");

  if (before.empty() && node->code_line_count() == 1 && node->children.empty() && !node->is_root()) {
    ProofBlock* parent = nullptr;
    std::size_t index = 0;
    find_mut(s.root, node->id, &parent, &index);
    const int indent = line.inline_head ? root_child_indent(s) : node->indent;
    auto trivia = take_trailing_trivia(*node);
    auto nodes = parse_body_nodes(s, body, indent);
    if (nodes.empty()) throw EditError(EditError::Kind::NotApplicable, "empty replacement body");
    ProofBlock& tail = dfs_last(nodes.back());
    tail.lines.insert(tail.lines.end(), trivia.begin(), trivia.end());
    parent->children.erase(parent->children.begin() + static_cast<std::ptrdiff_t>(index));
    parent->children.insert(parent->children.begin() + static_cast<std::ptrdiff_t>(index),
                            std::make_move_iterator(nodes.begin()), std::make_move_iterator(nodes.end()));
    renumber(s);
    return s;
  }
  if (before.size() >= 2 && before.substr(before.size() - 2) == "by" && node->children.empty() &&
      site.line_index + 1 == node->code_line_count()) {
    const int indent = line.inline_head ? 4 : node->indent + 2;
    line.text = std::string(rtrim(std::string_view(line.text).substr(0, site.byte_offset)));
    auto nodes = parse_body_nodes(s, body, indent);
    if (nodes.empty()) throw EditError(EditError::Kind::NotApplicable, "empty replacement body");
    auto trivia = take_trailing_trivia(*node);
    ProofBlock& tail = dfs_last(nodes.back());
    tail.lines.insert(tail.lines.end(), trivia.begin(), trivia.end());
    node->children = std::move(nodes);
    if (node->kind == BlockKind::TacticLine) node->kind = BlockKind::AnonymousBlock;
    renumber(s);
    return s;
  }
  throw EditError(EditError::Kind::NotApplicable, "sorry is embedded in a term");
}

ProofScript insert_before_declaration(const ProofScript& script, std::string_view decls) {
  ProofScript s = script;
  std::string text(trim(decls));
  if (text.empty()) return s;
  if (!s.header_text.empty() && s.header_text.back() != '\n') s.header_text += '\n';
  s.header_text += text + "\n\n";
  renumber(s);
  return s;
}

std::string body_text(const ProofScript& script) {
  std::vector<std::string> lines;
  std::function<void(const ProofBlock&)> walk = [&](const ProofBlock& b) {
    for (const auto& l : b.lines) lines.push_back(l.inline_head ? std::string(trim(l.text)) : l.text);
    for (const auto& c : b.children) walk(c);
  };
  walk(script.root);
  if (script.root.children.empty()) return "sorry";
  // Dedent everything except an inline first line.
  int min_indent = 1 << 20;
  const bool inl = !script.root.children.empty() && script.root.children.front().lines.front().inline_head;
  for (std::size_t i = inl ? 1 : 0; i < lines.size(); ++i) {
    if (!is_blank(lines[i])) min_indent = std::min(min_indent, leading_columns(lines[i]));
  }
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string l = lines[i];
    if (!(inl && i == 0) && !is_blank(l)) l = l.substr(static_cast<std::size_t>(min_indent));
    if (is_blank(l)) l.clear();
    if (!out.empty() || !l.empty()) out += (out.empty() ? "" : "\n") + l;
  }
  return std::string(rtrim(out));
}

std::size_t proof_length(const ProofScript& script) {
  const std::size_t n = script.root.subtree_nodes();
  return n == 0 ? 1 : n;
}

bool tree_invariants_hold(const ProofScript& script, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::function<bool(const ProofBlock&)> walk = [&](const ProofBlock& b) -> bool {
    if (!(b.span.start() <= b.span.end())) return fail("inverted span on node " + std::to_string(b.id));
    for (std::size_t i = 0; i < b.children.size(); ++i) {
      const auto& c = b.children[i];
      const bool alt = is_alternative_line(safe_mask(c.header_text()));
      if (!(c.indent > b.indent || (alt && c.indent >= b.indent))) {
        return fail("child " + std::to_string(c.id) + " not indented past parent");
      }
      if (!b.is_root() && !b.span.contains(c.span)) return fail("child " + std::to_string(c.id) + " escapes parent");
      if (i > 0 && !(b.children[i - 1].span.end() < c.span.start())) {
        return fail("siblings overlap at node " + std::to_string(c.id));
      }
      if (!walk(c)) return false;
    }
    return true;
  };
  return walk(script.root);
}

}  // namespace apollo
