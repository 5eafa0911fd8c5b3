#include "apollo/sorrifier.hpp"

#include <algorithm>

#include "apollo/text.hpp"

namespace apollo {

namespace {

constexpr std::string_view kPpOptions[] = {
    "pp.instanceTypes",         "pp.numericTypes",    "pp.coercions.types",
    "pp.letVarTypes",           "pp.structureInstanceTypes", "pp.mvars.withType",
    "pp.coercions",             "pp.funBinderTypes",  "pp.piBinderTypes",
};

bool is_preamble_line(std::string_view line) {
  const auto t = trim(line);
  if (!starts_with_word(t, "set_option")) return false;
  for (auto opt : kPpOptions) {
    const std::string want = "set_option " + std::string(opt) + " true";
    if (squash_whitespace(t) == want) return true;
  }
  return false;
}

void shift_pos(SourcePos& p, int insert_at, int shift) {
  if (p.line > insert_at + shift) {
    p.line -= shift;
  } else if (p.line > insert_at) {
    p.line = std::max(1, insert_at);
  }
}

std::size_t line_count(std::string_view text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1;
}

// Span used to look up the node a diagnostic points at.
SourceSpan diag_span(const Diagnostic& d) {
  const SourcePos end = d.end_pos && d.pos <= *d.end_pos ? *d.end_pos : d.pos;
  return {d.pos.line, d.pos.col, end.line, end.col};
}

ProofScript replace_root_with_sorry(const ProofScript& script) {
  ProofScript s = script;
  while (!(s.root.children.size() == 1 && s.root.children[0].children.empty() &&
           trim(s.root.children[0].header_text()) == "sorry")) {
    s = remove_block(s, s.root.children.front().id);
  }
  return s;
}

RepairAction escalate(const ProofBlock& node, const AttemptHistory& h, const Diagnostic& d) {
  if (node.is_root()) return {RepairKind::ReplaceBlockWithSorry, 0, node.span, d};
  if (has_stated_goal(node) && !h.replaced.count(node.id))
    return {RepairKind::ReplaceBlockWithSorry, node.id, node.span, d};
  return {RepairKind::RemoveBlock, node.id, node.span, d};
}

}  // namespace

std::string pp_preamble() {
  std::string out;
  for (auto opt : kPpOptions) out += "set_option " + std::string(opt) + " true\n";
  return out;
}

std::string strip_preamble(std::string_view text) {
  std::vector<std::string> kept;
  for (auto& l : split_lines(text))
    if (!is_preamble_line(l)) kept.push_back(std::move(l));
  return join_lines(kept);
}

CompileResult compile_source(Session& session, std::string_view source, bool with_preamble, Seconds timeout) {
  auto lines = split_lines(source);
  const bool blank_imports = session.base_env().has_value();
  int insert_at = 0;  // preamble goes after this many lines
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (starts_with_word(lines[i], "import")) {
      insert_at = static_cast<int>(i) + 1;
      if (blank_imports) lines[i].clear();
    }
  }
  int shift = 0;
  if (with_preamble) {
    auto pre = split_lines(pp_preamble());
    pre.pop_back();  // trailing newline
    shift = static_cast<int>(pre.size());
    lines.insert(lines.begin() + insert_at, pre.begin(), pre.end());
  }
  CompileResult r = session.check(join_lines(lines), timeout);
  if (shift) {
    for (auto& d : r.diagnostics) {
      shift_pos(d.pos, insert_at, shift);
      if (d.end_pos) shift_pos(*d.end_pos, insert_at, shift);
    }
    for (auto& s : r.sorries) {
      shift_pos(s.pos, insert_at, shift);
      if (s.end_pos) shift_pos(*s.end_pos, insert_at, shift);
    }
  }
  return r;
}

CompileResult compile_script(Session& session, const ProofScript& script, bool with_preamble, Seconds timeout) {
  return compile_source(session, serialize(script), with_preamble, timeout);
}

bool is_unsolved_goals(const Diagnostic& d) {
  return d.severity == Severity::Error && d.message.rfind("unsolved goals", 0) == 0;
}

std::string_view to_string(RepairKind kind) {
  switch (kind) {
    case RepairKind::RemoveLine: return "RemoveLine";
    case RepairKind::RemoveBlock: return "RemoveBlock";
    case RepairKind::ReplaceBlockWithSorry: return "ReplaceBlockWithSorry";
    case RepairKind::InsertSorry: return "InsertSorry";
  }
  return "?";
}

RepairAction choose_repair(const Diagnostic& diag, const ProofScript& script, const AttemptHistory& history) {
  const int decl_line = script.decl_last_line();
  const int body_last = script.root.span.end_line;
  const bool unsolved = is_unsolved_goals(diag);

  const ProofBlock* node = nullptr;
  if (diag.pos.line < decl_line || diag.pos.line > body_last) {
    throw RepairError(RepairError::Kind::NoEnclosingNode,
                      "diagnostic at line " + std::to_string(diag.pos.line) + " is outside the proof body");
  }
  if (diag.pos.line == decl_line) {
    const ProofBlock* inl = block_at_line(script, decl_line);
    if (inl && diag.pos.col >= script.decl_last_line_width()) {
      node = inl;
    } else if (unsolved) {
      node = &script.root;
    } else {
      throw RepairError(RepairError::Kind::NoEnclosingNode, "diagnostic inside the theorem statement");
    }
  } else {
    node = block_at_line(script, diag.pos.line);
    if (!node) node = &script.root;
  }
  // An error whose end reaches past the node belongs to their common ancestor.
  if (!node->is_root() && diag.end_pos && node->span.end() < *diag.end_pos) {
    node = smallest_enclosing(script, diag_span(diag));
  }

  if (unsolved) {
    if (!history.sorry_inserted.count(node->id)) return {RepairKind::InsertSorry, node->id, node->span, diag};
    return escalate(*node, history, diag);
  }
  if (node->is_root()) return {RepairKind::ReplaceBlockWithSorry, 0, node->span, diag};

  if (node->kind == BlockKind::HaveBlock || !node->children.empty()) {
    // error on a block header (or a one-line `have`): the block goes as a unit
    return escalate(*node, history, diag);
  }

  const ProofBlock* parent = parent_of(script, node->id);
  if (parent && !parent->is_root() && history.line_repaired.count(parent->id)) {
    return escalate(*parent, history, diag);
  }
  if (parent && parent->children.size() > 1) return {RepairKind::RemoveLine, node->id, node->span, diag};
  if (parent && !parent->is_root()) return escalate(*parent, history, diag);
  // last tactic of the whole proof
  return {RepairKind::ReplaceBlockWithSorry, node->id, node->span, diag};
}

ProofScript apply_action(const ProofScript& script, const RepairAction& a) {
  switch (a.kind) {
    case RepairKind::RemoveLine: {
      const ProofBlock* n = find_block(script, a.node_id);
      if (!n) throw EditError(EditError::Kind::NodeNotFound, "no block with id " + std::to_string(a.node_id));
      return remove_line(script, n->span);
    }
    case RepairKind::RemoveBlock: return remove_block(script, a.node_id);
    case RepairKind::ReplaceBlockWithSorry:
      return a.node_id == 0 ? replace_root_with_sorry(script) : replace_block_with_sorry(script, a.node_id);
    case RepairKind::InsertSorry: return insert_sorry_at_end(script, a.node_id);
  }
  return script;
}

ProofScript replay_actions(const ProofScript& original, const std::vector<RepairAction>& actions) {
  ProofScript s = original;
  for (const auto& a : actions) s = apply_action(s, a);
  return s;
}

int iteration_cap(const ProofScript& script) { return 2 * static_cast<int>(line_count(serialize(script))) + 8; }

SorrifiedScript sorrify(const ProofScript& script, Session& session, const SorrifyConfig& config) {
  SorrifiedScript out;
  out.script = script;
  AttemptHistory history;
  const int cap = iteration_cap(script);
  for (int iter = 1; iter <= cap; ++iter) {
    out.iterations = iter;
    CompileResult r = compile_script(session, out.script, config.with_preamble, config.timeout);
    if (r.status == CompileStatus::Timeout)
      throw SorrifyError(SorrifyError::Kind::CompileTimeout, "compile timed out during sorrification");
    if (r.status == CompileStatus::ReplCrash)
      throw SorrifyError(SorrifyError::Kind::ReplUnavailable, "REPL crashed during sorrification");
    if (r.compiled()) {
      out.compile_result = std::move(r);
      return out;
    }
    auto errors = r.errors();
    std::stable_sort(errors.begin(), errors.end(), [](const Diagnostic& a, const Diagnostic& b) { return a.pos < b.pos; });
    RepairAction action;
    try {
      action = choose_repair(errors.front(), out.script, history);
    } catch (const RepairError& e) {
      throw SorrifyError(SorrifyError::Kind::StatementMalformed, e.what(), errors);
    }
    switch (action.kind) {
      case RepairKind::RemoveLine:
        if (const ProofBlock* p = parent_of(out.script, action.node_id)) history.line_repaired.insert(p->id);
        break;
      case RepairKind::InsertSorry: history.sorry_inserted.insert(action.node_id); break;
      case RepairKind::ReplaceBlockWithSorry: history.replaced.insert(action.node_id); break;
      case RepairKind::RemoveBlock: break;
    }
    out.script = apply_action(out.script, action);
    out.actions.push_back(std::move(action));
  }
  throw SorrifyError(SorrifyError::Kind::Nonterminating,
                     "no compiling script after " + std::to_string(cap) + " iterations");
}

StatementCheck validate_statement(const TheoremStatement& statement, Session& session, Seconds timeout) {
  std::string source = statement.header;
  if (!source.empty() && source.back() != '\n') source += '\n';
  source += statement.informal_prefix;
  source += statement.statement_text;
  source += " sorry";
  StatementCheck check;
  check.result = compile_source(session, source, false, timeout);
  if (check.result.status == CompileStatus::Timeout || check.result.status == CompileStatus::ReplCrash) {
    check.ok = false;
    return check;
  }
  check.diagnostics = check.result.errors();
  check.ok = check.diagnostics.empty();
  return check;
}

}  // namespace apollo
