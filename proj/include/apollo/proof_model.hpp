#pragma once

// Editable block tree over a Lean 4 tactic proof. Indentation is the only
// nesting signal; bracket continuations and `|` alternatives stay attached
// to the line that opened them. Blank and comment-only lines ("trivia")
// belong to the node that precedes them, which keeps serialization lossless.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apollo/text.hpp"

namespace apollo {

/// 1-based line, 0-based code point column (the Lean REPL convention).
struct SourcePos {
  int line = 0;
  int col = 0;

  friend bool operator==(const SourcePos&, const SourcePos&) = default;
  friend auto operator<=>(const SourcePos&, const SourcePos&) = default;
};

struct SourceSpan {
  int start_line = 0;
  int start_col = 0;
  int end_line = 0;
  int end_col = 0;

  SourcePos start() const { return {start_line, start_col}; }
  SourcePos end() const { return {end_line, end_col}; }
  bool contains(SourcePos p) const { return start() <= p && p <= end(); }
  bool contains(const SourceSpan& o) const { return start() <= o.start() && o.end() <= end(); }
  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

struct TheoremStatement {
  std::string name;
  std::string header;          // imports/opens preceding the declaration
  std::string statement_text;  // `theorem ... := by`, tactic body excluded
  std::string informal_prefix;

  friend bool operator==(const TheoremStatement&, const TheoremStatement&) = default;
};

enum class BlockKind { HaveBlock, CaseBlock, AnonymousBlock, TacticLine };

std::string_view to_string(BlockKind kind);

struct SourceLine {
  std::string text;
  bool inline_head = false;  // continues the `by` line instead of starting a new one
  bool trivia = false;       // blank or comment-only
  int number = 0;            // 1-based line in the serialized file

  friend bool operator==(const SourceLine&, const SourceLine&) = default;
};

struct ProofBlock {
  int id = 0;
  BlockKind kind = BlockKind::AnonymousBlock;
  int indent = -1;
  SourceSpan span;
  std::vector<SourceLine> lines;  // own logical line (1+ physical lines), then trailing trivia
  std::vector<ProofBlock> children;

  bool is_root() const { return indent < 0; }
  std::size_t code_line_count() const;  // own non-trivia lines
  std::size_t subtree_code_lines() const;
  std::size_t subtree_nodes() const;  // excluding this node
  /// First non-trivia line joined with its continuation lines.
  std::string header_text() const;

  friend bool operator==(const ProofBlock&, const ProofBlock&) = default;
};

class EditError : public std::runtime_error {
 public:
  enum class Kind { NodeNotFound, NotApplicable };
  EditError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ProofScript {
  TheoremStatement statement;
  std::string header_text;  // everything before the main declaration
  std::string decl_text;    // declaration keyword through `by` (plus a blank remainder of that line)
  ProofBlock root;
  std::string trailer_text;  // text after the proof body (following commands), usually empty
  int next_id = 1;

  std::string raw_text() const;
  /// Line number of the `by` that opens the proof.
  int decl_last_line() const;
  int decl_last_line_width() const;  // code points on that line before the body

  friend bool operator==(const ProofScript&, const ProofScript&) = default;
};

/// Parses a whole file; the main declaration is the one named by
/// `statement.name`, or the last `theorem`/`lemma` when the name is empty.
/// Fields of `statement` left empty are filled from the source.
ProofScript parse_script(std::string_view source, const TheoremStatement& statement = {});

/// Derives the statement fields of the main declaration without building a tree.
TheoremStatement parse_statement(std::string_view source, std::string_view name = {});

std::string serialize(const ProofScript& script);

std::size_t count_sorries(const ProofScript& script);

/// Positions of `sorry`/`admit` tokens in the proof body, in document order.
std::vector<SourcePos> sorry_positions(const ProofScript& script);

// Lookup. Returned pointers are into `script`.
const ProofBlock* find_block(const ProofScript& script, int id);
const ProofBlock* parent_of(const ProofScript& script, int id);
/// Node owning the physical line (trivia lines map to their owner).
const ProofBlock* block_at_line(const ProofScript& script, int line);
/// Smallest node whose span covers `span`; the root when nothing smaller does.
const ProofBlock* smallest_enclosing(const ProofScript& script, const SourceSpan& span);
std::vector<const ProofBlock*> preorder(const ProofScript& script);

/// True for `have` headers that state their type (`have h : T ...`).
bool has_stated_goal(const ProofBlock& block);

// Edits. Each returns a new script; the input is left unchanged.
ProofScript remove_line(const ProofScript& script, const SourceSpan& span);
ProofScript remove_block(const ProofScript& script, int node_id);
ProofScript replace_block_with_sorry(const ProofScript& script, int node_id);
ProofScript insert_sorry_after(const ProofScript& script, const SourceSpan& span);
/// Appends `sorry` as the final tactic of the block (root included).
ProofScript insert_sorry_at_end(const ProofScript& script, int node_id);
/// Replaces the `ordinal`-th body sorry token (0-based) with single-line tactic text.
ProofScript replace_sorry(const ProofScript& script, std::size_t ordinal, std::string_view tactic);
/// Replaces the `ordinal`-th body sorry with a multi-line tactic body. A sorry
/// standing alone on its line is replaced by the body at the same indent; a
/// sorry trailing `by` is replaced by the body nested two columns deeper.
ProofScript replace_sorry_with_body(const ProofScript& script, std::size_t ordinal, std::string_view body);
/// Inserts declarations just before the main declaration.
ProofScript insert_before_declaration(const ProofScript& script, std::string_view decls);

/// Verbatim proof body text (after `by`), dedented to column 0.
std::string body_text(const ProofScript& script);

/// Number of tactic lines in the tree (a combinator chain on one line is one tactic).
std::size_t proof_length(const ProofScript& script);

/// Checks span containment/disjointness and indentation invariants of the tree.
bool tree_invariants_hold(const ProofScript& script, std::string* why = nullptr);

}  // namespace apollo
