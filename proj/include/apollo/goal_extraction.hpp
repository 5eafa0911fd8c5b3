#pragma once

// Turns an open goal reported at a sorry into a standalone lemma statement,
// and splices the lemma's proof back into the parent script.

#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "apollo/proof_model.hpp"
#include "apollo/repl_client.hpp"

namespace apollo {

struct Hypothesis {
  std::string name;
  std::string type;
  bool renamed = false;  // was inaccessible (`x✝`) in the goal

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

struct GoalContext {
  std::vector<Hypothesis> hypotheses;
  std::string target;
  int site = 0;  // 1-based ordinal of the sorry
  SourcePos origin;
  std::string fresh_name;
};

class ExtractError : public std::runtime_error {
 public:
  enum class Kind { UnparseableGoal };
  ExtractError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class TransformError : public std::runtime_error {
 public:
  enum class Kind { StatementRejected };
  TransformError(Kind kind, const std::string& what, std::vector<Diagnostic> diagnostics = {})
      : std::runtime_error(what), kind_(kind), diagnostics_(std::move(diagnostics)) {}
  Kind kind() const noexcept { return kind_; }
  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  Kind kind_;
  std::vector<Diagnostic> diagnostics_;
};

class SpliceError : public std::runtime_error {
 public:
  enum class Kind { SiteVanished };
  SpliceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Identifier tokens outside comments and strings.
std::set<std::string> identifiers_in(std::string_view text);

/// `base_sub<ordinal>`, suffixed with a short deterministic nonce only when
/// that name is already taken.
std::string fresh_lemma_name(std::string_view base, int ordinal, const std::set<std::string>& taken);

/// Splits one pretty-printed goal into hypotheses and target. Inaccessible
/// names are renamed to fresh accessible ones, in types too.
GoalContext parse_goal(std::string_view goal_text);

/// parse_goal plus origin and a fresh name that avoids `taken`.
GoalContext extract_goal(const SorryInfo& sorry, int site, std::string_view theorem_name,
                         const std::set<std::string>& taken = {});

/// `theorem <fresh_name> (h : T)... : <target> := by` under `header`.
TheoremStatement transform_goal(const GoalContext& ctx, std::string_view header);

/// transform_goal checked by compiling it with a `sorry` body.
TheoremStatement transform_checked(const GoalContext& ctx, std::string_view header, Session& session,
                                   Seconds timeout = kDefaultCompileTimeout);

enum class SpliceMode { Inline, Standalone };

/// Replaces the `ordinal`-th sorry (0-based) of `parent` with the proof of
/// `sub`. Inline mode re-indents the body at the site; standalone mode adds
/// the lemma above the theorem and applies it with `exact`. Renamed
/// hypotheses are named at the site with `rename_i` first.
ProofScript splice_subproof(const ProofScript& parent, std::size_t ordinal, const ProofScript& sub,
                            const GoalContext& ctx, SpliceMode mode = SpliceMode::Inline);

}  // namespace apollo
