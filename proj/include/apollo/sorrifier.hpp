#pragma once

// Compile -> diagnose -> edit loop that turns a failing proof into one that
// compiles with `sorry` placeholders, plus the helpers that frame a script
// for the REPL (pp options, import blanking, position mapping).

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "apollo/proof_model.hpp"
#include "apollo/repl_client.hpp"

namespace apollo {

/// The nine distinct `set_option pp.* true` lines, newline-terminated.
std::string pp_preamble();

/// Removes every preamble line from `text`.
std::string strip_preamble(std::string_view text);

/// Compiles `source` on `session`. With a base environment the `import`
/// lines are blanked (they are already loaded); with `with_preamble` the pp
/// options go right after the imports. Positions in the result refer to
/// `source` either way.
CompileResult compile_source(Session& session, std::string_view source, bool with_preamble, Seconds timeout);

CompileResult compile_script(Session& session, const ProofScript& script, bool with_preamble, Seconds timeout);

bool is_unsolved_goals(const Diagnostic& d);

enum class RepairKind { RemoveLine, RemoveBlock, ReplaceBlockWithSorry, InsertSorry };
std::string_view to_string(RepairKind kind);

struct RepairAction {
  RepairKind kind = RepairKind::RemoveLine;
  int node_id = 0;  // 0 is the proof root
  SourceSpan span;  // target span at application time
  Diagnostic triggering_diagnostic;
};

struct AttemptHistory {
  std::set<int> line_repaired;  // blocks that already lost a line
  std::set<int> sorry_inserted;
  std::set<int> replaced;
};

class RepairError : public std::runtime_error {
 public:
  enum class Kind { NoEnclosingNode };
  RepairError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class SorrifyError : public std::runtime_error {
 public:
  enum class Kind { Nonterminating, StatementMalformed, CompileTimeout, ReplUnavailable };
  SorrifyError(Kind kind, const std::string& what, std::vector<Diagnostic> diagnostics = {})
      : std::runtime_error(what), kind_(kind), diagnostics_(std::move(diagnostics)) {}
  Kind kind() const noexcept { return kind_; }
  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  Kind kind_;
  std::vector<Diagnostic> diagnostics_;
};

/// Deterministic repair policy. `diag` positions are in script coordinates.
RepairAction choose_repair(const Diagnostic& diag, const ProofScript& script, const AttemptHistory& history);

ProofScript apply_action(const ProofScript& script, const RepairAction& action);

/// Re-applies `actions` in order starting from `original`.
ProofScript replay_actions(const ProofScript& original, const std::vector<RepairAction>& actions);

struct SorrifyConfig {
  Seconds timeout = kDefaultCompileTimeout;
  bool with_preamble = true;
};

struct SorrifiedScript {
  ProofScript script;
  std::vector<RepairAction> actions;
  CompileResult compile_result;
  int iterations = 0;
};

/// 2 x (line count of the script text) + 8.
int iteration_cap(const ProofScript& script);

SorrifiedScript sorrify(const ProofScript& script, Session& session, const SorrifyConfig& config = {});

struct StatementCheck {
  bool ok = false;
  std::vector<Diagnostic> diagnostics;  // errors inside the statement when not ok
  CompileResult result;
};

/// Compiles the statement with a `sorry` body.
StatementCheck validate_statement(const TheoremStatement& statement, Session& session,
                                  Seconds timeout = kDefaultCompileTimeout);

}  // namespace apollo
