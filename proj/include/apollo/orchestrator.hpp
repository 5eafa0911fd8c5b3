#pragma once

// The recursive repair loop: generate candidates, refine, sorrify, auto-solve,
// then recurse on whatever goals remain and splice the sub-proofs back in.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apollo/auto_solver.hpp"
#include "apollo/goal_extraction.hpp"
#include "apollo/llm_backend.hpp"
#include "apollo/sorrifier.hpp"
#include "apollo/syntax_refiner.hpp"
#include "json.hpp"

namespace apollo {

struct RepairConfig {
  int max_depth_r = 4;
  int k_per_goal = 32;
  Seconds compile_timeout = kDefaultCompileTimeout;
  bool enable_syntax_refiner = true;
  bool enable_auto_solver = true;
  bool enable_llm_reinvoker = true;
  std::optional<std::filesystem::path> rules_path;
  std::optional<std::filesystem::path> suite_path;
  SpliceMode splice_mode = SpliceMode::Inline;
  long long sample_cap = 1100;  // per theorem, across all frames
  bool feedback_round = true;   // one feedback-prompted retry at depth 0
  Decoding decoding;
  bool with_preamble = true;
  Seconds wall_ceiling{7200.0};  // per theorem; new frames fail with BudgetExhausted past it
};

/// Throws std::invalid_argument when a field is out of range.
void check_config(const RepairConfig& config);

struct BudgetLedger {
  long long samples_used = 0;
  long long tokens_generated = 0;
  bool tokens_estimated = false;
  long long refiner_triggers = 0;
  long long auto_solver_triggers = 0;
  long long llm_reinvoker_triggers = 0;
  long long repl_calls = 0;
  double wall_time = 0.0;

  std::map<std::string, long long> module_triggers() const;
  void merge(const BudgetLedger& other);
  friend bool operator==(const BudgetLedger&, const BudgetLedger&) = default;
};

nlohmann::json to_json(const BudgetLedger& ledger);
BudgetLedger ledger_from_json(const nlohmann::json& j);

enum class OutcomeStatus { Proved, PartialWithSorries, Failed };
std::string_view to_string(OutcomeStatus status);

enum class FailureCause {
  None,
  StatementMalformed,
  BudgetExhausted,
  AllCandidatesMalformed,
  Nonterminating,
  NoCandidates,
  BackendUnavailable,
  ReplUnavailable,
  Unproved,
};
std::string_view to_string(FailureCause cause);

struct AuditEvent {
  double timestamp = 0.0;  // seconds since the run started
  int depth = 0;
  std::string module;
  std::string action;
  std::string detail;
};

struct Outcome {
  OutcomeStatus status = OutcomeStatus::Failed;
  FailureCause cause = FailureCause::None;
  std::optional<ProofScript> final_script;
  BudgetLedger ledger;
  std::vector<AuditEvent> audit;
  std::optional<std::size_t> proof_length;  // iff Proved
  bool assisted = false;  // Proved only after some repair step

  /// Everything except timestamps and wall time; equal for replayed runs.
  std::string fingerprint() const;
};

nlohmann::json to_json(const Outcome& outcome);
nlohmann::json to_json(const AuditEvent& event);

struct Verdict {
  OutcomeStatus status = OutcomeStatus::Failed;
  CompileResult result;
};

/// Compiles without the pretty-printing preamble and scans for sorry/admit.
Verdict verify_final(const ProofScript& script, Session& session, Seconds timeout = kDefaultCompileTimeout);

struct SubOutcome {
  GoalContext context;
  Outcome outcome;
};

/// Splices every Proved sub-outcome into its sorry; other sites keep `sorry`.
/// `subs` is aligned with the sorries of `parent`, in position order.
ProofScript assemble(const ProofScript& parent, const std::vector<std::optional<SubOutcome>>& subs,
                     SpliceMode mode = SpliceMode::Inline);

/// Puts a raw candidate into the shape of `statement`: adds the header when
/// the candidate has no imports, and a declaration when it is a bare body.
std::string normalize_candidate(std::string_view candidate, const TheoremStatement& statement);

class Orchestrator {
 public:
  /// Loads rule and suite files named in the config.
  Orchestrator(RepairConfig config, Backend& backend);

  /// Full repair of one theorem: the depth-0 frame plus the feedback round.
  Outcome run(const TheoremStatement& statement, Session& session) const;

  /// One frame of the loop at `depth`, recursing while depth < max_depth_r.
  Outcome apollo(const TheoremStatement& statement, int depth, Session& session) const;

  const RepairConfig& config() const { return config_; }

 private:
  struct Frame;
  struct Candidate;
  Outcome frame(Frame& f, const TheoremStatement& statement, int depth, GenerationMode mode,
                const std::optional<PriorAttempt>& prior, std::optional<Candidate>* best_out) const;

  RepairConfig config_;
  Backend& backend_;
  std::vector<RewriteRule> rules_;
  SolverConfig solver_;
};

}  // namespace apollo
