#pragma once

// Closes sorry placeholders with Lean's own automation: `hint` suggestions
// first, then a fixed suite of finishing tactics and two-step combinations.
// Each candidate is checked by an isolated trial compile.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "apollo/sorrifier.hpp"

namespace apollo {

enum class CandidateSource { Hint, Suite, Combination };
std::string_view to_string(CandidateSource source);

struct TacticCandidate {
  std::string text;  // single line
  CandidateSource source = CandidateSource::Suite;
  int rank = 0;

  friend bool operator==(const TacticCandidate&, const TacticCandidate&) = default;
};

struct SolverConfig {
  std::vector<std::string> singles{"norm_num", "simp",     "simp_all",   "ring_nf", "norm_cast",
                                   "nlinarith", "linarith", "positivity", "omega",   "field_simp"};
  std::vector<std::string> combo_first{"norm_num", "simp", "field_simp", "ring_nf"};
  std::vector<std::string> combo_second{"linarith", "nlinarith", "positivity"};
  int max_combinations = 12;
  bool use_hint = true;
  Seconds candidate_timeout{60.0};
  bool with_preamble = true;
};

/// Singles in order, then `a <;> b` over combo_first x combo_second,
/// first-major, truncated to max_combinations.
std::vector<TacticCandidate> suite_candidates(const SolverConfig& config = {});

/// Suggestions from a "Try these:" message that close the goal outright;
/// entries followed by "Remaining subgoals" are dropped.
std::vector<std::string> parse_hint_suggestions(std::string_view message);

/// Runs `hint` at the `ordinal`-th sorry and returns the suggestions that a
/// trial compile confirms (strictly fewer sorries, no errors).
std::vector<TacticCandidate> hint_candidates(const ProofScript& script, std::size_t ordinal, Session& session,
                                             const SolverConfig& config = {});

struct SolverCommit {
  int site = 0;             // 1-based position of the sorry in the input script
  std::size_t ordinal = 0;  // sorry index at the time of the commit
  std::string tactic;
  CandidateSource source = CandidateSource::Suite;

  friend bool operator==(const SolverCommit&, const SolverCommit&) = default;
};

struct SolveResult {
  SorrifiedScript script;
  std::vector<SolverCommit> commits;
  int trial_compiles = 0;
};

/// Tries every sorry in position order. The input must compile (Pass or
/// PassWithSorries); the output does too and never has more sorries.
SolveResult solve_sorries(const SorrifiedScript& input, Session& session, const SolverConfig& config = {});

ProofScript replay_commits(const ProofScript& script, const std::vector<SolverCommit>& commits);

// Suite files: one tactic per line, `#` comments and blank lines ignored.
std::vector<std::string> parse_suite(std::string_view text);
std::vector<std::string> load_suite(const std::filesystem::path& path);

}  // namespace apollo
