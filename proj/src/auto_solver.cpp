#include "apollo/auto_solver.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include "apollo/text.hpp"

namespace apollo {

namespace {

struct Trial {
  ProofScript script;
  CompileResult result;
};

// Substitutes `tactic` for the sorry and keeps the result only if it closes it.
std::optional<Trial> try_tactic(const ProofScript& script, std::size_t ordinal, const std::string& tactic,
                                Session& session, const SolverConfig& config, int& compiles) {
  ProofScript next;
  try {
    next = replace_sorry(script, ordinal, tactic);
  } catch (const EditError&) {
    return std::nullopt;
  }
  ++compiles;
  CompileResult r = compile_script(session, next, config.with_preamble, config.candidate_timeout);
  if (!r.compiled()) return std::nullopt;  // errors, Timeout and ReplCrash all reject
  if (count_sorries(next) >= count_sorries(script)) return std::nullopt;
  return Trial{std::move(next), std::move(r)};
}

std::vector<std::string> hint_suggestions(const ProofScript& script, std::size_t ordinal, Session& session,
                                          const SolverConfig& config, int& compiles) {
  const auto sites = sorry_positions(script);
  if (ordinal >= sites.size()) return {};
  ProofScript probe;
  try {
    probe = replace_sorry(script, ordinal, "hint");
  } catch (const EditError&) {
    return {};
  }
  ++compiles;
  const CompileResult r = compile_script(session, probe, config.with_preamble, config.candidate_timeout);
  std::vector<std::string> out;
  for (const auto& d : r.diagnostics) {
    if (d.severity != Severity::Info || d.pos.line != sites[ordinal].line) continue;
    for (auto& s : parse_hint_suggestions(d.message)) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string_view to_string(CandidateSource source) {
  switch (source) {
    case CandidateSource::Hint: return "hint";
    case CandidateSource::Suite: return "suite";
    case CandidateSource::Combination: return "combination";
  }
  return "?";
}

std::vector<TacticCandidate> suite_candidates(const SolverConfig& config) {
  std::vector<TacticCandidate> out;
  int rank = 0;
  for (const auto& t : config.singles) out.push_back({t, CandidateSource::Suite, rank++});
  int combos = 0;
  for (const auto& a : config.combo_first) {
    for (const auto& b : config.combo_second) {
      if (combos >= config.max_combinations) return out;
      out.push_back({a + " <;> " + b, CandidateSource::Combination, rank++});
      ++combos;
    }
  }
  return out;
}

std::vector<std::string> parse_hint_suggestions(std::string_view message) {
  const auto lines = split_lines(message);
  std::vector<std::string> out;
  std::optional<std::string> current;
  bool progress_only = false;
  bool multiline = false;
  auto flush = [&] {
    if (current && !progress_only && !multiline && !current->empty()) out.push_back(*current);
    current.reset();
    progress_only = multiline = false;
  };
  bool in_list = false;
  for (const auto& raw : lines) {
    const std::string_view l = trim(raw);
    if (!in_list) {
      in_list = l.rfind("Try these:", 0) == 0 || l.rfind("Try this:", 0) == 0;
      if (in_list && l.rfind("Try this:", 0) == 0 && trim(l.substr(9)).size() > 0) {
        current = std::string(trim(l.substr(9)));
      }
      continue;
    }
    if (l.rfind("•", 0) == 0) {
      flush();
      current = std::string(trim(l.substr(std::string_view("•").size())));
    } else if (l.rfind("Remaining subgoals", 0) == 0) {
      progress_only = true;
    } else if (!l.empty() && l.rfind("⊢", 0) != 0 && current && !progress_only) {
      multiline = true;
    }
  }
  flush();
  return out;
}

std::vector<TacticCandidate> hint_candidates(const ProofScript& script, std::size_t ordinal, Session& session,
                                             const SolverConfig& config) {
  int compiles = 0;
  std::vector<TacticCandidate> out;
  int rank = 0;
  for (const auto& s : hint_suggestions(script, ordinal, session, config, compiles)) {
    if (try_tactic(script, ordinal, s, session, config, compiles)) out.push_back({s, CandidateSource::Hint, rank});
    ++rank;
  }
  return out;
}

SolveResult solve_sorries(const SorrifiedScript& input, Session& session, const SolverConfig& config) {
  SolveResult out{input, {}, 0};
  const auto suite = suite_candidates(config);
  std::size_t ordinal = 0;
  int site = 0;
  while (ordinal < count_sorries(out.script.script)) {
    ++site;
    const ProofScript& cur = out.script.script;
    std::optional<Trial> hit;
    TacticCandidate used;
    if (config.use_hint) {
      for (const auto& s : hint_suggestions(cur, ordinal, session, config, out.trial_compiles)) {
        hit = try_tactic(cur, ordinal, s, session, config, out.trial_compiles);
        if (hit) {
          used = {s, CandidateSource::Hint, 0};
          break;
        }
      }
    }
    for (std::size_t i = 0; !hit && i < suite.size(); ++i) {
      hit = try_tactic(cur, ordinal, suite[i].text, session, config, out.trial_compiles);
      if (hit) used = suite[i];
    }
    if (!hit) {
      ++ordinal;  // stays sorry
      continue;
    }
    out.commits.push_back({site, ordinal, used.text, used.source});
    out.script.script = std::move(hit->script);
    out.script.compile_result = std::move(hit->result);
  }
  return out;
}

ProofScript replay_commits(const ProofScript& script, const std::vector<SolverCommit>& commits) {
  ProofScript s = script;
  for (const auto& c : commits) s = replace_sorry(s, c.ordinal, c.tactic);
  return s;
}

std::vector<std::string> parse_suite(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& l : split_lines(text)) {
    const auto t = trim(l);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(t);
  }
  return out;
}

std::vector<std::string> load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open suite file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_suite(ss.str());
}

}  // namespace apollo
