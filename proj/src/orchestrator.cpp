#include "apollo/orchestrator.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <tuple>

#include "apollo/text.hpp"

namespace apollo {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

class CountingSession final : public Session {
 public:
  CountingSession(Session& inner, long long& counter) : inner_(inner), counter_(counter) {}
  CompileResult check(std::string_view code, Seconds timeout) override {
    ++counter_;
    return inner_.check(code, timeout);
  }
  std::optional<int> base_env() const override { return inner_.base_env(); }

 private:
  Session& inner_;
  long long& counter_;
};

std::string indent_body(std::string_view body, int by) {
  std::string out;
  const std::string pad(static_cast<std::size_t>(by), ' ');
  for (const auto& l : split_lines(body)) {
    if (trim(l).empty()) {
      out += "\n";
      continue;
    }
    out += pad + l + "\n";
  }
  while (out.size() >= 2 && out.ends_with("\n\n")) out.pop_back();
  return out;
}

bool declares(std::string_view text, const TheoremStatement& st) {
  std::string masked;
  try {
    masked = mask_non_code(text);
  } catch (const ParseError&) {
    return false;
  }
  return squash_whitespace(masked).find(squash_whitespace(st.statement_text)) != std::string::npos;
}

bool same_statement(const ProofScript& s, const TheoremStatement& st) {
  return squash_whitespace(s.decl_text) == squash_whitespace(st.statement_text);
}

}  // namespace

// --- config and ledger --------------------------------------------------------

void check_config(const RepairConfig& c) {
  if (c.max_depth_r < 0) throw std::invalid_argument("max_depth_r must be non-negative");
  if (c.k_per_goal < 1) throw std::invalid_argument("k_per_goal must be at least 1");
  if (c.compile_timeout.count() <= 0) throw std::invalid_argument("compile_timeout must be positive");
  if (c.sample_cap < 1) throw std::invalid_argument("sample_cap must be at least 1");
  if (c.wall_ceiling.count() <= 0) throw std::invalid_argument("wall_ceiling must be positive");
}

std::map<std::string, long long> BudgetLedger::module_triggers() const {
  return {{"syntax_refiner", refiner_triggers},
          {"auto_solver", auto_solver_triggers},
          {"llm_reinvoker", llm_reinvoker_triggers}};
}

void BudgetLedger::merge(const BudgetLedger& o) {
  samples_used += o.samples_used;
  tokens_generated += o.tokens_generated;
  tokens_estimated = tokens_estimated || o.tokens_estimated;
  refiner_triggers += o.refiner_triggers;
  auto_solver_triggers += o.auto_solver_triggers;
  llm_reinvoker_triggers += o.llm_reinvoker_triggers;
  repl_calls += o.repl_calls;
  wall_time += o.wall_time;
}

json to_json(const BudgetLedger& l) {
  return {{"samples_used", l.samples_used},
          {"tokens_generated", l.tokens_generated},
          {"tokens_estimated", l.tokens_estimated},
          {"module_triggers", l.module_triggers()},
          {"repl_calls", l.repl_calls},
          {"wall_time", l.wall_time}};
}

BudgetLedger ledger_from_json(const json& j) {
  BudgetLedger l;
  l.samples_used = j.value("samples_used", 0LL);
  l.tokens_generated = j.value("tokens_generated", 0LL);
  l.tokens_estimated = j.value("tokens_estimated", false);
  if (j.contains("module_triggers")) {
    const auto& t = j["module_triggers"];
    l.refiner_triggers = t.value("syntax_refiner", 0LL);
    l.auto_solver_triggers = t.value("auto_solver", 0LL);
    l.llm_reinvoker_triggers = t.value("llm_reinvoker", 0LL);
  }
  l.repl_calls = j.value("repl_calls", 0LL);
  l.wall_time = j.value("wall_time", 0.0);
  return l;
}

std::string_view to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Proved: return "Proved";
    case OutcomeStatus::PartialWithSorries: return "PartialWithSorries";
    case OutcomeStatus::Failed: return "Failed";
  }
  return "?";
}

std::string_view to_string(FailureCause c) {
  switch (c) {
    case FailureCause::None: return "none";
    case FailureCause::StatementMalformed: return "StatementMalformed";
    case FailureCause::BudgetExhausted: return "BudgetExhausted";
    case FailureCause::AllCandidatesMalformed: return "AllCandidatesMalformed";
    case FailureCause::Nonterminating: return "Nonterminating";
    case FailureCause::NoCandidates: return "NoCandidates";
    case FailureCause::BackendUnavailable: return "BackendUnavailable";
    case FailureCause::ReplUnavailable: return "ReplUnavailable";
    case FailureCause::Unproved: return "Unproved";
  }
  return "?";
}

json to_json(const AuditEvent& e) {
  return {{"timestamp", e.timestamp}, {"depth", e.depth}, {"module", e.module}, {"action", e.action},
          {"detail", e.detail}};
}

json to_json(const Outcome& o) {
  json audit = json::array();
  for (const auto& e : o.audit) audit.push_back(to_json(e));
  return {{"status", to_string(o.status)},
          {"cause", to_string(o.cause)},
          {"final_script", o.final_script ? json(serialize(*o.final_script)) : json(nullptr)},
          {"proof_length", o.proof_length ? json(*o.proof_length) : json(nullptr)},
          {"assisted", o.assisted},
          {"ledger", to_json(o.ledger)},
          {"audit", audit}};
}

std::string Outcome::fingerprint() const {
  json j = to_json(*this);
  j["ledger"].erase("wall_time");
  for (auto& e : j["audit"]) e.erase("timestamp");
  return j.dump();
}

// --- assembly and final check ---------------------------------------------------

Verdict verify_final(const ProofScript& script, Session& session, Seconds timeout) {
  const std::string text = serialize(script);
  Verdict v;
  v.result = compile_source(session, text, false, timeout);
  const bool clean = count_sorry_tokens(text) == 0;
  if (v.result.status == CompileStatus::Pass && clean) {
    v.status = OutcomeStatus::Proved;
  } else if (v.result.compiled()) {
    v.status = OutcomeStatus::PartialWithSorries;
  } else {
    v.status = OutcomeStatus::Failed;
  }
  return v;
}

ProofScript assemble(const ProofScript& parent, const std::vector<std::optional<SubOutcome>>& subs, SpliceMode mode) {
  ProofScript out = parent;
  for (std::size_t i = subs.size(); i-- > 0;) {
    const auto& sub = subs[i];
    if (!sub || sub->outcome.status != OutcomeStatus::Proved || !sub->outcome.final_script) continue;
    out = splice_subproof(out, i, *sub->outcome.final_script, sub->context, mode);
  }
  const std::string text = serialize(out);
  const std::string stripped = strip_preamble(text);
  return stripped == text ? out : parse_script(stripped, out.statement);
}

std::string normalize_candidate(std::string_view candidate, const TheoremStatement& st) {
  std::string text(candidate);
  std::string masked;
  try {
    masked = mask_non_code(text);
  } catch (const ParseError&) {
    masked = text;
  }
  const bool has_decl = !find_word(masked, "theorem").empty() || !find_word(masked, "lemma").empty();
  if (!has_decl) {
    std::string head = st.header;
    if (!head.empty() && head.back() != '\n') head += '\n';
    head += st.informal_prefix;
    if (!head.empty() && head.back() != '\n') head += '\n';
    return head + st.statement_text + "\n" + indent_body(text, 2);
  }
  if (find_word(masked, "import").empty() && !st.header.empty()) {
    std::string head = st.header;
    if (head.back() != '\n') head += '\n';
    return head + text;
  }
  return text;
}

// --- the loop -------------------------------------------------------------------

struct Orchestrator::Frame {
  Frame(Session& inner) : start(Clock::now()), session(inner, ledger.repl_calls) {}

  void log(int depth, std::string module, std::string action, std::string detail = {}) {
    const double t = std::chrono::duration<double>(Clock::now() - start).count();
    audit.push_back({t, depth, std::move(module), std::move(action), std::move(detail)});
  }
  Outcome finish(Outcome o) {
    ledger.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    o.ledger = ledger;
    o.audit = audit;
    return o;
  }

  BudgetLedger ledger;
  std::vector<AuditEvent> audit;
  Clock::time_point start;
  CountingSession session;
};

struct Orchestrator::Candidate {
  std::size_t index = 0;
  std::string original;
  std::vector<Diagnostic> diagnostics;  // from the plain compile of the original
  ProofScript script;
  CompileResult result;  // compile of `script` with the preamble; carries goals
  std::size_t sorries = 0;
};

Orchestrator::Orchestrator(RepairConfig config, Backend& backend) : config_(std::move(config)), backend_(backend) {
  check_config(config_);
  rules_ = config_.rules_path ? load_rules(*config_.rules_path) : default_ruleset();
  if (config_.suite_path) {
    solver_.singles = load_suite(*config_.suite_path);
    solver_.combo_first.clear();
    solver_.combo_second.clear();
  }
  solver_.with_preamble = config_.with_preamble;
  solver_.candidate_timeout = std::min(solver_.candidate_timeout, config_.compile_timeout);
}

Outcome Orchestrator::apollo(const TheoremStatement& statement, int depth, Session& session) const {
  Frame f(session);
  return f.finish(frame(f, statement, depth, depth == 0 ? GenerationMode::Initial : GenerationMode::SubLemma,
                        std::nullopt, nullptr));
}

Outcome Orchestrator::run(const TheoremStatement& statement, Session& session) const {
  Frame f(session);
  std::optional<Candidate> best;
  Outcome out = frame(f, statement, 0, GenerationMode::Initial, std::nullopt, &best);
  if (out.status == OutcomeStatus::PartialWithSorries && config_.feedback_round && config_.enable_llm_reinvoker &&
      best && f.ledger.samples_used < config_.sample_cap) {
    f.log(0, "orchestrator", "feedback_round", statement.name);
    const PriorAttempt prior{best->original, best->diagnostics};
    Outcome again = frame(f, statement, 0, GenerationMode::FeedbackRepair, prior, nullptr);
    const auto left = [](const Outcome& o) { return o.final_script ? count_sorries(*o.final_script) : SIZE_MAX; };
    if (again.status == OutcomeStatus::Proved ||
        (again.status == OutcomeStatus::PartialWithSorries && left(again) < left(out))) {
      out = std::move(again);
      out.assisted = out.status == OutcomeStatus::Proved;
    }
  }
  f.log(0, "orchestrator", "done", std::string(to_string(out.status)));
  return f.finish(std::move(out));
}

Outcome Orchestrator::frame(Frame& f, const TheoremStatement& st, int depth, GenerationMode mode,
                            const std::optional<PriorAttempt>& prior, std::optional<Candidate>* best_out) const {
  Session& session = f.session;
  const Seconds timeout = config_.compile_timeout;
  auto failed = [&](FailureCause cause) {
    f.log(depth, "orchestrator", "failed", std::string(to_string(cause)));
    Outcome o;
    o.status = OutcomeStatus::Failed;
    o.cause = cause;
    return o;
  };
  auto proved = [&](ProofScript script, bool assisted) {
    Outcome o;
    o.status = OutcomeStatus::Proved;
    o.proof_length = proof_length(script);
    o.final_script = std::move(script);
    o.assisted = assisted;
    f.log(depth, "orchestrator", "proved", st.name + (assisted ? " (repaired)" : ""));
    return o;
  };

  f.log(depth, "orchestrator", "frame", st.name + " " + std::string(to_string(mode)));
  if (depth > config_.max_depth_r) {
    Outcome o;
    o.status = OutcomeStatus::PartialWithSorries;
    return o;
  }
  if (depth == 0 && mode == GenerationMode::Initial) {
    try {
      if (!validate_statement(st, session, timeout).ok) return failed(FailureCause::StatementMalformed);
    } catch (const SorrifyError&) {
      return failed(FailureCause::ReplUnavailable);
    }
  }

  if (Clock::now() - f.start >= config_.wall_ceiling) return failed(FailureCause::BudgetExhausted);

  // Generate.
  const long long room = config_.sample_cap - f.ledger.samples_used;
  if (room <= 0) return failed(FailureCause::BudgetExhausted);
  GenerationRequest req;
  req.statement = st;
  req.mode = mode;
  req.k = static_cast<int>(std::min<long long>(config_.k_per_goal, room));
  req.prior_attempt = prior;
  req.decoding = config_.decoding;
  GenerationResult gen;
  try {
    gen = backend_.generate(req);
  } catch (const BackendError& e) {
    f.log(depth, "llm", "error", e.what());
    return failed(e.kind() == BackendError::Kind::EmptyCompletion ? FailureCause::NoCandidates
                                                                  : FailureCause::BackendUnavailable);
  }
  f.ledger.samples_used += static_cast<long long>(gen.candidates.size());
  f.ledger.tokens_generated += gen.tokens_generated;
  f.ledger.tokens_estimated = f.ledger.tokens_estimated || gen.tokens_estimated;
  f.log(depth, "llm", "generate",
        std::to_string(gen.candidates.size()) + " candidates, " + std::to_string(gen.tokens_generated) + " tokens");
  if (gen.candidates.empty()) return failed(FailureCause::NoCandidates);

  const bool sorrify_needed = config_.enable_auto_solver || config_.enable_llm_reinvoker;
  std::vector<Candidate> kept;
  std::size_t malformed = 0;
  bool nonterminating = false;
  bool repl_down = false;

  for (std::size_t i = 0; i < gen.candidates.size(); ++i) {
    const std::string tag = "candidate " + std::to_string(i);
    std::string text = normalize_candidate(gen.candidates[i], st);
    const std::string original = text;

    const CompileResult plain = compile_source(session, text, false, timeout);
    if (plain.status == CompileStatus::ReplCrash) repl_down = true;
    auto passes = [&](const CompileResult& r, const std::string& t) {
      return r.status == CompileStatus::Pass && count_sorry_tokens(t) == 0 && declares(t, st);
    };
    if (passes(plain, text)) {
      try {
        return proved(parse_script(text, st), false);
      } catch (const ParseError& e) {
        f.log(depth, "orchestrator", "unparseable_pass", tag + ": " + e.what());
      }
    }

    if (config_.enable_syntax_refiner && should_refine(text, plain, rules_)) {
      try {
        const RefineResult rr = refine(text, rules_);
        if (!rr.applied.empty()) {
          ++f.ledger.refiner_triggers;
          std::string ids;
          for (const auto& id : rr.applied) ids += (ids.empty() ? "" : ",") + id;
          f.log(depth, "syntax_refiner", "rewrite", tag + ": " + ids);
          text = rr.text;
          const CompileResult again = compile_source(session, text, false, timeout);
          if (passes(again, text)) {
            try {
              return proved(parse_script(text, st), true);
            } catch (const ParseError&) {
            }
          }
        }
      } catch (const RefineError& e) {
        f.log(depth, "syntax_refiner", "error", tag + ": " + e.what());
      }
    }
    if (!sorrify_needed) continue;

    ProofScript script;
    try {
      try {
        script = parse_script(text, st);
      } catch (const ParseError&) {
        script = parse_script(text);
      }
      if (!same_statement(script, st)) {
        f.log(depth, "orchestrator", "restore_statement", tag);
        script = parse_script(script.header_text + st.statement_text + "\n" + indent_body(body_text(script), 2), st);
      }
    } catch (const ParseError& e) {
      ++malformed;
      f.log(depth, "orchestrator", "malformed", tag + ": " + e.what());
      continue;
    }

    SorrifiedScript sorrified;
    try {
      sorrified = sorrify(script, session, {timeout, config_.with_preamble});
    } catch (const SorrifyError& e) {
      f.log(depth, "sorrifier", "error", tag + ": " + e.what());
      switch (e.kind()) {
        case SorrifyError::Kind::StatementMalformed: ++malformed; break;
        case SorrifyError::Kind::Nonterminating: nonterminating = true; break;
        case SorrifyError::Kind::ReplUnavailable: repl_down = true; break;
        case SorrifyError::Kind::CompileTimeout: break;
      }
      continue;
    }
    f.log(depth, "sorrifier", "sorrified",
          tag + ": " + std::to_string(sorrified.actions.size()) + " actions, " +
              std::to_string(count_sorries(sorrified.script)) + " sorries");

    if (config_.enable_auto_solver && count_sorries(sorrified.script) > 0) {
      ++f.ledger.auto_solver_triggers;
      const SolveResult solved = solve_sorries(sorrified, session, solver_);
      for (const auto& c : solved.commits)
        f.log(depth, "auto_solver", "closed", tag + ": site " + std::to_string(c.site) + " by " + c.tactic);
      sorrified = solved.script;
    }

    Candidate c{i, original, plain.diagnostics, sorrified.script, sorrified.compile_result,
                count_sorries(sorrified.script)};
    if (c.sorries == 0 && c.result.status == CompileStatus::Pass) {
      const Verdict v = verify_final(c.script, session, timeout);
      if (v.status == OutcomeStatus::Proved) return proved(c.script, true);
    }
    kept.push_back(std::move(c));
  }

  if (kept.empty()) {
    if (!sorrify_needed) return failed(FailureCause::Unproved);
    if (nonterminating) return failed(FailureCause::Nonterminating);
    if (repl_down) return failed(FailureCause::ReplUnavailable);
    if (malformed == gen.candidates.size()) return failed(FailureCause::AllCandidatesMalformed);
    return failed(FailureCause::Unproved);
  }

  // Fewest sorries, then shortest, then earliest.
  const auto best_it = std::min_element(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    const auto la = serialize(a.script).size(), lb = serialize(b.script).size();
    return std::tie(a.sorries, la, a.index) < std::tie(b.sorries, lb, b.index);
  });
  Candidate best = *best_it;
  f.log(depth, "orchestrator", "selected",
        "candidate " + std::to_string(best.index) + " with " + std::to_string(best.sorries) + " sorries");
  if (best_out) *best_out = best;

  Outcome partial;
  partial.status = OutcomeStatus::PartialWithSorries;
  partial.final_script = best.script;
  if (!config_.enable_llm_reinvoker || depth >= config_.max_depth_r) return partial;

  // Recurse on each remaining goal, in position order.
  const auto sites = sorry_positions(best.script);
  std::set<std::string> taken = identifiers_in(serialize(best.script));
  std::vector<std::optional<SubOutcome>> subs(sites.size());
  bool any_proved = false;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto info = std::find_if(best.result.sorries.begin(), best.result.sorries.end(),
                                   [&](const SorryInfo& s) { return s.pos == sites[i]; });
    if (info == best.result.sorries.end()) {
      f.log(depth, "goal_extraction", "no_goal", "site " + std::to_string(i + 1));
      continue;
    }
    GoalContext ctx;
    TheoremStatement sub_st;
    try {
      ctx = extract_goal(*info, static_cast<int>(i + 1), st.name, taken);
      taken.insert(ctx.fresh_name);
      sub_st = transform_checked(ctx, st.header, session, timeout);
    } catch (const std::runtime_error& e) {  // ExtractError, TransformError
      f.log(depth, "goal_extraction", "rejected", "site " + std::to_string(i + 1) + ": " + e.what());
      continue;
    }
    f.log(depth, "goal_extraction", "lemma", sub_st.statement_text);
    ++f.ledger.llm_reinvoker_triggers;
    Outcome sub = frame(f, sub_st, depth + 1, GenerationMode::SubLemma, std::nullopt, nullptr);
    any_proved = any_proved || sub.status == OutcomeStatus::Proved;
    const bool out_of_budget = sub.cause == FailureCause::BudgetExhausted;
    subs[i] = SubOutcome{std::move(ctx), std::move(sub)};
    if (out_of_budget) break;
  }
  if (!any_proved) return partial;

  ProofScript assembled;
  std::optional<Verdict> verdict;
  try {
    assembled = assemble(best.script, subs, config_.splice_mode);
    verdict = verify_final(assembled, session, timeout);
  } catch (const std::runtime_error& e) {  // SpliceError, EditError, ParseError
    f.log(depth, "orchestrator", "assemble_error", e.what());
  }
  if (!verdict || verdict->status == OutcomeStatus::Failed) {
    // Splice one sub-proof at a time and keep only those that still compile.
    f.log(depth, "orchestrator", "assemble_incremental");
    assembled = best.script;
    for (std::size_t i = subs.size(); i-- > 0;) {
      if (!subs[i] || subs[i]->outcome.status != OutcomeStatus::Proved) continue;
      try {
        std::vector<std::optional<SubOutcome>> one(subs.size());
        one[i] = subs[i];
        ProofScript next = assemble(assembled, one, config_.splice_mode);
        Verdict v = verify_final(next, session, timeout);
        if (v.status != OutcomeStatus::Failed) {
          assembled = std::move(next);
          verdict = std::move(v);
        }
      } catch (const std::runtime_error& e) {
        f.log(depth, "orchestrator", "splice_error", "site " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    if (!verdict || verdict->status == OutcomeStatus::Failed) return partial;
  }
  f.log(depth, "orchestrator", "assembled",
        std::to_string(count_sorries(assembled)) + " sorries, " + std::string(to_string(verdict->status)));
  if (verdict->status == OutcomeStatus::Proved) return proved(std::move(assembled), true);
  partial.final_script = std::move(assembled);
  return partial;
}

}  // namespace apollo
