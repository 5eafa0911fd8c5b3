#include "apollo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "apollo/text.hpp"

namespace apollo {

namespace {

using nlohmann::json;

OutcomeStatus status_from_string(std::string_view s) {
  for (auto st : {OutcomeStatus::Proved, OutcomeStatus::PartialWithSorries, OutcomeStatus::Failed})
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown status: " + std::string(s));
}

FailureCause cause_from_string(std::string_view s) {
  for (auto c : {FailureCause::None, FailureCause::StatementMalformed, FailureCause::BudgetExhausted,
                 FailureCause::AllCandidatesMalformed, FailureCause::Nonterminating, FailureCause::NoCandidates,
                 FailureCause::BackendUnavailable, FailureCause::ReplUnavailable, FailureCause::Unproved})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown failure cause: " + std::string(s));
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string file_stem_for(std::string name) {
  for (char& c : name)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return name;
}

BudgetStats budget_over(const std::vector<const ItemRecord*>& pop) {
  BudgetStats b;
  b.items = pop.size();
  if (pop.empty()) return b;
  long long samples = 0, tokens = 0;
  for (const auto* r : pop) {
    samples += r->samples;
    tokens += r->tokens;
    b.max_samples = std::max(b.max_samples, r->samples);
    b.max_tokens = std::max(b.max_tokens, r->tokens);
    b.tokens_estimated = b.tokens_estimated || r->tokens_estimated;
  }
  b.avg_samples = static_cast<double>(samples) / static_cast<double>(pop.size());
  b.avg_tokens = static_cast<double>(tokens) / static_cast<double>(pop.size());
  return b;
}

ItemRecord error_record(const std::string& name, FailureCause cause, const std::string& what) {
  ItemRecord r;
  r.name = name;
  r.status = OutcomeStatus::Failed;
  r.cause = cause;
  r.error = what;
  return r;
}

}  // namespace

TheoremStatement BenchmarkItem::statement() const {
  TheoremStatement st;
  st.name = name;
  st.header = header;
  st.informal_prefix = informal_prefix;
  st.statement_text = std::string(rtrim(formal_statement));
  return st;
}

BenchmarkItem item_from_json(const json& j, std::size_t line) {
  const std::string where = line ? "line " + std::to_string(line) + ": " : "";
  if (!j.is_object()) throw IngestError(IngestError::Kind::BadRecord, line, where + "record is not an object");
  auto text = [&](const char* field, bool required) -> std::string {
    if (!j.contains(field) || j[field].is_null()) {
      if (required) throw IngestError(IngestError::Kind::BadRecord, line, where + "missing field '" + field + "'");
      return {};
    }
    if (!j[field].is_string())
      throw IngestError(IngestError::Kind::BadRecord, line, where + "field '" + field + "' is not a string");
    return j[field].get<std::string>();
  };
  BenchmarkItem item;
  item.name = text("name", true);
  item.header = text("header", false);
  item.informal_prefix = text("informal_prefix", false);
  item.formal_statement = text("formal_statement", true);
  item.split = text("split", false);
  if (trim(item.name).empty()) throw IngestError(IngestError::Kind::BadRecord, line, where + "empty name");
  if (trim(item.formal_statement).empty())
    throw IngestError(IngestError::Kind::BadRecord, line, where + "empty formal_statement");
  return item;
}

std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IngestError(IngestError::Kind::Unreadable, 0, "cannot read dataset " + path.string());
  std::vector<BenchmarkItem> items;
  std::set<std::string> names;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(IngestError::Kind::BadRecord, n, "line " + std::to_string(n) + ": " + e.what());
    }
    auto item = item_from_json(j, n);
    if (!names.insert(item.name).second)
      throw IngestError(IngestError::Kind::DuplicateName, n,
                        "line " + std::to_string(n) + ": duplicate name '" + item.name + "'");
    items.push_back(std::move(item));
  }
  if (items.empty() && warnings) warnings->push_back("dataset " + path.string() + " has no records");
  return items;
}

// --- records ------------------------------------------------------------------

ItemRecord make_record(const std::string& name, const Outcome& o, std::string audit_path) {
  ItemRecord r;
  r.name = name;
  r.status = o.status;
  r.cause = o.cause;
  r.assisted = o.assisted;
  r.samples = o.ledger.samples_used;
  r.tokens = o.ledger.tokens_generated;
  r.tokens_estimated = o.ledger.tokens_estimated;
  r.proof_length = o.proof_length;
  r.wall_time = o.ledger.wall_time;
  r.audit_path = std::move(audit_path);
  r.refiner_triggers = o.ledger.refiner_triggers;
  r.auto_solver_triggers = o.ledger.auto_solver_triggers;
  r.llm_reinvoker_triggers = o.ledger.llm_reinvoker_triggers;
  r.repl_calls = o.ledger.repl_calls;
  if (o.final_script) r.final_script = serialize(*o.final_script);
  return r;
}

json to_json(const ItemRecord& r) {
  json j = {{"name", r.name},
            {"status", to_string(r.status)},
            {"cause", to_string(r.cause)},
            {"assisted", r.assisted},
            {"samples", r.samples},
            {"tokens", r.tokens},
            {"tokens_estimated", r.tokens_estimated},
            {"proof_length", r.proof_length ? json(*r.proof_length) : json(nullptr)},
            {"wall_time", r.wall_time},
            {"audit_path", r.audit_path},
            {"module_triggers",
             {{"syntax_refiner", r.refiner_triggers},
              {"auto_solver", r.auto_solver_triggers},
              {"llm_reinvoker", r.llm_reinvoker_triggers}}},
            {"repl_calls", r.repl_calls},
            {"final_script", r.final_script}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

ItemRecord record_from_json(const json& j) {
  ItemRecord r;
  r.name = j.at("name").get<std::string>();
  r.status = status_from_string(j.at("status").get<std::string>());
  r.cause = cause_from_string(j.value("cause", "none"));
  r.assisted = j.value("assisted", false);
  r.samples = j.value("samples", 0LL);
  r.tokens = j.value("tokens", 0LL);
  r.tokens_estimated = j.value("tokens_estimated", false);
  if (j.contains("proof_length") && !j["proof_length"].is_null())
    r.proof_length = j["proof_length"].get<std::size_t>();
  r.wall_time = j.value("wall_time", 0.0);
  r.audit_path = j.value("audit_path", "");
  if (j.contains("module_triggers")) {
    const auto& t = j["module_triggers"];
    r.refiner_triggers = t.value("syntax_refiner", 0LL);
    r.auto_solver_triggers = t.value("auto_solver", 0LL);
    r.llm_reinvoker_triggers = t.value("llm_reinvoker", 0LL);
  }
  r.repl_calls = j.value("repl_calls", 0LL);
  r.final_script = j.value("final_script", "");
  r.error = j.value("error", "");
  return r;
}

std::vector<ItemRecord> load_results(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::vector<ItemRecord> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto lines = split_lines(text);
  std::map<std::string, std::size_t> at;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    ItemRecord r;
    try {
      r = record_from_json(json::parse(lines[n]));
    } catch (const std::exception& e) {
      const bool last = n + 1 == lines.size() || (n + 2 == lines.size() && trim(lines[n + 1]).empty());
      if (last && !text.ends_with('\n')) {
        if (warnings) warnings->push_back("ignoring truncated last record in " + path.string());
        continue;
      }
      throw IngestError(IngestError::Kind::BadRecord, n + 1,
                        path.string() + " line " + std::to_string(n + 1) + ": " + e.what());
    }
    if (auto it = at.find(r.name); it != at.end()) {
      out[it->second] = std::move(r);
    } else {
      at.emplace(r.name, out.size());
      out.push_back(std::move(r));
    }
  }
  return out;
}

// --- reports ------------------------------------------------------------------

std::string_view to_string(Accounting mode) { return mode == Accounting::All ? "all" : "assisted"; }

Accounting accounting_from_string(std::string_view s) {
  if (s == "all") return Accounting::All;
  if (s == "assisted") return Accounting::Assisted;
  throw std::invalid_argument("accounting must be 'all' or 'assisted'");
}

RunReport report(std::vector<ItemRecord> records) {
  std::sort(records.begin(), records.end(), [](const ItemRecord& a, const ItemRecord& b) { return a.name < b.name; });
  RunReport rep;
  std::vector<const ItemRecord*> all, assisted;
  std::vector<std::size_t> lengths;
  for (const auto& r : records) {
    all.push_back(&r);
    if (!r.base_solved()) assisted.push_back(&r);
    if (r.status == OutcomeStatus::Proved) {
      ++rep.proved;
      if (r.proof_length) lengths.push_back(*r.proof_length);
    }
    if (r.status == OutcomeStatus::PartialWithSorries) ++rep.causes[std::string(to_string(r.status))];
    if (r.status == OutcomeStatus::Failed) ++rep.causes[std::string(to_string(r.cause))];
  }
  rep.accuracy = records.empty() ? 0.0 : 100.0 * static_cast<double>(rep.proved) / static_cast<double>(records.size());
  rep.all = budget_over(all);
  rep.assisted = budget_over(assisted);

  std::sort(lengths.begin(), lengths.end());
  if (!lengths.empty()) {
    rep.proof_lengths.count = lengths.size();
    rep.proof_lengths.min = lengths.front();
    rep.proof_lengths.max = lengths.back();
    double sum = 0;
    for (auto l : lengths) sum += static_cast<double>(l);
    rep.proof_lengths.mean = sum / static_cast<double>(lengths.size());
    const std::size_t mid = lengths.size() / 2;
    rep.proof_lengths.median = lengths.size() % 2 ? static_cast<double>(lengths[mid])
                                                  : (static_cast<double>(lengths[mid - 1]) + lengths[mid]) / 2.0;
  }

  std::map<std::string, std::size_t> fired;
  for (const auto* r : assisted) {
    fired["syntax_refiner"] += r->refiner_triggers > 0;
    fired["auto_solver"] += r->auto_solver_triggers > 0;
    fired["llm_reinvoker"] += r->llm_reinvoker_triggers > 0;
  }
  for (const auto& [module, n] : fired)
    rep.trigger_rates[module] = 100.0 * static_cast<double>(n) / static_cast<double>(assisted.size());
  rep.items = std::move(records);
  return rep;
}

std::string render_report(const RunReport& rep, Accounting mode, const std::string& method) {
  const BudgetStats& b = rep.budget(mode);
  const std::vector<std::string> head = {"method", "sample budget", "token budget", "accuracy"};
  const std::vector<std::string> row = {
      method,
      fixed(b.avg_samples, 1) + " (max " + std::to_string(b.max_samples) + ")",
      fixed(b.avg_tokens, 0) + (b.tokens_estimated ? "~" : "") + " (max " + std::to_string(b.max_tokens) + ")",
      fixed(rep.accuracy, 1) + "%"};
  std::vector<std::size_t> width(head.size());
  for (std::size_t i = 0; i < head.size(); ++i)
    width[i] = std::max(codepoint_count(head[i]), codepoint_count(row[i]));
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += cells[i];
      if (i + 1 < cells.size()) out += std::string(width[i] - codepoint_count(cells[i]) + 2, ' ');
    }
    return out + "\n";
  };

  std::string out = line(head) + line(row);
  out += "\nitems " + std::to_string(rep.items.size()) + ", proved " + std::to_string(rep.proved) +
         ", budget population (" + std::string(to_string(mode)) + ") " + std::to_string(b.items) + "\n";
  const auto& pl = rep.proof_lengths;
  if (pl.count) {
    out += "proof length: n " + std::to_string(pl.count) + ", min " + std::to_string(pl.min) + ", median " +
           fixed(pl.median, 1) + ", mean " + fixed(pl.mean, 1) + ", max " + std::to_string(pl.max) + "\n";
  }
  out += "module triggers (% of " + std::to_string(rep.assisted.items) + " items past the base model):";
  for (const auto& [module, rate] : rep.trigger_rates) out += " " + module + " " + fixed(rate, 1) + "%";
  out += "\n";
  if (!rep.causes.empty()) {
    out += "unproved:";
    for (const auto& [cause, n] : rep.causes) out += " " + cause + " " + std::to_string(n);
    out += "\n";
  }
  return out;
}

std::string proof_length_csv(const RunReport& rep) {
  std::string out = "name,proof_length\n";
  for (const auto& r : rep.items)
    if (r.status == OutcomeStatus::Proved && r.proof_length)
      out += r.name + "," + std::to_string(*r.proof_length) + "\n";
  return out;
}

// --- batch ----------------------------------------------------------------------

RunReport run_batch(const std::vector<BenchmarkItem>& items, const RepairConfig& config, Backend& backend,
                    const SessionFactory& make_session, const BatchOptions& options) {
  if (options.parallelism < 1) throw std::invalid_argument("parallelism must be at least 1");
  const Orchestrator orchestrator(config, backend);

  std::map<std::string, ItemRecord> latest;
  if (options.resume) {
    for (auto& r : load_results(options.results_path)) latest[r.name] = std::move(r);
  }
  std::vector<const BenchmarkItem*> pending;
  for (const auto& item : items) {
    auto it = latest.find(item.name);
    if (it != latest.end() && it->second.status != OutcomeStatus::PartialWithSorries) continue;
    pending.push_back(&item);
  }

  if (options.results_path.has_parent_path()) std::filesystem::create_directories(options.results_path.parent_path());
  if (options.audit_dir) std::filesystem::create_directories(*options.audit_dir);
  const bool append = options.resume && std::filesystem::exists(options.results_path);
  if (append) {
    // A writer killed mid-line leaves a torn record; cut back to the last newline.
    std::ifstream in(options.results_path, std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!text.empty() && text.back() != '\n') {
      const auto nl = text.rfind('\n');
      std::filesystem::resize_file(options.results_path, nl == std::string::npos ? 0 : nl + 1);
    }
  }
  std::ofstream out(options.results_path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write results file " + options.results_path.string());

  std::mutex write_mu;
  auto checkpoint = [&](ItemRecord r) {
    std::lock_guard lock(write_mu);
    out << to_json(r).dump() << '\n' << std::flush;
    latest[r.name] = std::move(r);
  };

  const std::size_t workers = std::min(options.parallelism, std::max<std::size_t>(pending.size(), 1));
  std::vector<std::unique_ptr<Session>> sessions;
  if (!pending.empty())
    for (std::size_t i = 0; i < workers; ++i) sessions.push_back(make_session());
  SessionPool pool(std::move(sessions));

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < pending.size();) {
      const BenchmarkItem& item = *pending[i];
      ItemRecord rec;
      try {
        auto lease = pool.lease();
        const Outcome o = orchestrator.run(item.statement(), *lease);
        std::string audit_path;
        if (options.audit_dir) {
          const auto p = *options.audit_dir / (file_stem_for(item.name) + ".json");
          std::ofstream(p) << to_json(o).dump(1) << '\n';
          audit_path = p.string();
        }
        rec = make_record(item.name, o, audit_path);
      } catch (const BackendError& e) {
        rec = error_record(item.name, FailureCause::BackendUnavailable, e.what());
      } catch (const SessionError& e) {
        rec = error_record(item.name, FailureCause::ReplUnavailable, e.what());
      } catch (const ProtocolError& e) {
        rec = error_record(item.name, FailureCause::ReplUnavailable, e.what());
      } catch (const std::exception& e) {
        rec = error_record(item.name, FailureCause::Unproved, e.what());
      }
      checkpoint(std::move(rec));
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();

  std::vector<ItemRecord> records;
  for (const auto& item : items)
    if (auto it = latest.find(item.name); it != latest.end()) records.push_back(it->second);
  return report(std::move(records));
}

}  // namespace apollo
