#pragma once

// Batch runs: dataset ingest, a worker pool over sessions, an append-only
// results file that doubles as the resume checkpoint, and summary reports.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "apollo/orchestrator.hpp"
#include "json.hpp"

namespace apollo {

struct BenchmarkItem {
  std::string name;
  std::string header;
  std::string informal_prefix;
  std::string formal_statement;
  std::string split;

  TheoremStatement statement() const;
  friend bool operator==(const BenchmarkItem&, const BenchmarkItem&) = default;
};

class IngestError : public std::runtime_error {
 public:
  enum class Kind { BadRecord, DuplicateName, Unreadable };
  IngestError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error(what), kind_(kind), line_(line) {}
  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }  // 1-based; 0 when not line-specific

 private:
  Kind kind_;
  std::size_t line_;
};

/// One JSON object per line. Blank lines are skipped; an empty file yields no
/// items and a warning.
std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
BenchmarkItem item_from_json(const nlohmann::json& j, std::size_t line = 0);

/// One line of the results file.
struct ItemRecord {
  std::string name;
  OutcomeStatus status = OutcomeStatus::Failed;
  FailureCause cause = FailureCause::None;
  bool assisted = false;
  long long samples = 0;
  long long tokens = 0;
  bool tokens_estimated = false;
  std::optional<std::size_t> proof_length;
  double wall_time = 0.0;
  std::string audit_path;
  long long refiner_triggers = 0;
  long long auto_solver_triggers = 0;
  long long llm_reinvoker_triggers = 0;
  long long repl_calls = 0;
  std::string final_script;
  std::string error;  // set when the item threw instead of returning an Outcome

  /// Proved by an unrepaired base candidate: outside the assisted-only population.
  bool base_solved() const { return status == OutcomeStatus::Proved && !assisted; }
  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

ItemRecord make_record(const std::string& name, const Outcome& outcome, std::string audit_path = {});
nlohmann::json to_json(const ItemRecord& record);
ItemRecord record_from_json(const nlohmann::json& j);

/// Last record per name wins. A truncated final line (killed writer) is
/// skipped with a warning; malformed lines elsewhere throw IngestError.
std::vector<ItemRecord> load_results(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

enum class Accounting { All, Assisted };
std::string_view to_string(Accounting mode);
Accounting accounting_from_string(std::string_view s);

struct BudgetStats {
  std::size_t items = 0;
  double avg_samples = 0.0;
  long long max_samples = 0;
  double avg_tokens = 0.0;
  long long max_tokens = 0;
  bool tokens_estimated = false;
  friend bool operator==(const BudgetStats&, const BudgetStats&) = default;
};

struct LengthStats {
  std::size_t count = 0;
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
  double median = 0.0;
  friend bool operator==(const LengthStats&, const LengthStats&) = default;
};

struct RunReport {
  std::vector<ItemRecord> items;  // sorted by name
  std::size_t proved = 0;
  double accuracy = 0.0;  // percent of all items
  BudgetStats all;
  BudgetStats assisted;
  LengthStats proof_lengths;
  std::map<std::string, double> trigger_rates;  // percent of assisted-population items
  std::map<std::string, std::size_t> causes;  // Failed by cause, plus PartialWithSorries

  const BudgetStats& budget(Accounting mode) const { return mode == Accounting::All ? all : assisted; }
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Pure in the multiset of records: item order does not matter.
RunReport report(std::vector<ItemRecord> records);

/// Text table: method, sample budget, token budget, accuracy; then proof
/// lengths and module-trigger rates.
std::string render_report(const RunReport& report, Accounting mode, const std::string& method);

/// `name,proof_length` CSV over Proved items, for plotting elsewhere.
std::string proof_length_csv(const RunReport& report);

struct BatchOptions {
  std::size_t parallelism = 1;
  std::filesystem::path results_path;
  std::optional<std::filesystem::path> audit_dir;  // full Outcome JSON per item
  bool resume = false;  // skip items whose last record is Proved or Failed
};

using SessionFactory = std::function<std::unique_ptr<Session>()>;

/// Runs every item not skipped by resume. Each finished item is appended to
/// the results file before the next is reported. Per-item exceptions become
/// Failed records. The backend must be safe to call from several threads.
RunReport run_batch(const std::vector<BenchmarkItem>& items, const RepairConfig& config, Backend& backend,
                    const SessionFactory& make_session, const BatchOptions& options);

}  // namespace apollo
