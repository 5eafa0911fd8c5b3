#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ranges>
#include <set>

#include <unistd.h>

#include "apollo/harness.hpp"
#include "doctest.h"
#include "mock_suite.hpp"

using namespace apollo;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag) {
    dir = fs::temp_directory_path() / ("apollo_h_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }
};

template <class F>
std::optional<IngestError> ingest_error(F&& f) {
  try {
    f();
  } catch (const IngestError& e) {
    return e;
  }
  return std::nullopt;
}

// Wall time is the only field that differs between identical runs.
std::vector<ItemRecord> timeless(std::vector<ItemRecord> records) {
  for (auto& r : records) r.wall_time = 0;
  return records;
}

RunReport timeless(RunReport rep) { return report(timeless(rep.items)); }

RunReport run_suite(const fs::path& results, std::size_t parallelism, bool resume, MockBackend& backend,
                    const std::vector<BenchmarkItem>& items) {
  const auto world = sim::load_world(suite::world_path());
  BatchOptions opt;
  opt.parallelism = parallelism;
  opt.results_path = results;
  opt.resume = resume;
  return run_batch(items, suite::config(1), backend, [&] { return std::make_unique<sim::Session>(world); }, opt);
}

ItemRecord rec(std::string name, OutcomeStatus status, bool assisted, long long samples, long long tokens,
               long long auto_triggers = 0, long long refiner = 0) {
  ItemRecord r;
  r.name = std::move(name);
  r.status = status;
  r.assisted = assisted;
  r.samples = samples;
  r.tokens = tokens;
  r.auto_solver_triggers = auto_triggers;
  r.refiner_triggers = refiner;
  if (status == OutcomeStatus::Proved) r.proof_length = static_cast<std::size_t>(samples);
  if (status != OutcomeStatus::Proved) r.cause = FailureCause::Unproved;
  return r;
}

}  // namespace

TEST_CASE("load_dataset: the mock suite and its failure modes") {
  const auto items = load_dataset(suite::dataset_path());
  REQUIRE(items.size() == 10);
  CHECK(items[0].name == "s01_direct");
  CHECK(items[0].informal_prefix == "/-- Square of two. -/\n");
  CHECK(items[0].statement().statement_text.ends_with(":= by"));

  Scratch s("ingest");
  std::vector<std::string> warnings;
  CHECK(load_dataset(s.write("empty.jsonl", ""), &warnings).empty());
  CHECK(warnings.size() == 1);

  const std::string good = R"({"name":"a","formal_statement":"theorem a : True := by"})";
  auto e = ingest_error([&] {
    load_dataset(s.write("missing.jsonl", good + "\n\n" + R"({"name":"b","header":"import Mathlib"})" + "\n"));
  });
  REQUIRE(e);
  CHECK(e->kind() == IngestError::Kind::BadRecord);
  CHECK(e->line() == 3);

  e = ingest_error([&] { load_dataset(s.write("dup.jsonl", good + "\n" + good + "\n")); });
  REQUIRE(e);
  CHECK(e->kind() == IngestError::Kind::DuplicateName);
  CHECK(e->line() == 2);

  e = ingest_error([&] { load_dataset(s.write("bad.jsonl", "{nope\n")); });
  REQUIRE(e);
  CHECK(e->line() == 1);
  e = ingest_error([&] { load_dataset(s.write("type.jsonl", R"({"name":1,"formal_statement":"x"})")); });
  REQUIRE(e);
  CHECK(e->kind() == IngestError::Kind::BadRecord);
  CHECK(ingest_error([&] { load_dataset(s.dir / "absent.jsonl"); }));
}

TEST_CASE("report arithmetic and the two accounting populations") {
  std::vector<ItemRecord> rs;
  for (int i = 0; i < 3; ++i) rs.push_back(rec("base" + std::to_string(i), OutcomeStatus::Proved, false, 1, 100));
  for (int i = 0; i < 3; ++i) rs.push_back(rec("fix" + std::to_string(i), OutcomeStatus::Proved, true, 10, 1000, 1));
  for (int i = 0; i < 4; ++i)
    rs.push_back(rec("open" + std::to_string(i), OutcomeStatus::PartialWithSorries, false, 20, 3000, 1));
  const RunReport rep = report(rs);
  CHECK(rep.proved == 6);
  CHECK(rep.accuracy == doctest::Approx(60.0));
  CHECK(rep.all.items == 10);
  CHECK(rep.all.avg_samples == doctest::Approx((3 * 1 + 3 * 10 + 4 * 20) / 10.0));
  CHECK(rep.all.max_tokens == 3000);
  CHECK(rep.assisted.items == 7);
  CHECK(rep.assisted.avg_samples == doctest::Approx((3 * 10 + 4 * 20) / 7.0));
  CHECK(rep.assisted.avg_tokens == doctest::Approx((3 * 1000 + 4 * 3000) / 7.0));
  CHECK(rep.trigger_rates.at("syntax_refiner") == doctest::Approx(0.0));
  CHECK(rep.trigger_rates.at("auto_solver") == doctest::Approx(100.0));
  CHECK(rep.proof_lengths.count == 6);
  CHECK(rep.proof_lengths.median == doctest::Approx(5.5));
  CHECK(rep.causes.at("PartialWithSorries") == 4);

  std::vector<ItemRecord> reversed(rs.rbegin(), rs.rend());
  CHECK(report(reversed) == rep);

  const std::string table = render_report(rep, Accounting::Assisted, "mock + repair");
  CHECK(table.find("method") == 0);
  CHECK(table.find("sample budget") != std::string::npos);
  CHECK(table.find("token budget") != std::string::npos);
  CHECK(table.find("60.0%") != std::string::npos);
  CHECK(table.find("15.7 (max 20)") != std::string::npos);
  CHECK(render_report(rep, Accounting::All, "m").find("11.3 (max 20)") != std::string::npos);
  CHECK(proof_length_csv(rep).starts_with("name,proof_length\nbase0,1\n"));
  CHECK(accounting_from_string("assisted") == Accounting::Assisted);
  CHECK_THROWS(accounting_from_string("some"));
}

TEST_CASE("batch over the mock suite at r = 1: deterministic, parallel-safe, replayable") {
  Scratch s("batch");
  const auto items = load_dataset(suite::dataset_path());

  MockBackend b1(suite::llm_dir());
  const RunReport serial = run_suite(s.dir / "serial.jsonl", 1, false, b1, items);
  CHECK(serial.items.size() == 10);
  CHECK(serial.proved == 5);
  CHECK(serial.accuracy == doctest::Approx(50.0));
  long long samples = 0;
  for (const auto& r : serial.items) samples += r.samples;
  CHECK(samples == 1 + 1 + 1 + 2 + 2 + 2 + 1 + 0 + 2 + 2);
  CHECK(serial.assisted.items == 9);

  MockBackend b4(suite::llm_dir());
  const RunReport parallel = run_suite(s.dir / "parallel.jsonl", 4, false, b4, items);
  CHECK(timeless(parallel.items) == timeless(serial.items));

  // The results file reproduces the in-memory report.
  CHECK(report(load_results(s.dir / "serial.jsonl")) == serial);
}

TEST_CASE("resume after a killed batch gives the same report") {
  Scratch s("resume");
  const auto items = load_dataset(suite::dataset_path());
  MockBackend full_backend(suite::llm_dir());
  const RunReport full = run_suite(s.dir / "full.jsonl", 1, false, full_backend, items);

  // Simulate a kill: three complete records and half of a fourth.
  std::ifstream in(s.dir / "full.jsonl");
  std::string text, line;
  for (int i = 0; i < 4 && std::getline(in, line); ++i) text += i < 3 ? line + "\n" : line.substr(0, line.size() / 2);
  const auto cut = s.write("cut.jsonl", text);
  std::vector<std::string> warnings;
  CHECK(load_results(cut, &warnings).size() == 3);
  CHECK(warnings.size() == 1);

  MockBackend resumed_backend(suite::llm_dir());
  const RunReport resumed = run_suite(cut, 1, true, resumed_backend, items);
  CHECK(timeless(resumed) == timeless(full));
  const auto calls = resumed_backend.calls();
  const std::set<std::string> called(calls.begin(), calls.end());
  for (const auto& r : full.items | std::views::take(3)) CHECK_FALSE(called.count(r.name));

  // A second resume finds only the PartialWithSorries items to redo.
  MockBackend again_backend(suite::llm_dir());
  const RunReport again = run_suite(cut, 1, true, again_backend, items);
  CHECK(timeless(again) == timeless(full));
  for (const auto& name : again_backend.calls()) {
    const auto& r = *std::find_if(full.items.begin(), full.items.end(),
                                  [&](const ItemRecord& x) { return name.starts_with(x.name); });
    CHECK(r.status == OutcomeStatus::PartialWithSorries);
  }
  CHECK(timeless(report(load_results(cut))) == timeless(full));
}

TEST_CASE("per-item errors become Failed records without stopping the batch") {
  Scratch s("errors");
  auto items = load_dataset(suite::dataset_path());
  items.resize(2);
  MockBackend strict(s.dir, {.strict = true});  // no fixtures at all
  const auto world = sim::load_world(suite::world_path());
  BatchOptions opt;
  opt.results_path = s.dir / "out" / "results.jsonl";
  opt.audit_dir = s.dir / "audit";
  const RunReport rep =
      run_batch(items, suite::config(1), strict, [&] { return std::make_unique<sim::Session>(world); }, opt);
  REQUIRE(rep.items.size() == 2);
  for (const auto& r : rep.items) {
    CHECK(r.status == OutcomeStatus::Failed);
    CHECK_FALSE(r.error.empty());
  }
  CHECK(load_results(opt.results_path).size() == 2);

  MockBackend lenient(suite::llm_dir());
  const RunReport ok =
      run_batch(items, suite::config(1), lenient, [&] { return std::make_unique<sim::Session>(world); }, opt);
  for (const auto& r : ok.items) CHECK(fs::exists(r.audit_path));
}
