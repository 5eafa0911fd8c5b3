// apollo: batch proof repair over a line-delimited benchmark file.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "apollo/harness.hpp"
#include "apollo/text.hpp"

namespace {

using namespace apollo;

std::string import_lines(const std::string& header) {
  std::string out;
  for (const auto& l : split_lines(header))
    if (starts_with_word(trim(l), "import")) out += l + "\n";
  return out;
}

struct Args {
  std::filesystem::path dataset;
  std::filesystem::path output = "results.jsonl";
  int max_depth = 4;
  int samples_per_goal = 32;
  double compile_timeout = kDefaultCompileTimeout.count();
  std::size_t parallelism = 1;
  std::string backend = "http";
  std::string endpoint = HttpBackendOptions{}.base_url;
  std::string model = HttpBackendOptions{}.model;
  std::string api_key_env = HttpBackendOptions{}.api_key_env;
  std::filesystem::path repl_path;
  std::vector<std::string> repl_args;
  std::filesystem::path project_root = ".";
  std::optional<std::filesystem::path> rules;
  std::optional<std::filesystem::path> suite;
  std::filesystem::path mock_dir;
  bool no_refiner = false;
  bool no_auto = false;
  bool no_reinvoker = false;
  bool no_feedback = false;
  std::string accounting = "all";
  bool resume = false;
  bool report_only = false;
  long long sample_cap = 1100;
  double temperature = 1.0;
  int max_tokens = 8192;
  double wall_ceiling = 7200;
  std::string splice = "inline";
  std::optional<std::filesystem::path> audit_dir;
  std::optional<std::filesystem::path> plot_data;
  std::string method;
};

}  // namespace

int main(int argc, char** argv) {
  Args a;
  CLI::App app{"Compiler-guided repair of Lean 4 proofs over a benchmark file."};
  app.add_option("--dataset", a.dataset, "line-delimited items {name, header, informal_prefix, formal_statement}");
  app.add_option("--output", a.output, "results file, one record per item (append-only)")->capture_default_str();
  app.add_option("--max-depth", a.max_depth, "recursion depth r")->capture_default_str()->check(CLI::NonNegativeNumber);
  app.add_option("--samples-per-goal", a.samples_per_goal, "candidates k per frame")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--compile-timeout", a.compile_timeout, "seconds per compile")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--parallelism", a.parallelism, "worker count, one REPL each")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--backend", a.backend, "candidate source")
      ->capture_default_str()
      ->check(CLI::IsMember({"http", "mock"}));
  app.add_option("--endpoint", a.endpoint, "chat-completions base URL")->capture_default_str();
  app.add_option("--model", a.model, "model name sent to the endpoint")->capture_default_str();
  app.add_option("--api-key-env", a.api_key_env, "environment variable holding the API token")->capture_default_str();
  app.add_option("--repl-path", a.repl_path, "REPL executable");
  app.add_option("--repl-arg", a.repl_args, "extra REPL argument (repeatable)");
  app.add_option("--project-root", a.project_root, "Lean project directory the REPL runs in")->capture_default_str();
  app.add_option("--rules", a.rules, "syntax refiner rule file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--suite", a.suite, "auto-solver tactic list, one per line")->check(CLI::ExistingFile);
  app.add_option("--mock-dir", a.mock_dir, "candidate fixtures for --backend mock")->check(CLI::ExistingDirectory);
  app.add_flag("--disable-syntax-refiner", a.no_refiner);
  app.add_flag("--disable-auto-solver", a.no_auto);
  app.add_flag("--disable-llm-reinvoker", a.no_reinvoker);
  app.add_flag("--disable-feedback-round", a.no_feedback, "skip the feedback-prompted retry at depth 0");
  app.add_option("--accounting", a.accounting, "budget population in the report")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "assisted"}));
  app.add_flag("--resume", a.resume, "skip items already Proved or Failed in --output");
  app.add_flag("--report-only", a.report_only, "print the report for --output without running");
  app.add_option("--sample-cap", a.sample_cap, "samples per theorem across all frames")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--temperature", a.temperature)->capture_default_str();
  app.add_option("--max-tokens", a.max_tokens)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--wall-ceiling", a.wall_ceiling, "seconds per theorem")->capture_default_str();
  app.add_option("--splice", a.splice, "how sub-proofs return to the parent")
      ->capture_default_str()
      ->check(CLI::IsMember({"inline", "standalone"}));
  app.add_option("--audit-dir", a.audit_dir, "write the full outcome of each item here");
  app.add_option("--plot-data", a.plot_data, "write name,proof_length CSV here");
  app.add_option("--method", a.method, "row label in the report table");
  CLI11_PARSE(app, argc, argv);

  if (a.method.empty())
    a.method = a.report_only ? std::string("repair") : (a.backend == "mock" ? std::string("mock") : a.model) + " + repair";
  const Accounting accounting = accounting_from_string(a.accounting);

  auto print_report = [&](const RunReport& rep) {
    std::cout << render_report(rep, accounting, a.method);
    if (a.plot_data) std::ofstream(*a.plot_data) << proof_length_csv(rep);
  };

  try {
    if (a.report_only) {
      std::vector<std::string> warnings;
      const auto records = load_results(a.output, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      print_report(report(records));
      return 0;
    }
    if (a.dataset.empty()) throw std::invalid_argument("--dataset is required");
    if (a.repl_path.empty()) throw std::invalid_argument("--repl-path is required");
    if (a.backend == "mock" && a.mock_dir.empty()) throw std::invalid_argument("--backend mock needs --mock-dir");

    std::vector<std::string> warnings;
    const auto items = load_dataset(a.dataset, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    RepairConfig config;
    config.max_depth_r = a.max_depth;
    config.k_per_goal = a.samples_per_goal;
    config.compile_timeout = Seconds{a.compile_timeout};
    config.enable_syntax_refiner = !a.no_refiner;
    config.enable_auto_solver = !a.no_auto;
    config.enable_llm_reinvoker = !a.no_reinvoker;
    config.feedback_round = !a.no_feedback;
    config.rules_path = a.rules;
    config.suite_path = a.suite;
    config.sample_cap = a.sample_cap;
    config.decoding.temperature = a.temperature;
    config.decoding.max_tokens = a.max_tokens;
    config.wall_ceiling = Seconds{a.wall_ceiling};
    config.splice_mode = a.splice == "inline" ? SpliceMode::Inline : SpliceMode::Standalone;
    check_config(config);

    std::unique_ptr<Backend> backend;
    if (a.backend == "mock") {
      backend = std::make_unique<MockBackend>(a.mock_dir);
    } else {
      HttpBackendOptions h;
      h.base_url = a.endpoint;
      h.model = a.model;
      h.api_key_env = a.api_key_env;
      if (!std::getenv(h.api_key_env.c_str())) std::cerr << "warning: " << h.api_key_env << " is not set\n";
      backend = std::make_unique<HttpBackend>(h);
    }

    // Items share one import block in practice; the REPL compiles it once per worker.
    const std::string imports = items.empty() ? std::string() : import_lines(items.front().header);
    SessionFactory make_session = [&]() -> std::unique_ptr<Session> {
      return start_session(a.repl_path, a.project_root, imports, a.repl_args);
    };

    BatchOptions options;
    options.parallelism = a.parallelism;
    options.results_path = a.output;
    options.audit_dir = a.audit_dir;
    options.resume = a.resume;
    print_report(run_batch(items, config, *backend, make_session, options));
    return 0;
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FixtureError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SessionError& e) {
    std::cerr << "error: cannot start the REPL: " << e.what() << "\n";
    return 3;
  }
}
