#pragma once

// Candidate proof generation: prompt rendering, a directory-backed mock, and
// an OpenAI-style chat-completions client.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apollo/proof_model.hpp"
#include "apollo/repl_client.hpp"

namespace apollo {

enum class GenerationMode { Initial, SubLemma, FeedbackRepair };
std::string_view to_string(GenerationMode mode);

struct PriorAttempt {
  std::string proof;
  std::vector<Diagnostic> diagnostics;
};

struct Decoding {
  double temperature = 1.0;
  int max_tokens = 8192;
};

struct GenerationRequest {
  TheoremStatement statement;
  GenerationMode mode = GenerationMode::Initial;
  int k = 1;
  std::optional<PriorAttempt> prior_attempt;
  Decoding decoding;
};

struct GenerationResult {
  std::vector<std::string> candidates;
  long long tokens_generated = 0;
  bool tokens_estimated = false;
  std::string model_id;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { Transport, RateLimited, EmptyCompletion, BadRequest };
  BackendError(Kind kind, const std::string& what, std::optional<double> retry_after = std::nullopt)
      : std::runtime_error(what), kind_(kind), retry_after_(retry_after) {}
  Kind kind() const noexcept { return kind_; }
  std::optional<double> retry_after() const noexcept { return retry_after_; }

 private:
  Kind kind_;
  std::optional<double> retry_after_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// Throws BackendError; safe to call from several threads.
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

/// Throws std::invalid_argument when the request breaks its invariants.
void check_request(const GenerationRequest& request);

std::string render_prompt(const GenerationRequest& request);

/// `line:col: severity: message`, one per diagnostic.
std::string render_diagnostics(const std::vector<Diagnostic>& diagnostics);

/// Body of the last fenced code block (```lean preferred), else the whole text.
std::string extract_lean_code(std::string_view completion);

/// Whitespace-separated token count, used when the endpoint reports no usage.
long long estimate_tokens(std::string_view text);

struct MockBackendOptions {
  bool strict = false;   // unknown key throws FixtureError(MissingKey)
  bool popping = true;   // successive calls consume successive candidates
};

/// Fixture layout: `<dir>/<statement name>/<N>.lean`, ordered by N, plus an
/// optional `<dir>/<name>/meta.json` of the form {"tokens": [..], "model": ".."}.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(std::filesystem::path dir, MockBackendOptions options = {});
  GenerationResult generate(const GenerationRequest& request) override;
  std::string model_id() const override { return "mock"; }
  /// Statement names requested so far, in call order.
  std::vector<std::string> calls() const;

 private:
  struct Entry {
    std::vector<std::string> texts;
    std::vector<long long> tokens;
    std::string model;
  };
  const Entry* load(const std::string& key);

  std::filesystem::path dir_;
  MockBackendOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> cache_;
  std::map<std::string, std::size_t> cursor_;
  std::vector<std::string> calls_;
};

struct HttpBackendOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "o4-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string system_prompt;
  bool use_n = true;  // one request with n=k; otherwise k sequential requests
  int max_retries = 3;
  std::chrono::milliseconds backoff{1000};
  std::chrono::seconds timeout{600};
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);
  GenerationResult generate(const GenerationRequest& request) override;
  std::string model_id() const override { return options_.model; }
  /// HTTP requests sent, retries included.
  long long requests_sent() const { return requests_.load(); }

 private:
  struct Reply {
    std::vector<std::string> texts;
    long long tokens = 0;
    bool estimated = false;
  };
  Reply post(const std::string& prompt, int n, const Decoding& decoding);

  HttpBackendOptions options_;
  std::string scheme_host_;
  std::string path_prefix_;
  std::atomic<long long> requests_{0};
};

}  // namespace apollo
