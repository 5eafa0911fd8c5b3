#pragma once

// Lean REPL client: structured compile results, the pure response
// classifier, and three Session implementations (subprocess, transcript
// replay, recording decorator) plus an exclusive-lease pool.

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "apollo/proof_model.hpp"

namespace apollo {

using Seconds = std::chrono::duration<double>;

inline constexpr std::string_view kSorryWarningMarker = "declaration uses 'sorry'";
inline constexpr Seconds kDefaultCompileTimeout{300.0};

enum class Severity { Error, Warning, Info };

struct Diagnostic {
  Severity severity = Severity::Error;
  SourcePos pos;
  std::optional<SourcePos> end_pos;
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct SorryInfo {
  SourcePos pos;
  std::optional<SourcePos> end_pos;
  std::string goal;
  std::optional<int> proof_state_id;

  friend bool operator==(const SorryInfo&, const SorryInfo&) = default;
};

enum class CompileStatus { Pass, PassWithSorries, Fail, Timeout, ReplCrash };

std::string_view to_string(CompileStatus status);
std::string_view to_string(Severity severity);

struct CompileResult {
  CompileStatus status = CompileStatus::Pass;
  std::vector<Diagnostic> diagnostics;
  std::vector<SorryInfo> sorries;
  std::optional<int> env_id;
  double wall_time = 0.0;

  bool compiled() const { return status == CompileStatus::Pass || status == CompileStatus::PassWithSorries; }
  std::vector<Diagnostic> errors() const;
};

/// True when the result satisfies the status/diagnostic consistency rules.
bool status_invariants_hold(const CompileResult& result);

class ProtocolError : public std::runtime_error {
 public:
  enum class Kind { MalformedResponse, ReplError };
  ProtocolError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class SessionError : public std::runtime_error {
 public:
  enum class Kind { SpawnFailed, HeaderFailed };
  SessionError(Kind kind, const std::string& what, std::vector<Diagnostic> diagnostics = {})
      : std::runtime_error(what), kind_(kind), diagnostics_(std::move(diagnostics)) {}
  Kind kind() const noexcept { return kind_; }
  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  Kind kind_;
  std::vector<Diagnostic> diagnostics_;
};

class FixtureError : public std::runtime_error {
 public:
  enum class Kind { UnknownRequest, MissingKey, BadFixture };
  FixtureError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Maps one REPL response object to a CompileResult. Deterministic; throws
/// ProtocolError when the object does not follow the wire format.
CompileResult classify(const nlohmann::json& response);

/// Inverse of classify for recording: REPL-shaped response JSON.
nlohmann::json to_response_json(const CompileResult& result);

class Session {
 public:
  virtual ~Session() = default;
  /// One request, one response. Timeout and ReplCrash come back as statuses.
  virtual CompileResult check(std::string_view code, Seconds timeout = kDefaultCompileTimeout) = 0;
  virtual std::optional<int> base_env() const { return std::nullopt; }
};

struct ReplOptions {
  std::vector<std::string> command;  // executable followed by its arguments
  std::filesystem::path project_root;
  std::string import_header;
  Seconds header_timeout{900.0};
  Seconds grace{2.0};
};

/// Drives a `repl` subprocess. Not thread-safe; use one per worker.
class ReplSession final : public Session {
 public:
  explicit ReplSession(ReplOptions options);
  ~ReplSession() override;
  ReplSession(const ReplSession&) = delete;
  ReplSession& operator=(const ReplSession&) = delete;

  CompileResult check(std::string_view code, Seconds timeout = kDefaultCompileTimeout) override;
  std::optional<int> base_env() const override { return base_env_; }
  bool alive() const { return pid_ > 0; }

 private:
  enum class ReadOutcome { Ok, Timeout, Eof };

  void spawn();
  void load_header();
  void kill_child();
  bool send(const nlohmann::json& request);
  ReadOutcome receive(std::chrono::steady_clock::time_point deadline, nlohmann::json& out);
  CompileResult attempt(std::string_view code, Seconds timeout, bool& crashed);

  ReplOptions options_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::optional<int> base_env_;
};

/// Launches the REPL and compiles the import header once.
std::unique_ptr<ReplSession> start_session(const std::filesystem::path& repl_executable,
                                           const std::filesystem::path& project_root, std::string_view import_header,
                                           std::vector<std::string> extra_args = {});

// Transcripts: JSON array of {request, response, lean_version?}.
struct TranscriptEntry {
  nlohmann::json request;
  nlohmann::json response;
  std::string lean_version;
};
using Transcript = std::vector<TranscriptEntry>;

/// Trailing whitespace trimmed per line; the transcript lookup key.
std::string normalize_code(std::string_view code);

Transcript load_transcript(const std::filesystem::path& path);
void save_transcript(const std::filesystem::path& path, const Transcript& transcript);
nlohmann::json transcript_to_json(const Transcript& transcript);
Transcript transcript_from_json(const nlohmann::json& j);

struct MockOptions {
  bool strict = false;  // unknown code throws FixtureError instead of failing
  std::string default_message = "no recorded response for this request";
  std::optional<int> base_env;  // overrides the env recorded in the transcript
};

/// Stateless replay of a transcript keyed by normalized code. Reports the base
/// env the transcript was recorded against, so import blanking matches.
class MockSession final : public Session {
 public:
  MockSession(const Transcript& transcript, MockOptions options = {});
  CompileResult check(std::string_view code, Seconds timeout = kDefaultCompileTimeout) override;
  std::optional<int> base_env() const override { return base_env_; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, nlohmann::json> table_;
  MockOptions options_;
  std::optional<int> base_env_;
};

std::unique_ptr<Session> mock_session(const Transcript& transcript, MockOptions options = {});

/// Forwards to another session and appends every exchange to a transcript.
class RecordingSession final : public Session {
 public:
  RecordingSession(Session& inner, std::string lean_version = {});
  CompileResult check(std::string_view code, Seconds timeout = kDefaultCompileTimeout) override;
  std::optional<int> base_env() const override { return inner_.base_env(); }
  Transcript transcript() const;

 private:
  Session& inner_;
  std::string lean_version_;
  mutable std::mutex mu_;
  Transcript entries_;
  std::unordered_map<std::string, std::size_t> seen_;
};

/// Fixed set of sessions handed out under exclusive leases.
class SessionPool {
 public:
  class Lease {
   public:
    Lease(SessionPool* pool, std::size_t index) : pool_(pool), index_(index) {}
    Lease(Lease&& o) noexcept : pool_(std::exchange(o.pool_, nullptr)), index_(o.index_) {}
    Lease& operator=(Lease&&) = delete;
    ~Lease() {
      if (pool_) pool_->release(index_);
    }
    Session& operator*() const { return *pool_->sessions_[index_]; }
    Session* operator->() const { return pool_->sessions_[index_].get(); }

   private:
    SessionPool* pool_;
    std::size_t index_;
  };

  explicit SessionPool(std::vector<std::unique_ptr<Session>> sessions);
  Lease lease();
  std::size_t size() const { return sessions_.size(); }

 private:
  void release(std::size_t index);

  std::vector<std::unique_ptr<Session>> sessions_;
  std::vector<bool> busy_;
  std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace apollo
