#include "apollo/repl_client.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "apollo/text.hpp"

namespace apollo {

using nlohmann::json;

std::string_view to_string(CompileStatus status) {
  switch (status) {
    case CompileStatus::Pass: return "Pass";
    case CompileStatus::PassWithSorries: return "PassWithSorries";
    case CompileStatus::Fail: return "Fail";
    case CompileStatus::Timeout: return "Timeout";
    case CompileStatus::ReplCrash: return "ReplCrash";
  }
  return "?";
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::Error: return "error";
    case Severity::Warning: return "warning";
    case Severity::Info: return "info";
  }
  return "?";
}

std::vector<Diagnostic> CompileResult::errors() const {
  std::vector<Diagnostic> out;
  for (const auto& d : diagnostics)
    if (d.severity == Severity::Error) out.push_back(d);
  return out;
}

namespace {

bool is_marker(const Diagnostic& d) {
  return d.severity == Severity::Warning && d.message.find(kSorryWarningMarker) != std::string::npos;
}

[[noreturn]] void malformed(const std::string& why) {
  throw ProtocolError(ProtocolError::Kind::MalformedResponse, "malformed REPL response: " + why);
}

SourcePos parse_pos(const json& j, const char* field) {
  if (!j.is_object() || !j.contains("line") || !j.contains("column") || !j["line"].is_number_integer() ||
      !j["column"].is_number_integer())
    malformed(std::string("bad ") + field);
  return {j["line"].get<int>(), j["column"].get<int>()};
}

std::optional<SourcePos> parse_opt_pos(const json& obj, const char* field) {
  if (!obj.contains(field) || obj[field].is_null()) return std::nullopt;
  return parse_pos(obj[field], field);
}

json pos_json(const SourcePos& p) { return {{"line", p.line}, {"column", p.col}}; }

}  // namespace

bool status_invariants_hold(const CompileResult& r) {
  bool any_error = false;
  bool marker = false;
  for (const auto& d : r.diagnostics) {
    any_error |= d.severity == Severity::Error;
    marker |= is_marker(d);
  }
  switch (r.status) {
    case CompileStatus::Pass: return !any_error && r.sorries.empty() && !marker;
    case CompileStatus::PassWithSorries: return !any_error && !r.sorries.empty();
    case CompileStatus::Fail: return any_error;
    case CompileStatus::Timeout:
    case CompileStatus::ReplCrash: return true;
  }
  return false;
}

CompileResult classify(const json& response) {
  if (!response.is_object()) malformed("not an object");
  if (response.contains("apollo_status")) {
    // transcript encoding of results that never produced a REPL response
    const auto s = response["apollo_status"].get<std::string>();
    CompileResult r;
    if (s == "Timeout") r.status = CompileStatus::Timeout;
    else if (s == "ReplCrash") r.status = CompileStatus::ReplCrash;
    else malformed("unknown apollo_status " + s);
    return r;
  }
  if (response.contains("message") && !response.contains("messages") && !response.contains("env"))
    throw ProtocolError(ProtocolError::Kind::ReplError,
                        response["message"].is_string() ? response["message"].get<std::string>() : "REPL error");

  CompileResult r;
  if (response.contains("env")) {
    if (!response["env"].is_number_integer()) malformed("env is not an integer");
    r.env_id = response["env"].get<int>();
  }
  if (response.contains("messages")) {
    const auto& ms = response["messages"];
    if (!ms.is_array()) malformed("messages is not an array");
    for (const auto& m : ms) {
      if (!m.is_object() || !m.contains("severity") || !m["severity"].is_string() || !m.contains("data") ||
          !m["data"].is_string())
        malformed("bad message");
      Diagnostic d;
      const auto sev = m["severity"].get<std::string>();
      if (sev == "error") d.severity = Severity::Error;
      else if (sev == "warning") d.severity = Severity::Warning;
      else if (sev == "info" || sev == "information") d.severity = Severity::Info;
      else malformed("unknown severity " + sev);
      if (!m.contains("pos")) malformed("message without pos");
      d.pos = parse_pos(m["pos"], "pos");
      d.end_pos = parse_opt_pos(m, "endPos");
      d.message = m["data"].get<std::string>();
      r.diagnostics.push_back(std::move(d));
    }
  }
  if (response.contains("sorries")) {
    const auto& ss = response["sorries"];
    if (!ss.is_array()) malformed("sorries is not an array");
    for (const auto& s : ss) {
      if (!s.is_object() || !s.contains("pos")) malformed("bad sorry");
      SorryInfo info;
      info.pos = parse_pos(s["pos"], "pos");
      info.end_pos = parse_opt_pos(s, "endPos");
      if (s.contains("goal") && s["goal"].is_string()) info.goal = s["goal"].get<std::string>();
      if (s.contains("proofState") && s["proofState"].is_number_integer())
        info.proof_state_id = s["proofState"].get<int>();
      r.sorries.push_back(std::move(info));
    }
  }

  bool any_error = false;
  const Diagnostic* marker = nullptr;
  for (const auto& d : r.diagnostics) {
    any_error |= d.severity == Severity::Error;
    if (!marker && is_marker(d)) marker = &d;
  }
  if (any_error) {
    r.status = CompileStatus::Fail;
  } else if (!r.sorries.empty() || marker) {
    r.status = CompileStatus::PassWithSorries;
    if (r.sorries.empty()) r.sorries.push_back({marker->pos, marker->end_pos, "", std::nullopt});
  } else {
    r.status = CompileStatus::Pass;
  }
  return r;
}

json to_response_json(const CompileResult& r) {
  if (r.status == CompileStatus::Timeout || r.status == CompileStatus::ReplCrash)
    return {{"apollo_status", std::string(to_string(r.status))}};
  json j = json::object();
  if (r.env_id) j["env"] = *r.env_id;
  if (!r.diagnostics.empty()) {
    json ms = json::array();
    for (const auto& d : r.diagnostics) {
      json m = {{"severity", std::string(to_string(d.severity))}, {"pos", pos_json(d.pos)}, {"data", d.message}};
      m["endPos"] = d.end_pos ? pos_json(*d.end_pos) : json(nullptr);
      ms.push_back(std::move(m));
    }
    j["messages"] = std::move(ms);
  }
  if (!r.sorries.empty()) {
    json ss = json::array();
    for (const auto& s : r.sorries) {
      json o = {{"pos", pos_json(s.pos)}, {"goal", s.goal}};
      o["endPos"] = s.end_pos ? pos_json(*s.end_pos) : json(nullptr);
      if (s.proof_state_id) o["proofState"] = *s.proof_state_id;
      ss.push_back(std::move(o));
    }
    j["sorries"] = std::move(ss);
  }
  return j;
}

// ---------------------------------------------------------------------------
// ReplSession

ReplSession::ReplSession(ReplOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw SessionError(SessionError::Kind::SpawnFailed, "empty REPL command");
  static const bool sigpipe_ignored = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;
  spawn();
  load_header();
}

ReplSession::~ReplSession() { kill_child(); }

void ReplSession::spawn() {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw SessionError(SessionError::Kind::SpawnFailed, "pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw SessionError(SessionError::Kind::SpawnFailed, "pipe failed");
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw SessionError(SessionError::Kind::SpawnFailed, "pipe failed");
  }

  std::vector<char*> argv;
  for (auto& a : options_.command) argv.push_back(a.data());
  argv.push_back(nullptr);
  const std::string cwd = options_.project_root.string();

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw SessionError(SessionError::Kind::SpawnFailed, "fork failed");
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    const int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
    int err = 0;
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
      err = errno;
    } else {
      ::execvp(argv[0], argv.data());
      err = errno;
    }
    [[maybe_unused]] auto n = ::write(err_pipe[1], &err, sizeof err);
    ::_exit(127);
  }

  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int child_errno = 0;
  const ssize_t n = ::read(err_pipe[0], &child_errno, sizeof child_errno);
  ::close(err_pipe[0]);
  if (n == static_cast<ssize_t>(sizeof child_errno)) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::waitpid(pid, nullptr, 0);
    throw SessionError(SessionError::Kind::SpawnFailed,
                       "cannot start " + options_.command[0] + ": " + std::strerror(child_errno));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void ReplSession::kill_child() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
  pid_ = -1;
  buffer_.clear();
}

void ReplSession::load_header() {
  base_env_.reset();
  if (trim(options_.import_header).empty()) return;
  if (!send(json{{"cmd", options_.import_header}})) {
    kill_child();
    throw SessionError(SessionError::Kind::HeaderFailed, "REPL closed its input while loading the header");
  }
  json resp;
  const auto outcome = receive(std::chrono::steady_clock::now() +
                                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(options_.header_timeout),
                               resp);
  if (outcome != ReadOutcome::Ok) {
    kill_child();
    throw SessionError(SessionError::Kind::HeaderFailed,
                       outcome == ReadOutcome::Timeout ? "header compile timed out" : "REPL exited during header");
  }
  CompileResult r;
  try {
    r = classify(resp);
  } catch (const ProtocolError& e) {
    kill_child();
    throw SessionError(SessionError::Kind::HeaderFailed, e.what());
  }
  if (r.status == CompileStatus::Fail) {
    kill_child();
    throw SessionError(SessionError::Kind::HeaderFailed, "import header does not compile", r.errors());
  }
  base_env_ = r.env_id;
}

bool ReplSession::send(const json& request) {
  const std::string payload = request.dump() + "\n\n";
  std::size_t off = 0;
  while (off < payload.size()) {
    const ssize_t n = ::write(to_child_, payload.data() + off, payload.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

ReplSession::ReadOutcome ReplSession::receive(std::chrono::steady_clock::time_point deadline, json& out) {
  char chunk[65536];
  while (true) {
    // a response ends at the first blank line; JSON output never contains one
    std::size_t sep;
    while ((sep = buffer_.find("\n\n")) != std::string::npos) {
      const std::string body(trim(std::string_view(buffer_).substr(0, sep)));
      buffer_.erase(0, sep + 2);
      if (body.empty()) continue;
      try {
        out = json::parse(body);
      } catch (const json::parse_error&) {
        out = json{{"message", "unparseable REPL output"}};
      }
      return ReadOutcome::Ok;
    }
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return ReadOutcome::Timeout;
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(ms + 1, 1000LL * 60 * 60)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      return ReadOutcome::Eof;
    }
    if (rc == 0) continue;
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadOutcome::Eof;
    }
    if (n == 0) {
      // the REPL may exit right after its last response without a trailing blank line
      const std::string body(trim(buffer_));
      buffer_.clear();
      if (!body.empty()) {
        try {
          out = json::parse(body);
          return ReadOutcome::Ok;
        } catch (const json::parse_error&) {
        }
      }
      return ReadOutcome::Eof;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

CompileResult ReplSession::attempt(std::string_view code, Seconds timeout, bool& crashed) {
  crashed = false;
  CompileResult r;
  if (pid_ <= 0) {
    try {
      spawn();
      load_header();
    } catch (const SessionError&) {
      crashed = true;
      r.status = CompileStatus::ReplCrash;
      return r;
    }
  }
  json req{{"cmd", std::string(code)}};
  if (base_env_) req["env"] = *base_env_;
  if (!send(req)) {
    kill_child();
    crashed = true;
    r.status = CompileStatus::ReplCrash;
    return r;
  }
  json resp;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout);
  switch (receive(deadline, resp)) {
    case ReadOutcome::Timeout:
      kill_child();
      r.status = CompileStatus::Timeout;
      return r;
    case ReadOutcome::Eof:
      kill_child();
      crashed = true;
      r.status = CompileStatus::ReplCrash;
      return r;
    case ReadOutcome::Ok: break;
  }
  try {
    return classify(resp);
  } catch (const ProtocolError&) {
    // the process state is unknown after a protocol error; start fresh next time
    kill_child();
    crashed = true;
    r.status = CompileStatus::ReplCrash;
    return r;
  }
}

CompileResult ReplSession::check(std::string_view code, Seconds timeout) {
  const auto t0 = std::chrono::steady_clock::now();
  bool crashed = false;
  CompileResult r = attempt(code, timeout, crashed);
  if (crashed) r = attempt(code, timeout, crashed);
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::unique_ptr<ReplSession> start_session(const std::filesystem::path& repl_executable,
                                           const std::filesystem::path& project_root, std::string_view import_header,
                                           std::vector<std::string> extra_args) {
  ReplOptions o;
  o.command.push_back(repl_executable.string());
  for (auto& a : extra_args) o.command.push_back(std::move(a));
  o.project_root = project_root;
  o.import_header = std::string(import_header);
  return std::make_unique<ReplSession>(std::move(o));
}

// ---------------------------------------------------------------------------
// Transcripts

std::string normalize_code(std::string_view code) { return normalize_trailing_whitespace(code); }

json transcript_to_json(const Transcript& t) {
  json arr = json::array();
  for (const auto& e : t) {
    json o = {{"request", e.request}, {"response", e.response}};
    if (!e.lean_version.empty()) o["lean_version"] = e.lean_version;
    arr.push_back(std::move(o));
  }
  return arr;
}

Transcript transcript_from_json(const json& j) {
  if (!j.is_array()) throw FixtureError(FixtureError::Kind::BadFixture, "transcript must be a JSON array");
  Transcript t;
  for (const auto& o : j) {
    if (!o.is_object() || !o.contains("request") || !o.contains("response"))
      throw FixtureError(FixtureError::Kind::BadFixture, "transcript entry needs request and response");
    TranscriptEntry e{o["request"], o["response"], o.value("lean_version", std::string())};
    t.push_back(std::move(e));
  }
  return t;
}

Transcript load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FixtureError(FixtureError::Kind::BadFixture, "cannot open transcript " + path.string());
  try {
    return transcript_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FixtureError(FixtureError::Kind::BadFixture, path.string() + ": " + e.what());
  }
}

void save_transcript(const std::filesystem::path& path, const Transcript& transcript) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << transcript_to_json(transcript).dump(1) << '\n';
  if (!out) throw std::runtime_error("cannot write transcript " + path.string());
}

// ---------------------------------------------------------------------------
// MockSession

MockSession::MockSession(const Transcript& transcript, MockOptions options) : options_(std::move(options)) {
  for (const auto& e : transcript) {
    if (!e.request.contains("cmd") || !e.request["cmd"].is_string())
      throw FixtureError(FixtureError::Kind::BadFixture, "transcript request without cmd");
    // the last recording for a given code wins
    table_[normalize_code(e.request["cmd"].get<std::string>())] = e.response;
    if (!base_env_ && e.request.contains("env") && e.request["env"].is_number_integer())
      base_env_ = e.request["env"].get<int>();
  }
  if (options_.base_env) base_env_ = options_.base_env;
}

CompileResult MockSession::check(std::string_view code, Seconds) {
  const auto it = table_.find(normalize_code(code));
  if (it == table_.end()) {
    if (options_.strict) throw FixtureError(FixtureError::Kind::UnknownRequest, "no transcript entry for request");
    CompileResult r;
    r.status = CompileStatus::Fail;
    r.diagnostics.push_back({Severity::Error, {1, 0}, std::nullopt, options_.default_message});
    return r;
  }
  try {
    return classify(it->second);
  } catch (const ProtocolError&) {
    CompileResult r;
    r.status = CompileStatus::ReplCrash;
    return r;
  }
}

std::unique_ptr<Session> mock_session(const Transcript& transcript, MockOptions options) {
  return std::make_unique<MockSession>(transcript, std::move(options));
}

// ---------------------------------------------------------------------------
// RecordingSession

RecordingSession::RecordingSession(Session& inner, std::string lean_version)
    : inner_(inner), lean_version_(std::move(lean_version)) {}

CompileResult RecordingSession::check(std::string_view code, Seconds timeout) {
  CompileResult r = inner_.check(code, timeout);
  json req{{"cmd", std::string(code)}};
  if (auto env = inner_.base_env()) req["env"] = *env;
  TranscriptEntry e{std::move(req), to_response_json(r), lean_version_};
  std::lock_guard lock(mu_);
  const std::string key = normalize_code(code);
  if (auto it = seen_.find(key); it != seen_.end()) {
    entries_[it->second] = std::move(e);
  } else {
    seen_[key] = entries_.size();
    entries_.push_back(std::move(e));
  }
  return r;
}

Transcript RecordingSession::transcript() const {
  std::lock_guard lock(mu_);
  return entries_;
}

// ---------------------------------------------------------------------------
// SessionPool

SessionPool::SessionPool(std::vector<std::unique_ptr<Session>> sessions)
    : sessions_(std::move(sessions)), busy_(sessions_.size(), false) {
  if (sessions_.empty()) throw std::invalid_argument("session pool needs at least one session");
}

SessionPool::Lease SessionPool::lease() {
  std::unique_lock lock(mu_);
  std::size_t idx = 0;
  cv_.wait(lock, [&] {
    for (std::size_t i = 0; i < busy_.size(); ++i)
      if (!busy_[i]) {
        idx = i;
        return true;
      }
    return false;
  });
  busy_[idx] = true;
  return Lease(this, idx);
}

void SessionPool::release(std::size_t index) {
  {
    std::lock_guard lock(mu_);
    busy_[index] = false;
  }
  cv_.notify_one();
}

}  // namespace apollo
