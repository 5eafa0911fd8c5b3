#include "apollo/llm_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "apollo/text.hpp"
#include "httplib.h"
#include "json.hpp"

namespace apollo {

namespace {

using nlohmann::json;

std::string with_newline(std::string s) {
  if (!s.empty() && s.back() != '\n') s += '\n';
  return s;
}

std::string problem_text(const TheoremStatement& st) {
  return with_newline(st.header) + with_newline(st.informal_prefix) + st.statement_text;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_lean_info(std::string_view info) {
  info = trim(info);
  return info == "lean" || info == "lean4";
}

}  // namespace

std::string_view to_string(GenerationMode mode) {
  switch (mode) {
    case GenerationMode::Initial: return "initial";
    case GenerationMode::SubLemma: return "sub_lemma";
    case GenerationMode::FeedbackRepair: return "feedback_repair";
  }
  return "?";
}

void check_request(const GenerationRequest& request) {
  if (request.k < 1) throw std::invalid_argument("k must be at least 1");
  if (request.mode == GenerationMode::FeedbackRepair && !request.prior_attempt)
    throw std::invalid_argument("feedback repair needs a prior attempt");
  if (request.decoding.max_tokens < 1) throw std::invalid_argument("max_tokens must be positive");
}

std::string render_diagnostics(const std::vector<Diagnostic>& diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    out += std::to_string(d.pos.line) + ":" + std::to_string(d.pos.col) + ": " + std::string(to_string(d.severity)) +
           ": " + d.message + "\n";
  }
  return out;
}

std::string render_prompt(const GenerationRequest& request) {
  const std::string problem = problem_text(request.statement);
  if (request.mode != GenerationMode::FeedbackRepair || !request.prior_attempt)
    return "Complete the following Lean 4 code:\n\n```lean4\n" + problem + "\n```\n";
  const auto& prior = *request.prior_attempt;
  return "This is an incorrect proof:\n\n" + with_newline(prior.proof) +
         "\nCompilation errors are as follows:\n\n" + render_diagnostics(prior.diagnostics) +
         "\nBased on this feedback, produce a correct raw Lean code for the following problem:\n\n" + problem + "\n";
}

std::string extract_lean_code(std::string_view completion) {
  struct Block {
    std::string info;
    std::string body;
  };
  std::vector<Block> blocks;
  const auto lines = split_lines(completion);
  std::optional<Block> open;
  for (const auto& l : lines) {
    const std::string_view t = trim(l);
    if (t.rfind("```", 0) == 0) {
      if (open) {
        blocks.push_back(std::move(*open));
        open.reset();
      } else {
        open = Block{std::string(t.substr(3)), {}};
      }
      continue;
    }
    if (open) open->body += l + "\n";
  }
  if (open && !open->body.empty()) blocks.push_back(std::move(*open));  // truncated completion
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it)
    if (is_lean_info(it->info)) return it->body;
  if (!blocks.empty()) return blocks.back().body;
  // No fence: the whole text, minus surrounding blank lines (indentation kept).
  const auto first = completion.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto line_start = completion.rfind('\n', first);
  const auto start = line_start == std::string_view::npos ? 0 : line_start + 1;
  return with_newline(std::string(rtrim(completion.substr(start))));
}

long long estimate_tokens(std::string_view text) {
  long long n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

// --- mock -------------------------------------------------------------------

MockBackend::MockBackend(std::filesystem::path dir, MockBackendOptions options)
    : dir_(std::move(dir)), options_(options) {}

const MockBackend::Entry* MockBackend::load(const std::string& key) {
  if (auto it = cache_.find(key); it != cache_.end()) return &it->second;
  const auto d = dir_ / key;
  if (!std::filesystem::is_directory(d)) return nullptr;
  std::vector<std::pair<long, std::filesystem::path>> files;
  for (const auto& e : std::filesystem::directory_iterator(d)) {
    if (e.path().extension() != ".lean") continue;
    const std::string stem = e.path().stem().string();
    char* end = nullptr;
    const long n = std::strtol(stem.c_str(), &end, 10);
    if (stem.empty() || *end != '\0')
      throw FixtureError(FixtureError::Kind::BadFixture, "candidate file not numbered: " + e.path().string());
    files.emplace_back(n, e.path());
  }
  std::sort(files.begin(), files.end());
  Entry entry;
  for (const auto& [n, p] : files) entry.texts.push_back(slurp(p));
  entry.model = "mock";
  if (std::filesystem::exists(d / "meta.json")) {
    try {
      const json meta = json::parse(slurp(d / "meta.json"));
      entry.tokens = meta.value("tokens", std::vector<long long>{});
      entry.model = meta.value("model", entry.model);
    } catch (const json::exception& e) {
      throw FixtureError(FixtureError::Kind::BadFixture, "bad meta.json in " + d.string() + ": " + e.what());
    }
  }
  return &cache_.emplace(key, std::move(entry)).first->second;
}

GenerationResult MockBackend::generate(const GenerationRequest& request) {
  check_request(request);
  std::lock_guard lock(mu_);
  std::string key = request.statement.name;
  calls_.push_back(key);
  const Entry* entry = nullptr;
  if (request.mode == GenerationMode::FeedbackRepair) {
    entry = load(key + ".feedback");
    if (entry) key += ".feedback";
  }
  if (!entry) entry = load(key);
  if (!entry) {
    if (options_.strict) throw FixtureError(FixtureError::Kind::MissingKey, "no mock candidates for " + key);
    throw BackendError(BackendError::Kind::EmptyCompletion, "no mock candidates for " + key);
  }
  std::size_t& cursor = cursor_[key];
  const std::size_t start = options_.popping ? cursor : 0;
  if (start >= entry->texts.size())
    throw BackendError(BackendError::Kind::EmptyCompletion, "mock candidates for " + key + " exhausted");
  const std::size_t end = std::min(entry->texts.size(), start + static_cast<std::size_t>(request.k));
  GenerationResult out;
  out.model_id = entry->model;
  for (std::size_t i = start; i < end; ++i) {
    out.candidates.push_back(extract_lean_code(entry->texts[i]));
    if (i < entry->tokens.size()) {
      out.tokens_generated += entry->tokens[i];
    } else {
      out.tokens_generated += estimate_tokens(entry->texts[i]);
      out.tokens_estimated = true;
    }
  }
  if (options_.popping) cursor = end;
  return out;
}

std::vector<std::string> MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// --- HTTP -------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  std::string url = options_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme = url.find("://");
  const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  scheme_host_ = url.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : url.substr(slash);
}

HttpBackend::Reply HttpBackend::post(const std::string& prompt, int n, const Decoding& decoding) {
  json messages = json::array();
  if (!options_.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", options_.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", prompt}});
  json body = {{"model", options_.model},
               {"messages", messages},
               {"temperature", decoding.temperature},
               {"max_completion_tokens", decoding.max_tokens}};
  if (n > 1) body["n"] = n;

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  const auto path = path_prefix_ + "/chat/completions";
  const auto payload = body.dump();
  std::chrono::milliseconds delay = options_.backoff;
  for (int attempt = 0;; ++attempt) {
    httplib::Client cli(scheme_host_);
    cli.set_connection_timeout(std::chrono::seconds(30));
    cli.set_read_timeout(options_.timeout);
    cli.set_write_timeout(std::chrono::seconds(60));
    ++requests_;
    auto res = cli.Post(path, headers, payload, "application/json");

    std::optional<BackendError> failure;
    if (!res) {
      failure.emplace(BackendError::Kind::Transport, "request to " + scheme_host_ + path + " failed: " +
                                                         httplib::to_string(res.error()));
    } else if (res->status == 429) {
      std::optional<double> after;
      if (res->has_header("Retry-After")) after = std::atof(res->get_header_value("Retry-After").c_str());
      failure.emplace(BackendError::Kind::RateLimited, "rate limited", after);
    } else if (res->status >= 500) {
      failure.emplace(BackendError::Kind::Transport, "server error " + std::to_string(res->status));
    } else if (res->status != 200) {
      throw BackendError(BackendError::Kind::BadRequest,
                         "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    if (failure) {
      if (attempt >= options_.max_retries) throw *failure;
      auto wait = delay;
      if (failure->retry_after())
        wait = std::chrono::milliseconds(static_cast<long long>(std::ceil(*failure->retry_after() * 1000.0)));
      std::this_thread::sleep_for(wait);
      delay *= 2;
      continue;
    }

    Reply reply;
    try {
      const json j = json::parse(res->body);
      for (const auto& choice : j.at("choices")) {
        const auto& content = choice.at("message").at("content");
        reply.texts.push_back(content.is_string() ? content.get<std::string>() : std::string());
      }
      if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
        reply.tokens = j["usage"]["completion_tokens"].get<long long>();
      } else {
        for (const auto& t : reply.texts) reply.tokens += estimate_tokens(t);
        reply.estimated = true;
      }
    } catch (const json::exception& e) {
      throw BackendError(BackendError::Kind::Transport, std::string("malformed completion response: ") + e.what());
    }
    return reply;
  }
}

GenerationResult HttpBackend::generate(const GenerationRequest& request) {
  check_request(request);
  const std::string prompt = render_prompt(request);
  std::vector<Reply> replies;
  if (options_.use_n) {
    replies.push_back(post(prompt, request.k, request.decoding));
  } else {
    for (int i = 0; i < request.k; ++i) replies.push_back(post(prompt, 1, request.decoding));
  }
  GenerationResult out;
  out.model_id = options_.model;
  for (const auto& r : replies) {
    out.tokens_generated += r.tokens;
    out.tokens_estimated = out.tokens_estimated || r.estimated;
    for (const auto& t : r.texts) {
      if (static_cast<int>(out.candidates.size()) >= request.k) break;
      if (trim(t).empty()) continue;
      out.candidates.push_back(extract_lean_code(t));
    }
  }
  if (out.candidates.empty()) throw BackendError(BackendError::Kind::EmptyCompletion, "endpoint returned no text");
  return out;
}

}  // namespace apollo
