#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "apollo/llm_backend.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace apollo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

TheoremStatement statement() {
  TheoremStatement st;
  st.name = "t";
  st.header = "import Mathlib\n\n";
  st.statement_text = "theorem t (x : ℝ) (h : x = 2) : x * x = 4 := by";
  return st;
}

fs::path temp_dir(const std::string& tag) {
  const auto d = fs::temp_directory_path() / ("apollo_llm_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

template <class E>
bool throws_kind(auto&& f, typename E::Kind kind) {
  try {
    f();
  } catch (const E& e) {
    return e.kind() == kind;
  }
  return false;
}

// Local chat-completions endpoint; `plan` decides the status of each request.
struct FakeEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::function<int(int)> plan = [](int) { return 200; };
  bool usage = true;
  std::vector<json> bodies;
  std::vector<std::string> auth;
  std::mutex mu;

  FakeEndpoint() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = hits++;
      const json body = json::parse(req.body);
      {
        std::lock_guard lock(mu);
        bodies.push_back(body);
        auth.push_back(req.get_header_value("Authorization"));
      }
      const int status = plan(n);
      res.status = status;
      if (status == 429) res.set_header("Retry-After", "0");
      if (status != 200) return;
      const int k = body.value("n", 1);
      json choices = json::array();
      for (int i = 0; i < k; ++i)
        choices.push_back({{"index", i}, {"message", {{"role", "assistant"},
                                                      {"content", "Proof:\n```lean4\n  nlinarith [h]\n```\n"}}}});
      json out = {{"choices", choices}};
      if (usage) out["usage"] = {{"completion_tokens", 10 * k}};
      res.set_content(out.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeEndpoint() {
    server.stop();
    thread.join();
  }
  HttpBackendOptions options() const {
    HttpBackendOptions o;
    o.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    o.model = "test-model";
    o.api_key_env = "APOLLO_TEST_KEY";
    o.backoff = std::chrono::milliseconds(1);
    o.timeout = std::chrono::seconds(10);
    return o;
  }
};

}  // namespace

TEST_CASE("prompt: initial and sub-lemma modes carry the problem only") {
  GenerationRequest req{statement(), GenerationMode::Initial, 4, std::nullopt, {}};
  const auto p = render_prompt(req);
  CHECK(p.find("import Mathlib") != std::string::npos);
  CHECK(p.find(statement().statement_text) != std::string::npos);
  CHECK(p.find("Compilation errors") == std::string::npos);
  CHECK(p.find("\n\n\n") == std::string::npos);  // empty informal prefix leaves no gap

  req.mode = GenerationMode::SubLemma;
  CHECK(render_prompt(req).find("Compilation errors") == std::string::npos);

  req.statement.informal_prefix = "/-- Show that x * x = 4. -/";
  const auto with = render_prompt(req);
  CHECK(with.find("/-- Show that x * x = 4. -/\ntheorem t") != std::string::npos);
}

TEST_CASE("prompt: feedback schema sections in order, injective in diagnostics") {
  GenerationRequest req{statement(), GenerationMode::FeedbackRepair, 1,
                        PriorAttempt{"theorem t ... := by\n  norm_num\n",
                                     {{Severity::Error, {9, 2}, std::nullopt, "linarith failed"}}},
                        {}};
  const auto p = render_prompt(req);
  const auto a = p.find("This is an incorrect proof:");
  const auto b = p.find("Compilation errors are as follows:");
  const auto c = p.find("Based on this feedback, produce a correct raw Lean code for the following problem:");
  REQUIRE(a != std::string::npos);
  REQUIRE(b != std::string::npos);
  REQUIRE(c != std::string::npos);
  CHECK(a < b);
  CHECK(b < c);
  CHECK(p.find("9:2: error: linarith failed") != std::string::npos);
  CHECK(p.find(statement().statement_text, c) != std::string::npos);

  auto other = req;
  other.prior_attempt->diagnostics[0].message = "linarith failed.";
  CHECK(render_prompt(other) != p);
  CHECK(render_prompt(req) == p);
}

TEST_CASE("request invariants") {
  GenerationRequest req{statement(), GenerationMode::Initial, 0, std::nullopt, {}};
  CHECK_THROWS_AS(check_request(req), std::invalid_argument);
  req.k = 1;
  req.mode = GenerationMode::FeedbackRepair;
  CHECK_THROWS_AS(check_request(req), std::invalid_argument);
}

TEST_CASE("code extraction") {
  CHECK(extract_lean_code("intro x\nsimp") == "intro x\nsimp\n");
  CHECK(extract_lean_code("Idea.\n```lean4\nA\n```\nthen\n```\nB\n```") == "A\n");
  CHECK(extract_lean_code("```lean\nA\n```\n```lean4\nB\n```") == "B\n");
  CHECK(extract_lean_code("```\nplain\n```") == "plain\n");
  CHECK(extract_lean_code("text\n```lean4\ntruncated") == "truncated\n");
  CHECK(estimate_tokens("a  b\n c\t") == 3);
  CHECK(estimate_tokens("") == 0);
}

TEST_CASE("mock backend: recorded order, tokens, exhaustion, strictness") {
  const auto dir = temp_dir("mock");
  write(dir / "t" / "0.lean", "```lean4\n  nlinarith [h]\n```");
  write(dir / "t" / "1.lean", "  rw [h]\n  norm_num");
  write(dir / "t" / "10.lean", "  simp [h]");
  write(dir / "t" / "meta.json", R"({"tokens": [7, 9], "model": "o4-mini"})");
  write(dir / "t.feedback" / "0.lean", "  subst h\n  norm_num");

  MockBackend be(dir);
  GenerationRequest req{statement(), GenerationMode::Initial, 1, std::nullopt, {}};
  auto r = be.generate(req);
  REQUIRE(r.candidates.size() == 1);
  CHECK(r.candidates[0] == "  nlinarith [h]\n");
  CHECK(r.tokens_generated == 7);
  CHECK_FALSE(r.tokens_estimated);
  CHECK(r.model_id == "o4-mini");

  req.k = 5;
  r = be.generate(req);
  REQUIRE(r.candidates.size() == 2);  // 1.lean then 10.lean, numeric order
  CHECK(r.candidates[1] == "  simp [h]\n");
  CHECK(r.tokens_generated == 9 + 2);
  CHECK(r.tokens_estimated);
  CHECK(throws_kind<BackendError>([&] { be.generate(req); }, BackendError::Kind::EmptyCompletion));

  req.mode = GenerationMode::FeedbackRepair;
  req.prior_attempt = PriorAttempt{"x", {}};
  CHECK(be.generate(req).candidates.at(0) == "  subst h\n  norm_num\n");

  MockBackend still(dir, {.strict = false, .popping = false});
  req = {statement(), GenerationMode::Initial, 2, std::nullopt, {}};
  CHECK(still.generate(req).candidates == still.generate(req).candidates);

  auto missing = req;
  missing.statement.name = "nope";
  MockBackend strict(dir, {.strict = true, .popping = true});
  CHECK(throws_kind<FixtureError>([&] { strict.generate(missing); }, FixtureError::Kind::MissingKey));
  CHECK(throws_kind<BackendError>([&] { still.generate(missing); }, BackendError::Kind::EmptyCompletion));
  fs::remove_all(dir);
}

TEST_CASE("mock backend: concurrent callers never share a candidate") {
  const auto dir = temp_dir("conc");
  for (int i = 0; i < 64; ++i) write(dir / "t" / (std::to_string(i) + ".lean"), "  tac" + std::to_string(i));
  MockBackend be(dir);
  std::mutex mu;
  std::multiset<std::string> seen;
  std::vector<std::thread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&] {
      GenerationRequest req{statement(), GenerationMode::Initial, 3, std::nullopt, {}};
      for (int i = 0; i < 4; ++i) {
        try {
          const auto r = be.generate(req);
          std::lock_guard lock(mu);
          seen.insert(r.candidates.begin(), r.candidates.end());
        } catch (const BackendError&) {
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  CHECK(seen.size() == 64);
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == 64);
  fs::remove_all(dir);
}

TEST_CASE("http backend: n = k, usage tokens, auth from the environment") {
  FakeEndpoint ep;
  ::setenv("APOLLO_TEST_KEY", "sk-test", 1);
  HttpBackend be(ep.options());
  GenerationRequest req{statement(), GenerationMode::Initial, 4, std::nullopt, {0.7, 2048}};
  const auto r = be.generate(req);
  CHECK(r.candidates.size() == 4);
  CHECK(r.candidates[0] == "  nlinarith [h]\n");
  CHECK(r.tokens_generated == 40);
  CHECK_FALSE(r.tokens_estimated);
  CHECK(r.model_id == "test-model");
  REQUIRE(ep.bodies.size() == 1);
  CHECK(ep.bodies[0]["n"] == 4);
  CHECK(ep.bodies[0]["model"] == "test-model");
  CHECK(ep.bodies[0]["temperature"] == 0.7);
  CHECK(ep.bodies[0]["messages"].back()["content"] == render_prompt(req));
  CHECK(ep.auth[0] == "Bearer sk-test");
  ::unsetenv("APOLLO_TEST_KEY");
}

TEST_CASE("http backend: retries do not double-count samples") {
  FakeEndpoint ep;
  ep.plan = [](int n) { return n == 0 ? 429 : n == 1 ? 503 : 200; };
  HttpBackend be(ep.options());
  const auto r = be.generate({statement(), GenerationMode::Initial, 3, std::nullopt, {}});
  CHECK(ep.hits == 3);
  CHECK(be.requests_sent() == 3);
  CHECK(r.candidates.size() == 3);
  CHECK(r.tokens_generated == 30);
}

TEST_CASE("http backend: failure modes") {
  {
    FakeEndpoint ep;
    ep.plan = [](int) { return 500; };
    HttpBackend be(ep.options());
    CHECK(throws_kind<BackendError>([&] { be.generate({statement(), GenerationMode::Initial, 1, std::nullopt, {}}); },
                                    BackendError::Kind::Transport));
    CHECK(ep.hits == 4);  // first try + 3 retries
  }
  {
    FakeEndpoint ep;
    ep.plan = [](int) { return 429; };
    HttpBackend be(ep.options());
    CHECK(throws_kind<BackendError>([&] { be.generate({statement(), GenerationMode::Initial, 1, std::nullopt, {}}); },
                                    BackendError::Kind::RateLimited));
  }
  {
    FakeEndpoint ep;
    ep.plan = [](int) { return 400; };
    HttpBackend be(ep.options());
    CHECK(throws_kind<BackendError>([&] { be.generate({statement(), GenerationMode::Initial, 1, std::nullopt, {}}); },
                                    BackendError::Kind::BadRequest));
    CHECK(ep.hits == 1);
  }
  {
    HttpBackendOptions o;
    o.base_url = "http://127.0.0.1:1/v1";
    o.max_retries = 1;
    o.backoff = std::chrono::milliseconds(1);
    HttpBackend be(o);
    CHECK(throws_kind<BackendError>([&] { be.generate({statement(), GenerationMode::Initial, 1, std::nullopt, {}}); },
                                    BackendError::Kind::Transport));
  }
}

TEST_CASE("http backend: sequential mode and estimated tokens") {
  FakeEndpoint ep;
  ep.usage = false;
  auto o = ep.options();
  o.use_n = false;
  HttpBackend be(o);
  const auto r = be.generate({statement(), GenerationMode::Initial, 3, std::nullopt, {}});
  CHECK(ep.hits == 3);
  CHECK(r.candidates.size() == 3);
  CHECK(r.tokens_estimated);
  CHECK(r.tokens_generated == 3 * estimate_tokens("Proof:\n```lean4\n  nlinarith [h]\n```\n"));
  for (const auto& b : ep.bodies) CHECK_FALSE(b.contains("n"));
}
