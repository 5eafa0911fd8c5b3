#pragma once

// Test double for the Lean REPL. It elaborates a small tactic language
// against a "world" file of tactic rules and answers in the REPL's JSON
// format, so client, sorrifier and solver code can be exercised without a
// Lean toolchain. It is deliberately independent of the production parser.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apollo/repl_client.hpp"
#include "json.hpp"

namespace sim {

struct Rule {
  std::string tactic;  // full tactic text, or a bare head when any_args is set
  std::string goal;    // target text, or "*"
  std::vector<std::string> needs;  // hypothesis types that must be present
  enum class Effect { Close, Progress, Error } effect = Effect::Close;
  std::string result;   // new target for Progress
  std::string message;  // for Error
  bool hint = false;    // offered by `hint`
  bool any_args = false;
};

struct World {
  std::vector<Rule> rules;
  std::vector<std::string> imports{"Mathlib", "Aesop"};
  std::string lean_version = "sim";
  std::string numeric_type;  // annotates literals when pp.numericTypes is on
};

World world_from_json(const nlohmann::json& j);
World load_world(const std::filesystem::path& path);

class Lean {
 public:
  explicit Lean(World world) : world_(std::move(world)) {}
  /// REPL-shaped response for one command.
  nlohmann::json run(const std::string& code);
  const World& world() const { return world_; }

 private:
  World world_;
  int next_env_ = 0;
  int next_state_ = 0;
  friend struct Elab;
};

/// In-process Session over the simulator. Counts calls for tests.
class Session final : public apollo::Session {
 public:
  Session(World world, bool with_header = true);
  apollo::CompileResult check(std::string_view code, apollo::Seconds timeout = apollo::kDefaultCompileTimeout) override;
  std::optional<int> base_env() const override { return base_env_; }
  int calls() const { return calls_; }

 private:
  Lean lean_;
  std::optional<int> base_env_;
  int calls_ = 0;
};

}  // namespace sim
