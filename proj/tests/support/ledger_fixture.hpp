#pragma once

// Hand-countable ledger scenario: a root with two failing haves and k = 32
// candidates per goal; each sub-lemma's last candidate closes it. Runs
// against the suite world.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "apollo/proof_model.hpp"
#include "json.hpp"

namespace ledger_fixture {

inline void write_candidates(const std::filesystem::path& dir, const std::string& key,
                             const std::vector<std::string>& texts, long long tokens_each) {
  std::filesystem::create_directories(dir / key);
  nlohmann::json tokens = nlohmann::json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::ofstream(dir / key / (std::to_string(i) + ".lean")) << texts[i];
    tokens.push_back(tokens_each);
  }
  std::ofstream(dir / key / "meta.json") << nlohmann::json{{"tokens", tokens}, {"model", "mock"}}.dump();
}

inline apollo::TheoremStatement statement() {
  apollo::TheoremStatement st;
  st.name = "uv";
  st.header = "import Mathlib\nimport Aesop\n\n";
  st.statement_text = "theorem uv (u v : ℝ) (hu : 0 < u) (hv : 0 < v) : 0 < u * v + u * u := by";
  return st;
}

constexpr int kPerGoal = 32;
constexpr long long kRootTokens = 100;
constexpr long long kSubTokens = 10;

inline void write(const std::filesystem::path& dir) {
  const std::string root =
      "  have h1 : 0 < u * v := by\n    nlinarith\n  have h2 : 0 < u * u := by\n    nlinarith\n  linarith\n";
  write_candidates(dir, "uv", std::vector<std::string>(kPerGoal, root), kRootTokens);
  std::vector<std::string> sub1(kPerGoal - 1, "  nlinarith [hu]\n"), sub2(kPerGoal - 1, "  nlinarith [hv]\n");
  sub1.push_back("  exact mul_pos hu hv\n");
  sub2.push_back("  exact mul_pos hu hu\n");
  write_candidates(dir, "uv_sub1", sub1, kSubTokens);
  write_candidates(dir, "uv_sub2", sub2, kSubTokens);
}

}  // namespace ledger_fixture
