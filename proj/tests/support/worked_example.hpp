#pragma once

// Paths and statement for the mathd_algebra_332 walk-through fixture.

#include <filesystem>
#include <string>

#include "apollo/proof_model.hpp"

namespace fixture {

inline std::filesystem::path root() { return APOLLO_FIXTURES; }
inline std::filesystem::path llm_dir() { return root() / "llm"; }
inline std::filesystem::path world_path() { return root() / "worlds" / "mathd_algebra_332.json"; }
inline std::filesystem::path transcript_path() { return root() / "transcripts" / "mathd_algebra_332.json"; }

inline const char* kHeader =
    "import Mathlib\nimport Aesop\n\nset_option maxHeartbeats 400000\n\nopen BigOperators Real Nat Topology Rat\n\n";

inline apollo::TheoremStatement mathd_algebra_332() {
  apollo::TheoremStatement st;
  st.name = "mathd_algebra_332";
  st.header = kHeader;
  st.statement_text =
      "theorem mathd_algebra_332 (x y : ℝ) (h₀ : (x + y) / 2 = 7) (h₁ : Real.sqrt (x * y) = Real.sqrt 19) : "
      "x ^ 2 + y ^ 2 = 158 := by";
  return st;
}

}  // namespace fixture
