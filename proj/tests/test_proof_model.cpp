#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "apollo/proof_model.hpp"
#include "doctest.h"

using namespace apollo;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> corpus() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fs::path(APOLLO_FIXTURES) / "corpus"))
    if (e.path().extension() == ".lean") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

const char* kHaveScript =
    "theorem t (x : ℝ) (h : x = 1) : x + 1 = 2 := by\n"
    "  have h2 : x + 1 = 1 + 1 := by\n"
    "    rw [h]\n"
    "    simp\n"
    "    ring\n"
    "  linarith\n";

}  // namespace

TEST_CASE("single tactic line") {
  const auto s = parse_script("theorem t : 1 = 1 := by rfl");
  CHECK(s.root.children.size() == 1);
  CHECK(s.root.children[0].kind == BlockKind::TacticLine);
  CHECK(count_sorries(s) == 0);
  CHECK(s.statement.name == "t");
  CHECK(s.statement.statement_text == "theorem t : 1 = 1 := by");
  CHECK(serialize(s) == "theorem t : 1 = 1 := by rfl");
}

TEST_CASE("have block structure") {
  const auto s = parse_script(kHaveScript);
  REQUIRE(s.root.children.size() == 2);
  const auto& hv = s.root.children[0];
  CHECK(hv.kind == BlockKind::HaveBlock);
  CHECK(hv.children.size() == 3);
  CHECK(hv.span.start_line == 2);
  CHECK(hv.span.end_line == 5);
  CHECK(has_stated_goal(hv));
  CHECK(tree_invariants_hold(s));
  CHECK(proof_length(s) == 5);
}

TEST_CASE("remove_block on a three-line have drops four lines") {
  const auto s = parse_script(kHaveScript);
  const auto before = s.root.subtree_code_lines();
  const auto after = remove_block(s, s.root.children[0].id);
  CHECK(before - after.root.subtree_code_lines() == 4);
  CHECK(serialize(after) == "theorem t (x : ℝ) (h : x = 1) : x + 1 = 2 := by\n  linarith\n");
  CHECK(serialize(s) == kHaveScript);  // input untouched
}

TEST_CASE("replace_block_with_sorry keeps the stated goal") {
  const auto s = parse_script(kHaveScript);
  const auto r = replace_block_with_sorry(s, s.root.children[0].id);
  CHECK(serialize(r) ==
        "theorem t (x : ℝ) (h : x = 1) : x + 1 = 2 := by\n"
        "  have h2 : x + 1 = 1 + 1 := by sorry\n"
        "  linarith\n");
  CHECK(count_sorries(r) == 1);
  CHECK(tree_invariants_hold(r));
}

TEST_CASE("remove_line, insert_sorry_after, insert_sorry_at_end") {
  const auto s = parse_script(kHaveScript);
  const int simp_id = s.root.children[0].children[1].id;
  const auto r = remove_line(s, find_block(s, simp_id)->span);
  CHECK(r.root.children[0].children.size() == 2);
  CHECK(serialize(r).find("simp") == std::string::npos);

  const auto ins = insert_sorry_after(s, s.root.children[0].children[0].span);
  CHECK(count_sorries(ins) == 1);
  CHECK(ins.root.children[0].children.size() == 4);

  const auto end = insert_sorry_at_end(s, s.root.children[0].id);
  CHECK(serialize(end).find("    ring\n    sorry\n") != std::string::npos);

  const auto inl = parse_script("theorem t (p : Prop) : p := by\n  have h : p := by simp\n  exact h\n");
  const auto split = insert_sorry_at_end(inl, inl.root.children[0].id);
  CHECK(serialize(split) == "theorem t (p : Prop) : p := by\n  have h : p := by\n    simp\n    sorry\n  exact h\n");
}

TEST_CASE("edits reject unknown nodes") {
  const auto s = parse_script(kHaveScript);
  CHECK_THROWS_AS(remove_block(s, 999), EditError);
  CHECK_THROWS_AS(replace_block_with_sorry(s, 999), EditError);
  CHECK_THROWS_AS(replace_sorry(s, 0, "simp"), EditError);
}

TEST_CASE("sorry counting ignores comments") {
  const auto s = parse_script("theorem t : True := by\n  -- sorry\n  trivial\n");
  CHECK(count_sorries(s) == 0);
  const auto two = parse_script("theorem t : True ∧ True := by\n  constructor\n  · sorry\n  · admit /- sorry -/\n");
  CHECK(count_sorries(two) == 2);
  const auto pos = sorry_positions(two);
  REQUIRE(pos.size() == 2);
  CHECK(pos[0] == SourcePos{3, 4});
  CHECK(pos[1] == SourcePos{4, 4});
}

TEST_CASE("parse errors") {
  try {
    parse_script("theorem t : True := by\n\ttrivial\n");
    FAIL("expected TabIndent");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseErrorKind::TabIndent);
  }
  try {
    parse_script("theorem t : True := by\n  /- open\n");
    FAIL("expected UnterminatedComment");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseErrorKind::UnterminatedComment);
  }
  try {
    parse_script("theorem t : True := trivial\n");
    FAIL("expected NoProofBody");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseErrorKind::NoProofBody);
  }
  CHECK_THROWS_AS(parse_script("theorem t : P from by tac"), ParseError);
}

TEST_CASE("statement fields") {
  const std::string src =
      "import Mathlib\n\n/-- informal -/\ntheorem foo (x : ℕ) :\n    x = x := by\n  rfl\n";
  const auto st = parse_statement(src);
  CHECK(st.name == "foo");
  CHECK(st.header == "import Mathlib\n\n");
  CHECK(st.informal_prefix == "/-- informal -/\n");
  CHECK(st.statement_text == "theorem foo (x : ℕ) :\n    x = x := by");
  const auto s = parse_script(src);
  CHECK(s.decl_last_line() == 5);
}

TEST_CASE("replace_sorry_with_body inlines a multi-line proof") {
  const auto s = parse_script(
      "theorem t (x : ℝ) : x = x := by\n  have h : x = x := by sorry\n  exact h\n");
  const auto r = replace_sorry_with_body(s, 0, "simp\nrfl");
  CHECK(serialize(r) == "theorem t (x : ℝ) : x = x := by\n  have h : x = x := by\n    simp\n    rfl\n  exact h\n");
  const auto line = parse_script("theorem t (x : ℝ) : x = x := by\n  sorry\n");
  CHECK(serialize(replace_sorry_with_body(line, 0, "have a : 1 = 1 := by\n  rfl\nrfl")) ==
        "theorem t (x : ℝ) : x = x := by\n  have a : 1 = 1 := by\n    rfl\n  rfl\n");
  CHECK(serialize(replace_sorry(line, 0, "rfl")) == "theorem t (x : ℝ) : x = x := by\n  rfl\n");
}

TEST_CASE("corpus round-trip and invariants") {
  const auto files = corpus();
  CHECK(files.size() >= 50);
  for (const auto& f : files) {
    CAPTURE(f.filename().string());
    const std::string src = slurp(f);
    const auto s = parse_script(src);
    CHECK(normalize_trailing_whitespace(serialize(s)) == normalize_trailing_whitespace(src));
    CHECK(serialize(s) == serialize(parse_script(serialize(s))));
    std::string why;
    CHECK_MESSAGE(tree_invariants_hold(s, &why), why);
    CHECK(count_sorries(s) == count_sorry_tokens(src.substr(s.header_text.size())));
  }
}

TEST_CASE("property: edits keep invariants and only touch their target") {
  std::mt19937 rng(7);
  for (const auto& f : corpus()) {
    const auto s = parse_script(slurp(f));
    auto nodes = preorder(s);
    nodes.erase(nodes.begin());
    if (nodes.empty()) continue;
    CAPTURE(f.filename().string());
    for (int trial = 0; trial < 4; ++trial) {
      const ProofBlock* n = nodes[rng() % nodes.size()];
      const auto removed = remove_block(s, n->id);
      std::string why;
      CHECK_MESSAGE(tree_invariants_hold(removed, &why), why);
      // lines before the removed node are unchanged
      const auto a = split_lines(serialize(s));
      const auto b = split_lines(serialize(removed));
      for (int l = 1; l < n->span.start_line; ++l) CHECK(a[l - 1] == b[l - 1]);
      // and so are the lines after it
      const int tail = static_cast<int>(a.size()) - n->span.end_line;
      for (int k = 1; k <= tail && k <= static_cast<int>(b.size()); ++k) {
        const auto& la = a[a.size() - static_cast<std::size_t>(k)];
        const auto& lb = b[b.size() - static_cast<std::size_t>(k)];
        if (s.root.subtree_nodes() > n->subtree_nodes() + 1) CHECK(la == lb);
      }
      const auto replaced = replace_block_with_sorry(s, n->id);
      CHECK(tree_invariants_hold(replaced));
      CHECK(count_sorries(replaced) >= 1);
    }
  }
}
