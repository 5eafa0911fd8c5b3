#pragma once

// Ordered table of regex rewrites for Lean-3 leftovers and delimiter slips.
// Comments and string literals are masked out before any rule runs.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apollo/repl_client.hpp"

namespace apollo {

enum class RuleScope { WholeFile, PerLine };

struct RewriteRule {
  std::string id;
  std::string pattern;      // ECMAScript regex over UTF-8 bytes
  std::string replacement;  // `$1`-style template
  RuleScope scope = RuleScope::WholeFile;
  std::string description;

  friend bool operator==(const RewriteRule&, const RewriteRule&) = default;
};

class RefineError : public std::runtime_error {
 public:
  enum class Kind { RuleBudgetExceeded, BadRule };
  RefineError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct RefineResult {
  std::string text;
  std::vector<std::string> applied;  // ids of rules that changed the text, table order
};

inline constexpr int kMaxPassesPerRule = 100;
inline constexpr int kMaxSweeps = 3;

/// Throws RefineError(BadRule) on an empty id, duplicate id or a pattern
/// that does not compile.
void validate_rules(const std::vector<RewriteRule>& rules);

RefineResult refine(std::string_view source, const std::vector<RewriteRule>& rules);

/// One left-to-right pass of a single rule over the masked text.
std::string apply_rule_once(std::string_view source, const RewriteRule& rule);

std::vector<RewriteRule> default_ruleset();

// Rule files are JSON Lines: one {id, pattern, replacement, scope, description} per line.
std::string dump_rules(const std::vector<RewriteRule>& rules);
std::vector<RewriteRule> parse_rules(std::string_view text);
std::vector<RewriteRule> load_rules(const std::filesystem::path& path);
void save_rules(const std::filesystem::path& path, const std::vector<RewriteRule>& rules);

/// 1-based lines touched by at least one rule match in `source`.
std::vector<int> rule_match_lines(std::string_view source, const std::vector<RewriteRule>& rules);

/// Trigger heuristic: the initial compile failed and some error sits on a
/// line a rule would rewrite.
bool should_refine(std::string_view source, const CompileResult& initial, const std::vector<RewriteRule>& rules);

}  // namespace apollo
