#pragma once

// The ten-theorem mock suite: a simulated world, canned candidates per name,
// and a dataset file. Each item exercises one path through the repair loop.

#include <filesystem>
#include <map>
#include <string>

#include "apollo/harness.hpp"
#include "sim_lean.hpp"

namespace suite {

inline std::filesystem::path dataset_path() { return std::filesystem::path(APOLLO_FIXTURES) / "suite.jsonl"; }
inline std::filesystem::path world_path() { return std::filesystem::path(APOLLO_FIXTURES) / "worlds" / "suite.json"; }
inline std::filesystem::path llm_dir() { return std::filesystem::path(APOLLO_FIXTURES) / "llm_suite"; }

inline apollo::RepairConfig config(int r) {
  apollo::RepairConfig c;
  c.max_depth_r = r;
  c.k_per_goal = 4;
  return c;
}

/// Fresh backend and session per item, so items cannot see each other's state.
inline std::map<std::string, apollo::Outcome> run(const apollo::RepairConfig& config) {
  std::map<std::string, apollo::Outcome> out;
  const auto world = sim::load_world(world_path());
  for (const auto& item : apollo::load_dataset(dataset_path())) {
    apollo::MockBackend backend(llm_dir());
    sim::Session session(world);
    out.emplace(item.name, apollo::Orchestrator(config, backend).run(item.statement(), session));
  }
  return out;
}

}  // namespace suite
