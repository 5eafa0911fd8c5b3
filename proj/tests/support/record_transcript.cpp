// Regenerates the recorded REPL transcript of the mathd_algebra_332 run from
// the simulator: record_transcript <out.json>

#include <iostream>

#include "apollo/orchestrator.hpp"
#include "sim_lean.hpp"
#include "worked_example.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: record_transcript <out.json>\n";
    return 2;
  }
  const sim::World world = sim::load_world(fixture::world_path());
  sim::Session sim(world);
  apollo::RecordingSession rec(sim, world.lean_version);
  apollo::MockBackend backend(fixture::llm_dir(), {.strict = true, .popping = true});
  apollo::RepairConfig config;
  config.max_depth_r = 1;
  const apollo::Orchestrator orchestrator(config, backend);
  const auto out = orchestrator.run(fixture::mathd_algebra_332(), rec);
  apollo::save_transcript(argv[1], rec.transcript());
  std::cout << apollo::to_string(out.status) << ", " << rec.transcript().size() << " exchanges\n";
  return out.status == apollo::OutcomeStatus::Proved ? 0 : 1;
}
