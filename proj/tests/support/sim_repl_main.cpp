// Speaks the REPL wire protocol over stdin/stdout using the simulator.
// Markers inside a command: `-- sim:sleep N` sleeps N seconds before
// answering, `-- sim:crash` exits without answering.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "sim_lean.hpp"

int main(int argc, char** argv) {
  sim::World world;
  if (argc > 1) world = sim::load_world(argv[1]);
  sim::Lean lean(world);
  std::string block, line;
  auto answer = [&](const std::string& text) {
    if (apollo::trim(text).empty()) return;
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      std::cout << nlohmann::json{{"message", std::string("Could not parse JSON: ") + e.what()}}.dump() << "\n\n"
                << std::flush;
      return;
    }
    const std::string cmd = req.value("cmd", std::string());
    if (cmd.find("-- sim:crash") != std::string::npos) std::_Exit(3);
    if (const auto p = cmd.find("-- sim:sleep "); p != std::string::npos) {
      std::this_thread::sleep_for(std::chrono::duration<double>(std::stod(cmd.substr(p + 13))));
    }
    std::cout << lean.run(cmd).dump() << "\n\n" << std::flush;
  };
  while (std::getline(std::cin, line)) {
    if (apollo::trim(line).empty()) {
      answer(block);
      block.clear();
    } else {
      block += line + "\n";
    }
  }
  answer(block);
  return 0;
}
