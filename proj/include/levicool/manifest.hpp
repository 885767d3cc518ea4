#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levicool/config.hpp"
#include "levicool/io.hpp"

namespace levicool {

inline constexpr const char *tool_version = "0.3.0";

/// Record written next to every output set.
struct RunManifest {
  std::string command;
  std::string command_line;
  std::string config_hash; // empty when the command ran without a config
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return {{"tool", "levicool"},
            {"version", tool_version},
            {"command", command},
            {"command_line", command_line},
            {"config_hash", config_hash},
            {"seed", seed},
            {"threads", threads},
            {"outputs", outputs},
            {"warnings", warnings}};
  }
};

inline void write_manifest(OutputSet &out, RunManifest m) {
  m.outputs = out.files();
  m.outputs.push_back("manifest.json");
  out.write_json("manifest.json", m.to_json());
}

} // namespace levicool
