#pragma once

/**
 * Run manifest: one JSON file written atomically at the end of a CLI run,
 * recording the command, config snapshot, seed, inputs, outputs and summary
 * metrics. Every output file named in the manifest must exist when it is
 * written.
 */

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dacforge/common.hpp"

namespace dacforge::manifest {

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  uint64_t seed = 0;
  std::string corpus_path;
  std::string backend;
  std::vector<std::string> outputs;
  std::string started_at;
  std::string finished_at;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();

  void write_atomic(const std::filesystem::path& path) const {
    for (const auto& out : outputs) {
      if (!std::filesystem::exists(out))
        throw std::runtime_error("manifest names missing output file: " + out);
    }
    nlohmann::ordered_json j;
    j["command"] = command;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["seed"] = seed;
    j["corpus"] = corpus_path;
    j["backend"] = backend;
    j["config"] = config;
    j["outputs"] = outputs;
    j["summary"] = summary;
    write_file_atomic(path, j.dump(2) + "\n");
  }
};

}  // namespace dacforge::manifest
