#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ebim {

inline constexpr const char* kToolVersion = "0.1.0";

// Record of one CLI run, written next to its primary output.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string tool_version = kToolVersion;
};

nlohmann::ordered_json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::ordered_json& j);

// "<output>.manifest.json"
std::filesystem::path manifest_path(const std::filesystem::path& output);

// Writes the manifest beside outputs.front(); inputs and outputs are listed
// with their size and CRC-32. Returns the manifest path.
std::filesystem::path write_manifest(const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace ebim
