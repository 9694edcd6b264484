#include "ebim/manifest.hpp"

#include <fstream>
#include <iterator>

#include <zlib.h>

#include "ebim/error.hpp"

namespace ebim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ordered_json file_entry(const std::filesystem::path& p) {
  ordered_json e;
  e["path"] = p.string();
  std::error_code ec;
  if (std::filesystem::is_regular_file(p, ec)) {
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08x", file_crc32(p));
    e["bytes"] = std::filesystem::file_size(p);
    e["crc32"] = hex;
  } else if (std::filesystem::is_directory(p, ec)) {
    e["directory"] = true;
  }
  return e;
}

}  // namespace

std::uint32_t file_crc32(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

ordered_json to_json(const RunManifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["parameters"] = m.parameters;
  j["seeds"] = m.seeds;
  j["inputs"] = ordered_json::array();
  for (const auto& p : m.inputs) j["inputs"].push_back(file_entry(p));
  j["outputs"] = ordered_json::array();
  for (const auto& p : m.outputs) j["outputs"].push_back(file_entry(p));
  return j;
}

RunManifest manifest_from_json(const ordered_json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.tool_version = j.value("tool_version", std::string{});
  m.parameters = j.at("parameters");
  m.seeds = j.value("seeds", ordered_json::object());
  for (const auto& e : j.at("inputs")) m.inputs.emplace_back(e.at("path").get<std::string>());
  for (const auto& e : j.at("outputs")) m.outputs.emplace_back(e.at("path").get<std::string>());
  return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return std::filesystem::path(output.string() + ".manifest.json");
}

std::filesystem::path write_manifest(const RunManifest& m) {
  if (m.outputs.empty()) throw Error(Errc::invalid_argument, "manifest needs at least one output");
  const auto path = manifest_path(m.outputs.front());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
  return path;
}

RunManifest read_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(ordered_json::parse(read_all(path)));
  } catch (const json::exception& e) {
    throw Error(Errc::format, path.string() + ": " + e.what());
  }
}

}  // namespace ebim
