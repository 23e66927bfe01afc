#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace slate::cli {

// Record of one CLI invocation. Written when the command starts (status
// "running") and again when it ends.
struct RunManifest {
  std::filesystem::path path;
  std::string command;
  std::vector<std::string> argv;  // arguments after the program name
  std::string version;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  nlohmann::json config = nlohmann::json::object();  // resolved "channel", "model", "train", ...
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  std::string status = "running";
  int exit_code = 0;
  std::string error;
  std::string started_at;
  std::string finished_at;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  // Atomic replace of `path`. No-op when the path is empty.
  void write() const;
};

RunManifest read_manifest(const std::filesystem::path& path);

// UTC, ISO 8601 with a trailing Z.
std::string utc_timestamp();

// Sibling temporary file plus rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace slate::cli
