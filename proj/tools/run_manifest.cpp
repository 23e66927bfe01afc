#include "run_manifest.hpp"

#include <cerrno>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <system_error>

#include "slate/errors.hpp"

namespace slate::cli {

nlohmann::json RunManifest::to_json() const {
  return {{"format", "slate-run-manifest"},
          {"formatVersion", 1},
          {"command", command},
          {"argv", argv},
          {"version", version},
          {"seed", seed},
          {"threads", threads},
          {"config", config},
          {"inputs", inputs},
          {"outputs", outputs},
          {"status", status},
          {"exitCode", exit_code},
          {"error", error},
          {"startedAt", started_at},
          {"finishedAt", finished_at}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "slate-run-manifest") {
    throw FormatError("not a run manifest", 0);
  }
  if (j.value("formatVersion", 0) != 1) {
    throw FormatError("unsupported run manifest version " + j.value("formatVersion", nlohmann::json()).dump(), 0);
  }
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.version = j.value("version", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.threads = j.value("threads", 1u);
    m.config = j.value("config", nlohmann::json::object());
    m.inputs = j.value("inputs", nlohmann::json::object());
    m.outputs = j.value("outputs", nlohmann::json::object());
    m.status = j.value("status", "");
    m.exit_code = j.value("exitCode", 0);
    m.error = j.value("error", "");
    m.started_at = j.value("startedAt", "");
    m.finished_at = j.value("finishedAt", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run manifest: ") + e.what(), 0);
  }
  return m;
}

void RunManifest::write() const {
  if (path.empty()) return;
  write_text_atomic(path, to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
  return RunManifest::from_json(j);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::system_error(errno, std::generic_category(), "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::system_error(errno, std::generic_category(), "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace slate::cli
