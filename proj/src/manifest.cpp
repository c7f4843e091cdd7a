#include "mist/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "mist/errors.hpp"
#include "mist/nifti.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mist {

std::string fnv1a64_file_hex(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = nifti::read_file_bytes(path);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& m, const fs::path& path) {
  json j;
  j["tool_version"] = m.tool_version;
  j["subcommand"] = m.subcommand;
  j["options"] = m.options;
  j["input_hashes"] = m.input_hashes;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["warnings"] = m.warnings;
  j["exit_code"] = m.exit_code;

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out)
      throw Error(ErrorCode::IoError, "cannot open " + tmp.string());
    out << j.dump(2) << "\n";
    if (!out)
      throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace mist
