#ifndef MIST_MANIFEST_HPP
#define MIST_MANIFEST_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mist {

struct RunManifest {
  std::string tool_version;
  std::string subcommand;
  std::map<std::string, std::string> options;
  std::map<std::string, std::string> input_hashes;  // path -> fnv1a-64 hex
  std::string started;
  std::string finished;
  std::vector<std::string> warnings;
  int exit_code = 0;
};

std::string fnv1a64_file_hex(const std::filesystem::path& path);
std::string utc_timestamp_now();

// Writes to a temp file in the same directory, then renames into place.
void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);

}  // namespace mist

#endif
