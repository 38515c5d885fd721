#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace certipose {

/// Git blob object id: SHA-1 of "blob <size>\0" followed by the bytes, hex encoded.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::string& path);

/// Record of one CLI run, written next to its outputs.
struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;  ///< path -> content hash
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;

  std::string to_json() const;
};

/// Writes the manifest as JSON via a temporary file and rename.
void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace certipose
