#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dvu {

// Reproducibility record emitted by every CLI run: re-running the stored argv
// (with a fresh --out) must reproduce all artifacts byte-identically.
struct RunManifest {
  std::string tool_version;
  int checkpoint_format_version = 0;
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> config;        // flat flag echo
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;  // path -> fnv1a64 hex
  double wall_s = 0.0;
  std::vector<std::string> outputs;                 // relative to the out dir
};

// FNV-1a 64-bit over the file bytes.
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hash_file_hex(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace dvu
