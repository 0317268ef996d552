#include "dvu/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "dvu/error.hpp"

namespace dvu {

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hash_file: cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string hash_file_hex(const std::filesystem::path& path) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash_file(path)));
  return buf;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["checkpoint_format_version"] = m.checkpoint_format_version;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["input_hashes"] = m.input_hashes;
  j["wall_s"] = m.wall_s;
  j["outputs"] = m.outputs;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest JSON: " + std::string(e.what()));
  }
  RunManifest m;
  m.tool_version = j.value("tool_version", "");
  m.checkpoint_format_version = j.value("checkpoint_format_version", 0);
  m.command = j.value("command", "");
  m.argv = j.value("argv", std::vector<std::string>{});
  m.config = j.value("config", std::map<std::string, std::string>{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.input_hashes = j.value("input_hashes", std::map<std::string, std::string>{});
  m.wall_s = j.value("wall_s", 0.0);
  m.outputs = j.value("outputs", std::vector<std::string>{});
  return m;
}

}  // namespace dvu
