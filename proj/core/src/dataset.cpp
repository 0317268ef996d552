#include "dvu/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dvu/error.hpp"

namespace dvu {

void write_dataset(const std::filesystem::path& path, const std::vector<BoxSequence>& seqs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("write_dataset: cannot open " + path.string());
  const std::size_t T = seqs.empty() ? 0 : seqs.front().size();
  for (const auto& s : seqs) {
    if (s.size() != T) throw DataError("write_dataset: inconsistent sequence lengths");
  }
  out << "T=" << T << " count=" << seqs.size() << "\n";
  char line[128];
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (i) out << "\n";
    for (const Eigen::Vector4d& v : seqs[i]) {
      std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g\n", v[0], v[1], v[2], v[3]);
      out << line;
    }
  }
  if (!out) throw DataError("write_dataset: write failed: " + path.string());
}

std::vector<BoxSequence> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_dataset: cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError("read_dataset: empty file " + path.string());
  std::size_t T = 0, count = 0;
  if (std::sscanf(header.c_str(), "T=%zu count=%zu", &T, &count) != 2) {
    throw DataError("read_dataset: bad header '" + header + "' in " + path.string());
  }
  std::vector<BoxSequence> seqs;
  seqs.reserve(count);
  BoxSequence cur;
  std::string line;
  std::size_t line_no = 1;
  auto flush = [&]() {
    if (cur.empty()) return;
    if (cur.size() != T) {
      throw DataError("read_dataset: sequence " + std::to_string(seqs.size() + 1) + " has " +
                      std::to_string(cur.size()) + " frames, expected " + std::to_string(T));
    }
    seqs.push_back(std::move(cur));
    cur.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      flush();
      continue;
    }
    Eigen::Vector4d v;
    if (std::sscanf(line.c_str(), "%lf %lf %lf %lf", &v[0], &v[1], &v[2], &v[3]) != 4) {
      throw DataError("read_dataset: malformed line " + std::to_string(line_no) + " in " +
                      path.string());
    }
    cur.push_back(v);
  }
  flush();
  if (seqs.size() != count) {
    throw DataError("read_dataset: header count " + std::to_string(count) + " but found " +
                    std::to_string(seqs.size()) + " sequences");
  }
  return seqs;
}

}  // namespace dvu
