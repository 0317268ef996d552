#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

namespace dvu {

using BoxSequence = std::vector<Eigen::Vector4d>;

// Text dataset of fixed-length box sequences. First line is a header
// "T=<frames> count=<sequences>"; each sequence is T lines of "l t r b"
// (9 significant digits), sequences separated by blank lines.
void write_dataset(const std::filesystem::path& path, const std::vector<BoxSequence>& seqs);
std::vector<BoxSequence> read_dataset(const std::filesystem::path& path);

}  // namespace dvu
