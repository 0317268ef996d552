#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dvu/srnn.hpp"

namespace dvu {

struct CheckpointMeta {
  int format_version = 1;
  int epoch = 0;
  std::uint64_t seed = 0;
};

// Versioned binary container of named f64 arrays, little-endian payload.
// Layout (all integers little-endian):
//   8 bytes  magic "DVUCKPT\0"
//   u32      format version
//   u32      metadata length, followed by that many bytes of JSON
//   u32      array count
//   per array: u16 name length + name bytes, u8 ndim, u32 dims[ndim],
//              f64 data[prod(dims)] row-major
// The array names and shapes are the fixed SRNN schema; load rejects any
// mismatch.
void save_checkpoint(const std::filesystem::path& path, const srnn::SrnnParams& params,
                     const CheckpointMeta& meta);

srnn::SrnnParams load_checkpoint(const std::filesystem::path& path,
                                 CheckpointMeta* meta_out = nullptr);

}  // namespace dvu
