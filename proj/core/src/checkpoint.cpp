#include "dvu/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "dvu/error.hpp"
#include "dvu/version.hpp"

namespace dvu {

namespace {

constexpr char kMagic[8] = {'D', 'V', 'U', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

template <typename T>
void put(std::string& buf, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  buf.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > size_) throw DataError("checkpoint: truncated file");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }

  std::string get_bytes(std::size_t n) {
    if (pos_ + n > size_) throw DataError("checkpoint: truncated file");
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const srnn::SrnnParams& params,
                     const CheckpointMeta& meta) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(kCheckpointFormatVersion));

  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["dims"] = {{"box", srnn::kBoxDim}, {"latent", srnn::kLatentDim}, {"hidden", srnn::kHiddenDim}};
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  const std::string meta_str = j.dump();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(meta_str.size()));
  buf.append(meta_str);

  const auto named = params.named();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
    buf.append(name);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(tensor->rank()));
    for (std::size_t d : tensor->shape) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
    for (double v : tensor->data) put<double>(buf, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("checkpoint: write failed: " + path.string());
}

srnn::SrnnParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(bytes.data(), bytes.size());

  if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  const auto version = r.get<std::uint32_t>();
  if (version != static_cast<std::uint32_t>(kCheckpointFormatVersion)) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto meta_len = r.get<std::uint32_t>();
  const std::string meta_str = r.get_bytes(meta_len);
  CheckpointMeta meta;
  try {
    const nlohmann::json j = nlohmann::json::parse(meta_str);
    meta.format_version = j.value("format_version", 1);
    meta.epoch = j.value("epoch", 0);
    meta.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata JSON: ") + e.what());
  }
  if (meta_out) *meta_out = meta;

  srnn::SrnnParams params = srnn::SrnnParams::zeros();
  auto named = params.named();
  const auto count = r.get<std::uint32_t>();
  if (count != named.size()) {
    throw DataError("checkpoint: expected " + std::to_string(named.size()) + " arrays, found " +
                    std::to_string(count));
  }
  for (auto& [expected_name, tensor] : named) {
    const auto name_len = r.get<std::uint16_t>();
    const std::string name = r.get_bytes(name_len);
    if (name != expected_name) {
      throw DataError("checkpoint: expected array '" + expected_name + "', found '" + name + "'");
    }
    const auto ndim = r.get<std::uint8_t>();
    std::vector<std::size_t> shape;
    for (int d = 0; d < ndim; ++d) shape.push_back(r.get<std::uint32_t>());
    if (shape != tensor->shape) {
      throw DataError("checkpoint: shape mismatch for '" + name + "'");
    }
    for (double& v : tensor->data) v = r.get<double>();
  }
  return params;
}

}  // namespace dvu
