#include "lgnn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace lgnn {

namespace {

constexpr char kMagic[8] = {'L', 'G', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const ParamMap& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_le<uint32_t>(os, kVersion);
  write_le<uint64_t>(os, params.size());
  for (const auto& [name, t] : params) {
    write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) write_le<uint64_t>(os, static_cast<uint64_t>(d));
    for (double v : t.data()) write_le<double>(os, v);
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ParamMap load_checkpoint(const std::filesystem::path& path, bool requires_grad) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  const uint32_t version = read_le<uint32_t>(is);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const uint64_t count = read_le<uint64_t>(is);
  ParamMap params;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_le<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_le<uint32_t>(is);
    std::vector<int64_t> shape(ndim);
    int64_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int64_t>(read_le<uint64_t>(is));
      n *= d;
    }
    std::vector<double> values(static_cast<size_t>(n));
    for (auto& v : values) v = read_le<double>(is);
    if (!is) throw DataError("truncated checkpoint: " + path.string());
    params.emplace(std::move(name),
                   Tensor::from(std::move(shape), std::move(values), requires_grad));
  }
  return params;
}

}  // namespace lgnn
