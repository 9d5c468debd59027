#include "dvk/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace dvk {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'K', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF64LE = 1;

void put_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("DVKT: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64_le(std::ostream& os, double v) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

Shape read_header(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("DVKT: file too short for magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("DVKT: bad magic");

  unsigned char meta[3];
  if (!is.read(reinterpret_cast<char*>(meta), 3)) throw FormatError("DVKT: truncated header");
  if (meta[0] != kVersion)
    throw FormatError("DVKT: unsupported format version " + std::to_string(meta[0]));
  if (meta[1] != kDtypeF64LE)
    throw FormatError("DVKT: unsupported dtype code " + std::to_string(meta[1]));
  const unsigned rank = meta[2];
  if (rank < 1 || rank > 4)
    throw FormatError("DVKT: unsupported rank " + std::to_string(rank));

  Shape shape(rank);
  for (unsigned i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32_le(is);
    if (d == 0) throw FormatError("DVKT: zero dimension");
    shape[i] = d;
  }
  // Guard the element-count product before allocating.
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (n > std::numeric_limits<std::size_t>::max() / d / 8)
      throw FormatError("DVKT: dimension overflow " + shape_to_string(shape));
    n *= d;
  }
  return shape;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  const unsigned char meta[3] = {kVersion, kDtypeF64LE, static_cast<unsigned char>(t.rank())};
  os.write(reinterpret_cast<const char*>(meta), 3);
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw FormatError("DVKT: dimension too large for u32");
    put_u32_le(os, static_cast<std::uint32_t>(d));
  }
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.raw()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) put_f64_le(os, t[i]);
  }
  if (!os) throw FormatError("DVKT: write failed");
}

Tensor read_tensor(std::istream& is) {
  const Shape shape = read_header(is);
  std::vector<double> data(shape_product(shape));
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw FormatError("DVKT: truncated payload");
  } else {
    for (double& v : data) {
      unsigned char b[8];
      if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("DVKT: truncated payload");
      std::uint64_t u = 0;
      for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      v = std::bit_cast<double>(u);
    }
  }
  return Tensor(shape, std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path.string());
  write_tensor(os, t);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open for reading: " + path.string());
  return read_tensor(is);
}

Shape read_tensor_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open for reading: " + path.string());
  return read_header(is);
}

}  // namespace dvk
