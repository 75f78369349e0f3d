#pragma once

// Binary image and map formats:
//   PPM "P6" maxval 255   -> 3-channel MultiChannelGrid in [0, 1]
//   PGM "P5" maxval 255   -> Grid2D in [0, 1]
//   UMAP                  -> "UMAP" | u32 height | u32 width | u32 reserved (0)
//                            followed by height*width little-endian f32, row-major
//   UVOL                  -> "UVOL" | u32 depth | u32 height | u32 width
//                            followed by depth*height*width little-endian f32

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "uqseg/error.hpp"
#include "uqseg/grid.hpp"

namespace uqseg {

namespace io_detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) | (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

inline unsigned char to_byte(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

struct NetpbmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t payload_offset = 0;
};

// Magic, width, height, maxval separated by whitespace (with '#' comments),
// then exactly one whitespace byte before the payload.
inline NetpbmHeader parse_netpbm(const std::vector<unsigned char>& bytes, const char* magic,
                                 const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw FormatError(name + ": expected " + magic + " header");
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    for (;;) {
      if (pos >= bytes.size()) throw FormatError(name + ": truncated header");
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (!std::isdigit(bytes[pos])) throw FormatError(name + ": malformed header");
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > (1u << 24)) throw FormatError(name + ": header value too large");
      ++pos;
    }
    return value;
  };
  NetpbmHeader h;
  h.width = next_number();
  h.height = next_number();
  const std::size_t maxval = next_number();
  if (maxval != 255) throw FormatError(name + ": maxval must be 255, got " + std::to_string(maxval));
  if (h.width == 0 || h.height == 0) throw FormatError(name + ": zero dimension");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(name + ": malformed header");
  h.payload_offset = pos + 1;
  return h;
}

}  // namespace io_detail

inline MultiChannelGrid read_ppm(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_bytes(path);
  const auto h = io_detail::parse_netpbm(bytes, "P6", path.string());
  const std::size_t n = h.width * h.height;
  if (bytes.size() < h.payload_offset + 3 * n) throw FormatError(path.string() + ": truncated payload");
  MultiChannelGrid img(3, h.height, h.width);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      img.channel(c)[i] = static_cast<float>(bytes[h.payload_offset + 3 * i + c]) / 255.0f;
    }
  }
  return img;
}

inline void write_ppm(const MultiChannelGrid& img, const std::filesystem::path& path) {
  detail::require(img.channels() == 3, "write_ppm: expected 3 channels");
  std::string header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  const std::size_t n = img.width() * img.height();
  bytes.reserve(bytes.size() + 3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) bytes.push_back(io_detail::to_byte(img.channel(c)[i]));
  }
  io_detail::write_bytes(path, bytes);
}

/// Reads a P5 graymap. With binary = true every byte must be 0 or 255 and the
/// result holds only 0.0 / 1.0.
inline Grid2D read_pgm(const std::filesystem::path& path, bool binary = false) {
  const auto bytes = io_detail::read_bytes(path);
  const auto h = io_detail::parse_netpbm(bytes, "P5", path.string());
  const std::size_t n = h.width * h.height;
  if (bytes.size() < h.payload_offset + n) throw FormatError(path.string() + ": truncated payload");
  Grid2D g(h.height, h.width);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char b = bytes[h.payload_offset + i];
    if (binary && b != 0 && b != 255) {
      throw FormatError(path.string() + ": non-binary value " + std::to_string(b) + " in mask");
    }
    g[i] = static_cast<float>(b) / 255.0f;
  }
  return g;
}

inline void write_pgm(const Grid2D& g, const std::filesystem::path& path) {
  std::string header = "P5\n" + std::to_string(g.width()) + " " + std::to_string(g.height()) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + g.size());
  for (float v : g) bytes.push_back(io_detail::to_byte(v));
  io_detail::write_bytes(path, bytes);
}

inline std::vector<unsigned char> encode_f32map(const Grid2D& g) {
  std::vector<unsigned char> bytes{'U', 'M', 'A', 'P'};
  io_detail::put_u32(bytes, static_cast<std::uint32_t>(g.height()));
  io_detail::put_u32(bytes, static_cast<std::uint32_t>(g.width()));
  io_detail::put_u32(bytes, 0);
  bytes.reserve(16 + 4 * g.size());
  for (float v : g) io_detail::put_f32(bytes, v);
  return bytes;
}

inline Grid2D decode_f32map(const std::vector<unsigned char>& bytes, const std::string& name = "UMAP") {
  if (bytes.size() < 16 || bytes[0] != 'U' || bytes[1] != 'M' || bytes[2] != 'A' || bytes[3] != 'P') {
    throw FormatError(name + ": bad magic");
  }
  const std::size_t h = io_detail::get_u32(bytes.data() + 4);
  const std::size_t w = io_detail::get_u32(bytes.data() + 8);
  if (bytes.size() != 16 + 4 * h * w) {
    throw FormatError(name + ": size mismatch (" + std::to_string(bytes.size()) + " bytes for " +
                      std::to_string(h) + "x" + std::to_string(w) + ")");
  }
  Grid2D g(h, w);
  for (std::size_t i = 0; i < h * w; ++i) g[i] = io_detail::get_f32(bytes.data() + 16 + 4 * i);
  return g;
}

inline void write_f32map(const Grid2D& g, const std::filesystem::path& path) {
  io_detail::write_bytes(path, encode_f32map(g));
}

inline Grid2D read_f32map(const std::filesystem::path& path) {
  return decode_f32map(io_detail::read_bytes(path), path.string());
}

inline void write_volume(const Volume3D& v, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes{'U', 'V', 'O', 'L'};
  io_detail::put_u32(bytes, static_cast<std::uint32_t>(v.depth()));
  io_detail::put_u32(bytes, static_cast<std::uint32_t>(v.height()));
  io_detail::put_u32(bytes, static_cast<std::uint32_t>(v.width()));
  for (float x : v.values()) io_detail::put_f32(bytes, x);
  io_detail::write_bytes(path, bytes);
}

inline Volume3D read_volume(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_bytes(path);
  if (bytes.size() < 16 || bytes[0] != 'U' || bytes[1] != 'V' || bytes[2] != 'O' || bytes[3] != 'L') {
    throw FormatError(path.string() + ": bad magic");
  }
  const std::size_t d = io_detail::get_u32(bytes.data() + 4);
  const std::size_t h = io_detail::get_u32(bytes.data() + 8);
  const std::size_t w = io_detail::get_u32(bytes.data() + 12);
  if (bytes.size() != 16 + 4 * d * h * w) throw FormatError(path.string() + ": size mismatch");
  std::vector<float> data(d * h * w);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = io_detail::get_f32(bytes.data() + 16 + 4 * i);
  return {d, h, w, std::move(data)};
}

}  // namespace uqseg
