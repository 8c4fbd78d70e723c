#include "awf/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace awf {

namespace {

// PNG container with a stored-block (uncompressed) zlib stream; no external
// compression dependency needed for diagnostic dumps.

std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0xFFFFFFFFu) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc;
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t byte : data) {
    a = (a + byte) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, crc32(body.data(), body.size()) ^ 0xFFFFFFFFu);
}

std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t pos = 0;
  do {
    const std::size_t chunk = std::min<std::size_t>(65535, raw.size() - pos);
    const bool final = (pos + chunk == raw.size());
    z.push_back(final ? 0x01 : 0x00);  // BFINAL + stored block type
    z.push_back(static_cast<std::uint8_t>(chunk & 0xFF));
    z.push_back(static_cast<std::uint8_t>(chunk >> 8));
    z.push_back(static_cast<std::uint8_t>(~chunk & 0xFF));
    z.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
             raw.begin() + static_cast<std::ptrdiff_t>(pos + chunk));
    pos += chunk;
  } while (pos < raw.size());
  put_be32(z, adler32(raw));
  return z;
}

void write_png(const std::string& path, Dim width, Dim height, int bit_depth, int color_type,
               const std::vector<std::uint8_t>& scanlines) {
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
  ihdr.push_back(static_cast<std::uint8_t>(color_type));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", zlib_stored(scanlines));
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("write failed for '" + path + "'");
}

}  // namespace

void write_png_rgb8(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("write_png_rgb8 expects [3,H,W]");
  const Dim H = img.dim(1), W = img.dim(2);
  std::vector<std::uint8_t> lines;
  lines.reserve(static_cast<std::size_t>(H * (1 + 3 * W)));
  for (Dim i = 0; i < H; ++i) {
    lines.push_back(0);  // filter: none
    for (Dim j = 0; j < W; ++j)
      for (Dim c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at3(c, i, j), 0.0, 1.0);
        lines.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  }
  write_png(path, W, H, 8, 2, lines);
}

void write_png_gray16(const std::string& path, const Tensor& img, double scale) {
  if (img.rank() != 2) throw std::invalid_argument("write_png_gray16 expects [H,W]");
  if (!(scale > 0.0)) throw std::invalid_argument("write_png_gray16: scale must be positive");
  const Dim H = img.dim(0), W = img.dim(1);
  std::vector<std::uint8_t> lines;
  lines.reserve(static_cast<std::size_t>(H * (1 + 2 * W)));
  for (Dim i = 0; i < H; ++i) {
    lines.push_back(0);
    for (Dim j = 0; j < W; ++j) {
      const double v = std::clamp(img.at2(i, j) / scale, 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      lines.push_back(static_cast<std::uint8_t>(q >> 8));  // PNG samples are big-endian
      lines.push_back(static_cast<std::uint8_t>(q & 0xFF));
    }
  }
  write_png(path, W, H, 16, 0, lines);
}

void write_range_png(const std::string& path, const RangeImage& ri) {
  write_png_gray16(path, ri.range, 120.0);
}

}  // namespace awf
