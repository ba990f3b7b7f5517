#include "cubewall/image.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

namespace cubewall {

namespace {

void put_u32_be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(Bytes& out, const char type[4], std::span<const std::uint8_t> data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  auto type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

Bytes zlib_compress(std::span<const std::uint8_t> raw) {
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  Bytes out(len);
  if (compress2(out.data(), &len, raw.data(), static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
    throw std::runtime_error("zlib compression failed");
  out.resize(len);
  return out;
}

Bytes encode_png_raw(int width, int height, int channels, std::uint8_t colour_type,
                     std::span<const std::uint8_t> pixels) {
  if (width <= 0 || height <= 0) throw ArgumentError("PNG needs a non-empty image");
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  if (pixels.size() != stride * height) throw ArgumentError("pixel buffer does not match PNG dimensions");

  Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  Bytes ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {8, colour_type, 0, 0, 0});
  put_chunk(out, "IHDR", ihdr);

  Bytes filtered;
  filtered.reserve((stride + 1) * height);
  for (int y = 0; y < height; ++y) {
    filtered.push_back(0);
    auto row = pixels.subspan(static_cast<std::size_t>(y) * stride, stride);
    filtered.insert(filtered.end(), row.begin(), row.end());
  }
  put_chunk(out, "IDAT", zlib_compress(filtered));
  put_chunk(out, "IEND", {});
  return out;
}

// 5x7 glyphs, one 5-bit row per entry, MSB on the left.
struct Glyph {
  char ch;
  std::array<std::uint8_t, 7> rows;
};

constexpr Glyph kFont[] = {
    {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
    {'3', {0b11110, 0b00001, 0b00001, 0b01110, 0b00001, 0b00001, 0b11110}},
    {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
    {'A', {0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {'B', {0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110}},
    {'C', {0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110}},
    {'D', {0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100}},
    {'E', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111}},
    {'F', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000}},
    {'G', {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111}},
    {'H', {0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
    {'I', {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'J', {0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100}},
    {'K', {0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001}},
    {'L', {0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111}},
    {'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
    {'N', {0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001}},
    {'O', {0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {'P', {0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000}},
    {'Q', {0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101}},
    {'R', {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001}},
    {'S', {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110}},
    {'T', {0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100}},
    {'U', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
    {'V', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
    {'W', {0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010}},
    {'X', {0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001}},
    {'Y', {0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100}},
    {'Z', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111}},
    {'-', {0, 0, 0, 0b11111, 0, 0, 0}},
    {'_', {0, 0, 0, 0, 0, 0, 0b11111}},
    {'.', {0, 0, 0, 0, 0, 0b01100, 0b01100}},
    {':', {0, 0b01100, 0b01100, 0, 0b01100, 0b01100, 0}},
    {'/', {0b00001, 0b00010, 0b00010, 0b00100, 0b01000, 0b01000, 0b10000}},
    {' ', {0, 0, 0, 0, 0, 0, 0}},
};

constexpr std::array<std::uint8_t, 7> kUnknownGlyph = {0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001,
                                                       0b11111};

const std::array<std::uint8_t, 7>& glyph_for(char ch) {
  char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (const auto& g : kFont)
    if (g.ch == up) return g.rows;
  return kUnknownGlyph;
}

void fill_rect(FrameImage& img, int x0, int y0, int w, int h, std::array<std::uint8_t, 4> colour) {
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x) std::copy(colour.begin(), colour.end(), img.px(x, y));
}

}  // namespace

Bytes encode_png(const FrameImage& img) { return encode_png_raw(img.width, img.height, 4, 6, img.pixels); }

Bytes encode_png_grey(int width, int height, std::span<const std::uint8_t> grey) {
  return encode_png_raw(width, height, 1, 0, grey);
}

void stamp_text(FrameImage& img, int x, int y, std::string_view text, int scale,
                std::array<std::uint8_t, 4> colour) {
  int pen = x;
  for (char ch : text) {
    const auto& rows = glyph_for(ch);
    for (int gy = 0; gy < 7; ++gy)
      for (int gx = 0; gx < 5; ++gx)
        if (rows[gy] & (1u << (4 - gx))) fill_rect(img, pen + gx * scale, y + gy * scale, scale, scale, colour);
    pen += 6 * scale;
  }
}

void stamp_label(FrameImage& img, std::string_view text) {
  if (text.empty()) return;
  const int scale = img.height >= 64 && img.width >= 64 ? 2 : 1;
  const int pad = scale * 2;
  int w = static_cast<int>(text.size()) * 6 * scale - scale + 2 * pad;
  int h = 7 * scale + 2 * pad;
  fill_rect(img, 0, 0, w, h, {24, 24, 24, 255});
  stamp_text(img, pad, pad, text, scale, {255, 255, 255, 255});
}

FrameImage placeholder_frame(int width, int height, std::string_view label) {
  FrameImage img(width, height);
  fill_rect(img, 0, 0, width, height, {40, 40, 48, 255});
  const int scale = std::max(1, std::min(width, height) / 48);
  int text_w = static_cast<int>(label.size()) * 6 * scale - scale;
  stamp_text(img, (width - text_w) / 2, (height - 7 * scale) / 2, label, scale, {160, 160, 170, 255});
  return img;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace cubewall
