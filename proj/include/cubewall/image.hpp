#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cubewall/volume.hpp"

namespace cubewall {

// RGBA bytes, row-major, top row first.
struct FrameImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  FrameImage() = default;
  FrameImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 4, 0) {}

  std::uint8_t* px(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 4; }
  const std::uint8_t* px(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 4;
  }

  bool operator==(const FrameImage&) const = default;
};

// 8-bit RGBA, colour type 6, no interlace, filter 0 on every row.
Bytes encode_png(const FrameImage& img);
// 8-bit greyscale, colour type 0.
Bytes encode_png_grey(int width, int height, std::span<const std::uint8_t> grey);

// Draws `text` with the built-in 5x7 font. Unknown glyphs render as boxes.
void stamp_text(FrameImage& img, int x, int y, std::string_view text, int scale,
                std::array<std::uint8_t, 4> colour);
// Text with an opaque dark backing box in the top-left margin.
void stamp_label(FrameImage& img, std::string_view text);

FrameImage placeholder_frame(int width, int height, std::string_view label);

// SHA-256 of the bytes, lowercase hex.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

}  // namespace cubewall
