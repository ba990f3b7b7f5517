#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cubewall/core.hpp"
#include "cubewall/image.hpp"
#include "cubewall/volume.hpp"

namespace cubewall {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

struct ColourStop {
  double position;
  Rgb colour;
};

// 256-entry lookup table indexed by the quantized normalized value.
class ColourMap {
 public:
  static ColourMap from_stops(const std::vector<ColourStop>& stops);
  static ColourMap from_table(const ColourTable& table);
  static ColourMap builtin(ColourMapKind kind, const ColourTable& file_table);

  const Rgb& lookup(double v) const { return lut_[quantize_unit(v)]; }
  const std::array<Rgb, 256>& table() const { return lut_; }

 private:
  std::array<Rgb, 256> lut_{};
};

// Control points of the built-in maps; share/colormaps.json mirrors these.
const std::vector<ColourStop>& builtin_stops(ColourMapKind kind);

struct Viewport {
  int width = 0;
  int height = 0;
  bool operator==(const Viewport&) const = default;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Orthographic view basis: right, up, and the viewing direction (away from
// the viewer). Multiples of 90 degrees produce exact axis vectors.
struct ViewBasis {
  Vec3 right, up, forward;
};

ViewBasis view_basis(const CameraState& cam);

// Premultiplied RGBA accumulation per pixel, top row first.
using Accumulation = std::vector<std::array<double, 4>>;

Accumulation raycast_accumulate(const Volume& vol, const CameraState& cam, const RenderParams& params,
                                Viewport viewport, int threads = 1);

FrameImage raycast(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport viewport,
                   int threads = 1);

FrameImage ray_isosurface(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport viewport,
                          int threads = 1);

// Dispatches on params.mode.
FrameImage render(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport viewport,
                  int threads = 1);

struct AtlasImage {
  int nx = 0, ny = 0, nz = 0;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::uint8_t> image;  // greyscale, width tiles_x*nx, height tiles_y*ny

  int width() const { return tiles_x * nx; }
  int height() const { return tiles_y * ny; }
  json descriptor() const { return json{{"nx", nx}, {"ny", ny}, {"nz", nz}, {"tilesX", tiles_x}}; }
};

AtlasImage build_atlas(const Volume& vol);
std::vector<std::uint8_t> atlas_slice(const AtlasImage& atlas, int k);

}  // namespace cubewall
