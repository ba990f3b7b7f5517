#include "cubewall/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

namespace cubewall {

SynthKind parse_synth_kind(std::string_view text) {
  if (text == "sphere") return SynthKind::sphere;
  if (text == "gaussian") return SynthKind::gaussian;
  if (text == "shells") return SynthKind::shells;
  if (text == "noise") return SynthKind::noise;
  throw ArgumentError("unknown synthetic kind '" + std::string(text) + "'");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::sphere: return "sphere";
    case SynthKind::gaussian: return "gaussian";
    case SynthKind::shells: return "shells";
    case SynthKind::noise: return "noise";
  }
  return "?";
}

Volume synthesize(const SynthSpec& spec) {
  for (int d : {spec.nx, spec.ny, spec.nz})
    if (d <= 0 || d > kMaxSynthDim)
      throw ArgumentError("dimensions must be in 1.." + std::to_string(kMaxSynthDim) + ", got " + std::to_string(d));
  Volume vol = Volume::filled(spec.nx, spec.ny, spec.nz, 0.0f, ValueDomain::raw_float);
  const double cx = spec.nx / 2.0, cy = spec.ny / 2.0, cz = spec.nz / 2.0;
  const double R = std::min({cx, cy, cz});
  std::mt19937 rng(spec.seed);
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  for (int z = 0; z < spec.nz; ++z)
    for (int y = 0; y < spec.ny; ++y)
      for (int x = 0; x < spec.nx; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy, dz = z + 0.5 - cz;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        double v = 0;
        switch (spec.kind) {
          case SynthKind::sphere: v = std::max(0.0, 1.0 - r / R); break;
          case SynthKind::gaussian: {
            const double sigma = R / 3.0;
            v = std::exp(-r * r / (2 * sigma * sigma));
            break;
          }
          case SynthKind::shells: v = r > R ? 0.0 : 0.5 + 0.5 * std::cos(2 * std::numbers::pi * 3 * r / R); break;
          case SynthKind::noise: v = uniform(rng); break;
        }
        vol.data[vol.index(x, y, z)] = static_cast<float>(v);
      }
  return vol;
}

std::string write_synthetic(const SynthSpec& spec, const std::string& path, const std::string& id) {
  Volume vol = synthesize(spec);
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".xrw") {
    for (auto& v : vol.data) v = quantize_unit(v);
    vol.domain = ValueDomain::raw_bytes;
    write_file_bytes(path, write_xrw(vol));
  } else if (ext == ".raw") {
    write_file_bytes(path, write_rawfloat(vol));
  } else {
    throw ArgumentError("output must end in .xrw or .raw: " + path);
  }
  const double mean = stat(normalize(vol), StatQuery{StatKind::mean, 0});
  char mean_text[32];
  std::snprintf(mean_text, sizeof mean_text, "%.6f", mean);
  return id + "," + path + "," + to_string(spec.kind) + "," + std::to_string(spec.nx) + "x" +
         std::to_string(spec.ny) + "x" + std::to_string(spec.nz) + "," + mean_text;
}

}  // namespace cubewall
