#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cubewall/volume.hpp"

namespace cubewall {

enum class SynthKind { sphere, gaussian, shells, noise };

SynthKind parse_synth_kind(std::string_view text);
std::string to_string(SynthKind kind);

inline constexpr int kMaxSynthDim = 512;

struct SynthSpec {
  SynthKind kind = SynthKind::sphere;
  int nx = 64;
  int ny = 64;
  int nz = 64;
  std::uint32_t seed = 1;
};

// Values in [0,1], raw_float domain. Radial kinds are centred on the box
// with R = half the smallest extent; sphere is max(0, 1 - r/R).
Volume synthesize(const SynthSpec& spec);

// Writes .xrw (bytes, quantized) or .raw (floats) by extension and returns
// the catalog row "id,path,kind,size,mean_value".
std::string write_synthetic(const SynthSpec& spec, const std::string& path, const std::string& id);
inline constexpr std::string_view kSynthCatalogHeader = "id,path,kind,size,mean_value";

}  // namespace cubewall
