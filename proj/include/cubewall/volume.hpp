#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubewall/core.hpp"

namespace cubewall {

// Raised by the volume readers/writers; offset is the byte position in the
// (decompressed) stream where the problem was detected.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;
using ColourTable = std::array<std::uint8_t, 256 * 3>;

enum class ValueDomain { raw_bytes, raw_float, normalized };

ColourTable grey_colour_table();

struct Volume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  float wx = 1.0f;
  float wy = 1.0f;
  float wz = 1.0f;
  // nz*ny*nx scalars, x fastest. NaN marks a blank voxel before normalization;
  // afterwards blanks are 0 and flagged in `blank`.
  std::vector<float> data;
  // Empty when no voxel is blank.
  std::vector<std::uint8_t> blank;
  ColourTable colour_table = grey_colour_table();
  ValueDomain domain = ValueDomain::raw_bytes;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  bool is_blank(std::size_t i) const { return !blank.empty() ? blank[i] != 0 : std::isnan(data[i]); }
  std::size_t finite_count() const;

  static Volume filled(int nx, int ny, int nz, float value, ValueDomain domain = ValueDomain::normalized);
};

Volume read_xrw(std::span<const std::uint8_t> bytes);
Bytes write_xrw(const Volume& vol);

Volume read_rawfloat(std::span<const std::uint8_t> bytes);
Bytes write_rawfloat(const Volume& vol);

// Picks the reader from the extension (.xrw, .raw).
Volume load_volume_file(const std::string& path);
Bytes read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

// Round half away from zero of v*255, clamped to [0,255].
std::uint8_t quantize_unit(double v);

Volume normalize(const Volume& vol);

Histogram histogram(const Volume& vol, int bins, std::optional<std::pair<double, double>> clip = std::nullopt);

enum class StatKind { mean, max, count_above };

struct StatQuery {
  StatKind kind = StatKind::mean;
  double level = 0.5;  // only used by count_above
};

StatQuery parse_stat_query(std::string_view text, double default_level);
std::string to_string(const StatQuery& q);

double stat(const Volume& vol, const StatQuery& query);

// gzip (RFC 1952) helpers backed by zlib.
Bytes gzip_compress(std::span<const std::uint8_t> raw);
Bytes gzip_decompress(std::span<const std::uint8_t> compressed);

}  // namespace cubewall
