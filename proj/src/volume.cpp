#include "cubewall/volume.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace cubewall {

static_assert(std::endian::native == std::endian::little, "volume codecs assume a little-endian host");

ColourTable grey_colour_table() {
  ColourTable t{};
  for (int i = 0; i < 256; ++i) {
    t[3 * i] = t[3 * i + 1] = t[3 * i + 2] = static_cast<std::uint8_t>(i);
  }
  return t;
}

std::size_t Volume::finite_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!is_blank(i)) ++n;
  return n;
}

Volume Volume::filled(int nx, int ny, int nz, float value, ValueDomain domain) {
  Volume v;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.data.assign(v.voxel_count(), value);
  v.domain = domain;
  return v;
}

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T read(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) throw FormatError(std::string("truncated stream reading ") + what, pos_);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated stream reading ") + what, bytes_.size());
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void append(Bytes& out, T v) {
  auto old = out.size();
  out.resize(old + sizeof(T));
  std::memcpy(out.data() + old, &v, sizeof(T));
}

struct Header {
  int nx, ny, nz;
  float wx, wy, wz;
};

Header read_header(Reader& r) {
  Header h{};
  std::size_t dims_at = r.pos();
  h.nx = r.read<std::int32_t>("nx");
  h.ny = r.read<std::int32_t>("ny");
  h.nz = r.read<std::int32_t>("nz");
  if (h.nx <= 0 || h.ny <= 0 || h.nz <= 0) {
    throw FormatError("non-positive dimensions " + std::to_string(h.nx) + "x" + std::to_string(h.ny) + "x" +
                          std::to_string(h.nz),
                      dims_at);
  }
  std::size_t sizes_at = r.pos();
  h.wx = r.read<float>("wx");
  h.wy = r.read<float>("wy");
  h.wz = r.read<float>("wz");
  if (!(h.wx > 0 && h.wy > 0 && h.wz > 0) || !std::isfinite(h.wx) || !std::isfinite(h.wy) || !std::isfinite(h.wz))
    throw FormatError("voxel sizes must be positive", sizes_at);
  return h;
}

void write_header(Bytes& out, const Volume& vol) {
  append<std::int32_t>(out, vol.nx);
  append<std::int32_t>(out, vol.ny);
  append<std::int32_t>(out, vol.nz);
  append<float>(out, vol.wx);
  append<float>(out, vol.wy);
  append<float>(out, vol.wz);
}

void check_writable(const Volume& vol) {
  if (vol.nx <= 0 || vol.ny <= 0 || vol.nz <= 0) throw FormatError("non-positive dimensions", 0);
  if (vol.data.size() != vol.voxel_count()) throw FormatError("data length does not match dimensions", 0);
}

std::size_t checked_count(const Header& h, std::size_t at) {
  auto n = static_cast<unsigned long long>(h.nx) * static_cast<unsigned long long>(h.ny);
  if (n > std::numeric_limits<std::size_t>::max() / static_cast<unsigned long long>(h.nz))
    throw FormatError("volume too large", at);
  return static_cast<std::size_t>(n * static_cast<unsigned long long>(h.nz));
}

}  // namespace

Bytes gzip_compress(std::span<const std::uint8_t> raw) {
  z_stream zs{};
  // 15 window bits + 16 selects the gzip wrapper; zlib writes mtime 0.
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw std::runtime_error("deflateInit2 failed");
  Bytes out(deflateBound(&zs, static_cast<uLong>(raw.size())) + 32);
  zs.next_in = const_cast<Bytef*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw std::runtime_error("gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

Bytes gzip_decompress(std::span<const std::uint8_t> compressed) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw std::runtime_error("inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  Bytes out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      std::size_t at = zs.total_in;
      std::string msg = zs.msg ? zs.msg : "inflate error";
      inflateEnd(&zs);
      if (rc == Z_BUF_ERROR) throw FormatError("truncated gzip stream", at);
      throw FormatError("gzip decompression failed: " + msg, at);
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
      std::size_t at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream", at);
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint8_t quantize_unit(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Volume read_xrw(std::span<const std::uint8_t> bytes) {
  Bytes raw = gzip_decompress(bytes);
  Reader r(raw);
  Header h = read_header(r);
  std::size_t count = checked_count(h, 0);
  Volume vol;
  vol.nx = h.nx;
  vol.ny = h.ny;
  vol.nz = h.nz;
  vol.wx = h.wx;
  vol.wy = h.wy;
  vol.wz = h.wz;
  auto voxels = r.take(count, "voxel data");
  vol.data.assign(voxels.begin(), voxels.end());
  auto table = r.take(vol.colour_table.size(), "colour table");
  std::copy(table.begin(), table.end(), vol.colour_table.begin());
  if (r.remaining() != 0) throw FormatError("trailing bytes after colour table", r.pos());
  vol.domain = ValueDomain::raw_bytes;
  return vol;
}

Bytes write_xrw(const Volume& vol) {
  check_writable(vol);
  if (vol.domain == ValueDomain::raw_float) throw ArgumentError("raw float volumes must be normalized before XRW export");
  Bytes raw;
  raw.reserve(24 + vol.voxel_count() + vol.colour_table.size());
  write_header(raw, vol);
  if (vol.domain == ValueDomain::raw_bytes) {
    for (float v : vol.data) {
      float c = std::clamp(v, 0.0f, 255.0f);
      raw.push_back(static_cast<std::uint8_t>(std::lround(c)));
    }
  } else {
    for (float v : vol.data) raw.push_back(quantize_unit(v));
  }
  raw.insert(raw.end(), vol.colour_table.begin(), vol.colour_table.end());
  return gzip_compress(raw);
}

Volume read_rawfloat(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Header h = read_header(r);
  std::size_t count = checked_count(h, 0);
  if (count > r.remaining() / sizeof(float)) throw FormatError("truncated stream reading voxel data", bytes.size());
  Volume vol;
  vol.nx = h.nx;
  vol.ny = h.ny;
  vol.nz = h.nz;
  vol.wx = h.wx;
  vol.wy = h.wy;
  vol.wz = h.wz;
  vol.data.resize(count);
  auto payload = r.take(count * sizeof(float), "voxel data");
  std::memcpy(vol.data.data(), payload.data(), payload.size());
  if (r.remaining() != 0) throw FormatError("trailing bytes after voxel data", r.pos());
  vol.domain = ValueDomain::raw_float;
  return vol;
}

Bytes write_rawfloat(const Volume& vol) {
  check_writable(vol);
  Bytes out;
  out.reserve(24 + vol.voxel_count() * sizeof(float));
  write_header(out, vol);
  auto old = out.size();
  out.resize(old + vol.data.size() * sizeof(float));
  std::memcpy(out.data() + old, vol.data.data(), vol.data.size() * sizeof(float));
  return out;
}

Bytes read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

Volume load_volume_file(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".xrw")) return read_xrw(read_file_bytes(path));
  if (ends_with(".raw")) return read_rawfloat(read_file_bytes(path));
  throw FormatError("unrecognised volume extension for " + path, 0);
}

Volume normalize(const Volume& vol) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  bool any_blank = false;
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    if (vol.is_blank(i)) {
      any_blank = true;
      continue;
    }
    double v = vol.data[i];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(lo <= hi)) throw DataError("volume has no finite voxels");

  Volume out = vol;
  out.domain = ValueDomain::normalized;
  out.blank.clear();
  if (any_blank) out.blank.assign(vol.data.size(), 0);
  const double range = hi - lo;
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    if (vol.is_blank(i)) {
      out.data[i] = 0.0f;
      out.blank[i] = 1;
    } else if (range > 0.0) {
      out.data[i] = static_cast<float>((static_cast<double>(vol.data[i]) - lo) / range);
    } else {
      out.data[i] = 0.0f;
    }
  }
  return out;
}

Histogram histogram(const Volume& vol, int bins, std::optional<std::pair<double, double>> clip) {
  if (bins <= 0) throw ArgumentError("histogram needs at least one bin");
  if (vol.domain != ValueDomain::normalized) throw ArgumentError("histogram expects a normalized volume");
  if (clip && !(clip->first <= clip->second)) throw ArgumentError("histogram clip range is empty");
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[i] = static_cast<double>(i) / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    if (vol.is_blank(i)) continue;
    double v = vol.data[i];
    if (clip && (v < clip->first || v > clip->second)) continue;
    // Bins are [lo, hi) except the last, which also takes 1.0.
    auto b = static_cast<long>(std::floor(v * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

StatQuery parse_stat_query(std::string_view text, double default_level) {
  if (text == "mean") return {StatKind::mean, default_level};
  if (text == "max") return {StatKind::max, default_level};
  if (text.starts_with("count_above")) {
    StatQuery q{StatKind::count_above, default_level};
    auto rest = text.substr(std::string_view("count_above").size());
    if (!rest.empty()) {
      if (rest.front() != ':' && rest.front() != '(') throw ArgumentError("malformed stat '" + std::string(text) + "'");
      rest.remove_prefix(1);
      if (!rest.empty() && rest.back() == ')') rest.remove_suffix(1);
      try {
        q.level = std::stod(std::string(rest));
      } catch (const std::exception&) {
        throw ArgumentError("malformed stat level in '" + std::string(text) + "'");
      }
    }
    return q;
  }
  throw ArgumentError("unknown stat '" + std::string(text) + "'");
}

std::string to_string(const StatQuery& q) {
  switch (q.kind) {
    case StatKind::mean: return "mean";
    case StatKind::max: return "max";
    case StatKind::count_above: {
      std::ostringstream os;
      os.precision(17);
      os << "count_above:" << q.level;
      return os.str();
    }
  }
  return "mean";
}

double stat(const Volume& vol, const StatQuery& query) {
  if (vol.domain != ValueDomain::normalized) throw ArgumentError("stat expects a normalized volume");
  double sum = 0.0;
  double mx = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  std::size_t above = 0;
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    if (vol.is_blank(i)) continue;
    double v = vol.data[i];
    sum += v;
    mx = std::max(mx, v);
    if (v > query.level) ++above;
    ++n;
  }
  if (n == 0) throw DataError("volume has no finite voxels");
  switch (query.kind) {
    case StatKind::mean: return sum / static_cast<double>(n);
    case StatKind::max: return mx;
    case StatKind::count_above: return static_cast<double>(above);
  }
  return 0.0;
}

}  // namespace cubewall
