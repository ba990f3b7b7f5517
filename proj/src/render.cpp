#include "cubewall/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace cubewall {

namespace {

const std::vector<ColourStop> kGrey = {{0.0, {0, 0, 0}}, {1.0, {1, 1, 1}}};
const std::vector<ColourStop> kHeat = {
    {0.0, {0, 0, 0}}, {1.0 / 3.0, {1, 0, 0}}, {2.0 / 3.0, {1, 1, 0}}, {1.0, {1, 1, 1}}};
const std::vector<ColourStop> kViridis = {{0.0, {0.267, 0.005, 0.329}},
                                          {0.25, {0.229, 0.322, 0.546}},
                                          {0.5, {0.128, 0.567, 0.551}},
                                          {0.75, {0.369, 0.789, 0.383}},
                                          {1.0, {0.993, 0.906, 0.144}}};

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// Exact for multiples of 90 degrees so axis-aligned views have exact zeros.
void sincos_deg(double deg, double& s, double& c) {
  double a = normalize_angle(deg);
  if (a == 0.0) { s = 0; c = 1; return; }
  if (a == 90.0) { s = 1; c = 0; return; }
  if (a == 180.0) { s = 0; c = -1; return; }
  if (a == -90.0) { s = -1; c = 0; return; }
  double r = a * std::numbers::pi / 180.0;
  s = std::sin(r);
  c = std::cos(r);
}

Vec3 rotate_y(const Vec3& v, double s, double c) { return {c * v.x + s * v.z, v.y, -s * v.x + c * v.z}; }
Vec3 rotate_x(const Vec3& v, double s, double c) { return {v.x, c * v.y - s * v.z, s * v.y + c * v.z}; }

// Volume occupies [-extent/2, extent/2] on every axis, centred at the origin.
struct Geometry {
  double ex, ey, ez;     // full extents
  double hx, hy, hz;     // half extents
  double step;           // world distance between samples
  double window_w, window_h;
};

class Sampler {
 public:
  Sampler(const Volume& vol, Interpolation mode)
      : vol_(vol), mode_(mode), hx_(0.5 * vol.nx * static_cast<double>(vol.wx)),
        hy_(0.5 * vol.ny * static_cast<double>(vol.wy)), hz_(0.5 * vol.nz * static_cast<double>(vol.wz)) {}

  double operator()(const Vec3& p) const {
    double fx = (p.x + hx_) / vol_.wx;
    double fy = (p.y + hy_) / vol_.wy;
    double fz = (p.z + hz_) / vol_.wz;
    if (mode_ == Interpolation::nearest) {
      int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, vol_.nx - 1);
      int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, vol_.ny - 1);
      int iz = std::clamp(static_cast<int>(std::floor(fz)), 0, vol_.nz - 1);
      return vol_.at(ix, iy, iz);
    }
    // Voxel centres sit at integer + 0.5; clamp to edge like a texture unit.
    double cx = std::clamp(fx - 0.5, 0.0, static_cast<double>(vol_.nx - 1));
    double cy = std::clamp(fy - 0.5, 0.0, static_cast<double>(vol_.ny - 1));
    double cz = std::clamp(fz - 0.5, 0.0, static_cast<double>(vol_.nz - 1));
    int x0 = static_cast<int>(cx), y0 = static_cast<int>(cy), z0 = static_cast<int>(cz);
    int x1 = std::min(x0 + 1, vol_.nx - 1), y1 = std::min(y0 + 1, vol_.ny - 1), z1 = std::min(z0 + 1, vol_.nz - 1);
    double tx = cx - x0, ty = cy - y0, tz = cz - z0;
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    double c00 = lerp(vol_.at(x0, y0, z0), vol_.at(x1, y0, z0), tx);
    double c10 = lerp(vol_.at(x0, y1, z0), vol_.at(x1, y1, z0), tx);
    double c01 = lerp(vol_.at(x0, y0, z1), vol_.at(x1, y0, z1), tx);
    double c11 = lerp(vol_.at(x0, y1, z1), vol_.at(x1, y1, z1), tx);
    return lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
  }

 private:
  const Volume& vol_;
  Interpolation mode_;
  double hx_, hy_, hz_;
};

Geometry make_geometry(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport vp) {
  Geometry g{};
  g.ex = vol.nx * static_cast<double>(vol.wx);
  g.ey = vol.ny * static_cast<double>(vol.wy);
  g.ez = vol.nz * static_cast<double>(vol.wz);
  g.hx = 0.5 * g.ex;
  g.hy = 0.5 * g.ey;
  g.hz = 0.5 * g.ez;
  double voxel_diag = std::sqrt(static_cast<double>(vol.wx) * vol.wx + static_cast<double>(vol.wy) * vol.wy +
                                static_cast<double>(vol.wz) * vol.wz);
  g.step = params.sample_step * voxel_diag;
  // The bounding diagonal fits the window at zoom 1 for every orientation.
  g.window_h = std::sqrt(g.ex * g.ex + g.ey * g.ey + g.ez * g.ez) / cam.zoom;
  g.window_w = g.window_h * vp.width / vp.height;
  return g;
}

struct Ray {
  Vec3 origin;  // on the plane through the volume centre
  double k_first = 0;
  double k_last = -1;  // inclusive sample index range; empty when k_last < k_first
};

// Sample positions are origin + (k*step)*forward for integer k, anchored at the
// centre plane, so a ray and its reverse visit the same points.
Ray make_ray(const Geometry& g, const ViewBasis& b, const CameraState& cam, Viewport vp, int px, int py) {
  double s = static_cast<double>(2 * px + 1 - vp.width) / (2.0 * vp.width) * g.window_w + cam.pan_x * g.window_w;
  double t = static_cast<double>(vp.height - 1 - 2 * py) / (2.0 * vp.height) * g.window_h + cam.pan_y * g.window_h;
  Ray ray;
  ray.origin = {s * b.right.x + t * b.up.x, s * b.right.y + t * b.up.y, s * b.right.z + t * b.up.z};
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
  const double d[3] = {b.forward.x, b.forward.y, b.forward.z};
  const double h[3] = {g.hx, g.hy, g.hz};
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (o[i] < -h[i] || o[i] > h[i]) return ray;
      continue;
    }
    double t0 = (-h[i] - o[i]) / d[i];
    double t1 = (h[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax) return ray;
  ray.k_first = std::ceil(tmin / g.step);
  ray.k_last = std::floor(tmax / g.step);
  return ray;
}

Vec3 at_step(const Ray& ray, const ViewBasis& b, double tau) {
  return {ray.origin.x + tau * b.forward.x, ray.origin.y + tau * b.forward.y, ray.origin.z + tau * b.forward.z};
}

template <typename Fn>
void parallel_rows(int height, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, height));
  if (threads == 1) {
    for (int y = 0; y < height; ++y) fn(y);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int y = t; y < height; y += threads) fn(y);
    });
}

void check_viewport(Viewport vp) {
  if (vp.width <= 0 || vp.height <= 0) throw ArgumentError("viewport must be non-empty");
}

void check_volume(const Volume& vol) {
  if (vol.domain != ValueDomain::normalized) throw ArgumentError("rendering expects a normalized volume");
  if (vol.data.size() != vol.voxel_count() || vol.voxel_count() == 0) throw ArgumentError("malformed volume");
}

FrameImage to_frame(const Accumulation& acc, Viewport vp) {
  FrameImage img(vp.width, vp.height);
  for (std::size_t i = 0; i < acc.size(); ++i)
    for (int c = 0; c < 4; ++c) img.pixels[i * 4 + c] = quantize_unit(acc[i][c]);
  return img;
}

}  // namespace

ColourMap ColourMap::from_stops(const std::vector<ColourStop>& stops) {
  ColourMap m;
  for (int i = 0; i < 256; ++i) {
    double v = i / 255.0;
    std::size_t k = 1;
    while (k + 1 < stops.size() && stops[k].position < v) ++k;
    const auto& a = stops[k - 1];
    const auto& b = stops[k];
    double t = b.position > a.position ? std::clamp((v - a.position) / (b.position - a.position), 0.0, 1.0) : 0.0;
    m.lut_[i] = {a.colour.r + (b.colour.r - a.colour.r) * t, a.colour.g + (b.colour.g - a.colour.g) * t,
                 a.colour.b + (b.colour.b - a.colour.b) * t};
  }
  return m;
}

ColourMap ColourMap::from_table(const ColourTable& table) {
  ColourMap m;
  for (int i = 0; i < 256; ++i)
    m.lut_[i] = {table[3 * i] / 255.0, table[3 * i + 1] / 255.0, table[3 * i + 2] / 255.0};
  return m;
}

ColourMap ColourMap::builtin(ColourMapKind kind, const ColourTable& file_table) {
  if (kind == ColourMapKind::file) return from_table(file_table);
  return from_stops(builtin_stops(kind));
}

const std::vector<ColourStop>& builtin_stops(ColourMapKind kind) {
  switch (kind) {
    case ColourMapKind::heat: return kHeat;
    case ColourMapKind::viridis: return kViridis;
    default: return kGrey;
  }
}

ViewBasis view_basis(const CameraState& cam) {
  double sa, ca, se, ce, sr, cr;
  sincos_deg(cam.azimuth, sa, ca);
  sincos_deg(cam.elevation, se, ce);
  sincos_deg(cam.roll, sr, cr);
  // Roll in the view plane, then tilt by elevation, then turn by azimuth.
  Vec3 right{cr, sr, 0};
  Vec3 up{-sr, cr, 0};
  Vec3 forward{0, 0, -1};
  auto orient = [&](Vec3 v) { return rotate_y(rotate_x(v, -se, ce), sa, ca); };
  return {orient(right), orient(up), orient(forward)};
}

Accumulation raycast_accumulate(const Volume& vol, const CameraState& cam, const RenderParams& params,
                                Viewport vp, int threads) {
  check_viewport(vp);
  check_volume(vol);
  const auto basis = view_basis(cam);
  const auto geo = make_geometry(vol, cam, params, vp);
  const Sampler sample(vol, params.interpolation);
  const auto cmap = ColourMap::builtin(params.colour_map, vol.colour_table);
  Accumulation acc(static_cast<std::size_t>(vp.width) * vp.height, {0, 0, 0, 0});

  parallel_rows(vp.height, threads, [&](int py) {
    for (int px = 0; px < vp.width; ++px) {
      Ray ray = make_ray(geo, basis, cam, vp, px, py);
      auto& out = acc[static_cast<std::size_t>(py) * vp.width + px];
      double r = 0, g = 0, b = 0, a_acc = 0;
      for (double k = ray.k_first; k <= ray.k_last; k += 1.0) {
        double v = sample(at_step(ray, basis, k * geo.step));
        double t = (v >= params.clip_lo && v <= params.clip_hi) ? v : 0.0;
        double a = params.opacity_scale * t;
        if (a <= 0.0) continue;
        const Rgb& c = cmap.lookup(v);
        double w = (1.0 - a_acc) * a;
        r += w * c.r;
        g += w * c.g;
        b += w * c.b;
        a_acc += w;
        if (a_acc >= kEarlyTerminationAlpha) break;
      }
      out = {r, g, b, a_acc};
    }
  });
  return acc;
}

FrameImage raycast(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport vp,
                   int threads) {
  return to_frame(raycast_accumulate(vol, cam, params, vp, threads), vp);
}

FrameImage ray_isosurface(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport vp,
                          int threads) {
  check_viewport(vp);
  check_volume(vol);
  const auto basis = view_basis(cam);
  const auto geo = make_geometry(vol, cam, params, vp);
  const Sampler sample(vol, params.interpolation);
  const auto cmap = ColourMap::builtin(params.colour_map, vol.colour_table);
  const Rgb base = cmap.lookup(params.iso_level);
  const double iso = params.iso_level;
  const Vec3 light{-basis.forward.x, -basis.forward.y, -basis.forward.z};
  FrameImage img(vp.width, vp.height);

  parallel_rows(vp.height, threads, [&](int py) {
    for (int px = 0; px < vp.width; ++px) {
      Ray ray = make_ray(geo, basis, cam, vp, px, py);
      if (ray.k_last < ray.k_first) continue;
      double prev_tau = 0, prev_f = 0;
      bool hit = false;
      double hit_tau = 0;
      for (double k = ray.k_first; k <= ray.k_last; k += 1.0) {
        double tau = k * geo.step;
        double f = sample(at_step(ray, basis, tau)) - iso;
        if (f >= 0.0) {
          hit = true;
          hit_tau = k == ray.k_first ? tau : prev_tau + (tau - prev_tau) * (-prev_f) / (f - prev_f);
          break;
        }
        prev_tau = tau;
        prev_f = f;
      }
      if (!hit) continue;
      Vec3 p = at_step(ray, basis, hit_tau);
      Vec3 grad{(sample({p.x + vol.wx, p.y, p.z}) - sample({p.x - vol.wx, p.y, p.z})) / (2.0 * vol.wx),
                (sample({p.x, p.y + vol.wy, p.z}) - sample({p.x, p.y - vol.wy, p.z})) / (2.0 * vol.wy),
                (sample({p.x, p.y, p.z + vol.wz}) - sample({p.x, p.y, p.z - vol.wz})) / (2.0 * vol.wz)};
      double len = std::sqrt(dot(grad, grad));
      // Values rise into the surface, so the outward normal is -grad.
      double diffuse = len > 0.0 ? std::max(0.0, -dot(grad, light) / len) : 1.0;
      double shade = 0.15 + 0.85 * diffuse;
      auto* out = img.px(px, py);
      out[0] = quantize_unit(base.r * shade);
      out[1] = quantize_unit(base.g * shade);
      out[2] = quantize_unit(base.b * shade);
      out[3] = 255;
    }
  });
  return img;
}

FrameImage render(const Volume& vol, const CameraState& cam, const RenderParams& params, Viewport vp,
                  int threads) {
  return params.mode == RenderMode::isosurface ? ray_isosurface(vol, cam, params, vp, threads)
                                               : raycast(vol, cam, params, vp, threads);
}

AtlasImage build_atlas(const Volume& vol) {
  check_volume(vol);
  AtlasImage atlas;
  atlas.nx = vol.nx;
  atlas.ny = vol.ny;
  atlas.nz = vol.nz;
  int tx = static_cast<int>(std::sqrt(static_cast<double>(vol.nz)));
  while (tx * tx < vol.nz) ++tx;
  while (tx > 1 && (tx - 1) * (tx - 1) >= vol.nz) --tx;
  atlas.tiles_x = tx;
  atlas.tiles_y = (vol.nz + tx - 1) / tx;
  const int width = atlas.width();
  atlas.image.assign(static_cast<std::size_t>(width) * atlas.height(), 0);
  for (int z = 0; z < vol.nz; ++z) {
    int ox = (z % tx) * vol.nx;
    int oy = (z / tx) * vol.ny;
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x)
        atlas.image[static_cast<std::size_t>(oy + y) * width + ox + x] = quantize_unit(vol.at(x, y, z));
  }
  return atlas;
}

std::vector<std::uint8_t> atlas_slice(const AtlasImage& atlas, int k) {
  if (k < 0 || k >= atlas.nz) throw ArgumentError("slice index out of range");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(atlas.nx) * atlas.ny);
  int ox = (k % atlas.tiles_x) * atlas.nx;
  int oy = (k / atlas.tiles_x) * atlas.ny;
  for (int y = 0; y < atlas.ny; ++y)
    for (int x = 0; x < atlas.nx; ++x)
      out[static_cast<std::size_t>(y) * atlas.nx + x] = atlas.image[static_cast<std::size_t>(oy + y) * atlas.width() + ox + x];
  return out;
}

}  // namespace cubewall
