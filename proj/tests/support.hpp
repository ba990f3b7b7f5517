#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "cubewall/volume.hpp"

namespace testing_support {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cubewall-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct RunResult {
  int exit_code = -1;
  std::string output;
};

// stdout and stderr combined.
inline RunResult run(const std::string& command) {
  RunResult r;
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline cubewall::Volume random_bytes_volume(std::mt19937& rng, int nx, int ny, int nz) {
  cubewall::Volume v = cubewall::Volume::filled(nx, ny, nz, 0.0f, cubewall::ValueDomain::raw_bytes);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_real_distribution<float> width(0.1f, 4.0f);
  v.wx = width(rng);
  v.wy = width(rng);
  v.wz = width(rng);
  for (auto& x : v.data) x = static_cast<float>(byte(rng));
  for (auto& c : v.colour_table) c = static_cast<std::uint8_t>(byte(rng));
  return v;
}

inline cubewall::Volume random_float_volume(std::mt19937& rng, int nx, int ny, int nz, double nan_fraction) {
  cubewall::Volume v = cubewall::Volume::filled(nx, ny, nz, 0.0f, cubewall::ValueDomain::raw_float);
  std::uniform_real_distribution<float> value(-50.0f, 50.0f);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (auto& x : v.data) x = coin(rng) < nan_fraction ? std::nanf("") : value(rng);
  return v;
}

}  // namespace testing_support
