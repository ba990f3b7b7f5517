#include "cubewall/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>

namespace cubewall {

std::string column_letters(int column) {
  if (column < 0) throw AddressError("negative column " + std::to_string(column));
  // Bijective base 26: A..Z, AA..AZ, BA, ...
  std::string out;
  int n = column + 1;
  while (n > 0) {
    int rem = (n - 1) % 26;
    out.insert(out.begin(), static_cast<char>('A' + rem));
    n = (n - 1) / 26;
  }
  return out;
}

std::string SlotAddress::to_string() const { return column_letters(column) + std::to_string(row); }

SlotAddress SlotAddress::parse(std::string_view text) {
  std::size_t i = 0;
  long long col = 0;
  while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
    col = col * 26 + (std::toupper(static_cast<unsigned char>(text[i])) - 'A' + 1);
    if (col > 1'000'000) throw AddressError("slot column too large: " + std::string(text));
    ++i;
  }
  if (i == 0 || i == text.size()) throw AddressError("malformed slot address '" + std::string(text) + "'");
  long long row = 0;
  for (std::size_t k = i; k < text.size(); ++k) {
    if (!std::isdigit(static_cast<unsigned char>(text[k])))
      throw AddressError("malformed slot address '" + std::string(text) + "'");
    row = row * 10 + (text[k] - '0');
    if (row > 1'000'000) throw AddressError("slot row too large: " + std::string(text));
  }
  return {static_cast<int>(col - 1), static_cast<int>(row)};
}

int slot_to_linear(const SlotAddress& addr, const GridConfig& grid) {
  if (!addr.valid_for(grid)) {
    throw AddressError("slot " + addr.to_string() + " outside " + std::to_string(grid.columns) + "x" +
                       std::to_string(grid.rows) + " grid");
  }
  return addr.column * grid.rows + (addr.row - 1);
}

SlotAddress linear_to_slot(int linear, const GridConfig& grid) {
  if (linear < 0 || linear >= grid.slot_count())
    throw AddressError("linear slot " + std::to_string(linear) + " outside grid");
  return {linear / grid.rows, linear % grid.rows + 1};
}

double normalize_angle(double degrees) {
  double a = std::fmod(degrees, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

std::vector<std::string> RenderParams::violations() const {
  std::vector<std::string> out;
  if (!(sample_step > 0.0) || !std::isfinite(sample_step)) out.push_back("sample_step must be > 0");
  if (!(opacity_scale >= 0.0 && opacity_scale <= 1.0)) out.push_back("opacity_scale must be in [0,1]");
  if (!(clip_lo >= 0.0 && clip_lo <= 1.0)) out.push_back("clip_lo must be in [0,1]");
  if (!(clip_hi >= 0.0 && clip_hi <= 1.0)) out.push_back("clip_hi must be in [0,1]");
  if (!(clip_lo <= clip_hi)) out.push_back("clip_lo must not exceed clip_hi");
  if (!(iso_level >= 0.0 && iso_level <= 1.0)) out.push_back("iso_level must be in [0,1]");
  return out;
}

CameraState CameraState::normalized() const {
  CameraState c = *this;
  c.azimuth = normalize_angle(azimuth);
  c.elevation = normalize_angle(elevation);
  c.roll = normalize_angle(roll);
  return c;
}

std::vector<std::string> CameraState::violations() const {
  std::vector<std::string> out;
  if (!(zoom > 0.0) || !std::isfinite(zoom)) out.push_back("zoom must be > 0");
  for (double v : {azimuth, elevation, roll, pan_x, pan_y})
    if (!std::isfinite(v)) {
      out.push_back("camera values must be finite");
      break;
    }
  return out;
}

std::vector<Violation> validate_state(const GridState& state, const GridConfig& grid) {
  std::vector<Violation> out;
  std::map<CubeId, int> seen;
  for (const auto& [linear, id] : state.occupancy) {
    if (linear < 0 || linear >= grid.slot_count()) {
      out.push_back({Violation::Kind::occupancy_out_of_grid, "linear slot " + std::to_string(linear)});
      continue;
    }
    auto [it, inserted] = seen.emplace(id, linear);
    if (!inserted) {
      out.push_back({Violation::Kind::duplicate_occupancy,
                     "cube " + id + " at " + linear_to_slot(it->second, grid).to_string() + " and " +
                         linear_to_slot(linear, grid).to_string()});
    }
  }
  for (int linear : state.selection) {
    if (linear < 0 || linear >= grid.slot_count())
      out.push_back({Violation::Kind::selection_out_of_grid, "linear slot " + std::to_string(linear)});
  }
  for (auto& v : state.params.violations()) out.push_back({Violation::Kind::bad_params, v});
  for (auto& v : state.camera.violations()) out.push_back({Violation::Kind::bad_camera, v});
  return out;
}

namespace {

constexpr std::array<std::string_view, 9> kActionNames = {
    "LoadData", "Unload", "Swap", "Reorder", "Select", "SetCamera", "SetParams", "SetClip", "Checkpoint"};

}  // namespace

std::string_view to_string(Action action) { return kActionNames[static_cast<std::size_t>(action)]; }

Action parse_action(std::string_view text) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == text) return static_cast<Action>(i);
  throw ArgumentError("unknown action '" + std::string(text) + "'");
}

std::uint64_t Histogram::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

std::int64_t now_utc_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string to_string(ColourMapKind kind) {
  switch (kind) {
    case ColourMapKind::grey: return "grey";
    case ColourMapKind::heat: return "heat";
    case ColourMapKind::viridis: return "viridis";
    case ColourMapKind::file: return "file";
  }
  return "grey";
}

ColourMapKind parse_colour_map(std::string_view text) {
  if (text == "grey" || text == "gray") return ColourMapKind::grey;
  if (text == "heat") return ColourMapKind::heat;
  if (text == "viridis") return ColourMapKind::viridis;
  if (text == "file") return ColourMapKind::file;
  throw ArgumentError("unknown colour map '" + std::string(text) + "'");
}

std::string to_string(RenderMode mode) { return mode == RenderMode::volume ? "volume" : "isosurface"; }

RenderMode parse_render_mode(std::string_view text) {
  if (text == "volume") return RenderMode::volume;
  if (text == "isosurface") return RenderMode::isosurface;
  throw ArgumentError("unknown render mode '" + std::string(text) + "'");
}

void to_json(json& j, const RenderParams& p) {
  j = json{{"sample_step", p.sample_step},
           {"opacity_scale", p.opacity_scale},
           {"colour_map", to_string(p.colour_map)},
           {"clip_lo", p.clip_lo},
           {"clip_hi", p.clip_hi},
           {"iso_level", p.iso_level},
           {"mode", to_string(p.mode)},
           {"interpolation", p.interpolation == Interpolation::nearest ? "nearest" : "trilinear"}};
}

// Missing keys keep their current value so partial updates compose.
void from_json(const json& j, RenderParams& p) {
  if (!j.is_object()) throw ArgumentError("render params must be an object");
  if (j.contains("sample_step")) p.sample_step = j.at("sample_step").get<double>();
  if (j.contains("opacity_scale")) p.opacity_scale = j.at("opacity_scale").get<double>();
  if (j.contains("colour_map")) p.colour_map = parse_colour_map(j.at("colour_map").get<std::string>());
  if (j.contains("clip_lo")) p.clip_lo = j.at("clip_lo").get<double>();
  if (j.contains("clip_hi")) p.clip_hi = j.at("clip_hi").get<double>();
  if (j.contains("iso_level")) p.iso_level = j.at("iso_level").get<double>();
  if (j.contains("mode")) p.mode = parse_render_mode(j.at("mode").get<std::string>());
  if (j.contains("interpolation")) {
    auto s = j.at("interpolation").get<std::string>();
    if (s == "nearest") p.interpolation = Interpolation::nearest;
    else if (s == "trilinear") p.interpolation = Interpolation::trilinear;
    else throw ArgumentError("unknown interpolation '" + s + "'");
  }
}

void to_json(json& j, const CameraState& c) {
  j = json{{"azimuth", c.azimuth}, {"elevation", c.elevation}, {"roll", c.roll},
           {"zoom", c.zoom},       {"pan", {c.pan_x, c.pan_y}}};
}

void from_json(const json& j, CameraState& c) {
  if (!j.is_object()) throw ArgumentError("camera must be an object");
  if (j.contains("azimuth")) c.azimuth = j.at("azimuth").get<double>();
  if (j.contains("elevation")) c.elevation = j.at("elevation").get<double>();
  if (j.contains("roll")) c.roll = j.at("roll").get<double>();
  if (j.contains("zoom")) c.zoom = j.at("zoom").get<double>();
  if (j.contains("pan")) {
    const auto& pan = j.at("pan");
    if (!pan.is_array() || pan.size() != 2) throw ArgumentError("pan must be a 2-vector");
    c.pan_x = pan[0].get<double>();
    c.pan_y = pan[1].get<double>();
  }
}

void to_json(json& j, const SortKey& k) {
  j = json{{"field", k.field}, {"direction", k.direction == SortDirection::ascending ? "asc" : "desc"}};
}

void from_json(const json& j, SortKey& k) {
  k.field = j.at("field").get<std::string>();
  auto dir = j.value("direction", std::string("asc"));
  if (dir == "asc" || dir == "ascending") k.direction = SortDirection::ascending;
  else if (dir == "desc" || dir == "descending") k.direction = SortDirection::descending;
  else throw ArgumentError("unknown sort direction '" + dir + "'");
}

void to_json(json& j, const Histogram& h) { j = json{{"edges", h.edges}, {"counts", h.counts}}; }

void from_json(const json& j, Histogram& h) {
  h.edges = j.at("edges").get<std::vector<double>>();
  h.counts = j.at("counts").get<std::vector<std::uint64_t>>();
}

void to_json(json& j, const SessionEvent& e) {
  j = json{{"seq", e.seq}, {"ts", e.timestamp_ms}, {"action", to_string(e.action)}, {"payload", e.payload}};
}

void from_json(const json& j, SessionEvent& e) {
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp_ms = j.value("ts", std::int64_t{0});
  e.action = parse_action(j.at("action").get<std::string>());
  e.payload = j.value("payload", json::object());
}

void to_json(json& j, const GridConfig& g) {
  j = json{{"columns", g.columns}, {"rows", g.rows}};
}

void from_json(const json& j, GridConfig& g) {
  g.columns = j.at("columns").get<int>();
  g.rows = j.at("rows").get<int>();
  g.panels_per_node = g.rows;
  if (g.columns <= 0 || g.rows <= 0) throw ArgumentError("grid dimensions must be positive");
}

}  // namespace cubewall
