#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cubewall {

using json = nlohmann::json;
using CubeId = std::string;

// Raised for malformed or out-of-grid slot addresses.
class AddressError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a value is outside its documented range.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridConfig {
  int columns = 20;
  int rows = 4;
  // Panels driven by one render node; every node owns exactly one column.
  int panels_per_node = 4;

  int slot_count() const { return columns * rows; }

  static GridConfig make(int columns, int rows) { return {columns, rows, rows}; }
  bool operator==(const GridConfig&) const = default;
};

// Column is 0-based internally and shown as A, B, ..., Z, AA, AB, ... at the
// edges. Row is 1-based.
struct SlotAddress {
  int column = 0;
  int row = 1;

  auto operator<=>(const SlotAddress&) const = default;

  bool valid_for(const GridConfig& grid) const {
    return column >= 0 && column < grid.columns && row >= 1 && row <= grid.rows;
  }

  std::string to_string() const;
  static SlotAddress parse(std::string_view text);
};

std::string column_letters(int column);

int slot_to_linear(const SlotAddress& addr, const GridConfig& grid);
SlotAddress linear_to_slot(int linear, const GridConfig& grid);

enum class ColourMapKind { grey, heat, viridis, file };
enum class RenderMode { volume, isosurface };
enum class Interpolation { trilinear, nearest };

inline constexpr double kDefaultSampleStep = 0.5;
inline constexpr double kEarlyTerminationAlpha = 0.99;

struct RenderParams {
  // Fraction of the voxel diagonal between consecutive ray samples.
  double sample_step = kDefaultSampleStep;
  double opacity_scale = 0.5;
  ColourMapKind colour_map = ColourMapKind::grey;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  double iso_level = 0.5;
  RenderMode mode = RenderMode::volume;
  Interpolation interpolation = Interpolation::trilinear;

  bool operator==(const RenderParams&) const = default;

  // Empty when every field is within range.
  std::vector<std::string> violations() const;
};

struct CameraState {
  double azimuth = 0.0;
  double elevation = 0.0;
  double roll = 0.0;
  double zoom = 1.0;
  double pan_x = 0.0;
  double pan_y = 0.0;

  bool operator==(const CameraState&) const = default;

  // Angles folded into (-180, 180].
  CameraState normalized() const;
  std::vector<std::string> violations() const;
};

double normalize_angle(double degrees);

enum class SortDirection { ascending, descending };

struct SortKey {
  std::string field;
  SortDirection direction = SortDirection::ascending;
  bool operator==(const SortKey&) const = default;
};

using SortSpec = std::vector<SortKey>;

struct GridState {
  std::map<int, CubeId> occupancy;  // linear slot -> cube; absent means empty
  std::set<int> selection;
  RenderParams params;
  CameraState camera;
  SortSpec sort_state;

  bool operator==(const GridState&) const = default;

  std::optional<CubeId> at(int linear) const {
    auto it = occupancy.find(linear);
    if (it == occupancy.end()) return std::nullopt;
    return it->second;
  }
};

struct Violation {
  enum class Kind { duplicate_occupancy, occupancy_out_of_grid, selection_out_of_grid, bad_params, bad_camera };
  Kind kind;
  std::string detail;
};

std::vector<Violation> validate_state(const GridState& state, const GridConfig& grid);

enum class Action { LoadData, Unload, Swap, Reorder, Select, SetCamera, SetParams, SetClip, Checkpoint };

std::string_view to_string(Action action);
Action parse_action(std::string_view text);

struct SessionEvent {
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  Action action = Action::Checkpoint;
  json payload = json::object();

  bool operator==(const SessionEvent&) const = default;
};

struct Histogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;

  std::size_t bin_count() const { return counts.size(); }
  std::uint64_t total() const;
};

struct StatPoint {
  CubeId cube_id;
  SlotAddress slot;
  json x;  // catalog value, number or string
  double y = 0.0;
};

std::int64_t now_utc_ms();

// JSON conversions. Slots travel as their display form ("B3").
void to_json(json& j, const RenderParams& p);
void from_json(const json& j, RenderParams& p);
void to_json(json& j, const CameraState& c);
void from_json(const json& j, CameraState& c);
void to_json(json& j, const SortKey& k);
void from_json(const json& j, SortKey& k);
void to_json(json& j, const Histogram& h);
void from_json(const json& j, Histogram& h);
void to_json(json& j, const SessionEvent& e);
void from_json(const json& j, SessionEvent& e);
void to_json(json& j, const GridConfig& g);
void from_json(const json& j, GridConfig& g);

std::string to_string(ColourMapKind kind);
ColourMapKind parse_colour_map(std::string_view text);
std::string to_string(RenderMode mode);
RenderMode parse_render_mode(std::string_view text);

}  // namespace cubewall
