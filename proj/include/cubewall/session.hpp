#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cubewall/core.hpp"
#include "cubewall/wire.hpp"

namespace cubewall {

// An event that does not apply to the current state. Rejected events are
// never logged.
class TransitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Provenance {
  std::string path;
  std::uint64_t load_seq = 0;
  bool operator==(const Provenance&) const = default;
};

struct GlobalState {
  GridState grid;
  std::map<CubeId, Provenance> provenance;  // one entry per cube on the grid
  std::map<std::string, std::uint64_t> checkpoints;

  bool operator==(const GlobalState&) const = default;
};

// Canonical form hashed by state_hash: excludes selection and timestamps.
json canonical_state(const GlobalState& state, const GridConfig& grid);
std::string state_hash(const GlobalState& state, const GridConfig& grid);
json state_to_json(const GlobalState& state, const GridConfig& grid);

// Pure transition. Throws TransitionError when the event does not apply.
GlobalState apply_event(const GlobalState& state, const SessionEvent& ev, const GridConfig& grid);

// Removes the content at linear(from) from the column-first slot sequence and
// reinserts it at linear(to); everything in between shifts one position
// toward the vacated slot.
GlobalState apply_reorder(const GlobalState& state, SlotAddress from, SlotAddress to, const GridConfig& grid);

struct Dispatch {
  int column = 0;
  wire::Message message;  // id is assigned by the link
};

// Wire messages that bring node panels from `before` to `after`.
std::vector<Dispatch> fan_out(const SessionEvent& ev, const GlobalState& before, const GlobalState& after,
                              const GridConfig& grid);
// Messages that bring freshly started nodes (empty panels, default view) to `state`.
std::vector<Dispatch> fan_out_from_empty(const GlobalState& state, const GridConfig& grid);
// Slots whose cube differs between the two states.
std::vector<int> occupancy_diff(const GlobalState& before, const GlobalState& after);

inline constexpr int kSessionFormatVersion = 1;

struct SessionLog {
  GridConfig grid;
  std::vector<SessionEvent> events;
  // state_hash after each event, as recorded live; empty strings when unknown.
  std::vector<std::string> hashes;

  std::uint64_t last_seq() const { return events.empty() ? 0 : events.back().seq; }
  std::map<std::string, std::uint64_t> checkpoints() const;
  bool operator==(const SessionLog&) const = default;
};

// JSON lines: a header line then one event per line.
std::string save_session(const SessionLog& log);
SessionLog load_session(std::string_view text);
std::string session_header_line(const GridConfig& grid);
std::string session_event_line(const SessionEvent& ev, const std::string& hash);

using ReplayTarget = std::variant<std::monostate, std::uint64_t, std::string>;

// Folds events 1..upto over the empty state. Verifies recorded hashes at
// every step where one is present.
GlobalState replay(const SessionLog& log, const ReplayTarget& upto = std::monostate{});
std::uint64_t resolve_target(const SessionLog& log, const ReplayTarget& upto);

}  // namespace cubewall
