#include "cubewall/session.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "cubewall/image.hpp"

namespace cubewall {

namespace {

int slot_field(const json& payload, const char* key, const GridConfig& grid) {
  auto it = payload.find(key);
  if (it == payload.end() || !it->is_string()) throw TransitionError(std::string("missing slot field '") + key + "'");
  try {
    return slot_to_linear(SlotAddress::parse(it->get<std::string>()), grid);
  } catch (const AddressError& e) {
    throw TransitionError(e.what());
  }
}

std::vector<int> slot_list(const json& payload, const GridConfig& grid) {
  auto it = payload.find("slots");
  if (it == payload.end() || !it->is_array()) throw TransitionError("missing 'slots' array");
  std::vector<int> out;
  for (const auto& s : *it) {
    if (!s.is_string()) throw TransitionError("slot entries must be strings like \"B3\"");
    try {
      out.push_back(slot_to_linear(SlotAddress::parse(s.get<std::string>()), grid));
    } catch (const AddressError& e) {
      throw TransitionError(e.what());
    }
  }
  return out;
}

void clear_slot(GlobalState& st, int linear) {
  auto it = st.grid.occupancy.find(linear);
  if (it == st.grid.occupancy.end()) return;
  st.provenance.erase(it->second);
  st.grid.occupancy.erase(it);
}

void check_violations(const std::vector<std::string>& v) {
  if (v.empty()) return;
  std::string msg;
  for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
  throw TransitionError(msg);
}

void apply_load(GlobalState& st, const SessionEvent& ev, const GridConfig& grid) {
  const auto& assign = ev.payload.at("assign");
  if (!assign.is_array() || assign.empty()) throw TransitionError("LoadData needs a non-empty 'assign' list");
  struct Item {
    int slot;
    CubeId id;
    std::string path;
  };
  std::vector<Item> items;
  std::set<int> slots;
  std::set<CubeId> ids;
  for (const auto& a : assign) {
    Item item{slot_field(a, "slot", grid), a.at("id").get<std::string>(), a.value("path", std::string())};
    if (item.id.empty()) throw TransitionError("empty cube ID");
    if (!slots.insert(item.slot).second)
      throw TransitionError("slot " + linear_to_slot(item.slot, grid).to_string() + " assigned twice");
    if (!ids.insert(item.id).second) throw TransitionError("cube " + item.id + " assigned twice");
    items.push_back(std::move(item));
  }
  if (auto s = ev.payload.find("sort"); s != ev.payload.end()) st.grid.sort_state = s->get<SortSpec>();

  // Assigned cubes leave their old slots (a move), then displaced occupants are dropped.
  for (auto it = st.grid.occupancy.begin(); it != st.grid.occupancy.end();) {
    if (ids.count(it->second)) it = st.grid.occupancy.erase(it);
    else ++it;
  }
  for (const auto& item : items) clear_slot(st, item.slot);
  for (auto& item : items) {
    st.grid.occupancy[item.slot] = item.id;
    st.provenance[item.id] = Provenance{std::move(item.path), ev.seq};
  }
}

json slot_map_json(const std::map<int, CubeId>& occ, const GridConfig& grid) {
  json out = json::object();
  for (const auto& [linear, id] : occ) out[linear_to_slot(linear, grid).to_string()] = id;
  return out;
}

std::optional<CubeId> lookup(const std::map<int, CubeId>& occ, int linear) {
  auto it = occ.find(linear);
  if (it == occ.end()) return std::nullopt;
  return it->second;
}

}  // namespace

json canonical_state(const GlobalState& state, const GridConfig& grid) {
  json prov = json::object();
  for (const auto& [id, p] : state.provenance) prov[id] = {{"path", p.path}, {"load_seq", p.load_seq}};
  return json{{"grid", grid},
              {"occupancy", slot_map_json(state.grid.occupancy, grid)},
              {"params", state.grid.params},
              {"camera", state.grid.camera},
              {"sort", state.grid.sort_state},
              {"provenance", prov},
              {"checkpoints", state.checkpoints}};
}

std::string state_hash(const GlobalState& state, const GridConfig& grid) {
  return sha256_hex(canonical_state(state, grid).dump());
}

json state_to_json(const GlobalState& state, const GridConfig& grid) {
  json j = canonical_state(state, grid);
  json sel = json::array();
  for (int s : state.grid.selection) sel.push_back(linear_to_slot(s, grid).to_string());
  j["selection"] = sel;
  json slots = json::array();
  for (int i = 0; i < grid.slot_count(); ++i) {
    auto id = lookup(state.grid.occupancy, i);
    slots.push_back({{"slot", linear_to_slot(i, grid).to_string()}, {"id", id ? json(*id) : json(nullptr)}});
  }
  j["slots"] = slots;
  return j;
}

GlobalState apply_reorder(const GlobalState& state, SlotAddress from, SlotAddress to, const GridConfig& grid) {
  int p = 0, q = 0;
  try {
    p = slot_to_linear(from, grid);
    q = slot_to_linear(to, grid);
  } catch (const AddressError& e) {
    throw TransitionError(e.what());
  }
  if (p == q) throw TransitionError("reorder source and destination are the same slot");
  if (!state.grid.occupancy.count(p)) throw TransitionError("reorder source " + from.to_string() + " is empty");
  GlobalState out = state;
  auto& occ = out.grid.occupancy;
  const CubeId moving = occ.at(p);
  if (p < q) {
    for (int i = p; i < q; ++i) {
      if (auto next = lookup(state.grid.occupancy, i + 1)) occ[i] = *next;
      else occ.erase(i);
    }
  } else {
    for (int i = p; i > q; --i) {
      if (auto prev = lookup(state.grid.occupancy, i - 1)) occ[i] = *prev;
      else occ.erase(i);
    }
  }
  occ[q] = moving;
  return out;
}

GlobalState apply_event(const GlobalState& state, const SessionEvent& ev, const GridConfig& grid) {
  GlobalState st = state;
  try {
    switch (ev.action) {
      case Action::LoadData: apply_load(st, ev, grid); break;
      case Action::Unload:
        for (int s : slot_list(ev.payload, grid)) clear_slot(st, s);
        break;
      case Action::Swap: {
        int a = slot_field(ev.payload, "a", grid);
        int b = slot_field(ev.payload, "b", grid);
        auto ca = lookup(st.grid.occupancy, a);
        auto cb = lookup(st.grid.occupancy, b);
        st.grid.occupancy.erase(a);
        st.grid.occupancy.erase(b);
        if (ca) st.grid.occupancy[b] = *ca;
        if (cb) st.grid.occupancy[a] = *cb;
        break;
      }
      case Action::Reorder:
        return apply_reorder(state, linear_to_slot(slot_field(ev.payload, "from", grid), grid),
                             linear_to_slot(slot_field(ev.payload, "to", grid), grid), grid);
      case Action::Select: {
        auto slots = slot_list(ev.payload, grid);
        st.grid.selection = std::set<int>(slots.begin(), slots.end());
        break;
      }
      case Action::SetCamera: {
        CameraState cam;
        from_json(ev.payload.at("camera"), cam);
        check_violations(cam.violations());
        st.grid.camera = cam.normalized();
        break;
      }
      case Action::SetParams: {
        RenderParams params = st.grid.params;
        from_json(ev.payload.at("params"), params);
        check_violations(params.violations());
        st.grid.params = params;
        break;
      }
      case Action::SetClip: {
        RenderParams params = st.grid.params;
        params.clip_lo = ev.payload.at("lo").get<double>();
        params.clip_hi = ev.payload.at("hi").get<double>();
        check_violations(params.violations());
        st.grid.params = params;
        break;
      }
      case Action::Checkpoint: {
        auto name = ev.payload.at("name").get<std::string>();
        if (name.empty()) throw TransitionError("checkpoint name must not be empty");
        if (!st.checkpoints.emplace(name, ev.seq).second) throw TransitionError("checkpoint '" + name + "' exists");
        break;
      }
    }
  } catch (const json::exception& e) {
    throw TransitionError(std::string("malformed ") + std::string(to_string(ev.action)) + " payload: " + e.what());
  } catch (const ArgumentError& e) {
    throw TransitionError(e.what());
  }
  return st;
}

std::vector<int> occupancy_diff(const GlobalState& before, const GlobalState& after) {
  std::set<int> keys;
  for (const auto& [k, v] : before.grid.occupancy) keys.insert(k);
  for (const auto& [k, v] : after.grid.occupancy) keys.insert(k);
  std::vector<int> out;
  for (int k : keys)
    if (lookup(before.grid.occupancy, k) != lookup(after.grid.occupancy, k)) out.push_back(k);
  return out;
}

namespace {

std::vector<Dispatch> panel_messages(const std::vector<int>& slots, const GlobalState& after, const GridConfig& grid) {
  std::vector<Dispatch> out;
  for (int linear : slots) {
    auto addr = linear_to_slot(linear, grid);
    wire::Message m;
    m.panel = addr.row;
    if (auto id = lookup(after.grid.occupancy, linear)) {
      m.kind = wire::Kind::Load;
      const auto& prov = after.provenance.at(*id);
      m.payload = json{{"cube_id", *id}, {"path", prov.path}};
    } else {
      m.kind = wire::Kind::Unload;
    }
    out.push_back({addr.column, std::move(m)});
  }
  return out;
}

std::vector<Dispatch> broadcast(wire::Kind kind, const json& payload, const GridConfig& grid) {
  std::vector<Dispatch> out;
  for (int c = 0; c < grid.columns; ++c) out.push_back({c, wire::Message{0, kind, std::nullopt, payload}});
  return out;
}

}  // namespace

std::vector<Dispatch> fan_out(const SessionEvent& ev, const GlobalState& before, const GlobalState& after,
                              const GridConfig& grid) {
  switch (ev.action) {
    case Action::SetCamera: return broadcast(wire::Kind::SetCamera, json{{"camera", after.grid.camera}}, grid);
    case Action::SetParams: return broadcast(wire::Kind::SetParams, json{{"params", after.grid.params}}, grid);
    case Action::SetClip:
      return broadcast(wire::Kind::SetClip, json{{"lo", after.grid.params.clip_lo}, {"hi", after.grid.params.clip_hi}},
                       grid);
    case Action::Select:
    case Action::Checkpoint: return {};
    default: return panel_messages(occupancy_diff(before, after), after, grid);
  }
}

std::vector<Dispatch> fan_out_from_empty(const GlobalState& state, const GridConfig& grid) {
  std::vector<Dispatch> out;
  if (state.grid.params != RenderParams{}) {
    auto b = broadcast(wire::Kind::SetParams, json{{"params", state.grid.params}}, grid);
    out.insert(out.end(), b.begin(), b.end());
  }
  if (state.grid.camera != CameraState{}) {
    auto b = broadcast(wire::Kind::SetCamera, json{{"camera", state.grid.camera}}, grid);
    out.insert(out.end(), b.begin(), b.end());
  }
  auto loads = panel_messages(occupancy_diff(GlobalState{}, state), state, grid);
  out.insert(out.end(), loads.begin(), loads.end());
  return out;
}

std::map<std::string, std::uint64_t> SessionLog::checkpoints() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : events)
    if (e.action == Action::Checkpoint) out.emplace(e.payload.value("name", std::string()), e.seq);
  return out;
}

std::string session_header_line(const GridConfig& grid) {
  return json{{"format", "cubewall-session"}, {"version", kSessionFormatVersion}, {"grid", grid}}.dump() + "\n";
}

std::string session_event_line(const SessionEvent& ev, const std::string& hash) {
  json j = ev;
  if (!hash.empty()) j["state_hash"] = hash;
  return j.dump() + "\n";
}

std::string save_session(const SessionLog& log) {
  std::string out = session_header_line(log.grid);
  for (std::size_t i = 0; i < log.events.size(); ++i)
    out += session_event_line(log.events[i], i < log.hashes.size() ? log.hashes[i] : std::string());
  return out;
}

SessionLog load_session(std::string_view text) {
  SessionLog log;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SessionError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (j.value("format", std::string()) != "cubewall-session") throw SessionError("not a session file");
      auto version = j.value("version", -1);
      if (version != kSessionFormatVersion)
        throw SessionError("session format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kSessionFormatVersion) + ")");
      try {
        log.grid = j.at("grid").get<GridConfig>();
      } catch (const std::exception& e) {
        throw SessionError(std::string("bad grid in session header: ") + e.what());
      }
      have_header = true;
      continue;
    }
    SessionEvent ev;
    try {
      ev = j.get<SessionEvent>();
    } catch (const std::exception& e) {
      throw SessionError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (ev.seq != log.events.size() + 1)
      throw SessionError("line " + std::to_string(line_no) + ": expected seq " + std::to_string(log.events.size() + 1) +
                         ", found " + std::to_string(ev.seq));
    log.hashes.push_back(j.value("state_hash", std::string()));
    log.events.push_back(std::move(ev));
  }
  if (!have_header) throw SessionError("session file has no header");
  return log;
}

std::uint64_t resolve_target(const SessionLog& log, const ReplayTarget& upto) {
  if (std::holds_alternative<std::monostate>(upto)) return log.last_seq();
  if (auto* n = std::get_if<std::uint64_t>(&upto)) {
    if (*n > log.last_seq())
      throw ArgumentError("replay target " + std::to_string(*n) + " beyond last seq " + std::to_string(log.last_seq()));
    return *n;
  }
  const auto& name = std::get<std::string>(upto);
  auto cps = log.checkpoints();
  auto it = cps.find(name);
  if (it == cps.end()) throw ArgumentError("unknown checkpoint '" + name + "'");
  return it->second;
}

GlobalState replay(const SessionLog& log, const ReplayTarget& upto) {
  auto n = resolve_target(log, upto);
  GlobalState st;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto& ev = log.events[i];
    if (ev.seq != i + 1) throw SessionError("gap in session at seq " + std::to_string(i + 1));
    try {
      st = apply_event(st, ev, log.grid);
    } catch (const TransitionError& e) {
      throw SessionError("event " + std::to_string(ev.seq) + " does not replay: " + e.what());
    }
    if (i < log.hashes.size() && !log.hashes[i].empty() && log.hashes[i] != state_hash(st, log.grid))
      throw SessionError("state hash mismatch at seq " + std::to_string(ev.seq));
  }
  return st;
}

}  // namespace cubewall
