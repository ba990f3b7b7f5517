#include "cubewall/wire.hpp"

#include <array>

namespace cubewall::wire {

namespace {

constexpr std::array<std::string_view, 12> kKindNames = {"Hello",     "Ack",       "Error",   "Load",
                                                         "Unload",    "SetCamera", "SetParams", "SetClip",
                                                         "QueryHistogram", "QueryStat", "RenderFrame", "BuildAtlas"};

}  // namespace

std::string_view to_string(Kind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<Kind> parse_kind(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == text) return static_cast<Kind>(i);
  return std::nullopt;
}

std::string encode(const Message& msg) {
  // nlohmann::json objects are std::map backed, so dump() emits sorted keys.
  json j{{"id", msg.id}, {"kind", to_string(msg.kind)}, {"payload", msg.payload}};
  if (msg.panel) j["panel"] = *msg.panel;
  std::string out = j.dump(-1, ' ', false, json::error_handler_t::replace);
  out.push_back('\n');
  return out;
}

Message decode(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FramingError(std::string("malformed message: ") + e.what());
  }
  if (!j.is_object()) throw FramingError("message must be a JSON object");
  const auto id_it = j.find("id");
  const auto kind_it = j.find("kind");
  if (id_it == j.end() || !id_it->is_number_unsigned()) throw FramingError("message needs a non-negative integer id");
  if (kind_it == j.end() || !kind_it->is_string()) throw FramingError("message needs a string kind");
  Message msg;
  msg.id = id_it->get<std::uint64_t>();
  auto kind = parse_kind(kind_it->get<std::string>());
  if (!kind) throw ProtocolMismatch(msg.id, kind_it->get<std::string>());
  msg.kind = *kind;
  if (auto p = j.find("panel"); p != j.end() && !p->is_null()) {
    if (!p->is_number_integer()) throw FramingError("panel must be an integer");
    msg.panel = p->get<int>();
  }
  if (auto p = j.find("payload"); p != j.end() && !p->is_null()) {
    if (!p->is_object()) throw FramingError("payload must be an object");
    msg.payload = *p;
  }
  return msg;
}

void IdValidator::check(std::uint64_t id) {
  if (last_ && id <= *last_)
    throw ProtocolError("request id " + std::to_string(id) + " does not follow " + std::to_string(*last_));
  last_ = id;
}

}  // namespace cubewall::wire
