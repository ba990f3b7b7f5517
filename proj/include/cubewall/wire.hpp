#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cubewall/core.hpp"

namespace cubewall::wire {

enum class Kind {
  Hello,
  Ack,
  Error,
  Load,
  Unload,
  SetCamera,
  SetParams,
  SetClip,
  QueryHistogram,
  QueryStat,
  RenderFrame,
  BuildAtlas,
};

std::string_view to_string(Kind kind);
std::optional<Kind> parse_kind(std::string_view text);

// Machine-readable codes carried by Error messages.
namespace code {
inline constexpr std::string_view load_failed = "load-failed";
inline constexpr std::string_view bad_params = "bad-params";
inline constexpr std::string_view no_data = "no-data";
inline constexpr std::string_view bad_request = "bad-request";
inline constexpr std::string_view protocol_mismatch = "protocol-mismatch";
inline constexpr std::string_view node_unavailable = "node-unavailable";
inline constexpr std::string_view internal = "internal";
}  // namespace code

struct Message {
  std::uint64_t id = 0;
  Kind kind = Kind::Ack;
  std::optional<int> panel;  // node-local row, 1..R
  json payload = json::object();

  bool operator==(const Message&) const = default;

  static Message ack(std::uint64_t id, json payload = json::object()) { return {id, Kind::Ack, std::nullopt, std::move(payload)}; }
  static Message error(std::uint64_t id, std::string_view code, std::string_view message) {
    return {id, Kind::Error, std::nullopt, json{{"code", code}, {"message", message}}};
  }
};

// The line cannot be parsed as a message; the connection should be reset.
class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed line with a kind this build does not know. The peer should be
// answered with an Error carrying code::protocol_mismatch and the same id.
class ProtocolMismatch : public std::runtime_error {
 public:
  ProtocolMismatch(std::uint64_t id, std::string kind)
      : std::runtime_error("unknown message kind '" + kind + "'"), id_(id), kind_(std::move(kind)) {}
  std::uint64_t id() const { return id_; }
  const std::string& kind() const { return kind_; }

 private:
  std::uint64_t id_;
  std::string kind_;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Canonical JSON (sorted keys, no insignificant whitespace) plus '\n'.
std::string encode(const Message& msg);
// Accepts the line with or without its trailing newline.
Message decode(std::string_view line);

// Enforces strictly increasing request ids on one connection.
class IdValidator {
 public:
  void check(std::uint64_t id);
  std::optional<std::uint64_t> last() const { return last_; }

 private:
  std::optional<std::uint64_t> last_;
};

}  // namespace cubewall::wire
