#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cubewall/catalog.hpp"
#include "cubewall/link.hpp"
#include "cubewall/render.hpp"
#include "cubewall/session.hpp"

namespace httplib {
class Server;
}

namespace cubewall {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NodeEndpoint {
  std::string host = "127.0.0.1";
  std::uint16_t control_port = 0;
  std::uint16_t http_port = 0;
};

struct ManagerConfig {
  GridConfig grid = GridConfig::make(1, 4);
  std::vector<NodeEndpoint> nodes;  // index = column
  std::string data_root;
  std::string catalog_path;
  Viewport viewport = kDefaultPanelViewport;
  std::string http_host = "127.0.0.1";
  std::uint16_t http_port = 8080;
  std::chrono::milliseconds node_timeout{10'000};
  int render_threads = 1;
};

// Relative catalog/data paths are resolved against the config file's directory.
ManagerConfig load_manager_config(const std::string& path);
ManagerConfig parse_manager_config(const json& j, const std::string& base_dir = {});

struct Command {
  // load, unload, swap, reorder, select, camera, params, clip, checkpoint,
  // replay, query_histogram, query_scatter
  std::string kind;
  json body = json::object();
};

struct CommandResult {
  int status = 200;
  json body = json::object();
  bool ok() const { return status < 300; }
};

// Holds the global state and the session log. All mutations and node traffic
// go through one FIFO consumer thread; read-only accessors take snapshots.
class Manager {
 public:
  Manager(ManagerConfig config, SurveyCatalog catalog, std::vector<std::unique_ptr<NodeLink>> links,
          std::string session_path = {});
  ~Manager();
  Manager(const Manager&) = delete;
  Manager& operator=(const Manager&) = delete;

  std::future<CommandResult> submit(Command cmd);
  CommandResult execute(Command cmd) { return submit(std::move(cmd)).get(); }

  // Replays a stored session onto the (fresh) nodes and continues from it.
  CommandResult restore(SessionLog log);

  json state_json() const;
  GlobalState state() const;
  std::string current_hash() const;
  SessionLog session() const;
  std::uint64_t messages_sent() const { return messages_sent_; }

  const SurveyCatalog& catalog() const { return catalog_; }
  const ManagerConfig& config() const { return config_; }
  std::optional<FrameFetch> frame(SlotAddress slot);
  json nodes_json() const;

 private:
  struct Job {
    std::function<CommandResult()> run;
    std::promise<CommandResult> done;
  };

  struct DispatchOutcome {
    std::vector<wire::Message> responses;  // parallel to the dispatch list
    json warnings = json::array();
    std::optional<std::pair<int, json>> first_error;  // status, error object
  };

  void worker();
  std::future<CommandResult> enqueue(std::function<CommandResult()> fn);
  CommandResult process(const Command& cmd);
  CommandResult mutate(Action action, json payload);
  CommandResult replay_to(const json& body);
  CommandResult query_histogram(const json& body);
  CommandResult query_scatter(const json& body);
  SessionEvent draft_event(const Command& cmd) const;
  DispatchOutcome dispatch(const std::vector<Dispatch>& messages);
  void commit(GlobalState next, std::vector<SessionEvent> events, std::vector<std::string> hashes, bool rewrite);
  void append_to_file(const SessionEvent& ev, const std::string& hash);
  void rewrite_file();

  ManagerConfig config_;
  SurveyCatalog catalog_;
  std::vector<std::unique_ptr<NodeLink>> links_;
  std::string session_path_;
  std::ofstream session_file_;

  mutable std::mutex state_mutex_;
  GlobalState state_;
  SessionLog log_;

  std::atomic<std::uint64_t> messages_sent_{0};

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::unique_ptr<Job>> queue_;
  bool stopping_ = false;
  std::thread worker_;
};

// GET /catalog, GET /state, POST /commands/*, GET /query/*, GET /session/log,
// POST /session/checkpoint, POST /session/replay, GET /frames/{slot}, GET /healthz.
void register_manager_routes(httplib::Server& server, Manager& manager);

}  // namespace cubewall
