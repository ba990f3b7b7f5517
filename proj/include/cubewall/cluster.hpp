#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cubewall/manager.hpp"
#include "cubewall/node.hpp"

namespace cubewall {

// Manager plus its HTTP front end. With spawn_nodes, one NodeServer per
// column is started on loopback ephemeral ports; otherwise config.nodes are
// dialled.
class ManagerService {
 public:
  ManagerService(ManagerConfig config, std::string session_path, bool spawn_nodes,
                 std::optional<SessionLog> resume = std::nullopt);
  ~ManagerService();
  ManagerService(const ManagerService&) = delete;
  ManagerService& operator=(const ManagerService&) = delete;

  std::uint16_t port() const { return port_; }
  std::string url() const;
  Manager& manager() { return *manager_; }
  NodeServer* node_server(int column);
  void stop();

 private:
  std::vector<std::unique_ptr<NodeServer>> nodes_;
  std::unique_ptr<Manager> manager_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
  std::string host_;
  std::uint16_t port_ = 0;
};

struct BatchResult {
  std::string state_hash;
  std::vector<std::string> written;  // file names relative to out_dir
};

// Replays `log` onto fresh in-process nodes and writes <slot>.png for every
// slot plus state_hash.txt.
BatchResult run_batch(const ManagerConfig& config, const SessionLog& log, const std::string& out_dir);

}  // namespace cubewall
