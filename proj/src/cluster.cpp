#include "cubewall/cluster.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>

namespace cubewall {

ManagerService::ManagerService(ManagerConfig config, std::string session_path, bool spawn_nodes,
                               std::optional<SessionLog> resume)
    : host_(config.http_host) {
  if (config.catalog_path.empty()) throw ConfigError("no catalog configured");
  if (!std::filesystem::exists(config.catalog_path)) throw ConfigError("catalog not found: " + config.catalog_path);
  SurveyCatalog catalog = load_catalog_file(config.catalog_path);

  std::vector<std::unique_ptr<NodeLink>> links;
  if (spawn_nodes) {
    config.nodes.clear();
    for (int c = 0; c < config.grid.columns; ++c) {
      NodeOptions opts{c, config.grid.rows, config.viewport, config.data_root, config.render_threads};
      auto server = std::make_unique<NodeServer>(opts, "127.0.0.1", 0, 0);
      server->start();
      config.nodes.push_back({"127.0.0.1", server->control_port(), server->http_port()});
      nodes_.push_back(std::move(server));
    }
  }
  if (static_cast<int>(config.nodes.size()) != config.grid.columns)
    throw ConfigError("config lists " + std::to_string(config.nodes.size()) + " nodes for " +
                      std::to_string(config.grid.columns) + " columns");
  for (const auto& ep : config.nodes)
    links.push_back(std::make_unique<TcpNodeLink>(ep.host, ep.control_port, config.node_timeout));

  manager_ = std::make_unique<Manager>(config, std::move(catalog), std::move(links), std::move(session_path));
  if (resume) {
    auto r = manager_->restore(std::move(*resume));
    if (r.status == 400) throw ConfigError("cannot resume session: " + r.body.dump());
  }

  http_ = std::make_unique<httplib::Server>();
  register_manager_routes(*http_, *manager_);
  if (config.http_port == 0) {
    int p = http_->bind_to_any_port(host_);
    if (p < 0) throw net::NetError("cannot bind HTTP on " + host_);
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!http_->bind_to_port(host_, config.http_port))
      throw net::NetError("cannot bind HTTP port " + std::to_string(config.http_port) + " on " + host_);
    port_ = config.http_port;
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

ManagerService::~ManagerService() { stop(); }

std::string ManagerService::url() const { return "http://" + host_ + ":" + std::to_string(port_) + "/"; }

NodeServer* ManagerService::node_server(int column) {
  if (column < 0 || column >= static_cast<int>(nodes_.size())) return nullptr;
  return nodes_[static_cast<std::size_t>(column)].get();
}

void ManagerService::stop() {
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  manager_.reset();  // drains the queue and flushes the session file
  for (auto& n : nodes_) n->stop();
  nodes_.clear();
}

BatchResult run_batch(const ManagerConfig& config, const SessionLog& log, const std::string& out_dir) {
  const GridConfig& grid = log.grid;
  GlobalState final_state = replay(log);
  std::vector<std::unique_ptr<RenderNode>> nodes;
  for (int c = 0; c < grid.columns; ++c)
    nodes.push_back(std::make_unique<RenderNode>(
        NodeOptions{c, grid.rows, config.viewport, config.data_root, config.render_threads}));

  std::uint64_t id = 0;
  for (const auto& d : fan_out_from_empty(final_state, grid)) {
    auto msg = d.message;
    msg.id = ++id;
    auto resp = nodes[static_cast<std::size_t>(d.column)]->handle(msg);
    if (resp.kind == wire::Kind::Error)
      throw SessionError("node " + column_letters(d.column) + " rejected " + std::string(wire::to_string(msg.kind)) + ": " +
                         resp.payload.value("message", std::string()));
  }

  std::filesystem::create_directories(out_dir);
  BatchResult result;
  result.state_hash = state_hash(final_state, grid);
  for (int linear = 0; linear < grid.slot_count(); ++linear) {
    auto addr = linear_to_slot(linear, grid);
    auto frame = nodes[static_cast<std::size_t>(addr.column)]->frame(addr.row);
    auto name = addr.to_string() + ".png";
    write_file_bytes((std::filesystem::path(out_dir) / name).string(), frame->png);
    result.written.push_back(name);
  }
  std::ofstream((std::filesystem::path(out_dir) / "state_hash.txt").string(), std::ios::trunc)
      << result.state_hash << "\n";
  result.written.push_back("state_hash.txt");
  return result;
}

}  // namespace cubewall
