#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cubewall/core.hpp"
#include "cubewall/net.hpp"
#include "cubewall/render.hpp"
#include "cubewall/volume.hpp"
#include "cubewall/wire.hpp"

namespace httplib {
class Server;
}

namespace cubewall {

inline constexpr Viewport kDefaultPanelViewport{342, 768};

struct NodeOptions {
  int column = 0;
  int rows = 4;
  Viewport viewport = kDefaultPanelViewport;
  std::string data_root;
  int render_threads = 1;
};

// Encoded frame as served to the wall surrogate.
struct PanelFrame {
  Bytes png;
  std::string etag;
  std::optional<CubeId> cube_id;
};

// Worker owning one grid column. Commands run serially through handle();
// frame and atlas readers may run concurrently and always see a consistent
// set of frames across the node's panels.
class RenderNode {
 public:
  explicit RenderNode(NodeOptions options);

  const NodeOptions& options() const { return options_; }

  wire::Message hello(int http_port = 0) const;
  wire::Message handle(const wire::Message& request);

  std::shared_ptr<const PanelFrame> frame(int panel) const;
  std::vector<std::shared_ptr<const PanelFrame>> frames() const;
  std::shared_ptr<const AtlasImage> atlas(int panel) const;

  std::optional<CubeId> cube(int panel) const;
  const Volume* volume(int panel) const;
  std::size_t resident_volumes() const;
  const CameraState& camera() const { return camera_; }
  const RenderParams& params() const { return params_; }

 private:
  struct Panel {
    std::optional<CubeId> cube_id;
    std::optional<Volume> volume;
    std::optional<Histogram> histogram;  // 256 bins, unclipped
    std::shared_ptr<const AtlasImage> atlas;
  };

  using FrameSet = std::vector<std::shared_ptr<const PanelFrame>>;

  wire::Message on_load(const wire::Message& req);
  wire::Message on_unload(const wire::Message& req);
  wire::Message on_set_camera(const wire::Message& req);
  wire::Message on_set_params(const wire::Message& req);
  wire::Message on_set_clip(const wire::Message& req);
  wire::Message on_query_histogram(const wire::Message& req);
  wire::Message on_query_stat(const wire::Message& req);
  wire::Message on_render_frame(const wire::Message& req);
  wire::Message on_build_atlas(const wire::Message& req);
  wire::Message apply_view(std::uint64_t id, const CameraState& cam, const RenderParams& params);

  int checked_panel(const wire::Message& req) const;
  std::string slot_label(int panel) const;
  std::shared_ptr<const PanelFrame> render_panel(int panel) const;
  void publish(int panel, std::shared_ptr<const PanelFrame> frame);
  void publish_all(FrameSet frames);
  std::string resolve_path(const std::string& path) const;

  NodeOptions options_;
  std::vector<Panel> panels_;
  CameraState camera_;
  RenderParams params_;

  mutable std::mutex publish_mutex_;
  std::shared_ptr<const FrameSet> published_;
  std::vector<std::shared_ptr<const AtlasImage>> atlases_;
};

// Network front end of a RenderNode: a TCP control port speaking the wire
// protocol and an HTTP port serving frames.
class NodeServer {
 public:
  NodeServer(NodeOptions options, std::string host, std::uint16_t control_port, std::uint16_t http_port);
  ~NodeServer();
  NodeServer(const NodeServer&) = delete;
  NodeServer& operator=(const NodeServer&) = delete;

  void start();
  void stop();

  std::uint16_t control_port() const { return control_port_; }
  std::uint16_t http_port() const { return http_port_; }
  RenderNode& node() { return node_; }

 private:
  void control_loop();
  void serve_connection(net::Socket conn);

  RenderNode node_;
  std::string host_;
  std::uint16_t control_port_;
  std::uint16_t http_port_;
  net::Socket listener_;
  std::unique_ptr<httplib::Server> http_;
  std::thread control_thread_;
  std::thread http_thread_;
  std::mutex conn_mutex_;
  int active_conn_fd_ = -1;
  std::atomic<bool> stopping_{false};
};

// Registers GET /frame/{panel}, /atlas/{panel}, /atlas/{panel}/descriptor and /healthz.
void register_node_routes(httplib::Server& server, RenderNode& node);

}  // namespace cubewall
