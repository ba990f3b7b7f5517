#include "cubewall/node.hpp"

#include <httplib.h>
#include <sys/socket.h>

#include <chrono>
#include <filesystem>
#include <iostream>

namespace cubewall {

namespace {

class CommandError : public std::runtime_error {
 public:
  CommandError(std::string_view code, const std::string& what) : std::runtime_error(what), code_(code) {}
  std::string_view code() const { return code_; }

 private:
  std::string_view code_;
};

std::string quoted_etag(const std::string& etag) { return "\"" + etag + "\""; }

}  // namespace

RenderNode::RenderNode(NodeOptions options) : options_(std::move(options)) {
  if (options_.rows <= 0) throw ArgumentError("node needs at least one panel");
  if (options_.viewport.width <= 0 || options_.viewport.height <= 0) throw ArgumentError("viewport must be non-empty");
  panels_.resize(static_cast<std::size_t>(options_.rows));
  atlases_.resize(panels_.size());
  FrameSet frames;
  for (int p = 1; p <= options_.rows; ++p) frames.push_back(render_panel(p));
  published_ = std::make_shared<const FrameSet>(std::move(frames));
}

wire::Message RenderNode::hello(int http_port) const {
  wire::Message m;
  m.id = 0;
  m.kind = wire::Kind::Hello;
  m.payload = json{{"column", options_.column},
                   {"rows", options_.rows},
                   {"viewport", {options_.viewport.width, options_.viewport.height}},
                   {"http_port", http_port}};
  return m;
}

wire::Message RenderNode::handle(const wire::Message& req) {
  try {
    switch (req.kind) {
      case wire::Kind::Load: return on_load(req);
      case wire::Kind::Unload: return on_unload(req);
      case wire::Kind::SetCamera: return on_set_camera(req);
      case wire::Kind::SetParams: return on_set_params(req);
      case wire::Kind::SetClip: return on_set_clip(req);
      case wire::Kind::QueryHistogram: return on_query_histogram(req);
      case wire::Kind::QueryStat: return on_query_stat(req);
      case wire::Kind::RenderFrame: return on_render_frame(req);
      case wire::Kind::BuildAtlas: return on_build_atlas(req);
      default:
        return wire::Message::error(req.id, wire::code::bad_request,
                                    std::string("node does not accept ") + std::string(wire::to_string(req.kind)));
    }
  } catch (const CommandError& e) {
    return wire::Message::error(req.id, e.code(), e.what());
  } catch (const json::exception& e) {
    return wire::Message::error(req.id, wire::code::bad_request, e.what());
  } catch (const std::invalid_argument& e) {
    return wire::Message::error(req.id, wire::code::bad_request, e.what());
  } catch (const std::exception& e) {
    return wire::Message::error(req.id, wire::code::internal, e.what());
  }
}

int RenderNode::checked_panel(const wire::Message& req) const {
  if (!req.panel) throw CommandError(wire::code::bad_request, "panel is required");
  if (*req.panel < 1 || *req.panel > options_.rows)
    throw CommandError(wire::code::bad_request, "panel " + std::to_string(*req.panel) + " outside 1.." +
                                                    std::to_string(options_.rows));
  return *req.panel;
}

std::string RenderNode::slot_label(int panel) const { return SlotAddress{options_.column, panel}.to_string(); }

std::string RenderNode::resolve_path(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || options_.data_root.empty()) return p.string();
  return (std::filesystem::path(options_.data_root) / p).string();
}

std::shared_ptr<const PanelFrame> RenderNode::render_panel(int panel) const {
  const auto& slot = panels_[static_cast<std::size_t>(panel - 1)];
  auto out = std::make_shared<PanelFrame>();
  FrameImage img;
  if (slot.volume) {
    img = render(*slot.volume, camera_, params_, options_.viewport, options_.render_threads);
    stamp_label(img, *slot.cube_id);
    out->cube_id = slot.cube_id;
  } else {
    img = placeholder_frame(options_.viewport.width, options_.viewport.height, slot_label(panel));
  }
  out->png = encode_png(img);
  out->etag = sha256_hex(out->png);
  return out;
}

void RenderNode::publish(int panel, std::shared_ptr<const PanelFrame> frame) {
  std::lock_guard lock(publish_mutex_);
  auto next = std::make_shared<FrameSet>(*published_);
  (*next)[static_cast<std::size_t>(panel - 1)] = std::move(frame);
  atlases_[static_cast<std::size_t>(panel - 1)] = panels_[static_cast<std::size_t>(panel - 1)].atlas;
  published_ = std::move(next);
}

void RenderNode::publish_all(FrameSet frames) {
  std::lock_guard lock(publish_mutex_);
  published_ = std::make_shared<const FrameSet>(std::move(frames));
}

std::shared_ptr<const PanelFrame> RenderNode::frame(int panel) const {
  if (panel < 1 || panel > options_.rows) return nullptr;
  std::lock_guard lock(publish_mutex_);
  return (*published_)[static_cast<std::size_t>(panel - 1)];
}

std::vector<std::shared_ptr<const PanelFrame>> RenderNode::frames() const {
  std::lock_guard lock(publish_mutex_);
  return *published_;
}

std::shared_ptr<const AtlasImage> RenderNode::atlas(int panel) const {
  if (panel < 1 || panel > options_.rows) return nullptr;
  std::lock_guard lock(publish_mutex_);
  return atlases_[static_cast<std::size_t>(panel - 1)];
}

std::optional<CubeId> RenderNode::cube(int panel) const {
  if (panel < 1 || panel > options_.rows) return std::nullopt;
  return panels_[static_cast<std::size_t>(panel - 1)].cube_id;
}

const Volume* RenderNode::volume(int panel) const {
  if (panel < 1 || panel > options_.rows) return nullptr;
  const auto& v = panels_[static_cast<std::size_t>(panel - 1)].volume;
  return v ? &*v : nullptr;
}

std::size_t RenderNode::resident_volumes() const {
  std::size_t n = 0;
  for (const auto& p : panels_) n += p.volume ? 1 : 0;
  return n;
}

wire::Message RenderNode::on_load(const wire::Message& req) {
  const int panel = checked_panel(req);
  const auto cube_id = req.payload.at("cube_id").get<std::string>();
  const auto path = req.payload.at("path").get<std::string>();
  auto started = std::chrono::steady_clock::now();

  Panel next;
  try {
    next.volume = normalize(load_volume_file(resolve_path(path)));
  } catch (const std::exception& e) {
    throw CommandError(wire::code::load_failed, "cannot load " + cube_id + " from " + path + ": " + e.what());
  }
  next.cube_id = cube_id;
  next.histogram = histogram(*next.volume, 256);
  next.atlas = std::make_shared<const AtlasImage>(build_atlas(*next.volume));
  double load_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  const auto voxels = next.volume->voxel_count();
  panels_[static_cast<std::size_t>(panel - 1)] = std::move(next);
  auto frame = render_panel(panel);
  auto etag = frame->etag;
  publish(panel, std::move(frame));
  return wire::Message::ack(req.id, json{{"load_ms", load_ms}, {"voxel_count", voxels}, {"etag", etag}});
}

wire::Message RenderNode::on_unload(const wire::Message& req) {
  const int panel = checked_panel(req);
  auto& slot = panels_[static_cast<std::size_t>(panel - 1)];
  if (!slot.volume) return wire::Message::ack(req.id);
  slot = Panel{};
  publish(panel, render_panel(panel));
  return wire::Message::ack(req.id);
}

wire::Message RenderNode::apply_view(std::uint64_t id, const CameraState& cam, const RenderParams& params) {
  auto bad = params.violations();
  auto bad_cam = cam.violations();
  bad.insert(bad.end(), bad_cam.begin(), bad_cam.end());
  if (!bad.empty()) {
    std::string msg;
    for (const auto& b : bad) msg += (msg.empty() ? "" : "; ") + b;
    return wire::Message::error(id, wire::code::bad_params, msg);
  }
  camera_ = cam.normalized();
  params_ = params;
  FrameSet frames = this->frames();
  for (int p = 1; p <= options_.rows; ++p)
    if (panels_[static_cast<std::size_t>(p - 1)].volume) frames[static_cast<std::size_t>(p - 1)] = render_panel(p);
  publish_all(std::move(frames));
  return wire::Message::ack(id);
}

wire::Message RenderNode::on_set_camera(const wire::Message& req) {
  CameraState cam = camera_;
  from_json(req.payload.at("camera"), cam);
  return apply_view(req.id, cam, params_);
}

wire::Message RenderNode::on_set_params(const wire::Message& req) {
  RenderParams params = params_;
  from_json(req.payload.at("params"), params);
  return apply_view(req.id, camera_, params);
}

wire::Message RenderNode::on_set_clip(const wire::Message& req) {
  RenderParams params = params_;
  params.clip_lo = req.payload.at("lo").get<double>();
  params.clip_hi = req.payload.at("hi").get<double>();
  return apply_view(req.id, camera_, params);
}

wire::Message RenderNode::on_query_histogram(const wire::Message& req) {
  const int panel = checked_panel(req);
  const auto& slot = panels_[static_cast<std::size_t>(panel - 1)];
  if (!slot.volume) throw CommandError(wire::code::no_data, "panel " + slot_label(panel) + " is empty");
  int bins = req.payload.value("bins", 256);
  std::optional<std::pair<double, double>> clip;
  if (auto it = req.payload.find("clip"); it != req.payload.end() && !it->is_null())
    clip = std::make_pair((*it)[0].get<double>(), (*it)[1].get<double>());
  Histogram h = (bins == 256 && !clip && slot.histogram) ? *slot.histogram : histogram(*slot.volume, bins, clip);
  return wire::Message::ack(req.id, json{{"cube_id", *slot.cube_id}, {"histogram", h}});
}

wire::Message RenderNode::on_query_stat(const wire::Message& req) {
  const int panel = checked_panel(req);
  const auto& slot = panels_[static_cast<std::size_t>(panel - 1)];
  if (!slot.volume) throw CommandError(wire::code::no_data, "panel " + slot_label(panel) + " is empty");
  auto query = parse_stat_query(req.payload.value("stat", std::string("mean")), params_.iso_level);
  if (auto it = req.payload.find("level"); it != req.payload.end()) query.level = it->get<double>();
  return wire::Message::ack(req.id, json{{"cube_id", *slot.cube_id}, {"value", stat(*slot.volume, query)}});
}

wire::Message RenderNode::on_render_frame(const wire::Message& req) {
  json out = json::array();
  if (req.panel) {
    int panel = checked_panel(req);
    auto frame = render_panel(panel);
    out.push_back({{"panel", panel}, {"path", "/frame/" + std::to_string(panel)}, {"etag", frame->etag}});
    publish(panel, std::move(frame));
  } else {
    FrameSet frames;
    for (int p = 1; p <= options_.rows; ++p) {
      frames.push_back(render_panel(p));
      out.push_back({{"panel", p}, {"path", "/frame/" + std::to_string(p)}, {"etag", frames.back()->etag}});
    }
    publish_all(std::move(frames));
  }
  return wire::Message::ack(req.id, json{{"frames", out}});
}

wire::Message RenderNode::on_build_atlas(const wire::Message& req) {
  const int panel = checked_panel(req);
  auto& slot = panels_[static_cast<std::size_t>(panel - 1)];
  if (!slot.volume) throw CommandError(wire::code::no_data, "panel " + slot_label(panel) + " is empty");
  if (!slot.atlas) slot.atlas = std::make_shared<const AtlasImage>(build_atlas(*slot.volume));
  {
    std::lock_guard lock(publish_mutex_);
    atlases_[static_cast<std::size_t>(panel - 1)] = slot.atlas;
  }
  return wire::Message::ack(req.id, json{{"path", "/atlas/" + std::to_string(panel)},
                                         {"descriptor", slot.atlas->descriptor()}});
}

void register_node_routes(httplib::Server& server, RenderNode& node) {
  server.Get(R"(/frame/(\d+))", [&node](const httplib::Request& req, httplib::Response& res) {
    auto frame = node.frame(std::stoi(req.matches[1]));
    if (!frame) {
      res.status = 404;
      return;
    }
    auto etag = quoted_etag(frame->etag);
    res.set_header("ETag", etag);
    res.set_header("Cache-Control", "no-cache");
    if (req.get_header_value("If-None-Match") == etag) {
      res.status = 304;
      return;
    }
    res.set_content(reinterpret_cast<const char*>(frame->png.data()), frame->png.size(), "image/png");
  });
  server.Get(R"(/atlas/(\d+))", [&node](const httplib::Request& req, httplib::Response& res) {
    auto atlas = node.atlas(std::stoi(req.matches[1]));
    if (!atlas) {
      res.status = 404;
      res.set_content(R"({"error":"no atlas for panel"})", "application/json");
      return;
    }
    auto png = encode_png_grey(atlas->width(), atlas->height(), atlas->image);
    res.set_header("X-Atlas-Descriptor", atlas->descriptor().dump());
    res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
  });
  server.Get(R"(/atlas/(\d+)/descriptor)", [&node](const httplib::Request& req, httplib::Response& res) {
    auto atlas = node.atlas(std::stoi(req.matches[1]));
    if (!atlas) {
      res.status = 404;
      return;
    }
    res.set_content(atlas->descriptor().dump(), "application/json");
  });
  server.Get("/healthz", [&node](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"ok", true}, {"column", node.options().column}, {"resident", node.resident_volumes()}}.dump(),
                    "application/json");
  });
}

NodeServer::NodeServer(NodeOptions options, std::string host, std::uint16_t control_port, std::uint16_t http_port)
    : node_(std::move(options)), host_(std::move(host)), control_port_(control_port), http_port_(http_port) {}

NodeServer::~NodeServer() { stop(); }

void NodeServer::start() {
  listener_ = net::listen_tcp(host_, control_port_);
  control_port_ = net::local_port(listener_);

  http_ = std::make_unique<httplib::Server>();
  register_node_routes(*http_, node_);
  if (http_port_ == 0) {
    int port = http_->bind_to_any_port(host_);
    if (port < 0) throw net::NetError("cannot bind an HTTP port for node " + std::to_string(node_.options().column));
    http_port_ = static_cast<std::uint16_t>(port);
  } else if (!http_->bind_to_port(host_, http_port_)) {
    throw net::NetError("cannot bind port " + std::to_string(http_port_));
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  control_thread_ = std::thread([this] { control_loop(); });
}

void NodeServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  {
    std::lock_guard lock(conn_mutex_);
    if (active_conn_fd_ >= 0) ::shutdown(active_conn_fd_, SHUT_RDWR);
  }
  if (http_) http_->stop();
  if (control_thread_.joinable()) control_thread_.join();
  if (http_thread_.joinable()) http_thread_.join();
  listener_.close();
}

void NodeServer::control_loop() {
  while (!stopping_) {
    net::Socket conn = net::accept_connection(listener_);
    if (!conn.valid()) break;
    serve_connection(std::move(conn));
  }
}

void NodeServer::serve_connection(net::Socket conn) {
  {
    std::lock_guard lock(conn_mutex_);
    if (stopping_) return;
    active_conn_fd_ = conn.fd();
  }
  try {
    conn.write_all(wire::encode(node_.hello(http_port_)));
    net::LineReader reader(conn);
    wire::IdValidator ids;
    while (auto line = reader.read_line()) {
      wire::Message reply;
      try {
        auto req = wire::decode(*line);
        ids.check(req.id);
        reply = node_.handle(req);
      } catch (const wire::ProtocolMismatch& e) {
        reply = wire::Message::error(e.id(), wire::code::protocol_mismatch,
                                     std::string(e.what()) + "; peer speaks a different protocol revision");
      } catch (const wire::ProtocolError& e) {
        std::cerr << "node " << node_.options().column << ": " << e.what() << ", resetting connection\n";
        break;
      } catch (const wire::FramingError& e) {
        std::cerr << "node " << node_.options().column << ": " << e.what() << ", resetting connection\n";
        break;
      }
      conn.write_all(wire::encode(reply));
    }
  } catch (const net::NetError&) {
    // Peer went away; wait for the next connection.
  }
  std::lock_guard lock(conn_mutex_);
  active_conn_fd_ = -1;
}

}  // namespace cubewall
