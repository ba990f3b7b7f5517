#include "cubewall/link.hpp"

#include <httplib.h>

namespace cubewall {

LocalNodeLink::LocalNodeLink(NodeOptions options) : node_(std::move(options)) {
  worker_ = std::thread([this] { run(); });
}

LocalNodeLink::~LocalNodeLink() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void LocalNodeLink::run() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

std::future<wire::Message> LocalNodeLink::request(wire::Message msg) {
  auto promise = std::make_shared<std::promise<wire::Message>>();
  auto future = promise->get_future();
  {
    std::lock_guard lock(mutex_);
    msg.id = ++next_id_;
    queue_.push_back([this, msg = std::move(msg), promise] { promise->set_value(node_.handle(msg)); });
  }
  cv_.notify_one();
  return future;
}

std::optional<FrameFetch> LocalNodeLink::fetch_frame(int panel) {
  auto frame = node_.frame(panel);
  if (!frame) return std::nullopt;
  return FrameFetch{frame->png, frame->etag};
}

json LocalNodeLink::describe() const { return json{{"column", node_.options().column}, {"transport", "in-process"}}; }

TcpNodeLink::TcpNodeLink(std::string host, std::uint16_t control_port, std::chrono::milliseconds connect_timeout)
    : host_(std::move(host)), control_port_(control_port) {
  sock_ = net::connect_tcp(host_, control_port_, connect_timeout);
  reader_ = std::make_unique<net::LineReader>(sock_);
  auto line = reader_->read_line();
  if (!line) throw net::NetError("node at " + host_ + ":" + std::to_string(control_port_) + " closed before Hello");
  auto hello = wire::decode(*line);
  if (hello.kind != wire::Kind::Hello) throw wire::ProtocolError("expected Hello from node");
  hello_ = hello.payload;
  http_port_ = static_cast<std::uint16_t>(hello_.value("http_port", 0));
  reader_thread_ = std::thread([this] { read_loop(); });
}

TcpNodeLink::~TcpNodeLink() {
  sock_.shutdown();
  if (reader_thread_.joinable()) reader_thread_.join();
}

std::future<wire::Message> TcpNodeLink::request(wire::Message msg) {
  std::promise<wire::Message> promise;
  auto future = promise.get_future();
  std::lock_guard write_lock(write_mutex_);
  {
    std::lock_guard lock(pending_mutex_);
    msg.id = ++next_id_;
    if (closed_) {
      promise.set_value(wire::Message::error(msg.id, wire::code::node_unavailable, "connection to node is closed"));
      return future;
    }
    pending_.emplace(msg.id, std::move(promise));
  }
  try {
    sock_.write_all(wire::encode(msg));
  } catch (const net::NetError& e) {
    std::lock_guard lock(pending_mutex_);
    if (auto it = pending_.find(msg.id); it != pending_.end()) {
      it->second.set_value(wire::Message::error(msg.id, wire::code::node_unavailable, e.what()));
      pending_.erase(it);
    }
  }
  return future;
}

void TcpNodeLink::read_loop() {
  std::string why = "node closed the connection";
  try {
    while (auto line = reader_->read_line()) {
      wire::Message msg;
      try {
        msg = wire::decode(*line);
      } catch (const wire::ProtocolMismatch& e) {
        msg = wire::Message::error(e.id(), wire::code::protocol_mismatch, e.what());
      }
      std::lock_guard lock(pending_mutex_);
      if (auto it = pending_.find(msg.id); it != pending_.end()) {
        it->second.set_value(std::move(msg));
        pending_.erase(it);
      }
    }
  } catch (const std::exception& e) {
    why = e.what();
  }
  fail_pending(why);
}

void TcpNodeLink::fail_pending(const std::string& why) {
  std::lock_guard lock(pending_mutex_);
  closed_ = true;
  for (auto& [id, promise] : pending_)
    promise.set_value(wire::Message::error(id, wire::code::node_unavailable, why));
  pending_.clear();
}

std::optional<FrameFetch> TcpNodeLink::fetch_frame(int panel) {
  if (http_port_ == 0) return std::nullopt;
  httplib::Client client(host_, http_port_);
  client.set_connection_timeout(5);
  client.set_read_timeout(10);
  auto res = client.Get("/frame/" + std::to_string(panel));
  if (!res || res->status != 200) return std::nullopt;
  std::string etag = res->get_header_value("ETag");
  if (etag.size() >= 2 && etag.front() == '"') etag = etag.substr(1, etag.size() - 2);
  return FrameFetch{Bytes(res->body.begin(), res->body.end()), etag};
}

json TcpNodeLink::describe() const {
  return json{{"column", hello_.value("column", -1)},
              {"transport", "tcp"},
              {"control", host_ + ":" + std::to_string(control_port_)},
              {"http", "http://" + host_ + ":" + std::to_string(http_port_)}};
}

}  // namespace cubewall
