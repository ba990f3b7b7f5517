#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "cubewall/net.hpp"
#include "cubewall/node.hpp"
#include "cubewall/wire.hpp"

namespace cubewall {

struct FrameFetch {
  Bytes png;
  std::string etag;
};

// Manager-side handle on one render node. request() assigns the message id
// and resolves with the node's response; transport failures resolve with an
// Error message (code node-unavailable) rather than an exception.
class NodeLink {
 public:
  virtual ~NodeLink() = default;
  virtual std::future<wire::Message> request(wire::Message msg) = 0;
  virtual std::optional<FrameFetch> fetch_frame(int panel) = 0;
  // Where a browser can reach the node's frame server, if anywhere.
  virtual json describe() const = 0;
};

// Runs a RenderNode in-process on its own worker thread.
class LocalNodeLink : public NodeLink {
 public:
  explicit LocalNodeLink(NodeOptions options);
  ~LocalNodeLink() override;

  std::future<wire::Message> request(wire::Message msg) override;
  std::optional<FrameFetch> fetch_frame(int panel) override;
  json describe() const override;

  RenderNode& node() { return node_; }

 private:
  void run();

  RenderNode node_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::uint64_t next_id_ = 0;
  std::thread worker_;
};

// Control connection to a NodeServer plus its HTTP frame endpoint.
class TcpNodeLink : public NodeLink {
 public:
  TcpNodeLink(std::string host, std::uint16_t control_port, std::chrono::milliseconds connect_timeout);
  ~TcpNodeLink() override;

  std::future<wire::Message> request(wire::Message msg) override;
  std::optional<FrameFetch> fetch_frame(int panel) override;
  json describe() const override;

  const json& hello() const { return hello_; }

 private:
  void read_loop();
  void fail_pending(const std::string& why);

  std::string host_;
  std::uint16_t control_port_;
  std::uint16_t http_port_ = 0;
  net::Socket sock_;
  std::unique_ptr<net::LineReader> reader_;
  json hello_;
  std::mutex write_mutex_;
  std::mutex pending_mutex_;
  std::map<std::uint64_t, std::promise<wire::Message>> pending_;
  std::uint64_t next_id_ = 0;
  bool closed_ = false;
  std::thread reader_thread_;
};

}  // namespace cubewall
