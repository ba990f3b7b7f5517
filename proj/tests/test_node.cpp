#include <gtest/gtest.h>
#include <httplib.h>

#include "cubewall/link.hpp"
#include "cubewall/node.hpp"
#include "cubewall/synth.hpp"
#include "support.hpp"

using namespace cubewall;
using testing_support::TempDir;

namespace {

constexpr Viewport kSmall{32, 48};

class NodeTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_synthetic({SynthKind::sphere, 64, 64, 64, 1}, dir.file("sphere.xrw"), "s");
    write_synthetic({SynthKind::noise, 12, 10, 8, 3}, dir.file("noise.raw"), "n");
    write_synthetic({SynthKind::shells, 16, 16, 16, 1}, dir.file("shells.xrw"), "h");
  }

  RenderNode make_node(int column = 1) { return RenderNode(NodeOptions{column, 4, kSmall, dir.path().string(), 1}); }

  static wire::Message load(std::uint64_t id, int panel, const std::string& cube, const std::string& path) {
    return {id, wire::Kind::Load, panel, json{{"cube_id", cube}, {"path", path}}};
  }

  TempDir dir;
};

}  // namespace

TEST_F(NodeTest, LoadReportsVoxelCount) {
  auto node = make_node();
  auto r = node.handle(load(1, 2, "s", "sphere.xrw"));
  ASSERT_EQ(r.kind, wire::Kind::Ack) << r.payload.dump();
  EXPECT_EQ(r.id, 1u);
  EXPECT_EQ(r.payload.at("voxel_count"), 262144);
  EXPECT_EQ(node.cube(2), "s");
  EXPECT_EQ(node.frame(2)->cube_id, "s");
}

TEST_F(NodeTest, LoadReplacesOccupant) {
  auto node = make_node();
  node.handle(load(1, 1, "s", "sphere.xrw"));
  auto r = node.handle(load(2, 1, "n", "noise.raw"));
  ASSERT_EQ(r.kind, wire::Kind::Ack);
  EXPECT_EQ(node.cube(1), "n");
  EXPECT_EQ(node.resident_volumes(), 1u);
  EXPECT_EQ(node.volume(1)->nx, 12);
}

TEST_F(NodeTest, BadPathLeavesPanelUntouched) {
  auto node = make_node();
  node.handle(load(1, 3, "s", "sphere.xrw"));
  auto before = node.frame(3);
  auto r = node.handle(load(2, 3, "x", "missing.xrw"));
  ASSERT_EQ(r.kind, wire::Kind::Error);
  EXPECT_EQ(r.payload.at("code"), wire::code::load_failed);
  EXPECT_EQ(node.cube(3), "s");
  EXPECT_EQ(node.frame(3)->etag, before->etag);
}

TEST_F(NodeTest, PanelOutsideNodeIsBadRequest) {
  auto node = make_node();
  auto r = node.handle(load(1, 5, "s", "sphere.xrw"));
  EXPECT_EQ(r.payload.at("code"), wire::code::bad_request);
  r = node.handle(wire::Message{2, wire::Kind::Load, std::nullopt, json{{"cube_id", "s"}, {"path", "sphere.xrw"}}});
  EXPECT_EQ(r.payload.at("code"), wire::code::bad_request);
  r = node.handle(wire::Message{3, wire::Kind::Hello, std::nullopt, {}});
  EXPECT_EQ(r.kind, wire::Kind::Error);
}

TEST_F(NodeTest, UnloadRestoresPlaceholder) {
  auto node = make_node();
  auto initial = node.frames();
  EXPECT_EQ(node.handle({1, wire::Kind::Unload, 2, {}}).kind, wire::Kind::Ack);
  node.handle(load(2, 2, "s", "sphere.xrw"));
  EXPECT_NE(node.frame(2)->etag, initial[1]->etag);
  node.handle({3, wire::Kind::Unload, 2, {}});
  EXPECT_EQ(node.resident_volumes(), 0u);
  EXPECT_FALSE(node.cube(2));
  for (int p = 1; p <= 4; ++p) EXPECT_EQ(node.frame(p)->png, initial[p - 1]->png);
  EXPECT_EQ(node.frame(2)->png, encode_png(placeholder_frame(kSmall.width, kSmall.height, "B2")));
}

TEST_F(NodeTest, CameraChangesEveryOccupiedFrame) {
  auto node = make_node();
  node.handle(load(1, 1, "s", "shells.xrw"));
  node.handle(load(2, 4, "n", "noise.raw"));
  auto before = node.frames();
  auto r = node.handle({3, wire::Kind::SetCamera, std::nullopt, json{{"camera", {{"azimuth", 30}}}}});
  ASSERT_EQ(r.kind, wire::Kind::Ack);
  auto after = node.frames();
  EXPECT_NE(after[0]->etag, before[0]->etag);
  EXPECT_NE(after[3]->etag, before[3]->etag);
  EXPECT_EQ(after[1]->etag, before[1]->etag);  // empty panel keeps its placeholder
  node.handle({4, wire::Kind::SetCamera, std::nullopt, json{{"camera", {{"azimuth", 30}}}}});
  EXPECT_EQ(node.frame(1)->png, after[0]->png);
  EXPECT_DOUBLE_EQ(node.camera().azimuth, 30);
}

TEST_F(NodeTest, InvalidParamsRejected) {
  auto node = make_node();
  auto before = node.params();
  auto r = node.handle({1, wire::Kind::SetParams, std::nullopt, json{{"params", {{"clip_lo", 0.9}, {"clip_hi", 0.1}}}}});
  EXPECT_EQ(r.payload.at("code"), wire::code::bad_params);
  r = node.handle({2, wire::Kind::SetClip, std::nullopt, json{{"lo", 0.7}, {"hi", 0.2}}});
  EXPECT_EQ(r.payload.at("code"), wire::code::bad_params);
  r = node.handle({3, wire::Kind::SetCamera, std::nullopt, json{{"camera", {{"zoom", 0}}}}});
  EXPECT_EQ(r.payload.at("code"), wire::code::bad_params);
  EXPECT_EQ(node.params(), before);
}

TEST_F(NodeTest, QueriesMatchDirectComputation) {
  auto node = make_node();
  node.handle(load(1, 1, "n", "noise.raw"));
  auto direct = normalize(load_volume_file(dir.file("noise.raw")));

  auto r = node.handle({2, wire::Kind::QueryHistogram, 1, json{{"bins", 16}, {"clip", {0.2, 0.7}}}});
  auto line = wire::encode(r);
  auto decoded = wire::decode(line);
  auto h = decoded.payload.at("histogram").get<Histogram>();
  EXPECT_EQ(h.counts, histogram(direct, 16, std::pair{0.2, 0.7}).counts);
  EXPECT_EQ(decoded.payload.at("cube_id"), "n");

  r = wire::decode(wire::encode(node.handle({3, wire::Kind::QueryHistogram, 1, json::object()})));
  EXPECT_EQ(r.payload.at("histogram").get<Histogram>().total(), direct.finite_count());

  for (const char* s : {"mean", "max", "count_above"}) {
    r = wire::decode(wire::encode(node.handle({4, wire::Kind::QueryStat, 1, json{{"stat", s}, {"level", 0.3}}})));
    EXPECT_DOUBLE_EQ(r.payload.at("value").get<double>(), stat(direct, parse_stat_query(s, 0.3))) << s;
  }
  r = node.handle({5, wire::Kind::QueryStat, 2, json{{"stat", "mean"}}});
  EXPECT_EQ(r.payload.at("code"), wire::code::no_data);
}

TEST_F(NodeTest, AtlasAndRenderFrame) {
  auto node = make_node();
  node.handle(load(1, 2, "h", "shells.xrw"));
  auto r = node.handle({2, wire::Kind::BuildAtlas, 2, {}});
  ASSERT_EQ(r.kind, wire::Kind::Ack);
  EXPECT_EQ(r.payload.at("descriptor"), (json{{"nx", 16}, {"ny", 16}, {"nz", 16}, {"tilesX", 4}}));
  r = node.handle({3, wire::Kind::RenderFrame, std::nullopt, {}});
  EXPECT_EQ(r.payload.at("frames").size(), 4u);
  EXPECT_EQ(r.payload.at("frames")[1].at("etag"), node.frame(2)->etag);
  EXPECT_EQ(node.handle({4, wire::Kind::BuildAtlas, 1, {}}).payload.at("code"), wire::code::no_data);
}

TEST_F(NodeTest, DeterministicAcrossFreshNodes) {
  std::vector<wire::Message> script = {
      load(1, 1, "s", "sphere.xrw"),
      load(2, 3, "n", "noise.raw"),
      {3, wire::Kind::SetParams, std::nullopt, json{{"params", {{"colour_map", "heat"}, {"opacity_scale", 0.7}}}}},
      {4, wire::Kind::SetCamera, std::nullopt, json{{"camera", {{"azimuth", -45}, {"elevation", 20}, {"zoom", 1.4}}}}},
      {5, wire::Kind::QueryHistogram, 3, json{{"bins", 8}}},
      {6, wire::Kind::SetParams, std::nullopt, json{{"params", {{"mode", "isosurface"}, {"iso_level", 0.4}}}}},
  };
  auto a = make_node(), b = make_node();
  for (const auto& m : script) {
    auto ra = a.handle(m), rb = b.handle(m);
    ra.payload.erase("load_ms");
    rb.payload.erase("load_ms");
    ASSERT_EQ(ra, rb);
  }
  for (int p = 1; p <= 4; ++p) EXPECT_EQ(a.frame(p)->png, b.frame(p)->png);
}

TEST_F(NodeTest, PanelIsolation) {
  auto node = make_node();
  node.handle(load(1, 1, "s", "sphere.xrw"));
  node.handle(load(2, 2, "n", "noise.raw"));
  const auto data1 = node.volume(1)->data;
  node.handle(load(3, 2, "h", "shells.xrw"));
  node.handle({4, wire::Kind::Unload, 2, {}});
  node.handle(load(5, 3, "x", "missing.xrw"));
  EXPECT_EQ(node.volume(1)->data, data1);
  EXPECT_EQ(node.cube(1), "s");
  EXPECT_LE(node.resident_volumes(), 4u);
}

TEST_F(NodeTest, FrameEndpointHonoursEtag) {
  NodeServer server(NodeOptions{0, 2, kSmall, dir.path().string(), 1}, "127.0.0.1", 0, 0);
  server.start();
  httplib::Client client("127.0.0.1", server.http_port());
  auto first = client.Get("/frame/1");
  ASSERT_TRUE(first);
  EXPECT_EQ(first->status, 200);
  server.node().handle(load(1, 1, "h", "shells.xrw"));
  auto loaded = client.Get("/frame/1");
  ASSERT_EQ(loaded->status, 200);
  EXPECT_EQ(loaded->get_header_value("Content-Type"), "image/png");
  auto etag = loaded->get_header_value("ETag");
  EXPECT_NE(etag, first->get_header_value("ETag"));
  EXPECT_EQ(client.Get("/frame/1")->get_header_value("ETag"), etag);
  auto cached = client.Get("/frame/1", httplib::Headers{{"If-None-Match", etag}});
  EXPECT_EQ(cached->status, 304);
  server.node().handle({2, wire::Kind::SetCamera, std::nullopt, json{{"camera", {{"elevation", 40}}}}});
  EXPECT_NE(client.Get("/frame/1")->get_header_value("ETag"), etag);
  EXPECT_EQ(client.Get("/frame/9")->status, 404);

  auto atlas = client.Get("/atlas/1");
  ASSERT_EQ(atlas->status, 200);
  EXPECT_EQ(json::parse(atlas->get_header_value("X-Atlas-Descriptor")).at("tilesX"), 4);
  EXPECT_EQ(client.Get("/atlas/2")->status, 404);
  EXPECT_EQ(json::parse(client.Get("/atlas/1/descriptor")->body).at("nz"), 16);
  EXPECT_EQ(json::parse(client.Get("/healthz")->body).at("resident"), 1);
  server.stop();
}

TEST_F(NodeTest, ControlPortSpeaksWireProtocol) {
  NodeServer server(NodeOptions{2, 4, kSmall, dir.path().string(), 1}, "127.0.0.1", 0, 0);
  server.start();
  {
    TcpNodeLink link("127.0.0.1", server.control_port(), std::chrono::seconds(5));
    EXPECT_EQ(link.hello().at("column"), 2);
    EXPECT_EQ(link.hello().at("http_port"), server.http_port());
    auto r = link.request(load(0, 4, "s", "sphere.xrw")).get();
    EXPECT_EQ(r.kind, wire::Kind::Ack);
    auto f = link.fetch_frame(4);
    ASSERT_TRUE(f);
    EXPECT_EQ(f->etag, server.node().frame(4)->etag);
    r = link.request({0, wire::Kind::QueryStat, 4, json{{"stat", "max"}}}).get();
    EXPECT_DOUBLE_EQ(r.payload.at("value").get<double>(), 1.0);
  }
  {
    // Raw socket: unknown kinds get an Error, a repeated id resets the connection.
    auto sock = net::connect_tcp("127.0.0.1", server.control_port(), std::chrono::seconds(5));
    net::LineReader reader(sock);
    EXPECT_EQ(wire::decode(*reader.read_line()).kind, wire::Kind::Hello);
    sock.write_all("{\"id\":1,\"kind\":\"Frobnicate\",\"payload\":{}}\n");
    auto err = wire::decode(*reader.read_line());
    EXPECT_EQ(err.id, 1u);
    EXPECT_EQ(err.payload.at("code"), wire::code::protocol_mismatch);
    sock.write_all(wire::encode({2, wire::Kind::Unload, 1, {}}));
    EXPECT_EQ(wire::decode(*reader.read_line()).kind, wire::Kind::Ack);
    sock.write_all(wire::encode({2, wire::Kind::Unload, 1, {}}));
    EXPECT_FALSE(reader.read_line());
  }
  {
    auto sock = net::connect_tcp("127.0.0.1", server.control_port(), std::chrono::seconds(5));
    net::LineReader reader(sock);
    reader.read_line();
    sock.write_all("{\"id\":1,\"kind\"\n");
    EXPECT_FALSE(reader.read_line());
  }
  server.stop();
}

TEST(NodeServerPorts, BusyPortIsNamed) {
  auto held = net::listen_tcp("127.0.0.1", 0);
  auto port = net::local_port(held);
  NodeServer server(NodeOptions{0, 1, kSmall, "", 1}, "127.0.0.1", port, 0);
  try {
    server.start();
    FAIL();
  } catch (const net::NetError& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(port)), std::string::npos);
  }
}
