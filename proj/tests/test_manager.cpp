#include <gtest/gtest.h>
#include <httplib.h>

#include <fstream>
#include <sstream>

#include "cubewall/cluster.hpp"
#include "cubewall/manager.hpp"
#include "cubewall/synth.hpp"
#include "support.hpp"

using namespace cubewall;
using testing_support::TempDir;

namespace {

constexpr Viewport kTiny{16, 24};

// Answers nothing, ever.
class SilentLink : public NodeLink {
 public:
  std::future<wire::Message> request(wire::Message) override {
    promises_.emplace_back();
    return promises_.back().get_future();
  }
  std::optional<FrameFetch> fetch_frame(int) override { return std::nullopt; }
  json describe() const override { return json{{"transport", "silent"}}; }

 private:
  std::deque<std::promise<wire::Message>> promises_;
};

// Counts what it receives and acks everything.
class CountingLink : public NodeLink {
 public:
  std::future<wire::Message> request(wire::Message msg) override {
    received.push_back(msg);
    std::promise<wire::Message> p;
    p.set_value(wire::Message::ack(msg.id, json::object()));
    return p.get_future();
  }
  std::optional<FrameFetch> fetch_frame(int) override { return std::nullopt; }
  json describe() const override { return json::object(); }
  std::vector<wire::Message> received;
};

class ManagerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ofstream csv(dir.file("catalog.csv"));
    csv << kSynthCatalogHeader << "\n";
    const SynthKind kinds[] = {SynthKind::sphere, SynthKind::gaussian, SynthKind::shells, SynthKind::noise};
    for (int i = 0; i < 8; ++i) {
      std::string id = "c" + std::to_string(i);
      csv << write_synthetic({kinds[i % 4], 12, 12, 12, static_cast<std::uint32_t>(i + 1)}, dir.file(id + ".xrw"), id)
          << "\n";
    }
  }

  ManagerConfig config(int columns = 2, int rows = 4) {
    ManagerConfig c;
    c.grid = GridConfig::make(columns, rows);
    c.data_root = dir.path().string();
    c.catalog_path = dir.file("catalog.csv");
    c.viewport = kTiny;
    c.http_port = 0;
    return c;
  }

  std::unique_ptr<Manager> make(int columns = 2, int rows = 4, std::string session = {}) {
    auto c = config(columns, rows);
    std::vector<std::unique_ptr<NodeLink>> links;
    locals.clear();
    for (int i = 0; i < columns; ++i) {
      auto l = std::make_unique<LocalNodeLink>(NodeOptions{i, rows, kTiny, c.data_root, 1});
      locals.push_back(l.get());
      links.push_back(std::move(l));
    }
    return std::make_unique<Manager>(c, load_catalog_file(c.catalog_path), std::move(links), std::move(session));
  }

  static json all_ids() {
    json ids = json::array();
    for (int i = 0; i < 8; ++i) ids.push_back("c" + std::to_string(i));
    return ids;
  }

  TempDir dir;
  std::vector<LocalNodeLink*> locals;
};

}  // namespace

TEST_F(ManagerTest, LoadEightFillsTwoByFour) {
  auto m = make();
  auto r = m->execute({"load", {{"ids", all_ids()}}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("seq"), 1);
  EXPECT_EQ(r.body.at("messages"), 8);
  EXPECT_TRUE(r.body.at("warnings").empty());
  for (int c = 0; c < 2; ++c)
    for (int row = 1; row <= 4; ++row) {
      auto id = locals[c]->node().cube(row);
      ASSERT_TRUE(id);
      EXPECT_EQ(*id, "c" + std::to_string(c * 4 + row - 1));
    }
  EXPECT_EQ(r.body.at("state_hash"), m->current_hash());
  EXPECT_EQ(m->session().events.size(), 1u);
}

TEST_F(ManagerTest, LoadSortedAndIntoSlots) {
  auto m = make();
  auto r = m->execute({"load", {{"ids", {"c0", "c1", "c2"}},
                                {"sort", {{{"field", "mean_value"}, {"direction", "desc"}}}},
                                {"slots", {"B4", "A2", "B1"}}}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  auto st = m->state();
  auto cat = load_catalog_file(dir.file("catalog.csv"));
  std::vector<std::pair<double, std::string>> means;
  for (auto id : {"c0", "c1", "c2"}) means.emplace_back(cat.value(id, "mean_value").get<double>(), id);
  std::sort(means.rbegin(), means.rend());
  auto g = GridConfig::make(2, 4);
  EXPECT_EQ(st.grid.at(slot_to_linear(SlotAddress::parse("A2"), g)), means[0].second);
  EXPECT_EQ(st.grid.at(slot_to_linear(SlotAddress::parse("B1"), g)), means[1].second);
  EXPECT_EQ(st.grid.at(slot_to_linear(SlotAddress::parse("B4"), g)), means[2].second);
  EXPECT_EQ(st.grid.sort_state.size(), 1u);
}

TEST_F(ManagerTest, RejectedCommandsAreNotLogged) {
  auto m = make();
  EXPECT_EQ(m->execute({"load", {{"ids", {"nope"}}}}).status, 400);
  EXPECT_EQ(m->execute({"load", {{"ids", {"c0", "c1"}}, {"slots", {"A1"}}}}).body["error"]["code"], "capacity");
  EXPECT_EQ(m->execute({"load", {{"ids", {"c0"}}, {"sort", {{{"field", "zzz"}}}}}}).body["error"]["code"], "sort-spec");
  EXPECT_EQ(m->execute({"swap", {{"a", "A1"}, {"b", "Q9"}}}).status, 400);
  EXPECT_EQ(m->execute({"reorder", {{"from", "A1"}, {"to", "A2"}}}).body["error"]["code"], "transition");
  EXPECT_EQ(m->execute({"params", {{"opacity_scale", -1}}}).status, 400);
  EXPECT_EQ(m->execute({"clip", {{"lo", 0.9}, {"hi", 0.1}}}).status, 400);
  EXPECT_EQ(m->execute({"frobnicate", {}}).status, 400);
  EXPECT_TRUE(m->session().events.empty());
  EXPECT_EQ(m->messages_sent(), 0u);
}

TEST_F(ManagerTest, SequenceFollowsSubmissionOrder) {
  auto m = make();
  std::vector<std::future<CommandResult>> futures;
  futures.push_back(m->submit({"load", {{"ids", all_ids()}}}));
  for (int i = 0; i < 10; ++i) futures.push_back(m->submit({"camera", {{"azimuth", i * 10}}}));
  futures.push_back(m->submit({"swap", {{"a", "A1"}, {"b", "B4"}}}));
  for (std::size_t i = 0; i < futures.size(); ++i) {
    auto r = futures[i].get();
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("seq"), i + 1);
  }
  EXPECT_EQ(m->state().grid.camera.azimuth, 90);
  EXPECT_EQ(locals[0]->node().camera().azimuth, 90);
  EXPECT_EQ(locals[1]->node().cube(4), "c0");
  EXPECT_EQ(state_hash(replay(m->session()), GridConfig::make(2, 4)), m->current_hash());
}

TEST_F(ManagerTest, CameraGoesToEveryNode) {
  auto m = make(3, 2);
  auto r = m->execute({"camera", {{"elevation", 30}, {"zoom", 2}}});
  EXPECT_EQ(r.body.at("messages"), 3);
  for (auto* l : locals) {
    EXPECT_EQ(l->node().camera().elevation, 30);
    EXPECT_EQ(l->node().camera().zoom, 2);
  }
  r = m->execute({"camera", {{"azimuth", 5}}});
  EXPECT_EQ(m->state().grid.camera.zoom, 2);  // partial update keeps other fields
}

TEST_F(ManagerTest, SelectionDrivesUnload) {
  auto m = make();
  m->execute({"load", {{"ids", all_ids()}}});
  ASSERT_EQ(m->execute({"select", {{"slots", {"A2", "B3"}}}}).body.at("messages"), 0);
  auto r = m->execute({"unload", {{"selection", true}}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("messages"), 2);
  EXPECT_FALSE(locals[0]->node().cube(2));
  EXPECT_FALSE(locals[1]->node().cube(3));
  EXPECT_EQ(m->state().grid.occupancy.size(), 6u);
  EXPECT_EQ(m->state().grid.selection.size(), 2u);  // selection survives, the slots are just empty
}

TEST_F(ManagerTest, HistogramQuery) {
  auto m = make();
  EXPECT_EQ(m->execute({"query_histogram", {{"slot", "A1"}}}).status, 404);
  m->execute({"load", {{"ids", all_ids()}}});
  auto r = m->execute({"query_histogram", {{"slot", "B2"}, {"bins", 10}}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("cube_id"), "c5");
  auto h = r.body.at("histogram").get<Histogram>();
  auto direct = histogram(normalize(load_volume_file(dir.file("c5.xrw"))), 10);
  EXPECT_EQ(h.counts, direct.counts);
  EXPECT_EQ(h.total(), 12u * 12 * 12);
  EXPECT_EQ(m->execute({"query_histogram", {{"slot", "C1"}}}).status, 400);
  EXPECT_TRUE(m->session().events.size() == 1);
}

TEST_F(ManagerTest, ScatterMatchesDirectStatistics) {
  auto m = make();
  auto empty = m->execute({"query_scatter", {{"x", "mean_value"}}});
  EXPECT_EQ(empty.body.at("empty"), true);
  m->execute({"load", {{"ids", {"c3", "c1", "c6"}}}});
  for (std::string y : {"mean", "max", "count_above"}) {
    auto r = m->execute({"query_scatter", {{"x", "mean_value"}, {"y", y}, {"level", 0.25}}});
    ASSERT_EQ(r.status, 200) << r.body.dump();
    const auto& pts = r.body.at("points");
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_EQ(r.body.at("x_numeric"), true);
    std::vector<std::string> order;
    for (const auto& p : pts) {
      order.push_back(p.at("slot"));
      auto id = p.at("cube_id").get<std::string>();
      auto vol = normalize(load_volume_file(dir.file(id + ".xrw")));
      auto q = parse_stat_query(y, 0.25);
      q.level = 0.25;
      EXPECT_DOUBLE_EQ(p.at("y").get<double>(), stat(vol, q)) << y << id;
    }
    EXPECT_EQ(order, (std::vector<std::string>{"A1", "A2", "A3"}));
  }
  EXPECT_EQ(m->execute({"query_scatter", {{"x", "nope"}}}).status, 400);
  EXPECT_EQ(m->execute({"query_scatter", {{"x", "kind"}}}).body.at("x_numeric"), false);
}

TEST_F(ManagerTest, SilentNodeTimesOut) {
  auto c = config(2, 2);
  c.node_timeout = std::chrono::milliseconds(100);
  std::vector<std::unique_ptr<NodeLink>> links;
  links.push_back(std::make_unique<LocalNodeLink>(NodeOptions{0, 2, kTiny, c.data_root, 1}));
  links.push_back(std::make_unique<SilentLink>());
  Manager m(c, load_catalog_file(c.catalog_path), std::move(links));
  auto r = m.execute({"load", {{"ids", {"c0", "c1", "c2", "c3"}}}});
  EXPECT_EQ(r.status, 504);
  EXPECT_EQ(r.body.at("error").at("code"), wire::code::node_unavailable);
  ASSERT_EQ(r.body.at("warnings").size(), 2u);
  EXPECT_EQ(r.body.at("warnings")[0].at("slot"), "B1");
  // The event is committed: state changes survive a failed node.
  EXPECT_EQ(m.session().events.size(), 1u);
  EXPECT_EQ(m.state().grid.occupancy.size(), 4u);
}

TEST_F(ManagerTest, NodeErrorIsBadGateway) {
  auto m = make(1, 2);
  std::filesystem::remove(dir.file("c1.xrw"));
  auto r = m->execute({"load", {{"ids", {"c0", "c1"}}}});
  EXPECT_EQ(r.status, 502);
  ASSERT_EQ(r.body.at("warnings").size(), 1u);
  EXPECT_EQ(r.body.at("warnings")[0].at("slot"), "A2");
  EXPECT_TRUE(locals[0]->node().cube(1));
}

TEST_F(ManagerTest, MismatchedLinkCount) {
  auto c = config(3, 2);
  std::vector<std::unique_ptr<NodeLink>> links;
  links.push_back(std::make_unique<CountingLink>());
  EXPECT_THROW(Manager(c, load_catalog_file(c.catalog_path), std::move(links)), ConfigError);
}

TEST_F(ManagerTest, FanOutIsMinimal) {
  auto c = config(2, 4);
  std::vector<std::unique_ptr<NodeLink>> links;
  std::vector<CountingLink*> counters;
  for (int i = 0; i < 2; ++i) {
    auto l = std::make_unique<CountingLink>();
    counters.push_back(l.get());
    links.push_back(std::move(l));
  }
  Manager m(c, load_catalog_file(c.catalog_path), std::move(links));
  m.execute({"load", {{"ids", all_ids()}}});
  EXPECT_EQ(counters[0]->received.size(), 4u);
  EXPECT_EQ(counters[1]->received.size(), 4u);
  m.execute({"swap", {{"a", "A1"}, {"b", "A3"}}});
  EXPECT_EQ(counters[0]->received.size(), 6u);
  EXPECT_EQ(counters[1]->received.size(), 4u);
  m.execute({"reorder", {{"from", "B2"}, {"to", "B3"}}});
  EXPECT_EQ(counters[1]->received.size(), 6u);
  m.execute({"params", {{"colour_map", "heat"}}});
  EXPECT_EQ(counters[0]->received.size(), 7u);
  EXPECT_EQ(counters[1]->received.back().kind, wire::Kind::SetParams);
  m.execute({"select", {{"slots", {"A1"}}}});
  m.execute({"checkpoint", {{"name", "x"}}});
  EXPECT_EQ(counters[0]->received.size(), 7u);
}

TEST_F(ManagerTest, ReplayBackTruncatesAndRestoresNodes) {
  auto m = make(2, 4, dir.file("s.jsonl"));
  m->execute({"load", {{"ids", all_ids()}}});
  auto cp = m->execute({"checkpoint", {{"name", "full"}}});
  auto hash_at_cp = cp.body.at("state_hash");
  m->execute({"swap", {{"a", "A1"}, {"b", "B1"}}});
  m->execute({"camera", {{"azimuth", 45}}});
  m->execute({"unload", {{"slots", {"A3"}}}});
  EXPECT_FALSE(locals[0]->node().cube(3));

  auto r = m->execute({"replay", {{"upto", "full"}}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("seq"), 2);
  EXPECT_EQ(r.body.at("state_hash"), hash_at_cp);
  EXPECT_EQ(r.body.at("discarded").size(), 3u);
  EXPECT_EQ(m->session().events.size(), 2u);
  EXPECT_EQ(locals[0]->node().cube(1), "c0");
  EXPECT_EQ(locals[0]->node().cube(3), "c2");
  EXPECT_EQ(locals[0]->node().camera().azimuth, 0);

  auto next = m->execute({"params", {{"opacity_scale", 0.7}}});
  EXPECT_EQ(next.body.at("seq"), 3);

  std::ifstream in(dir.file("s.jsonl"));
  std::stringstream text;
  text << in.rdbuf();
  auto log = load_session(text.str());
  EXPECT_EQ(log.events.size(), 3u);
  EXPECT_EQ(state_hash(replay(log), log.grid), m->current_hash());

  EXPECT_EQ(m->execute({"replay", {{"upto", 0}}}).body.at("state_hash"), state_hash({}, log.grid));
  EXPECT_FALSE(locals[1]->node().cube(1));
  EXPECT_EQ(m->execute({"replay", {{"upto", 9}}}).status, 400);
}

TEST_F(ManagerTest, SessionFileAppendsLiveHashes) {
  std::string path = dir.file("live.jsonl");
  {
    auto m = make(2, 4, path);
    m->execute({"load", {{"ids", all_ids()}}});
    m->execute({"reorder", {{"from", "A1"}, {"to", "B4"}}});
    m->execute({"load", {{"ids", {"zzz"}}}});
  }
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  auto log = load_session(text.str());
  ASSERT_EQ(log.events.size(), 2u);
  EXPECT_EQ(log.events[1].action, Action::Reorder);
  EXPECT_FALSE(log.hashes[1].empty());
  EXPECT_NO_THROW(replay(log));
}

TEST_F(ManagerTest, RestoreBringsNodesToLoggedState) {
  SessionLog log;
  {
    auto m = make();
    m->execute({"load", {{"ids", all_ids()}}});
    m->execute({"params", {{"colour_map", "viridis"}}});
    m->execute({"swap", {{"a", "A1"}, {"b", "B2"}}});
    log = m->session();
  }
  auto m = make();
  auto r = m->restore(log);
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body.at("seq"), 3);
  EXPECT_EQ(locals[1]->node().cube(2), "c0");
  EXPECT_EQ(locals[0]->node().params().colour_map, ColourMapKind::viridis);
  EXPECT_EQ(m->execute({"camera", {{"roll", 3}}}).body.at("seq"), 4);
  log.grid = GridConfig::make(4, 2);
  EXPECT_EQ(make()->restore(log).status, 400);
}

TEST_F(ManagerTest, ConfigParsing) {
  json j = {{"grid", {{"columns", 3}, {"rows", 2}}},
            {"nodes", {{{"control_port", 7001}, {"http_port", 7101}}}},
            {"data_root", "data"},
            {"catalog", "/abs/cat.csv"},
            {"viewport", {64, 32}},
            {"node_timeout_ms", 250}};
  auto c = parse_manager_config(j, "/etc/wall");
  EXPECT_EQ(c.grid.columns, 3);
  EXPECT_EQ(c.nodes.at(0).control_port, 7001);
  EXPECT_EQ(c.nodes.at(0).host, "127.0.0.1");
  EXPECT_EQ(c.data_root, "/etc/wall/data");
  EXPECT_EQ(c.catalog_path, "/abs/cat.csv");
  EXPECT_EQ(c.viewport, (Viewport{64, 32}));
  EXPECT_EQ(c.node_timeout.count(), 250);
  EXPECT_THROW(parse_manager_config({{"viewport", {0, 5}}}), ConfigError);
  EXPECT_THROW(parse_manager_config({{"grid", {{"columns", "x"}}}}), ConfigError);
  EXPECT_THROW(load_manager_config(dir.file("missing.json")), ConfigError);
}

TEST_F(ManagerTest, ServiceRequiresCatalog) {
  auto c = config();
  c.catalog_path = dir.file("absent.csv");
  EXPECT_THROW(ManagerService(c, "", true), ConfigError);
}

TEST_F(ManagerTest, HttpApiEndToEnd) {
  ManagerService svc(config(), dir.file("http.jsonl"), true);
  httplib::Client cli("127.0.0.1", svc.port());
  ASSERT_EQ(cli.Get("/healthz")->status, 200);
  auto catalog = json::parse(cli.Get("/catalog")->body);
  EXPECT_EQ(catalog.at("entries").size(), 8u);

  auto load = cli.Post("/commands/load", json{{"ids", all_ids()}}.dump(), "application/json");
  ASSERT_EQ(load->status, 200) << load->body;
  auto state = json::parse(cli.Get("/state")->body);
  EXPECT_EQ(state.at("seq"), 1);
  EXPECT_EQ(state.at("nodes").size(), 2u);

  auto bad = cli.Post("/commands/swap", "not json", "application/json");
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(cli.Post("/commands/swap", R"({"a":"A1","b":"B1"})", "application/json")->status, 200);
  EXPECT_EQ(cli.Post("/session/checkpoint", R"({"name":"one"})", "application/json")->status, 200);

  auto frame = cli.Get("/frames/B1");
  ASSERT_EQ(frame->status, 200);
  EXPECT_EQ(frame->get_header_value("Content-Type"), "image/png");
  auto etag = frame->get_header_value("ETag");
  ASSERT_FALSE(etag.empty());
  auto again = cli.Get("/frames/B1", {{"If-None-Match", etag}});
  EXPECT_EQ(again->status, 304);
  EXPECT_EQ(cli.Get("/frames/C1")->status, 404);

  EXPECT_EQ(cli.Post("/commands/camera", R"({"azimuth":30})", "application/json")->status, 200);
  auto changed = cli.Get("/frames/B1", {{"If-None-Match", etag}});
  EXPECT_EQ(changed->status, 200);

  auto hist = cli.Get("/query/histogram?slot=A1&bins=8");
  ASSERT_EQ(hist->status, 200) << hist->body;
  EXPECT_EQ(json::parse(hist->body).at("histogram").at("counts").size(), 8u);
  auto scatter = cli.Get("/query/scatter?x=mean_value&y=max");
  ASSERT_EQ(scatter->status, 200);
  EXPECT_EQ(json::parse(scatter->body).at("points").size(), 8u);

  auto log = load_session(cli.Get("/session/log")->body);
  EXPECT_EQ(log.events.size(), 4u);
  auto replayed = cli.Post("/session/replay", R"({"upto":"one"})", "application/json");
  ASSERT_EQ(replayed->status, 200);
  EXPECT_EQ(json::parse(replayed->body).at("seq"), 3);
  EXPECT_EQ(cli.Get("/")->status, 200);
}

TEST_F(ManagerTest, ServiceResumesSession) {
  std::string path = dir.file("resume.jsonl");
  std::string hash;
  {
    ManagerService svc(config(), path, true);
    svc.manager().execute({"load", {{"ids", all_ids()}}});
    svc.manager().execute({"reorder", {{"from", "A1"}, {"to", "B4"}}});
    hash = svc.manager().current_hash();
  }
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  ManagerService svc(config(), path, true, load_session(text.str()));
  EXPECT_EQ(svc.manager().current_hash(), hash);
  EXPECT_EQ(svc.node_server(1)->node().cube(4), "c0");
  EXPECT_EQ(svc.manager().execute({"camera", {{"zoom", 1.5}}}).body.at("seq"), 3);
}
