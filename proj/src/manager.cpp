#include "cubewall/manager.hpp"

#include <httplib.h>

#include <algorithm>
#include <filesystem>
#include <set>

namespace cubewall {

namespace {

json error_body(std::string_view code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}};
}

CommandResult fail(int status, std::string_view code, const std::string& message) {
  return {status, error_body(code, message)};
}

std::string resolve_against(const std::string& base_dir, const std::string& p) {
  if (p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::vector<std::string> string_list(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_array()) throw ArgumentError(std::string("'") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw ArgumentError(std::string("'") + key + "' entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

ManagerConfig parse_manager_config(const json& j, const std::string& base_dir) {
  ManagerConfig c;
  try {
    if (j.contains("grid")) c.grid = j.at("grid").get<GridConfig>();
    if (j.contains("nodes"))
      for (const auto& n : j.at("nodes"))
        c.nodes.push_back(NodeEndpoint{n.value("host", std::string("127.0.0.1")),
                                       n.value("control_port", std::uint16_t{0}), n.value("http_port", std::uint16_t{0})});
    c.data_root = resolve_against(base_dir, j.value("data_root", std::string()));
    c.catalog_path = resolve_against(base_dir, j.value("catalog", std::string()));
    if (j.contains("viewport")) {
      const auto& vp = j.at("viewport");
      c.viewport = {vp.at(0).get<int>(), vp.at(1).get<int>()};
      if (c.viewport.width <= 0 || c.viewport.height <= 0) throw ConfigError("viewport must be positive");
    }
    c.http_host = j.value("http_host", c.http_host);
    c.http_port = j.value("http_port", c.http_port);
    c.node_timeout = std::chrono::milliseconds(j.value("node_timeout_ms", 10'000));
    c.render_threads = std::max(1, j.value("render_threads", 1));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

ManagerConfig load_manager_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_manager_config(j, std::filesystem::path(path).parent_path().string());
}

Manager::Manager(ManagerConfig config, SurveyCatalog catalog, std::vector<std::unique_ptr<NodeLink>> links,
                 std::string session_path)
    : config_(std::move(config)), catalog_(std::move(catalog)), links_(std::move(links)),
      session_path_(std::move(session_path)) {
  if (static_cast<int>(links_.size()) != config_.grid.columns)
    throw ConfigError("grid has " + std::to_string(config_.grid.columns) + " columns but " +
                      std::to_string(links_.size()) + " nodes are connected");
  log_.grid = config_.grid;
  if (!session_path_.empty()) rewrite_file();
  worker_ = std::thread([this] { worker(); });
}

Manager::~Manager() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  worker_.join();
  if (session_file_.is_open()) session_file_.flush();
}

std::future<CommandResult> Manager::enqueue(std::function<CommandResult()> fn) {
  auto job = std::make_unique<Job>();
  job->run = std::move(fn);
  auto future = job->done.get_future();
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) {
      job->done.set_value(fail(503, "shutting-down", "manager is shutting down"));
      return future;
    }
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
  return future;
}

std::future<CommandResult> Manager::submit(Command cmd) {
  return enqueue([this, cmd = std::move(cmd)] { return process(cmd); });
}

void Manager::worker() {
  for (;;) {
    std::unique_ptr<Job> job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    CommandResult result;
    try {
      result = job->run();
    } catch (const std::exception& e) {
      result = fail(500, wire::code::internal, e.what());
    }
    job->done.set_value(std::move(result));
  }
}

CommandResult Manager::process(const Command& cmd) {
  try {
    if (cmd.kind == "replay") return replay_to(cmd.body);
    if (cmd.kind == "query_histogram") return query_histogram(cmd.body);
    if (cmd.kind == "query_scatter") return query_scatter(cmd.body);
    SessionEvent draft = draft_event(cmd);
    return mutate(draft.action, std::move(draft.payload));
  } catch (const TransitionError& e) {
    return fail(400, "transition", e.what());
  } catch (const CapacityError& e) {
    return fail(400, "capacity", e.what());
  } catch (const SortSpecError& e) {
    return fail(400, "sort-spec", e.what());
  } catch (const SessionError& e) {
    return fail(400, "session", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(400, "argument", e.what());
  } catch (const json::exception& e) {
    return fail(400, "argument", e.what());
  }
}

// Turns a controller command into an event payload against the current state.
SessionEvent Manager::draft_event(const Command& cmd) const {
  const auto& grid = config_.grid;
  const auto& body = cmd.body;
  GlobalState current = state();
  SessionEvent ev;
  auto slot_text = [&](const json& v) {
    return linear_to_slot(slot_to_linear(SlotAddress::parse(v.get<std::string>()), grid), grid).to_string();
  };
  auto selected_slots = [&] {
    json out = json::array();
    for (int s : current.grid.selection) out.push_back(linear_to_slot(s, grid).to_string());
    return out;
  };

  if (cmd.kind == "load") {
    auto ids = string_list(body, "ids");
    if (ids.empty()) throw ArgumentError("load needs at least one cube ID");
    for (const auto& id : ids) catalog_.at(id);
    json payload = json::object();
    if (auto s = body.find("sort"); s != body.end()) {
      auto spec = s->get<SortSpec>();
      auto ordered = sort_entries(catalog_, spec);
      std::set<CubeId> wanted(ids.begin(), ids.end());
      ids.clear();
      for (auto& id : ordered)
        if (wanted.count(id)) ids.push_back(id);
      payload["sort"] = spec;
    }
    std::vector<int> targets;
    if (body.contains("slots")) {
      for (const auto& s : string_list(body, "slots"))
        targets.push_back(slot_to_linear(SlotAddress::parse(s), grid));
      std::sort(targets.begin(), targets.end());
    } else if (body.value("selection", false)) {
      targets.assign(current.grid.selection.begin(), current.grid.selection.end());
    }
    json assign = json::array();
    if (targets.empty() && !body.contains("slots") && !body.value("selection", false)) {
      for (const auto& [linear, id] : layout_order(ids, grid))
        assign.push_back({{"slot", linear_to_slot(linear, grid).to_string()}, {"id", id},
                          {"path", catalog_.at(id).path()}});
    } else {
      if (ids.size() > targets.size())
        throw CapacityError(ids.size() - targets.size(), std::to_string(ids.size()) + " cubes for " +
                                                             std::to_string(targets.size()) + " target slots");
      for (std::size_t i = 0; i < ids.size(); ++i)
        assign.push_back({{"slot", linear_to_slot(targets[i], grid).to_string()}, {"id", ids[i]},
                          {"path", catalog_.at(ids[i]).path()}});
    }
    payload["assign"] = assign;
    ev.action = Action::LoadData;
    ev.payload = payload;
  } else if (cmd.kind == "unload") {
    json slots = json::array();
    if (body.value("selection", false)) slots = selected_slots();
    else
      for (const auto& s : body.at("slots")) slots.push_back(slot_text(s));
    ev.action = Action::Unload;
    ev.payload = {{"slots", slots}};
  } else if (cmd.kind == "swap") {
    ev.action = Action::Swap;
    ev.payload = {{"a", slot_text(body.at("a"))}, {"b", slot_text(body.at("b"))}};
  } else if (cmd.kind == "reorder") {
    ev.action = Action::Reorder;
    ev.payload = {{"from", slot_text(body.at("from"))}, {"to", slot_text(body.at("to"))}};
  } else if (cmd.kind == "select") {
    json slots = json::array();
    for (const auto& s : body.at("slots")) slots.push_back(slot_text(s));
    ev.action = Action::Select;
    ev.payload = {{"slots", slots}};
  } else if (cmd.kind == "camera") {
    CameraState cam = current.grid.camera;
    from_json(body, cam);
    ev.action = Action::SetCamera;
    ev.payload = {{"camera", cam}};
  } else if (cmd.kind == "params") {
    RenderParams params = current.grid.params;
    from_json(body, params);
    ev.action = Action::SetParams;
    ev.payload = {{"params", params}};
  } else if (cmd.kind == "clip") {
    ev.action = Action::SetClip;
    ev.payload = {{"lo", body.at("lo").get<double>()}, {"hi", body.at("hi").get<double>()}};
  } else if (cmd.kind == "checkpoint") {
    ev.action = Action::Checkpoint;
    ev.payload = {{"name", body.at("name").get<std::string>()}};
  } else {
    throw ArgumentError("unknown command '" + cmd.kind + "'");
  }
  return ev;
}

CommandResult Manager::mutate(Action action, json payload) {
  const auto& grid = config_.grid;
  GlobalState before = state();
  SessionEvent ev;
  ev.seq = log_.last_seq() + 1;
  ev.timestamp_ms = now_utc_ms();
  ev.action = action;
  ev.payload = std::move(payload);
  GlobalState after = apply_event(before, ev, grid);  // throws before anything is logged
  auto hash = state_hash(after, grid);
  auto messages = fan_out(ev, before, after, grid);
  commit(after, {ev}, {hash}, false);

  auto outcome = dispatch(messages);
  json body{{"seq", ev.seq}, {"state_hash", hash}, {"messages", messages.size()}, {"warnings", outcome.warnings}};
  if (outcome.first_error) {
    body["error"] = outcome.first_error->second;
    return {outcome.first_error->first, body};
  }
  return {200, body};
}

Manager::DispatchOutcome Manager::dispatch(const std::vector<Dispatch>& messages) {
  DispatchOutcome out;
  std::vector<std::future<wire::Message>> futures;
  futures.reserve(messages.size());
  for (const auto& d : messages) futures.push_back(links_.at(static_cast<std::size_t>(d.column))->request(d.message));
  messages_sent_ += messages.size();

  // A node counts as unavailable when it stays silent for node_timeout.
  std::set<int> timed_out;
  out.responses.resize(messages.size());
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const int column = messages[i].column;
    const auto slot = messages[i].message.panel ? SlotAddress{column, *messages[i].message.panel}.to_string()
                                                : column_letters(column);
    if (timed_out.count(column) ||
        futures[i].wait_for(config_.node_timeout) != std::future_status::ready) {
      timed_out.insert(column);
      json err{{"code", wire::code::node_unavailable},
               {"message", "node " + column_letters(column) + " did not answer within " +
                               std::to_string(config_.node_timeout.count()) + " ms"}};
      out.warnings.push_back({{"slot", slot}, {"code", err["code"]}, {"message", err["message"]}});
      if (!out.first_error) out.first_error = {{504, err}};
      out.responses[i] = wire::Message::error(0, wire::code::node_unavailable, err["message"].get<std::string>());
      continue;
    }
    out.responses[i] = futures[i].get();
    const auto& resp = out.responses[i];
    if (resp.kind == wire::Kind::Error) {
      json err{{"code", resp.payload.value("code", std::string("internal"))},
               {"message", resp.payload.value("message", std::string())}};
      out.warnings.push_back({{"slot", slot}, {"code", err["code"]}, {"message", err["message"]}});
      if (!out.first_error)
        out.first_error = {{err["code"] == wire::code::node_unavailable ? 504 : 502, err}};
    }
  }
  return out;
}

void Manager::commit(GlobalState next, std::vector<SessionEvent> events, std::vector<std::string> hashes,
                     bool rewrite) {
  {
    std::lock_guard lock(state_mutex_);
    state_ = std::move(next);
    if (rewrite) {
      log_.events = std::move(events);
      log_.hashes = std::move(hashes);
    } else {
      for (std::size_t i = 0; i < events.size(); ++i) {
        log_.events.push_back(events[i]);
        log_.hashes.push_back(hashes[i]);
      }
    }
  }
  if (session_path_.empty()) return;
  if (rewrite) {
    rewrite_file();
  } else {
    std::lock_guard lock(state_mutex_);
    for (std::size_t i = log_.events.size() - events.size(); i < log_.events.size(); ++i)
      append_to_file(log_.events[i], log_.hashes[i]);
  }
}

void Manager::append_to_file(const SessionEvent& ev, const std::string& hash) {
  session_file_ << session_event_line(ev, hash);
  session_file_.flush();
}

void Manager::rewrite_file() {
  SessionLog snapshot = session();
  if (session_file_.is_open()) session_file_.close();
  session_file_.open(session_path_, std::ios::trunc);
  if (!session_file_) throw ConfigError("cannot write session file " + session_path_);
  session_file_ << save_session(snapshot);
  session_file_.flush();
}

CommandResult Manager::restore(SessionLog log) {
  return enqueue([this, log = std::move(log)]() -> CommandResult {
           if (log.grid.columns != config_.grid.columns || log.grid.rows != config_.grid.rows)
             return fail(400, "session", "session grid does not match the configured grid");
           GlobalState target;
           try {
             target = replay(log);
           } catch (const std::exception& e) {
             return fail(400, "session", e.what());
           }
           auto messages = fan_out_from_empty(target, config_.grid);
           auto hash = state_hash(target, config_.grid);
           commit(target, log.events, log.hashes, true);
           auto outcome = dispatch(messages);
           json body{{"seq", log.last_seq()}, {"state_hash", hash}, {"warnings", outcome.warnings}};
           if (outcome.first_error) return {outcome.first_error->first, body};
           return {200, body};
         })
      .get();
}

CommandResult Manager::replay_to(const json& body) {
  SessionLog log = session();
  ReplayTarget upto;
  if (auto it = body.find("upto"); it != body.end() && !it->is_null()) {
    if (it->is_string()) upto = it->get<std::string>();
    else if (it->is_number_integer() && it->get<std::int64_t>() >= 0) upto = it->get<std::uint64_t>();
    else throw ArgumentError("'upto' must be a seq number or checkpoint name");
  }
  const auto n = resolve_target(log, upto);
  GlobalState target = replay(log, upto);
  GlobalState current = state();
  const auto& grid = config_.grid;

  std::vector<Dispatch> messages;
  if (target.grid.params != current.grid.params)
    for (auto& d : fan_out(SessionEvent{0, 0, Action::SetParams, {}}, current, target, grid)) messages.push_back(d);
  if (target.grid.camera != current.grid.camera)
    for (auto& d : fan_out(SessionEvent{0, 0, Action::SetCamera, {}}, current, target, grid)) messages.push_back(d);
  for (auto& d : fan_out(SessionEvent{0, 0, Action::LoadData, {}}, current, target, grid)) messages.push_back(d);

  // Going back truncates the live log so live state stays the fold of the log.
  std::vector<SessionEvent> kept(log.events.begin(), log.events.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::string> kept_hashes(log.hashes.begin(), log.hashes.begin() + static_cast<std::ptrdiff_t>(n));
  json discarded = json::array();
  for (std::size_t i = n; i < log.events.size(); ++i) discarded.push_back(json(log.events[i]));
  auto hash = state_hash(target, grid);
  commit(target, std::move(kept), std::move(kept_hashes), true);

  auto outcome = dispatch(messages);
  json out{{"seq", n}, {"state_hash", hash}, {"messages", messages.size()}, {"discarded", discarded},
           {"warnings", outcome.warnings}};
  if (outcome.first_error) {
    out["error"] = outcome.first_error->second;
    return {outcome.first_error->first, out};
  }
  return {200, out};
}

CommandResult Manager::query_histogram(const json& body) {
  const auto& grid = config_.grid;
  auto addr = SlotAddress::parse(body.at("slot").get<std::string>());
  int linear = slot_to_linear(addr, grid);
  auto current = state();
  auto id = current.grid.at(linear);
  if (!id) return fail(404, wire::code::no_data, "slot " + addr.to_string() + " is empty");
  wire::Message msg{0, wire::Kind::QueryHistogram, addr.row, json{{"bins", body.value("bins", 64)}}};
  if (body.contains("lo") || body.contains("hi"))
    msg.payload["clip"] = {body.value("lo", 0.0), body.value("hi", 1.0)};
  auto outcome = dispatch({Dispatch{addr.column, msg}});
  if (outcome.first_error) return {outcome.first_error->first, json{{"error", outcome.first_error->second}}};
  const auto& resp = outcome.responses.front().payload;
  return {200, json{{"slot", addr.to_string()}, {"cube_id", resp.at("cube_id")}, {"histogram", resp.at("histogram")}}};
}

CommandResult Manager::query_scatter(const json& body) {
  const auto& grid = config_.grid;
  const auto x_field = body.at("x").get<std::string>();
  if (!catalog_.has_column(x_field)) return fail(400, "argument", "unknown catalog field '" + x_field + "'");
  auto current = state();
  auto query = parse_stat_query(body.value("y", std::string("mean")), current.grid.params.iso_level);
  if (body.contains("level")) query.level = body.at("level").get<double>();

  std::vector<Dispatch> messages;
  std::vector<std::pair<int, CubeId>> order;
  for (const auto& [linear, id] : current.grid.occupancy) {
    auto addr = linear_to_slot(linear, grid);
    messages.push_back({addr.column, wire::Message{0, wire::Kind::QueryStat, addr.row,
                                                   json{{"stat", to_string(query)}, {"level", query.level}}}});
    order.emplace_back(linear, id);
  }
  json result{{"x", x_field}, {"y", to_string(query)}, {"x_numeric", catalog_.is_numeric(x_field)}};
  if (messages.empty()) {
    result["points"] = json::array();
    result["empty"] = true;
    result["warnings"] = json::array();
    return {200, result};
  }
  auto outcome = dispatch(messages);
  json points = json::array();
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& resp = outcome.responses[i];
    if (resp.kind != wire::Kind::Ack) continue;
    points.push_back({{"cube_id", order[i].second},
                      {"slot", linear_to_slot(order[i].first, grid).to_string()},
                      {"x", catalog_.value(order[i].second, x_field)},
                      {"y", resp.payload.at("value")}});
  }
  result["points"] = points;
  result["empty"] = points.empty();
  result["warnings"] = outcome.warnings;
  return {200, result};
}

json Manager::state_json() const {
  std::lock_guard lock(state_mutex_);
  json j = cubewall::state_to_json(state_, config_.grid);
  j["seq"] = log_.last_seq();
  j["state_hash"] = state_hash(state_, config_.grid);
  return j;
}

GlobalState Manager::state() const {
  std::lock_guard lock(state_mutex_);
  return state_;
}

std::string Manager::current_hash() const {
  std::lock_guard lock(state_mutex_);
  return state_hash(state_, config_.grid);
}

SessionLog Manager::session() const {
  std::lock_guard lock(state_mutex_);
  return log_;
}

std::optional<FrameFetch> Manager::frame(SlotAddress slot) {
  slot_to_linear(slot, config_.grid);
  return links_.at(static_cast<std::size_t>(slot.column))->fetch_frame(slot.row);
}

json Manager::nodes_json() const {
  json out = json::array();
  for (const auto& l : links_) out.push_back(l->describe());
  return out;
}

namespace {

void reply(httplib::Response& res, const CommandResult& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ArgumentError("request body must be a JSON object");
  return j;
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const std::invalid_argument& e) {
      reply(res, fail(400, "argument", e.what()));
    } catch (const json::exception& e) {
      reply(res, fail(400, "argument", e.what()));
    } catch (const std::exception& e) {
      reply(res, fail(500, wire::code::internal, e.what()));
    }
  };
}

}  // namespace

void register_manager_routes(httplib::Server& server, Manager& manager) {
  server.Get("/", [&manager](const httplib::Request&, httplib::Response& res) {
    const auto& g = manager.config().grid;
    std::string html = "<!doctype html><title>cubewall</title><h1>cubewall manager</h1><p>Grid " +
                       std::to_string(g.columns) + " x " + std::to_string(g.rows) +
                       ". JSON API: /catalog, /state, /commands/*, /query/*, /session/*, /frames/{slot}.</p>";
    res.set_content(html, "text/html");
  });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"ok":true})", "application/json");
  });
  server.Get("/catalog", [&manager](const httplib::Request&, httplib::Response& res) {
    res.set_content(manager.catalog().to_json().dump(), "application/json");
  });
  server.Get("/state", [&manager](const httplib::Request&, httplib::Response& res) {
    json j = manager.state_json();
    j["nodes"] = manager.nodes_json();
    res.set_content(j.dump(), "application/json");
  });
  for (const char* kind : {"load", "unload", "swap", "reorder", "select", "camera", "params", "clip"}) {
    server.Post(std::string("/commands/") + kind, guarded([&manager, kind](const httplib::Request& req, httplib::Response& res) {
                  reply(res, manager.execute({kind, parse_body(req)}));
                }));
  }
  server.Post("/session/checkpoint", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
                reply(res, manager.execute({"checkpoint", parse_body(req)}));
              }));
  server.Post("/session/replay", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
                reply(res, manager.execute({"replay", parse_body(req)}));
              }));
  server.Get("/session/log", [&manager](const httplib::Request&, httplib::Response& res) {
    res.set_content(save_session(manager.session()), "application/x-ndjson");
  });
  server.Get("/query/histogram", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
               json body{{"slot", req.get_param_value("slot")}};
               if (req.has_param("bins")) body["bins"] = std::stoi(req.get_param_value("bins"));
               if (req.has_param("lo")) body["lo"] = std::stod(req.get_param_value("lo"));
               if (req.has_param("hi")) body["hi"] = std::stod(req.get_param_value("hi"));
               reply(res, manager.execute({"query_histogram", body}));
             }));
  server.Get("/query/scatter", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
               json body{{"x", req.get_param_value("x")}, {"y", req.has_param("y") ? req.get_param_value("y") : "mean"}};
               if (req.has_param("level")) body["level"] = std::stod(req.get_param_value("level"));
               reply(res, manager.execute({"query_scatter", body}));
             }));
  server.Get(R"(/frames/([A-Za-z]+\d+))", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
               auto slot = SlotAddress::parse(req.matches[1].str());
               if (!slot.valid_for(manager.config().grid)) {
                 reply(res, fail(404, "argument", "slot " + slot.to_string() + " is outside the grid"));
                 return;
               }
               auto frame = manager.frame(slot);
               if (!frame) {
                 reply(res, fail(502, wire::code::node_unavailable, "frame unavailable for " + slot.to_string()));
                 return;
               }
               auto etag = "\"" + frame->etag + "\"";
               res.set_header("ETag", etag);
               res.set_header("Cache-Control", "no-cache");
               if (req.get_header_value("If-None-Match") == etag) {
                 res.status = 304;
                 return;
               }
               res.set_content(reinterpret_cast<const char*>(frame->png.data()), frame->png.size(), "image/png");
             }));
}

}  // namespace cubewall
