#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include "cubewall/cluster.hpp"
#include "cubewall/synth.hpp"

using namespace cubewall;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Blocks SIGINT/SIGTERM in every thread spawned afterwards so that
// wait_for_signal() is the only receiver.
sigset_t block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

Viewport parse_viewport(const std::string& text) {
  int w = 0, h = 0;
  char x = 0;
  if (std::sscanf(text.c_str(), "%d%c%d", &w, &x, &h) != 3 || (x != 'x' && x != 'X') || w <= 0 || h <= 0)
    throw ConfigError("viewport must look like WxH, got '" + text + "'");
  return {w, h};
}

std::optional<SessionLog> read_session_for_resume(const std::string& path) {
  if (path.empty() || !std::filesystem::exists(path)) return std::nullopt;
  auto bytes = read_file_bytes(path);
  return load_session(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

struct ServeArgs {
  std::string config;
  std::string catalog;
  std::string data_root;
  std::string session;
  std::string viewport;
  int columns = 1;
  int rows = 4;
  int port = 8080;
  int threads = 1;
  bool resume = false;
};

int serve(const ServeArgs& a, bool spawn_nodes, CLI::App* sub) {
  ManagerConfig cfg;
  if (!a.config.empty()) cfg = load_manager_config(a.config);
  if (spawn_nodes && (sub->count("--columns") || sub->count("--rows") || a.config.empty()))
    cfg.grid = GridConfig::make(a.columns, a.rows);
  if (!a.catalog.empty()) cfg.catalog_path = a.catalog;
  if (!a.data_root.empty()) cfg.data_root = a.data_root;
  if (!a.viewport.empty()) cfg.viewport = parse_viewport(a.viewport);
  if (sub->count("--port")) cfg.http_port = static_cast<std::uint16_t>(a.port);
  if (sub->count("--threads")) cfg.render_threads = a.threads;
  if (cfg.grid.columns <= 0 || cfg.grid.rows <= 0) throw ConfigError("grid must have at least one slot");

  auto resume = a.resume ? read_session_for_resume(a.session) : std::nullopt;
  auto signals = block_signals();
  ManagerService service(cfg, a.session, spawn_nodes, std::move(resume));
  std::cout << "grid: " << cfg.grid.columns << " x " << cfg.grid.rows << " (" << cfg.grid.slot_count()
            << " slots)\n";
  std::cout << "controller: " << service.url() << std::endl;
  int sig = wait_for_signal(signals);
  std::cerr << "received " << (sig == SIGINT ? "SIGINT" : "SIGTERM") << ", shutting down\n";
  service.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cubewall: comparative visualisation of many data cubes on a tiled display"};
  app.require_subcommand(1);

  ServeArgs local_args;
  auto* local = app.add_subcommand("local", "run manager and render nodes in one process on loopback ports");
  local->add_option("--config", local_args.config, "manager config (JSON)");
  local->add_option("--catalog", local_args.catalog, "catalog CSV (overrides config)");
  local->add_option("--data-root", local_args.data_root, "directory that cube paths are relative to");
  local->add_option("--columns", local_args.columns, "grid columns, one node each")->check(CLI::Range(1, 702));
  local->add_option("--rows", local_args.rows, "grid rows (panels per node)")->check(CLI::Range(1, 64));
  local->add_option("--session", local_args.session, "session log to write (JSON lines)");
  local->add_flag("--resume", local_args.resume, "replay an existing --session file first and keep appending");
  local->add_option("--port", local_args.port, "controller HTTP port, 0 for any")->check(CLI::Range(0, 65535));
  local->add_option("--viewport", local_args.viewport, "panel size WxH");
  local->add_option("--threads", local_args.threads, "render threads per node")->check(CLI::PositiveNumber);

  ServeArgs mgr_args;
  auto* manager = app.add_subcommand("manager", "run the manager against already running nodes");
  manager->add_option("--config", mgr_args.config, "manager config (JSON)")->required();
  manager->add_option("--session", mgr_args.session, "session log to write (JSON lines)");
  manager->add_flag("--resume", mgr_args.resume, "replay an existing --session file first and keep appending");
  manager->add_option("--port", mgr_args.port, "controller HTTP port, 0 for any")->check(CLI::Range(0, 65535));

  NodeOptions node_opts;
  std::string node_host = "127.0.0.1";
  std::string node_viewport;
  int control_port = 0, http_port = 0;
  auto* node = app.add_subcommand("node", "run one render node (a grid column)");
  node->add_option("--column", node_opts.column, "0-based column index")->required()->check(CLI::NonNegativeNumber);
  node->add_option("--rows", node_opts.rows, "panels on this node")->check(CLI::Range(1, 64));
  node->add_option("--control-port", control_port, "TCP control port, 0 for any")->check(CLI::Range(0, 65535));
  node->add_option("--http-port", http_port, "HTTP frame port, 0 for any")->check(CLI::Range(0, 65535));
  node->add_option("--data-root", node_opts.data_root, "directory that cube paths are relative to");
  node->add_option("--viewport", node_viewport, "panel size WxH (default 342x768)");
  node->add_option("--threads", node_opts.render_threads, "render threads")->check(CLI::PositiveNumber);
  node->add_option("--host", node_host, "bind address");

  std::string batch_config, batch_session, batch_out, batch_data_root, batch_viewport;
  auto* batch = app.add_subcommand("batch", "replay a session headlessly and write every slot's PNG");
  batch->add_option("--config", batch_config, "manager config (JSON) for data root and viewport");
  batch->add_option("--data-root", batch_data_root, "directory that cube paths are relative to");
  batch->add_option("--viewport", batch_viewport, "panel size WxH");
  batch->add_option("--session", batch_session, "session log (JSON lines)")->required();
  batch->add_option("--out", batch_out, "output directory")->required();

  std::string gen_kind, gen_out, gen_dims = "64", gen_id;
  std::uint32_t gen_seed = 1;
  bool gen_header = false;
  auto* gen = app.add_subcommand("gen", "write a synthetic cube and print its catalog row");
  gen->add_option("kind", gen_kind, "sphere, gaussian, shells or noise")
      ->required()
      ->check(CLI::IsMember({"sphere", "gaussian", "shells", "noise"}));
  gen->add_option("--out", gen_out, "output file (.xrw or .raw)")->required();
  gen->add_option("--dims", gen_dims, "N or NXxNYxNZ");
  gen->add_option("--seed", gen_seed, "RNG seed for noise");
  gen->add_option("--id", gen_id, "cube ID for the catalog row (default: file stem)");
  gen->add_flag("--header", gen_header, "print the catalog header line first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*local) return serve(local_args, true, local);
    if (*manager) return serve(mgr_args, false, manager);

    if (*node) {
      if (!node_viewport.empty()) node_opts.viewport = parse_viewport(node_viewport);
      auto signals = block_signals();
      NodeServer server(node_opts, node_host, static_cast<std::uint16_t>(control_port),
                        static_cast<std::uint16_t>(http_port));
      server.start();
      std::cout << "node " << column_letters(node_opts.column) << ": control " << node_host << ":"
                << server.control_port() << ", frames http://" << node_host << ":" << server.http_port() << "/"
                << std::endl;
      wait_for_signal(signals);
      server.stop();
      return 0;
    }

    if (*batch) {
      ManagerConfig cfg;
      if (!batch_config.empty()) cfg = load_manager_config(batch_config);
      if (!batch_data_root.empty()) cfg.data_root = batch_data_root;
      if (!batch_viewport.empty()) cfg.viewport = parse_viewport(batch_viewport);
      if (!std::filesystem::exists(batch_session)) throw ConfigError("session file not found: " + batch_session);
      auto log = *read_session_for_resume(batch_session);
      auto result = run_batch(cfg, log, batch_out);
      std::cout << "wrote " << result.written.size() << " files to " << batch_out << "\n"
                << "state_hash " << result.state_hash << std::endl;
      return 0;
    }

    if (*gen) {
      SynthSpec spec;
      spec.kind = parse_synth_kind(gen_kind);
      spec.seed = gen_seed;
      int a = 0, b = 0, c = 0;
      char x1 = 0, x2 = 0;
      if (std::sscanf(gen_dims.c_str(), "%d%c%d%c%d", &a, &x1, &b, &x2, &c) == 5) {
        spec.nx = a, spec.ny = b, spec.nz = c;
      } else if (std::sscanf(gen_dims.c_str(), "%d", &a) == 1 && gen_dims.find_first_not_of("0123456789-") == std::string::npos) {
        spec.nx = spec.ny = spec.nz = a;
      } else {
        throw ArgumentError("dims must be N or NXxNYxNZ, got '" + gen_dims + "'");
      }
      if (gen_id.empty()) gen_id = std::filesystem::path(gen_out).stem().string();
      auto row = write_synthetic(spec, gen_out, gen_id);
      if (gen_header) std::cout << kSynthCatalogHeader << "\n";
      std::cout << row << std::endl;
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const IngestError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return 0;
}
