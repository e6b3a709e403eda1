// Closed-loop testbed: plant physics, control law, the five canned attacks,
// read dominance, credential gating, and the plausibility mitigation.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "trustbench/keystore.hpp"
#include "trustbench/scenario.hpp"

using namespace trustbench;
using namespace trustbench::keystore;
using scenario::Classification;

namespace {

scenario::RunResult run_spoof(const std::string& name, bool mitigate = false,
                              std::optional<keystore::KeystoreTree> creds = {}) {
  scenario::ScenarioConfig cfg;
  cfg.spoof = scenario::make_named_spoof(name, cfg.params);
  cfg.mitigate = mitigate;
  cfg.attacker_credentials = std::move(creds);
  return scenario::run_scenario(cfg);
}

}  // namespace

TEST_CASE("step_vehicle integrates throttle against drag and clamps") {
  scenario::ScenarioParams p;
  scenario::VehicleState v;

  // Full throttle from rest: dv = (6*1 - 1.8)/60 = 0.07 m/s.
  auto next = scenario::step_vehicle(v, msg::UserCommand{1.0, 0.0, 0}, p);
  CHECK(next.speed == Catch::Approx(0.07));
  CHECK(next.s == Catch::Approx(0.07 / 60.0));
  CHECK(next.heading_error == 0.0);

  // Zero throttle from rest stays at rest: no reversing.
  next = scenario::step_vehicle(v, msg::UserCommand{0.0, 0.0, 0}, p);
  CHECK(next.speed == 0.0);
  CHECK(next.s == 0.0);

  // Speed clamps at v_max.
  v.speed = p.v_max;
  next = scenario::step_vehicle(v, msg::UserCommand{1.0, 0.0, 0}, p);
  CHECK(next.speed == p.v_max);

  // Neutral throttle holds speed exactly.
  v.speed = 1.0;
  next = scenario::step_vehicle(v, msg::UserCommand{scenario::neutral_throttle(p), 0.0, 0}, p);
  CHECK(next.speed == Catch::Approx(1.0));

  // Position wraps around the route.
  v.s = p.route_length - 0.01;
  v.speed = 1.2;
  next = scenario::step_vehicle(v, msg::UserCommand{scenario::neutral_throttle(p), 0.0, 0}, p);
  CHECK(next.s >= 0.0);
  CHECK(next.s < 0.02);

  // Manual override steers; route mode zeroes the heading error.
  v = scenario::VehicleState{};
  next = scenario::step_vehicle(v, msg::UserCommand{0.3, 0.5, 3}, p);
  CHECK(next.heading_error == Catch::Approx(0.5 / 60.0));
  next.heading_error = 0.4;
  next = scenario::step_vehicle(next, msg::UserCommand{0.3, 0.0, 0}, p);
  CHECK(next.heading_error == 0.0);
}

TEST_CASE("the control law brakes exactly when a close object is reported") {
  scenario::ScenarioParams p;
  CHECK(scenario::compute_command(std::nullopt, p).x == p.x_cruise);
  msg::Detection det{"stop_sign", 0.5, true};
  CHECK(scenario::compute_command(det, p).x == 0.0);
  det.y = 1.5;  // visible but not close
  CHECK(scenario::compute_command(det, p).x == p.x_cruise);
  det.y = 0.5;
  det.present = false;  // an absent report never brakes
  CHECK(scenario::compute_command(det, p).x == p.x_cruise);
  CHECK(scenario::compute_command(det, p).z == 0);
}

TEST_CASE("sign distances are measured on the circle") {
  scenario::ScenarioParams p;
  CHECK(scenario::nearest_sign_ahead(p, 2.0) == Catch::Approx(0.5));
  CHECK(scenario::nearest_sign_ahead(p, 2.6) == Catch::Approx(4.9));   // next is 7.5
  CHECK(scenario::nearest_sign_ahead(p, 18.0) == Catch::Approx(4.5));  // wraps to 2.5
  CHECK(scenario::nearest_sign_distance(p, 2.6) == Catch::Approx(0.1));  // behind counts
  CHECK(scenario::nearest_sign_distance(p, 0.0) == Catch::Approx(2.5));  // 2.5 ahead ties 17.5 behind
}

TEST_CASE("perception serves a sign once and then lets the car pull away") {
  scenario::ScenarioParams p;
  scenario::SyntheticPerception perception(p);
  scenario::VehicleState at_sign{2.0, 0.0, 0.0};  // 0.5 m short of sign 0

  // Holding still at the line: present until the hold elapses, then quiet.
  std::uint64_t senses_until_quiet = 0;
  for (; senses_until_quiet < 100; ++senses_until_quiet) {
    if (!perception.sense(at_sign).present) break;
  }
  // sign_hold_ticks=60 at two ticks per sense = 30 sensing cycles.
  CHECK(senses_until_quiet == 30);
  CHECK(!perception.sense(at_sign).present);

  // Far away again the suppression clears and the next sign shows up.
  scenario::VehicleState later{6.0, 1.0, 0.0};  // sign 1 is 1.5 m ahead
  const auto det = perception.sense(later);
  CHECK(det.present);
  CHECK(det.y == Catch::Approx(1.5));
}

TEST_CASE("parameter validation rejects a degenerate plant") {
  scenario::ScenarioParams p;
  CHECK_NOTHROW(scenario::validate_params(p));
  auto bad = p;
  bad.v_max = 0;
  CHECK_THROWS_AS(scenario::validate_params(bad), ValidationError);
  bad = p;
  bad.x_cruise = 0.2;  // below neutral throttle: the car could never move
  CHECK_THROWS_AS(scenario::validate_params(bad), ValidationError);
  bad = p;
  bad.sign_positions = {25.0};
  CHECK_THROWS_AS(scenario::validate_params(bad), ValidationError);
  bad = p;
  bad.d_stop = 4.0;  // braking would begin before the sign is visible
  CHECK_THROWS_AS(scenario::validate_params(bad), ValidationError);
}

TEST_CASE("named spoof profiles cover the attack menu") {
  scenario::ScenarioParams p;
  CHECK(!scenario::make_named_spoof("none", p).has_value());
  CHECK_THROWS_AS(scenario::make_named_spoof("nonsense", p), ValidationError);

  const auto brake = scenario::make_named_spoof("brake", p);
  REQUIRE(brake.has_value());
  CHECK(brake->topic == scenario::kCommandTopic);
  CHECK(std::get<msg::UserCommand>(brake->payload).x == 0.0);
  CHECK(brake->start_tick == 540);
  CHECK(brake->rate_hz == 60.0);

  const auto phantom = scenario::make_named_spoof("phantom", p);
  REQUIRE(phantom.has_value());
  CHECK(phantom->topic == scenario::kStopSignTopic);
  CHECK(std::get<msg::Detection>(phantom->payload).y == 0.6);

  const auto steer = scenario::make_named_spoof("steer", p);
  CHECK(std::get<msg::UserCommand>(steer->payload).z == 3);
  // Steering spoof holds speed so only the heading drifts.
  CHECK(std::get<msg::UserCommand>(steer->payload).x ==
        Catch::Approx(scenario::neutral_throttle(p)));
}

TEST_CASE("an undisturbed run is nominal and stays inside the envelope") {
  const auto result = run_spoof("none");
  const auto& rows = result.trace.rows;
  REQUIRE(rows.size() == 4200);

  CHECK(result.outcome.classification == Classification::nominal);
  CHECK(result.spoofed_topic_reads == 0);
  CHECK(result.spoof_denied == 0);

  const auto& p = result.trace.params;
  double max_speed = 0;
  for (const auto& row : rows) {
    CHECK(row.speed >= 0.0);
    CHECK(row.speed <= p.v_max);
    CHECK(row.s >= 0.0);
    CHECK(row.s < p.route_length);
    CHECK(row.heading_error == 0.0);
    CHECK(!scenario::perception_lied(p, row));
    max_speed = std::max(max_speed, row.speed);
  }
  // The car cruises well below the overspeed bar.
  CHECK(max_speed < p.overspeed_fraction * p.v_max);

  // Every sign is serviced: only justified halts, every crossing after a stop.
  const auto halts = scenario::find_halt_events(result.trace, p.halt_event_min_ticks);
  CHECK(halts.size() == 10);
  for (const auto& h : halts) {
    CHECK(h.perception_justified);
    CHECK(h.length < p.stuck_halt_ticks);
    // A halt clipped by the end of the run may be short of a full hold.
    if (h.onset_tick + h.length < rows.size()) {
      CHECK(h.length >= p.sign_hold_ticks);
    }
  }
  const auto crossings = scenario::find_crossings(result.trace);
  CHECK(crossings.size() == 9);
  for (const auto& c : crossings) CHECK(c.serviced);

  bool found = false;
  for (const auto& [key, value] : result.outcome.evidence) {
    if (key == "halt_events") {
      CHECK(value == 10.0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("each canned attack produces its designed outcome") {
  for (const std::string name : {"brake", "runaway", "steer", "phantom", "suppress"}) {
    DYNAMIC_SECTION("spoof " << name) {
      const auto result = run_spoof(name);
      CHECK(result.outcome.classification == scenario::expected_classification(name));
      // With stolen credentials nothing is denied and, at the full 60 Hz,
      // every read of the spoofed topic in the window returns the forgery.
      CHECK(result.spoof_denied == 0);
      CHECK(result.spoofed_topic_reads > 0);
      CHECK(result.spoof_read_dominance() == 1.0);
    }
  }
}

TEST_CASE("attack side effects appear only after the spoof starts") {
  const auto result = run_spoof("runaway");
  const auto& rows = result.trace.rows;
  for (std::uint64_t t = 0; t < 540; ++t) {
    CHECK(rows[t].cmd_publisher != "spoof_node");
    CHECK(rows[t].det_publisher != "spoof_node");
  }
  CHECK(rows[540].cmd_publisher == "spoof_node");
  // Evidence points inside the attack window.
  bool found = false;
  for (const auto& [key, value] : result.outcome.evidence) {
    if (key == "tick") {
      CHECK(value >= 540.0);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("a lower-rate spoof loses reads to the legitimate publisher") {
  scenario::ScenarioConfig cfg;
  cfg.spoof = scenario::make_named_spoof("brake", cfg.params);
  cfg.spoof->rate_hz = 20.0;
  const auto result = scenario::run_scenario(cfg);
  CHECK(result.spoof_read_dominance() == Catch::Approx(0.5));
  // A command channel the attacker only holds half the time no longer forces
  // the halt: the cruise commands keep winning it back.
  CHECK(result.outcome.classification == Classification::nominal);
}

TEST_CASE("without the stolen tree every spoofed publish is refused") {
  const auto wrong = create_keystore("store", scenario::victim_enclaves(), 999);
  const auto result = run_spoof("runaway", false, wrong);
  CHECK(result.outcome.classification == Classification::nominal);
  CHECK(result.spoof_denied == 3660);  // one refusal per attempted tick
  CHECK(result.spoofed_topic_attacker_reads == 0);
  CHECK(result.spoof_read_dominance() == 0.0);
}

TEST_CASE("a byte-identical reconstruction under another name is enough") {
  const auto victim = create_keystore("store", scenario::victim_enclaves(), 1);
  keystore::KeystoreTree stolen("recovered", victim.ca(), victim.enclaves());
  const auto result = run_spoof("runaway", false, stolen);
  CHECK(result.outcome.classification == Classification::overspeed_crash);
  CHECK(result.spoof_denied == 0);
}

TEST_CASE("runs are deterministic tick for tick") {
  const auto a = run_spoof("brake");
  const auto b = run_spoof("brake");
  CHECK(a.trace == b.trace);
  CHECK(scenario::render_trace(a.trace) == scenario::render_trace(b.trace));
  CHECK(a.outcome.classification == b.outcome.classification);
  CHECK(a.spoofed_topic_reads == b.spoofed_topic_reads);
}

TEST_CASE("the plausibility gate defuses the runaway command stream") {
  const auto unmitigated = run_spoof("runaway");
  REQUIRE(unmitigated.outcome.classification == Classification::overspeed_crash);

  const auto mitigated = run_spoof("runaway", true);
  CHECK(mitigated.outcome.classification != Classification::overspeed_crash);
  CHECK(mitigated.gate_rejections == 3660);  // every forged read bounced

  // The throttle the plant actually saw never exceeded the jump-limited value.
  const auto& p = mitigated.trace.params;
  for (const auto& row : mitigated.trace.rows) {
    CHECK(row.cmd_x < p.overspeed_throttle);
  }
}

TEST_CASE("the gate never rejects legitimate traffic") {
  const auto plain = run_spoof("none");
  const auto gated = run_spoof("none", true);
  CHECK(gated.gate_rejections == 0);
  CHECK(gated.outcome.classification == Classification::nominal);
  // Bit-for-bit identical behaviour with the gate armed.
  CHECK(gated.trace == plain.trace);
  CHECK(scenario::render_trace(gated.trace) == scenario::render_trace(plain.trace));
}

TEST_CASE("trace rendering is stable and machine-readable") {
  scenario::ScenarioConfig cfg;
  cfg.duration_ticks = 3;
  const auto result = scenario::run_scenario(cfg);
  const std::string text = scenario::render_trace(result.trace);

  CHECK(text.starts_with("# columns: tick"));
  std::size_t lines = 0;
  for (char c : text) lines += (c == '\n');
  CHECK(lines == 2 + 3);  // two metadata lines plus one row per tick

  // First data row: tick 0, control's first cruise command already applied.
  const std::size_t marker = text.find("\n0\t");
  REQUIRE(marker != std::string::npos);
  const std::size_t row_start = marker + 1;
  const std::size_t row_end = text.find('\n', row_start);
  const std::string row = text.substr(row_start, row_end - row_start);
  CHECK(std::count(row.begin(), row.end(), '\t') == 11);  // 12 columns
  CHECK(row.find("\tcontrol_node\t") != std::string::npos);
  CHECK(row.find("\t0.35\t") != std::string::npos);  // cruise throttle
}

TEST_CASE("scenario configuration is validated") {
  scenario::ScenarioConfig cfg;
  cfg.duration_ticks = 0;
  CHECK_THROWS_AS(scenario::run_scenario(cfg), ValidationError);

  cfg = scenario::ScenarioConfig{};
  cfg.spoof = scenario::make_named_spoof("brake", cfg.params);
  cfg.spoof->topic = "/rgb";  // not a spoofable topic
  CHECK_THROWS_AS(scenario::run_scenario(cfg), ValidationError);

  cfg = scenario::ScenarioConfig{};
  cfg.spoof = scenario::make_named_spoof("brake", cfg.params);
  cfg.spoof->rate_hz = 0.0;
  CHECK_THROWS_AS(scenario::run_scenario(cfg), ValidationError);
}
