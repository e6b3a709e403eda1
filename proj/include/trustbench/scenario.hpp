#pragma once

// Deterministic closed-loop driving scenario on a circular route with stop
// signs, built on the secure graph. One victim pipeline
//
//   camera -> perception -> control -> interface -> plant
//
// runs at a 60 Hz tick base (perception and control at 30 Hz), while an
// optional spoofing participant publishes forged samples onto one topic.
// Because samples deliver latest-wins and the spoof slot follows the
// legitimate publisher inside each tick, a same-rate spoof dominates what
// downstream readers see.
//
// Everything is integer-tick, fixed-order, and allocation-stable, so a run
// with equal configuration reproduces its trace byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "trustbench/defense.hpp"
#include "trustbench/errors.hpp"
#include "trustbench/keystore.hpp"
#include "trustbench/messages.hpp"
#include "trustbench/securegraph.hpp"

namespace trustbench::scenario {

inline constexpr std::string_view kCameraTopic = "/rgb";
inline constexpr std::string_view kAnnotatedTopic = "/annotated";
inline constexpr std::string_view kDetectionsTopic = "/detections";
inline constexpr std::string_view kStopSignTopic = "/yolov8/stop_sign";
inline constexpr std::string_view kCommandTopic = "/qcar2/user_command";

struct ScenarioParams {
  // Plant.
  double v_max = 2.0;          // m/s
  double x_cruise = 0.35;      // throttle held while no stop is pending
  double k_accel = 6.0;        // m/s^2 at full throttle
  double k_drag = 1.8;         // m/s^2 opposing, also the full braking rate
  double k_turn = 1.0;         // rad/s of heading error per unit steering (z==3)
  double dt = 1.0 / 60.0;

  // Route: circular, signs at fixed arc positions.
  double route_length = 20.0;
  std::vector<double> sign_positions{2.5, 7.5, 12.5, 17.5};

  // Perception / control.
  double visible_range = 3.0;  // a sign is detectable within this distance
  double d_stop = 1.0;         // control brakes when a sign is reported closer
  std::uint64_t sign_hold_ticks = 60;  // full stop held this long per sign

  // Outcome thresholds.
  double zone_radius = 1.5;             // "near a sign" for overspeed checks
  double crossing_speed_tol = 0.05;     // rolling-stop allowance at the line
  double overspeed_fraction = 0.9;      // of v_max, inside a zone
  double overspeed_throttle = 0.9;      // commanded x that makes speed culpable
  double heading_error_limit = 0.5;     // rad before the route is "left"
  double perception_mismatch_tol = 0.5; // reported vs true distance slack, m
  std::uint64_t halt_event_min_ticks = 30;  // zero-speed run that counts as a halt
  std::uint64_t stuck_halt_ticks = 300;     // halt too long to be a sign service

  friend bool operator==(const ScenarioParams&, const ScenarioParams&) = default;
};

inline void validate_params(const ScenarioParams& p) {
  if (!(p.v_max > 0) || !(p.dt > 0) || !(p.route_length > 0)) {
    throw ValidationError("v_max, dt and route_length must be positive");
  }
  if (!(p.k_accel > 0) || !(p.k_drag > 0) || !(p.k_accel * 1.0 > p.k_drag)) {
    throw ValidationError("plant gains must be positive with k_accel > k_drag");
  }
  if (!(p.x_cruise > p.k_drag / p.k_accel) || !(p.x_cruise <= 1.0)) {
    throw ValidationError("x_cruise must exceed the neutral throttle and be <= 1");
  }
  if (p.sign_positions.empty()) throw ValidationError("route needs at least one sign");
  for (double s : p.sign_positions) {
    if (!(s >= 0) || !(s < p.route_length)) {
      throw ValidationError("sign position outside the route");
    }
  }
  if (!(p.d_stop > 0) || !(p.visible_range > p.d_stop)) {
    throw ValidationError("need visible_range > d_stop > 0");
  }
}

// ---------------------------------------------------------------------------
// Plant.

struct VehicleState {
  double s = 0;              // arc position in [0, route_length)
  double speed = 0;          // m/s
  double heading_error = 0;  // rad off the route centerline

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

// Semi-implicit Euler step. Throttle x accelerates at k_accel*x against a
// constant k_drag; speed clamps to [0, v_max]. Steering only matters in
// override mode (z==3); under route following (z==0) heading error is
// corrected immediately.
inline VehicleState step_vehicle(const VehicleState& state, const msg::UserCommand& cmd,
                                 const ScenarioParams& p) {
  VehicleState next = state;
  next.speed += (p.k_accel * cmd.x - p.k_drag) * p.dt;
  if (next.speed < 0) next.speed = 0;
  if (next.speed > p.v_max) next.speed = p.v_max;
  next.s = std::fmod(state.s + next.speed * p.dt, p.route_length);
  if (cmd.z == 3) {
    next.heading_error += p.k_turn * cmd.steering * p.dt;
  } else {
    next.heading_error = 0;
  }
  return next;
}

// Ahead-only arc distance from s to the nearest sign.
inline double nearest_sign_ahead(const ScenarioParams& p, double s) {
  double best = p.route_length;
  for (double sign : p.sign_positions) {
    const double d = std::fmod(sign - s + p.route_length, p.route_length);
    best = std::min(best, d);
  }
  return best;
}

// Direction-free arc distance from s to the nearest sign.
inline double nearest_sign_distance(const ScenarioParams& p, double s) {
  double best = p.route_length / 2;
  for (double sign : p.sign_positions) {
    const double ahead = std::fmod(sign - s + p.route_length, p.route_length);
    best = std::min(best, std::min(ahead, p.route_length - ahead));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Victim pipeline pieces.

// Stateless control law: brake to a report closer than d_stop, else cruise.
inline msg::UserCommand compute_command(const std::optional<msg::Detection>& detection,
                                        const ScenarioParams& p) {
  msg::UserCommand cmd;
  cmd.z = 0;
  cmd.steering = 0;
  const bool stop_pending = detection && detection->present && detection->y < p.d_stop;
  cmd.x = stop_pending ? 0.0 : p.x_cruise;
  return cmd;
}

// Synthetic perception with stop-and-go memory: a sign that has been served
// (full stop held for sign_hold_ticks while within d_stop) is suppressed
// until it falls behind the vehicle, so control can pull away again.
class SyntheticPerception {
 public:
  explicit SyntheticPerception(const ScenarioParams& p) : p_(p) {}

  msg::Detection sense(const VehicleState& state) {
    // Drop suppressions once the sign is no longer just ahead.
    for (auto it = suppressed_.begin(); it != suppressed_.end();) {
      if (ahead(*it, state.s) > p_.zone_radius) {
        it = suppressed_.erase(it);
      } else {
        ++it;
      }
    }

    int nearest = -1;
    double nearest_d = p_.route_length;
    for (std::size_t i = 0; i < p_.sign_positions.size(); ++i) {
      if (suppressed_.count(i)) continue;
      const double d = ahead(i, state.s);
      if (d <= p_.visible_range && d < nearest_d) {
        nearest = static_cast<int>(i);
        nearest_d = d;
      }
    }

    msg::Detection det;
    det.class_name = "stop_sign";
    if (nearest >= 0) {
      det.present = true;
      det.y = nearest_d;
      if (state.speed <= 0 && nearest_d < p_.d_stop) {
        held_ticks_ += 2;  // sensing runs at half the tick base
        if (held_ticks_ >= p_.sign_hold_ticks) {
          suppressed_.insert(static_cast<std::size_t>(nearest));
          held_ticks_ = 0;
        }
      } else {
        held_ticks_ = 0;
      }
    } else {
      det.present = false;
      det.y = 0;
      held_ticks_ = 0;
    }
    return det;
  }

 private:
  double ahead(std::size_t sign, double s) const {
    return std::fmod(p_.sign_positions[sign] - s + p_.route_length, p_.route_length);
  }

  ScenarioParams p_;
  std::set<std::size_t> suppressed_;
  std::uint64_t held_ticks_ = 0;
};

// ---------------------------------------------------------------------------
// Spoofing profiles.

struct SpoofProfile {
  std::string topic;
  std::variant<msg::UserCommand, msg::Detection> payload;
  double rate_hz = 60.0;
  std::uint64_t start_tick = 540;
  std::uint64_t end_tick = UINT64_MAX;  // clamped to the run length

  friend bool operator==(const SpoofProfile&, const SpoofProfile&) = default;
};

// Throttle that holds speed constant under the plant gains.
inline double neutral_throttle(const ScenarioParams& p) { return p.k_drag / p.k_accel; }

// The five canned attack payloads, by name. "none" yields no profile.
inline std::optional<SpoofProfile> make_named_spoof(std::string_view name,
                                                    const ScenarioParams& p) {
  SpoofProfile profile;
  if (name == "none") return std::nullopt;
  if (name == "brake") {
    profile.topic = std::string(kCommandTopic);
    profile.payload = msg::UserCommand{0.0, 0.0, 0};
    return profile;
  }
  if (name == "runaway") {
    profile.topic = std::string(kCommandTopic);
    profile.payload = msg::UserCommand{1.0, 0.0, 0};
    return profile;
  }
  if (name == "steer") {
    profile.topic = std::string(kCommandTopic);
    profile.payload = msg::UserCommand{neutral_throttle(p), 0.6, 3};
    return profile;
  }
  if (name == "phantom") {
    profile.topic = std::string(kStopSignTopic);
    profile.payload = msg::Detection{"stop_sign", 0.6, true};
    return profile;
  }
  if (name == "suppress") {
    profile.topic = std::string(kStopSignTopic);
    profile.payload = msg::Detection{"stop_sign", 5.0, true};
    return profile;
  }
  throw ValidationError("unknown spoof '" + std::string(name) +
                        "' (none|brake|runaway|steer|phantom|suppress)");
}

// ---------------------------------------------------------------------------
// Traces and outcomes.

struct TraceRow {
  std::uint64_t tick = 0;
  double s = 0;
  double speed = 0;
  double heading_error = 0;
  double true_sign_dist = 0;  // ground-truth ahead distance, pre-step
  // Command applied to the plant this tick and who published it.
  double cmd_x = 0;
  double cmd_steering = 0;
  int cmd_z = 0;
  std::string cmd_publisher;
  // Detection the control law last acted on and who published it.
  bool det_present = false;
  double det_y = 0;
  std::string det_publisher;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct Trace {
  ScenarioParams params;
  std::vector<TraceRow> rows;

  friend bool operator==(const Trace&, const Trace&) = default;
};

enum class Classification {
  nominal,
  forced_halt,
  overspeed_crash,
  path_deviation,
  premature_stop,
  missed_stop,
};

inline std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::nominal: return "nominal";
    case Classification::forced_halt: return "forced_halt";
    case Classification::overspeed_crash: return "overspeed_crash";
    case Classification::path_deviation: return "path_deviation";
    case Classification::premature_stop: return "premature_stop";
    case Classification::missed_stop: return "missed_stop";
  }
  return "?";
}

struct ScenarioOutcome {
  Classification classification = Classification::nominal;
  std::string detail;
  std::vector<std::pair<std::string, double>> evidence;
};

struct HaltEvent {
  std::uint64_t onset_tick = 0;
  std::uint64_t length = 0;
  double s = 0;
  bool perception_justified = false;  // det said: object closer than d_stop
};

inline std::vector<HaltEvent> find_halt_events(const Trace& trace,
                                               std::uint64_t min_length) {
  std::vector<HaltEvent> events;
  const auto& rows = trace.rows;
  std::size_t i = 0;
  while (i < rows.size()) {
    if (rows[i].speed > 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < rows.size() && rows[j].speed <= 0) ++j;
    if (j - i >= min_length) {
      HaltEvent e;
      e.onset_tick = rows[i].tick;
      e.length = j - i;
      e.s = rows[i].s;
      e.perception_justified =
          rows[i].det_present && rows[i].det_y < trace.params.d_stop;
      events.push_back(e);
    }
    i = j;
  }
  return events;
}

struct Crossing {
  std::uint64_t tick = 0;
  std::size_t sign = 0;
  double speed = 0;
  bool serviced = false;  // a full stop happened somewhere in the approach
};

inline std::vector<Crossing> find_crossings(const Trace& trace) {
  const ScenarioParams& p = trace.params;
  const auto& rows = trace.rows;
  std::vector<Crossing> out;
  const auto ahead = [&](double sign_pos, double s) {
    return std::fmod(sign_pos - s + p.route_length, p.route_length);
  };
  for (std::size_t i = 1; i < rows.size(); ++i) {
    double ds = rows[i].s - rows[i - 1].s;
    if (ds < -p.route_length / 2) ds += p.route_length;  // wrapped
    if (ds <= 0) continue;
    for (std::size_t k = 0; k < p.sign_positions.size(); ++k) {
      const double before = ahead(p.sign_positions[k], rows[i - 1].s);
      if (before >= ds) continue;
      Crossing c;
      c.tick = rows[i].tick;
      c.sign = k;
      c.speed = rows[i].speed;
      // Walk back through the contiguous approach (sign within zone_radius
      // ahead) looking for a standstill.
      for (std::size_t j = i; j-- > 0;) {
        const double d = ahead(p.sign_positions[k], rows[j].s);
        if (d > p.zone_radius) break;
        if (rows[j].speed <= 0) {
          c.serviced = true;
          break;
        }
      }
      out.push_back(c);
    }
  }
  return out;
}

// A perception report ground truth contradicts: an object reported where
// none is detectable, or at a distance well off the true one. Absence is
// never treated as a lie — perception legitimately goes quiet on a sign it
// has already serviced.
inline bool perception_lied(const ScenarioParams& p, const TraceRow& row) {
  if (!row.det_present) return false;
  if (row.true_sign_dist > p.visible_range + p.perception_mismatch_tol) return true;
  return std::abs(row.det_y - row.true_sign_dist) > p.perception_mismatch_tol;
}

// Decide what happened, most dangerous first:
//
//   overspeed_crash  full-throttle speed near a sign
//   path_deviation   heading error beyond the limit
//   premature_stop   a stuck halt backed by perception that contradicts truth
//   forced_halt      a stuck halt with no perception justification at all
//   missed_stop      a sign crossed at speed with no stop in the approach
//   nominal          none of the above
inline ScenarioOutcome classify_outcome(const Trace& trace) {
  const ScenarioParams& p = trace.params;
  ScenarioOutcome outcome;

  for (const TraceRow& row : trace.rows) {
    const bool in_zone = nearest_sign_distance(p, row.s) <= p.zone_radius;
    if (in_zone && row.speed >= p.overspeed_fraction * p.v_max &&
        row.cmd_x >= p.overspeed_throttle) {
      outcome.classification = Classification::overspeed_crash;
      outcome.detail = "commanded full throttle through a stop zone";
      outcome.evidence = {{"tick", static_cast<double>(row.tick)},
                          {"speed", row.speed},
                          {"cmd_x", row.cmd_x}};
      return outcome;
    }
  }

  for (const TraceRow& row : trace.rows) {
    if (std::abs(row.heading_error) > p.heading_error_limit) {
      outcome.classification = Classification::path_deviation;
      outcome.detail = "heading error left the route envelope";
      outcome.evidence = {{"tick", static_cast<double>(row.tick)},
                          {"heading_error", row.heading_error}};
      return outcome;
    }
  }

  const std::vector<HaltEvent> stuck = find_halt_events(trace, p.stuck_halt_ticks);
  if (!stuck.empty()) {
    const HaltEvent& h = stuck.front();
    bool lied = false;
    std::uint64_t lie_tick = 0;
    for (const TraceRow& row : trace.rows) {
      if (row.tick > h.onset_tick + h.length) break;
      if (row.det_present || row.true_sign_dist < p.visible_range) {
        if (perception_lied(p, row)) {
          lied = true;
          lie_tick = row.tick;
          break;
        }
      }
    }
    if (lied) {
      outcome.classification = Classification::premature_stop;
      outcome.detail = "stuck halt backed by perception that contradicts ground truth";
      outcome.evidence = {{"halt_onset_tick", static_cast<double>(h.onset_tick)},
                          {"halt_length", static_cast<double>(h.length)},
                          {"mismatch_tick", static_cast<double>(lie_tick)}};
    } else {
      outcome.classification = Classification::forced_halt;
      outcome.detail = "stuck halt with honest perception: commands alone stopped the car";
      outcome.evidence = {{"halt_onset_tick", static_cast<double>(h.onset_tick)},
                          {"halt_length", static_cast<double>(h.length)},
                          {"halt_s", h.s}};
    }
    return outcome;
  }

  for (const Crossing& c : find_crossings(trace)) {
    if (c.speed > p.crossing_speed_tol && !c.serviced) {
      outcome.classification = Classification::missed_stop;
      outcome.detail = "crossed a stop line at speed without a stop in the approach";
      outcome.evidence = {{"tick", static_cast<double>(c.tick)},
                          {"sign", static_cast<double>(c.sign)},
                          {"speed", c.speed}};
      return outcome;
    }
  }

  const auto halts = find_halt_events(trace, p.halt_event_min_ticks);
  outcome.classification = Classification::nominal;
  outcome.detail = "all stops serviced, no envelope violations";
  outcome.evidence = {{"halt_events", static_cast<double>(halts.size())}};
  return outcome;
}

// Outcome each canned spoof is built to produce.
inline Classification expected_classification(std::string_view spoof_name) {
  if (spoof_name == "none") return Classification::nominal;
  if (spoof_name == "brake") return Classification::forced_halt;
  if (spoof_name == "runaway") return Classification::overspeed_crash;
  if (spoof_name == "steer") return Classification::path_deviation;
  if (spoof_name == "phantom") return Classification::premature_stop;
  if (spoof_name == "suppress") return Classification::missed_stop;
  throw ValidationError("unknown spoof '" + std::string(spoof_name) + "'");
}

// ---------------------------------------------------------------------------
// Trace rendering: one tab-separated row per tick behind '#' metadata lines.
// Numeric formatting is fixed so equal runs render byte-identical text.

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string render_trace(const Trace& trace) {
  std::string out;
  out.reserve(trace.rows.size() * 96 + 256);
  out += "# columns: tick s speed heading_error true_sign_dist cmd_x cmd_steering"
         " cmd_z cmd_publisher det_present det_y det_publisher\n";
  out += "# route_length=" + format_double(trace.params.route_length) +
         " dt=" + format_double(trace.params.dt) +
         " v_max=" + format_double(trace.params.v_max) + "\n";
  for (const TraceRow& r : trace.rows) {
    out += std::to_string(r.tick);
    out += '\t';
    out += format_double(r.s);
    out += '\t';
    out += format_double(r.speed);
    out += '\t';
    out += format_double(r.heading_error);
    out += '\t';
    out += format_double(r.true_sign_dist);
    out += '\t';
    out += format_double(r.cmd_x);
    out += '\t';
    out += format_double(r.cmd_steering);
    out += '\t';
    out += std::to_string(r.cmd_z);
    out += '\t';
    out += r.cmd_publisher.empty() ? "-" : r.cmd_publisher;
    out += '\t';
    out += r.det_present ? '1' : '0';
    out += '\t';
    out += format_double(r.det_y);
    out += '\t';
    out += r.det_publisher.empty() ? "-" : r.det_publisher;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner.

struct ScenarioConfig {
  ScenarioParams params{};
  std::optional<SpoofProfile> spoof{};
  std::uint64_t duration_ticks = 4200;
  std::uint64_t seed = 1;
  // Credentials the spoofing participant presents. Defaults to the victim's
  // own tree — the post-exfiltration situation.
  std::optional<keystore::KeystoreTree> attacker_credentials{};
  // When set, readers gate samples through semantic plausibility checks.
  bool mitigate = false;
  defense::PlausibilityPolicy policy{};
};

struct RunResult {
  Trace trace;
  ScenarioOutcome outcome;
  // Reads of the spoofed topic by its victim consumer during the spoof
  // window, and how many of those returned the spoofer's sample.
  std::uint64_t spoofed_topic_reads = 0;
  std::uint64_t spoofed_topic_attacker_reads = 0;
  std::uint64_t gate_rejections = 0;  // mitigation only
  std::uint64_t spoof_denied = 0;     // publishes refused by the graph

  double spoof_read_dominance() const {
    return spoofed_topic_reads == 0
               ? 0.0
               : static_cast<double>(spoofed_topic_attacker_reads) /
                     static_cast<double>(spoofed_topic_reads);
  }
};

inline const std::vector<std::string>& victim_enclaves() {
  static const std::vector<std::string> names{"camera_node", "yolov8_node",
                                              "control_node", "interface_node"};
  return names;
}

// Run the closed loop for duration_ticks. Per tick, strictly in order:
// camera and perception publish (30 Hz), a detection spoof lands, control
// publishes (30 Hz), a command spoof lands, the interface applies the
// latest command and steps the plant. The spoof slot always follows the
// legitimate publisher of its topic, so equal-rate forgeries win every read.
inline RunResult run_scenario(const ScenarioConfig& cfg) {
  validate_params(cfg.params);
  const ScenarioParams& p = cfg.params;
  if (cfg.duration_ticks == 0) throw ValidationError("duration must be positive");
  if (cfg.spoof) {
    if (cfg.spoof->topic != kStopSignTopic && cfg.spoof->topic != kCommandTopic) {
      throw ValidationError("spoofable topics are " + std::string(kStopSignTopic) +
                            " and " + std::string(kCommandTopic));
    }
    if (!(cfg.spoof->rate_hz > 0) || cfg.spoof->rate_hz > 60.0) {
      throw ValidationError("spoof rate must be in (0, 60] Hz");
    }
  }

  const keystore::KeystoreTree victim_tree =
      keystore::create_keystore("store", victim_enclaves(), cfg.seed);
  graph::SecureGraph<msg::Message> graph(keystore::fingerprint_of(victim_tree));

  const graph::Participant camera = graph.join("camera_node", "camera_node", victim_tree);
  const graph::Participant yolo = graph.join("yolov8_node", "yolov8_node", victim_tree);
  const graph::Participant control = graph.join("control_node", "control_node", victim_tree);
  const graph::Participant interface_node =
      graph.join("interface_node", "interface_node", victim_tree);

  graph.advertise(camera, std::string(kCameraTopic));
  graph.advertise(yolo, std::string(kAnnotatedTopic));
  graph.advertise(yolo, std::string(kDetectionsTopic));
  graph.advertise(yolo, std::string(kStopSignTopic));
  graph.advertise(control, std::string(kCommandTopic));

  std::optional<graph::Participant> spoofer;
  std::uint64_t spoof_stride = 1;
  std::uint64_t spoof_end = 0;
  RunResult result;
  if (cfg.spoof) {
    const keystore::KeystoreTree& creds =
        cfg.attacker_credentials ? *cfg.attacker_credentials : victim_tree;
    spoofer = graph.join("spoof_node", "spoof_node", creds);
    if (spoofer->authenticated) {
      graph.advertise(*spoofer, cfg.spoof->topic);
    }
    spoof_stride = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(60.0 / cfg.spoof->rate_hz)));
    spoof_end = std::min<std::uint64_t>(cfg.spoof->end_tick, cfg.duration_ticks);
  }

  SyntheticPerception perception(p);
  VehicleState state;
  msg::UserCommand last_applied_cmd{};  // neutral until the first command lands
  std::string last_cmd_publisher;
  std::optional<msg::Detection> last_acted_det;
  std::string last_det_publisher;
  std::optional<msg::Message> last_accepted_cmd_msg;
  std::optional<msg::Message> last_accepted_det_msg;

  result.trace.params = p;
  result.trace.rows.reserve(cfg.duration_ticks);

  const bool spoofing_detections = cfg.spoof && cfg.spoof->topic == kStopSignTopic;
  const bool spoofing_commands = cfg.spoof && cfg.spoof->topic == kCommandTopic;

  for (std::uint64_t t = 0; t < cfg.duration_ticks; ++t) {
    const bool spoof_active = cfg.spoof && spoofer && t >= cfg.spoof->start_tick &&
                              t < spoof_end &&
                              (t - cfg.spoof->start_tick) % spoof_stride == 0;
    const double true_dist_pre = nearest_sign_ahead(p, state.s);

    // 30 Hz victim sensing chain.
    if (t % 2 == 0) {
      graph.publish(camera, std::string(kCameraTopic), msg::FrameStamp{t / 2});
      const msg::Detection det = perception.sense(state);
      graph.publish(yolo, std::string(kStopSignTopic), det);
      graph.publish(yolo, std::string(kDetectionsTopic), det);
      graph.publish(yolo, std::string(kAnnotatedTopic), msg::FrameStamp{t / 2});
    }

    if (spoof_active && spoofing_detections) {
      try {
        graph.publish(*spoofer, cfg.spoof->topic,
                      msg::Message{std::get<msg::Detection>(cfg.spoof->payload)});
      } catch (const AccessDeniedError&) {
        ++result.spoof_denied;
      }
    }

    // 30 Hz control.
    if (t % 2 == 0) {
      const auto sample = graph.sample_latest(control, std::string(kStopSignTopic));
      if (sample) {
        const bool in_window =
            cfg.spoof && t >= cfg.spoof->start_tick && t < spoof_end;
        if (spoofing_detections && in_window) {
          ++result.spoofed_topic_reads;
          if (sample->publisher == "spoof_node") ++result.spoofed_topic_attacker_reads;
        }
        bool accept = true;
        if (cfg.mitigate) {
          const defense::Verdict verdict = defense::check_semantic_plausibility(
              last_accepted_det_msg, sample->payload, cfg.policy);
          accept = verdict.plausible;
          if (!accept) ++result.gate_rejections;
        }
        if (accept) {
          last_accepted_det_msg = sample->payload;
          last_acted_det = std::get<msg::Detection>(sample->payload);
          last_det_publisher = sample->publisher;
        }
      }
      graph.publish(control, std::string(kCommandTopic),
                    msg::Message{compute_command(last_acted_det, p)});
    }

    if (spoof_active && spoofing_commands) {
      try {
        graph.publish(*spoofer, cfg.spoof->topic,
                      msg::Message{std::get<msg::UserCommand>(cfg.spoof->payload)});
      } catch (const AccessDeniedError&) {
        ++result.spoof_denied;
      }
    }

    // 60 Hz interface: apply the freshest command to the plant.
    {
      const auto sample = graph.sample_latest(interface_node, std::string(kCommandTopic));
      if (sample) {
        const bool in_window =
            cfg.spoof && t >= cfg.spoof->start_tick && t < spoof_end;
        if (spoofing_commands && in_window) {
          ++result.spoofed_topic_reads;
          if (sample->publisher == "spoof_node") ++result.spoofed_topic_attacker_reads;
        }
        bool accept = true;
        if (cfg.mitigate) {
          const defense::Verdict verdict = defense::check_semantic_plausibility(
              last_accepted_cmd_msg, sample->payload, cfg.policy);
          accept = verdict.plausible;
          if (!accept) ++result.gate_rejections;
        }
        if (accept) {
          last_accepted_cmd_msg = sample->payload;
          last_applied_cmd = std::get<msg::UserCommand>(sample->payload);
          last_cmd_publisher = sample->publisher;
        }
      }
      state = step_vehicle(state, last_applied_cmd, p);

      TraceRow row;
      row.tick = t;
      row.s = state.s;
      row.speed = state.speed;
      row.heading_error = state.heading_error;
      row.true_sign_dist = true_dist_pre;
      row.cmd_x = last_applied_cmd.x;
      row.cmd_steering = last_applied_cmd.steering;
      row.cmd_z = last_applied_cmd.z;
      row.cmd_publisher = last_cmd_publisher;
      row.det_present = last_acted_det && last_acted_det->present;
      row.det_y = last_acted_det ? last_acted_det->y : 0.0;
      row.det_publisher = last_det_publisher;
      result.trace.rows.push_back(std::move(row));
    }

    graph.advance_tick();
  }

  result.outcome = classify_outcome(result.trace);
  return result;
}

}  // namespace trustbench::scenario
