#pragma once

// Message payloads exchanged on the simulated vehicle graph. Kept separate
// from the graph and scenario so the defense checks can name them without
// pulling in the simulation.

#include <cstdint>
#include <string>
#include <variant>

namespace trustbench::msg {

// Driving command: x throttle in [0,1], steering in [-1,1], z mode
// (0 = follow route, 3 = manual steering override).
struct UserCommand {
  double x = 0.0;
  double steering = 0.0;
  int z = 0;

  friend bool operator==(const UserCommand&, const UserCommand&) = default;
};

// One perception result: nearest object of `class_name` at distance y
// meters, or nothing (present == false).
struct Detection {
  std::string class_name = "stop_sign";
  double y = 0.0;
  bool present = false;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Camera frame marker; payload-free besides the counter.
struct FrameStamp {
  std::uint64_t frame = 0;

  friend bool operator==(const FrameStamp&, const FrameStamp&) = default;
};

using Message = std::variant<UserCommand, Detection, FrameStamp>;

}  // namespace trustbench::msg
