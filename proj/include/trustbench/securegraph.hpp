#pragma once

// Identity-gated publish/subscribe over named topics, modelling a data bus
// whose admission control is exactly one check: does the joining node's
// credential tree hash to the trusted fingerprint? Whoever holds a matching
// tree is indistinguishable from a legitimate node — that single property is
// what the rest of this library probes.
//
// Delivery is latest-sample: a topic retains only the newest sample, ordered
// by (publish_tick, arrival order within the tick).

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trustbench/errors.hpp"
#include "trustbench/keystore.hpp"

namespace trustbench::graph {

// Handle returned by join(). `authenticated` is decided once, at join time.
struct Participant {
  std::string id;
  std::string enclave_name;
  keystore::Fingerprint presented;
  bool authenticated = false;
};

template <typename Payload>
struct Sample {
  std::string topic;
  std::string publisher;
  Payload payload{};
  std::uint64_t publish_tick = 0;
  std::uint64_t sequence = 0;  // per-publisher counter

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct GraphEvent {
  std::uint64_t tick = 0;
  std::string op;           // join | advertise | publish | deny
  std::string participant;
  std::string topic;        // empty for join
  std::string detail;       // authenticated / rejected / reason
};

inline void validate_topic(std::string_view topic) {
  if (topic.size() < 2 || topic.front() != '/') {
    throw ValidationError("topic '" + std::string(topic) + "' must begin with '/'");
  }
}

template <typename Payload>
class SecureGraph {
 public:
  explicit SecureGraph(keystore::Fingerprint trusted) : trusted_(std::move(trusted)) {}

  // Admission: one fingerprint comparison. The credential tree is hashed,
  // never inspected — possession is proof.
  Participant join(std::string id, std::string enclave_name,
                   const keystore::KeystoreTree& credentials) {
    if (id.empty()) throw ValidationError("participant id is empty");
    if (members_.count(id)) {
      throw ValidationError("participant id '" + id + "' already joined");
    }
    const keystore::Fingerprint presented = keystore::fingerprint_of(credentials);
    const bool authenticated = presented == trusted_;
    members_.emplace(id, Member{enclave_name, presented, authenticated, 0});
    events_.push_back(GraphEvent{tick_, "join", id, "",
                                 authenticated ? "authenticated" : "rejected"});
    return Participant{std::move(id), std::move(enclave_name), presented, authenticated};
  }

  // Topics an unauthenticated caller can see: none.
  std::vector<std::string> list_topics(const Participant& who) const {
    require_member(who);
    std::vector<std::string> out;
    if (!is_authenticated(who)) return out;
    out.reserve(topics_.size());
    for (const auto& [name, _] : topics_) out.push_back(name);
    return out;
  }

  void advertise(const Participant& who, const std::string& topic) {
    validate_topic(topic);
    require_member(who);
    if (!is_authenticated(who)) {
      deny(who.id, topic, "advertise");
      throw AccessDeniedError("'" + who.id + "' is not authenticated");
    }
    topics_[topic].publishers.insert(who.id);
    events_.push_back(GraphEvent{tick_, "advertise", who.id, topic, ""});
  }

  void publish(const Participant& who, const std::string& topic, Payload payload) {
    validate_topic(topic);
    require_member(who);
    if (!is_authenticated(who)) {
      deny(who.id, topic, "publish");
      throw AccessDeniedError("'" + who.id + "' is not authenticated");
    }
    auto it = topics_.find(topic);
    if (it == topics_.end() || !it->second.publishers.count(who.id)) {
      deny(who.id, topic, "publish-unadvertised");
      throw AccessDeniedError("'" + who.id + "' has not advertised '" + topic + "'");
    }
    Member& member = members_.at(who.id);
    it->second.latest = Sample<Payload>{topic, who.id, std::move(payload), tick_,
                                        member.next_sequence++};
    events_.push_back(GraphEvent{tick_, "publish", who.id, topic, ""});
  }

  // Latest sample on the topic, or nullopt if nothing was published yet.
  std::optional<Sample<Payload>> sample_latest(const Participant& who,
                                               const std::string& topic) const {
    validate_topic(topic);
    require_member(who);
    if (!is_authenticated(who)) {
      throw AccessDeniedError("'" + who.id + "' is not authenticated");
    }
    const auto it = topics_.find(topic);
    if (it == topics_.end()) return std::nullopt;
    return it->second.latest;
  }

  std::uint64_t advance_tick() { return ++tick_; }
  std::uint64_t tick() const noexcept { return tick_; }

  const std::vector<GraphEvent>& events() const noexcept { return events_; }

 private:
  struct Member {
    std::string enclave_name;
    keystore::Fingerprint presented;
    bool authenticated = false;
    std::uint64_t next_sequence = 0;
  };

  struct Topic {
    std::set<std::string> publishers;
    std::optional<Sample<Payload>> latest;
  };

  void require_member(const Participant& who) const {
    if (!members_.count(who.id)) {
      throw ValidationError("participant '" + who.id + "' never joined");
    }
  }

  bool is_authenticated(const Participant& who) const {
    // Authentication state lives in the graph, not in the caller's handle:
    // a forged Participant struct cannot upgrade itself.
    return members_.at(who.id).authenticated;
  }

  void deny(const std::string& id, const std::string& topic, std::string why) {
    events_.push_back(GraphEvent{tick_, "deny", id, topic, std::move(why)});
  }

  keystore::Fingerprint trusted_;
  std::map<std::string, Member> members_;
  std::map<std::string, Topic> topics_;
  std::uint64_t tick_ = 0;
  std::vector<GraphEvent> events_;
};

}  // namespace trustbench::graph
