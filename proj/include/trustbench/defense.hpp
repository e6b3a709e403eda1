#pragma once

// Defender-side countermeasures, each independent of the others:
//
//   * resolver-log anomaly scoring (query volume, name diversity, entropy)
//   * semantic plausibility gating of driving messages
//   * per-topic publish rate limiting
//   * package content manifests (build / verify)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "trustbench/covert_dns.hpp"
#include "trustbench/detail/sha256.hpp"
#include "trustbench/errors.hpp"
#include "trustbench/messages.hpp"
#include "trustbench/securegraph.hpp"

namespace trustbench::defense {

// ---------------------------------------------------------------------------
// Resolver log ingestion.

struct DnsObservation {
  double timestamp = 0;  // unix seconds
  std::string source;
  std::string qname;
};

// One log line: timestamp<TAB>source<TAB>qname, optionally followed by more
// tab-separated fields (ignored). Blank and '#' lines yield nullopt.
inline std::optional<DnsObservation> parse_log_line(std::string_view line) {
  if (line.empty() || line.front() == '#') return std::nullopt;
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (fields.size() < 3) {
    throw ParseError("expected at least 3 tab-separated fields, got " +
                     std::to_string(fields.size()));
  }
  DnsObservation obs;
  const std::string ts(fields[0]);
  std::size_t consumed = 0;
  try {
    obs.timestamp = std::stod(ts, &consumed);
  } catch (const std::exception&) {
    throw ParseError("bad timestamp '" + ts + "'");
  }
  if (consumed != ts.size()) throw ParseError("bad timestamp '" + ts + "'");
  if (fields[1].empty()) throw ParseError("empty source field");
  if (fields[2].empty()) throw ParseError("empty qname field");
  obs.source = std::string(fields[1]);
  obs.qname = std::string(fields[2]);
  return obs;
}

inline std::vector<DnsObservation> load_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<DnsObservation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    try {
      if (auto obs = parse_log_line(line)) out.push_back(std::move(*obs));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  std::stable_sort(out.begin(), out.end(),
                   [](const DnsObservation& a, const DnsObservation& b) {
                     return a.timestamp < b.timestamp;
                   });
  return out;
}

// ---------------------------------------------------------------------------
// Anomaly scoring.

// Shannon entropy of the character distribution, in bits per character.
// Empty input scores 0.
inline double shannon_entropy_bits(std::string_view text) {
  if (text.empty()) return 0.0;
  std::map<char, std::size_t> counts;
  for (char c : text) ++counts[c];
  double entropy = 0.0;
  const double n = static_cast<double>(text.size());
  for (const auto& [_, count] : counts) {
    const double p = static_cast<double>(count) / n;
    entropy -= p * std::log2(p);
  }
  return entropy;
}

// The zone key for grouping: last two labels of the name (the registrable
// suffix for the grammars this library emits).
inline std::string zone_of(std::string_view qname) {
  const auto labels = dns::split_labels(qname);
  if (labels.size() <= 2) return std::string(qname);
  return std::string(labels[labels.size() - 2]) + "." + std::string(labels.back());
}

// The data-bearing prefix whose entropy is measured: up to the first two
// labels in front of the zone, concatenated.
inline std::string data_prefix_of(std::string_view qname) {
  const auto labels = dns::split_labels(qname);
  const std::size_t before_zone = labels.size() > 2 ? labels.size() - 2 : 0;
  std::string out;
  for (std::size_t i = 0; i < before_zone && i < 2; ++i) {
    out += std::string(labels[i]);
  }
  return out;
}

struct DetectorThresholds {
  std::uint64_t max_query_count = 50;
  std::uint64_t max_unique_names = 30;
  double max_mean_entropy_bits = 4.0;
};

struct AnomalyReport {
  std::string zone;
  double window_start = 0;
  double window_end = 0;
  std::uint64_t query_count = 0;
  std::uint64_t unique_name_count = 0;
  double mean_prefix_entropy_bits = 0;
  std::size_t max_name_length = 0;
  bool flagged = false;
  std::vector<std::string> reasons;
};

// Bucket observations into fixed windows anchored at floor(t / window) per
// zone and score each bucket against the thresholds. Reports come back
// ordered by (zone, window_start).
inline std::vector<AnomalyReport> score_dns_window(
    const std::vector<DnsObservation>& observations, double window_seconds,
    const DetectorThresholds& thresholds) {
  if (!(window_seconds > 0)) {
    throw ValidationError("window length must be positive");
  }
  struct Bucket {
    std::vector<const DnsObservation*> members;
  };
  std::map<std::pair<std::string, std::int64_t>, Bucket> buckets;
  for (const DnsObservation& obs : observations) {
    const std::int64_t index =
        static_cast<std::int64_t>(std::floor(obs.timestamp / window_seconds));
    buckets[{zone_of(obs.qname), index}].members.push_back(&obs);
  }

  std::vector<AnomalyReport> reports;
  reports.reserve(buckets.size());
  for (const auto& [key, bucket] : buckets) {
    AnomalyReport report;
    report.zone = key.first;
    report.window_start = static_cast<double>(key.second) * window_seconds;
    report.window_end = report.window_start + window_seconds;
    report.query_count = bucket.members.size();

    std::set<std::string_view> unique_names;
    double entropy_sum = 0;
    for (const DnsObservation* obs : bucket.members) {
      unique_names.insert(obs->qname);
      entropy_sum += shannon_entropy_bits(data_prefix_of(obs->qname));
      report.max_name_length = std::max(report.max_name_length, obs->qname.size());
    }
    report.unique_name_count = unique_names.size();
    report.mean_prefix_entropy_bits =
        entropy_sum / static_cast<double>(bucket.members.size());

    if (report.query_count > thresholds.max_query_count) {
      report.reasons.push_back("query-count");
    }
    if (report.unique_name_count > thresholds.max_unique_names) {
      report.reasons.push_back("unique-names");
    }
    if (report.mean_prefix_entropy_bits > thresholds.max_mean_entropy_bits) {
      report.reasons.push_back("prefix-entropy");
    }
    report.flagged = !report.reasons.empty();
    reports.push_back(std::move(report));
  }
  return reports;
}

struct DetectorEvaluation {
  double true_positive_rate = 0;
  double false_positive_rate = 0;
};

// Per-log verdict: a log is flagged when any of its windows is. Rates are
// fractions of logs flagged in each corpus.
inline DetectorEvaluation evaluate_detector(
    const std::vector<std::vector<DnsObservation>>& benign_logs,
    const std::vector<std::vector<DnsObservation>>& attack_logs, double window_seconds,
    const DetectorThresholds& thresholds) {
  if (benign_logs.empty() || attack_logs.empty()) {
    throw ValidationError("need at least one benign and one attack log");
  }
  const auto flagged = [&](const std::vector<DnsObservation>& log) {
    const auto reports = score_dns_window(log, window_seconds, thresholds);
    return std::any_of(reports.begin(), reports.end(),
                       [](const AnomalyReport& r) { return r.flagged; });
  };
  std::size_t tp = 0;
  for (const auto& log : attack_logs) tp += flagged(log) ? 1 : 0;
  std::size_t fp = 0;
  for (const auto& log : benign_logs) fp += flagged(log) ? 1 : 0;
  return DetectorEvaluation{
      static_cast<double>(tp) / static_cast<double>(attack_logs.size()),
      static_cast<double>(fp) / static_cast<double>(benign_logs.size())};
}

// ---------------------------------------------------------------------------
// Semantic plausibility gating.

struct PlausibilityPolicy {
  double max_throttle_step = 0.4;     // largest |Δx| between consecutive commands
  double distance_jump_limit = 1.0;   // largest |Δy| m between consecutive detections
  double max_detection_range = 100.0; // any reported distance beyond this is absurd
};

struct Verdict {
  bool plausible = true;
  std::string reason;
};

inline Verdict accept() { return Verdict{true, ""}; }
inline Verdict reject(std::string reason) { return Verdict{false, std::move(reason)}; }

// Judge one candidate message against static ranges and, when a previous
// accepted message of the same type exists, against step limits. Previous
// and candidate must be the same alternative.
inline Verdict check_semantic_plausibility(const std::optional<msg::Message>& previous,
                                           const msg::Message& candidate,
                                           const PlausibilityPolicy& policy) {
  if (previous && previous->index() != candidate.index()) {
    throw ValidationError("previous and candidate messages have different types");
  }

  if (const auto* cmd = std::get_if<msg::UserCommand>(&candidate)) {
    if (!(cmd->x >= 0.0 && cmd->x <= 1.0)) return reject("throttle out of range");
    if (!(cmd->steering >= -1.0 && cmd->steering <= 1.0)) {
      return reject("steering out of range");
    }
    if (cmd->z != 0 && cmd->z != 3) return reject("unknown drive mode");
    if (previous) {
      const auto& prev = std::get<msg::UserCommand>(*previous);
      if (std::abs(cmd->x - prev.x) > policy.max_throttle_step) {
        return reject("throttle step too large");
      }
    }
    return accept();
  }

  if (const auto* det = std::get_if<msg::Detection>(&candidate)) {
    if (det->class_name.empty()) return reject("empty class name");
    if (det->present) {
      if (!(det->y >= 0.0)) return reject("negative distance");
      if (det->y > policy.max_detection_range) return reject("distance beyond range");
    }
    if (previous) {
      const auto& prev = std::get<msg::Detection>(*previous);
      if (prev.present && det->present &&
          std::abs(det->y - prev.y) > policy.distance_jump_limit) {
        return reject("distance jump too large");
      }
    }
    return accept();
  }

  return accept();  // FrameStamp carries nothing to judge
}

// ---------------------------------------------------------------------------
// Rate limiting.

// Keep at most one sample per topic per rate interval: the earliest in each
// absolute bucket floor(publish_tick / (tick_rate / max_rate)). Input must
// be ordered by publish_tick.
template <typename Payload>
inline std::vector<graph::Sample<Payload>> rate_limit_filter(
    const std::vector<graph::Sample<Payload>>& samples, double max_rate_hz,
    double tick_rate_hz = 60.0) {
  if (!(max_rate_hz > 0) || !(tick_rate_hz > 0)) {
    throw ValidationError("rates must be positive");
  }
  const double interval_ticks = tick_rate_hz / max_rate_hz;
  std::vector<graph::Sample<Payload>> out;
  std::map<std::string, std::int64_t> last_bucket;  // topic -> bucket index
  std::uint64_t prev_tick = 0;
  bool first = true;
  for (const graph::Sample<Payload>& s : samples) {
    if (!first && s.publish_tick < prev_tick) {
      throw ValidationError("samples are not ordered by publish tick");
    }
    first = false;
    prev_tick = s.publish_tick;
    const std::int64_t bucket = static_cast<std::int64_t>(
        std::floor(static_cast<double>(s.publish_tick) / interval_ticks));
    const auto it = last_bucket.find(s.topic);
    if (it != last_bucket.end() && it->second == bucket) continue;
    last_bucket[s.topic] = bucket;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Package manifests.

struct ManifestEntry {
  std::string relative_path;
  std::string digest_hex;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct PackageManifest {
  std::string algorithm = "sha256";
  std::vector<ManifestEntry> entries;  // sorted by relative_path, unique

  friend bool operator==(const PackageManifest&, const PackageManifest&) = default;
};

namespace detail_manifest {

inline std::string portable_relative(const std::filesystem::path& base,
                                     const std::filesystem::path& file) {
  return file.lexically_relative(base).generic_string();
}

inline bool is_hex_digest(std::string_view s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

}  // namespace detail_manifest

// Hash every regular file under `directory` (recursively, symlinks not
// followed) into a sorted manifest.
inline PackageManifest build_manifest(const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) {
    throw IoError("'" + directory.string() + "' is not a directory");
  }
  PackageManifest manifest;
  for (fs::recursive_directory_iterator it(directory,
                                           fs::directory_options::none, ec),
       end = fs::recursive_directory_iterator();
       it != end; it.increment(ec)) {
    if (ec) throw IoError("walk failed under '" + directory.string() + "': " + ec.message());
    if (it->is_symlink() || !it->is_regular_file()) continue;
    std::ifstream in(it->path(), std::ios::binary);
    if (!in) throw IoError("cannot open '" + it->path().string() + "' for reading");
    trustbench::detail::Sha256 h;
    std::array<char, 65536> buf;
    while (in.read(buf.data(), buf.size()) || in.gcount() > 0) {
      h.update(std::span<const std::uint8_t>(
          reinterpret_cast<const std::uint8_t*>(buf.data()),
          static_cast<std::size_t>(in.gcount())));
    }
    if (in.bad()) throw IoError("read failed on '" + it->path().string() + "'");
    const auto digest = h.finalize();
    manifest.entries.push_back(ManifestEntry{
        detail_manifest::portable_relative(directory, it->path()),
        trustbench::detail::hex_encode(
            std::span<const std::uint8_t>(digest.data(), digest.size()))});
  }
  if (ec) throw IoError("walk failed under '" + directory.string() + "': " + ec.message());
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.relative_path < b.relative_path;
            });
  return manifest;
}

// Text form: first line the algorithm id, then one "digest<SP><SP>path"
// line per file, in path order.
inline std::string render_manifest(const PackageManifest& manifest) {
  std::string out = manifest.algorithm + "\n";
  for (const ManifestEntry& e : manifest.entries) {
    out += e.digest_hex;
    out += "  ";
    out += e.relative_path;
    out += '\n';
  }
  return out;
}

inline void write_manifest(const PackageManifest& manifest,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string text = render_manifest(manifest);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

inline PackageManifest parse_manifest(std::string_view text) {
  PackageManifest manifest;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_algorithm = false;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() && pos > text.size()) break;  // trailing newline
    ++line_no;
    if (!saw_algorithm) {
      if (line != "sha256") {
        throw ParseError("line 1: unsupported algorithm '" + std::string(line) + "'");
      }
      manifest.algorithm = std::string(line);
      saw_algorithm = true;
      continue;
    }
    const std::size_t sep = line.find("  ");
    if (sep == std::string_view::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": missing separator");
    }
    ManifestEntry entry{std::string(line.substr(sep + 2)), std::string(line.substr(0, sep))};
    if (!detail_manifest::is_hex_digest(entry.digest_hex)) {
      throw ParseError("line " + std::to_string(line_no) + ": bad digest");
    }
    if (entry.relative_path.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty path");
    }
    if (!manifest.entries.empty() &&
        manifest.entries.back().relative_path >= entry.relative_path) {
      throw ParseError("line " + std::to_string(line_no) + ": paths not sorted/unique");
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (!saw_algorithm) throw ParseError("empty manifest");
  return manifest;
}

inline PackageManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  try {
    return parse_manifest(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

struct Discrepancy {
  enum class Kind { modified, missing, unexpected };
  Kind kind = Kind::modified;
  std::string relative_path;
  std::string expected_digest;  // empty for unexpected
  std::string actual_digest;    // empty for missing
};

inline std::string_view to_string(Discrepancy::Kind kind) {
  switch (kind) {
    case Discrepancy::Kind::modified: return "modified";
    case Discrepancy::Kind::missing: return "missing";
    case Discrepancy::Kind::unexpected: return "unexpected";
  }
  return "?";
}

struct VerifyResult {
  bool clean = false;
  std::vector<Discrepancy> discrepancies;  // ordered by path
};

// Compare a directory's current state against a trusted manifest. Any
// difference — changed bytes, vanished file, extra file — is reported.
inline VerifyResult verify_manifest(const std::filesystem::path& directory,
                                    const PackageManifest& trusted) {
  const PackageManifest actual = build_manifest(directory);
  VerifyResult result;
  std::map<std::string, const ManifestEntry*> actual_by_path;
  for (const ManifestEntry& e : actual.entries) actual_by_path[e.relative_path] = &e;
  std::map<std::string, const ManifestEntry*> trusted_by_path;
  for (const ManifestEntry& e : trusted.entries) trusted_by_path[e.relative_path] = &e;

  for (const auto& [path, entry] : trusted_by_path) {
    const auto it = actual_by_path.find(path);
    if (it == actual_by_path.end()) {
      result.discrepancies.push_back(
          Discrepancy{Discrepancy::Kind::missing, path, entry->digest_hex, ""});
    } else if (it->second->digest_hex != entry->digest_hex) {
      result.discrepancies.push_back(Discrepancy{Discrepancy::Kind::modified, path,
                                                 entry->digest_hex,
                                                 it->second->digest_hex});
    }
  }
  for (const auto& [path, entry] : actual_by_path) {
    if (!trusted_by_path.count(path)) {
      result.discrepancies.push_back(
          Discrepancy{Discrepancy::Kind::unexpected, path, "", entry->digest_hex});
    }
  }
  std::sort(result.discrepancies.begin(), result.discrepancies.end(),
            [](const Discrepancy& a, const Discrepancy& b) {
              return a.relative_path < b.relative_path;
            });
  result.clean = result.discrepancies.empty();
  return result;
}

}  // namespace trustbench::defense
