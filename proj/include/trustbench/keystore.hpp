#pragma once

// In-memory model of a root-of-trust directory: one CA certificate plus one
// credential set (identity cert, private key, permissions, governance) per
// enclave. Trees are value types; every mutation builds a new tree and
// re-validates. On-disk layout:
//
//   <root_name>/ca.cert.pem
//   <root_name>/enclaves/<enclave>/identity.cert.pem
//   <root_name>/enclaves/<enclave>/identity.key.pem
//   <root_name>/enclaves/<enclave>/permissions.xml
//   <root_name>/enclaves/<enclave>/governance.xml

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trustbench/detail/base64.hpp"
#include "trustbench/detail/sha256.hpp"
#include "trustbench/errors.hpp"

namespace trustbench::keystore {

inline constexpr std::size_t kMaxArtifactBytes = 64 * 1024;
inline constexpr std::size_t kMaxIdentifierLength = 64;

enum class ArtifactKind {
  ca_cert,
  identity_cert,
  private_key,
  permissions_xml,
  governance_xml,
};

inline std::string_view kind_filename(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::ca_cert: return "ca.cert.pem";
    case ArtifactKind::identity_cert: return "identity.cert.pem";
    case ArtifactKind::private_key: return "identity.key.pem";
    case ArtifactKind::permissions_xml: return "permissions.xml";
    case ArtifactKind::governance_xml: return "governance.xml";
  }
  throw ValidationError("unknown artifact kind");
}

// Short tag prefix used when an artifact is named inside a DNS label.
inline std::string_view kind_tag_prefix(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::ca_cert: return "ca";
    case ArtifactKind::identity_cert: return "cert";
    case ArtifactKind::private_key: return "key";
    case ArtifactKind::permissions_xml: return "perm";
    case ArtifactKind::governance_xml: return "gov";
  }
  throw ValidationError("unknown artifact kind");
}

inline std::optional<ArtifactKind> kind_from_filename(std::string_view filename) {
  for (ArtifactKind kind : {ArtifactKind::ca_cert, ArtifactKind::identity_cert,
                            ArtifactKind::private_key, ArtifactKind::permissions_xml,
                            ArtifactKind::governance_xml}) {
    if (filename == kind_filename(kind)) return kind;
  }
  return std::nullopt;
}

// Identifiers (root and enclave names): 1..64 chars of [a-z0-9_].
inline bool is_identifier(std::string_view name) {
  if (name.empty() || name.size() > kMaxIdentifierLength) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

inline void require_identifier(std::string_view name, std::string_view what) {
  if (!is_identifier(name)) {
    throw ValidationError(std::string(what) + " '" + std::string(name) +
                          "' must be 1-64 chars of [a-z0-9_]");
  }
}

// Relative paths inside a tree: forward slashes, non-empty components, no
// '.' or '..', no leading slash.
inline void validate_relative_path(std::string_view path) {
  if (path.empty()) throw ValidationError("relative path is empty");
  if (path.front() == '/') {
    throw ValidationError("relative path '" + std::string(path) + "' is absolute");
  }
  if (path.find('\\') != std::string_view::npos) {
    throw ValidationError("relative path '" + std::string(path) + "' contains backslash");
  }
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t slash = path.find('/', start);
    const std::string_view component =
        path.substr(start, slash == std::string_view::npos ? path.size() - start
                                                           : slash - start);
    if (component.empty() || component == "." || component == "..") {
      throw ValidationError("relative path '" + std::string(path) +
                            "' has an empty or dot component");
    }
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
}

struct CredentialArtifact {
  ArtifactKind kind = ArtifactKind::ca_cert;
  std::string relative_path;
  std::vector<std::uint8_t> content;

  friend bool operator==(const CredentialArtifact& a, const CredentialArtifact& b) {
    return a.kind == b.kind && a.relative_path == b.relative_path &&
           a.content == b.content;
  }
};

inline void validate_artifact(const CredentialArtifact& artifact) {
  validate_relative_path(artifact.relative_path);
  if (artifact.content.empty()) {
    throw ValidationError("artifact '" + artifact.relative_path + "' is empty");
  }
  if (artifact.content.size() > kMaxArtifactBytes) {
    throw ValidationError("artifact '" + artifact.relative_path + "' exceeds " +
                          std::to_string(kMaxArtifactBytes) + " bytes");
  }
}

// One enclave's credential set: exactly the four per-enclave artifact kinds,
// at their canonical paths under enclaves/<name>/.
class Enclave {
 public:
  Enclave(std::string name, std::vector<CredentialArtifact> artifacts)
      : name_(std::move(name)), artifacts_(std::move(artifacts)) {
    require_identifier(name_, "enclave name");
    if (artifacts_.size() != 4) {
      throw StructuralError("enclave '" + name_ + "' has " +
                            std::to_string(artifacts_.size()) + " artifacts, want 4");
    }
    for (ArtifactKind kind :
         {ArtifactKind::identity_cert, ArtifactKind::private_key,
          ArtifactKind::permissions_xml, ArtifactKind::governance_xml}) {
      const std::string want =
          "enclaves/" + name_ + "/" + std::string(kind_filename(kind));
      const auto it = std::find_if(
          artifacts_.begin(), artifacts_.end(),
          [&](const CredentialArtifact& a) { return a.kind == kind; });
      if (it == artifacts_.end()) {
        throw StructuralError("enclave '" + name_ + "' is missing " +
                              std::string(kind_filename(kind)));
      }
      if (it->relative_path != want) {
        throw StructuralError("enclave '" + name_ + "' artifact at '" +
                              it->relative_path + "', want '" + want + "'");
      }
      validate_artifact(*it);
    }
    std::sort(artifacts_.begin(), artifacts_.end(),
              [](const CredentialArtifact& a, const CredentialArtifact& b) {
                return a.relative_path < b.relative_path;
              });
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<CredentialArtifact>& artifacts() const noexcept { return artifacts_; }

  const CredentialArtifact& artifact(ArtifactKind kind) const {
    for (const CredentialArtifact& a : artifacts_) {
      if (a.kind == kind) return a;
    }
    throw StructuralError("enclave '" + name_ + "' has no artifact of that kind");
  }

  friend bool operator==(const Enclave& a, const Enclave& b) {
    return a.name_ == b.name_ && a.artifacts_ == b.artifacts_;
  }

 private:
  std::string name_;
  std::vector<CredentialArtifact> artifacts_;
};

// The whole tree: CA certificate plus at least one enclave. Enclaves are
// held sorted by name; artifact paths are unique by construction.
class KeystoreTree {
 public:
  KeystoreTree(std::string root_name, CredentialArtifact ca, std::vector<Enclave> enclaves)
      : root_name_(std::move(root_name)), ca_(std::move(ca)), enclaves_(std::move(enclaves)) {
    require_identifier(root_name_, "root name");
    if (ca_.kind != ArtifactKind::ca_cert || ca_.relative_path != "ca.cert.pem") {
      throw StructuralError("CA artifact must be ca.cert.pem at the tree root");
    }
    validate_artifact(ca_);
    if (enclaves_.empty()) {
      throw ValidationError("keystore '" + root_name_ + "' has no enclaves");
    }
    std::sort(enclaves_.begin(), enclaves_.end(),
              [](const Enclave& a, const Enclave& b) { return a.name() < b.name(); });
    for (std::size_t i = 1; i < enclaves_.size(); ++i) {
      if (enclaves_[i].name() == enclaves_[i - 1].name()) {
        throw ValidationError("duplicate enclave name '" + enclaves_[i].name() + "'");
      }
    }
  }

  const std::string& root_name() const noexcept { return root_name_; }
  const CredentialArtifact& ca() const noexcept { return ca_; }
  const std::vector<Enclave>& enclaves() const noexcept { return enclaves_; }

  const Enclave* find_enclave(std::string_view name) const {
    for (const Enclave& e : enclaves_) {
      if (e.name() == name) return &e;
    }
    return nullptr;
  }

  // 1 CA + 4 per enclave.
  std::size_t artifact_count() const noexcept { return 1 + 4 * enclaves_.size(); }

  // Every artifact, ordered by relative path.
  std::vector<const CredentialArtifact*> artifacts_by_path() const {
    std::vector<const CredentialArtifact*> out;
    out.reserve(artifact_count());
    out.push_back(&ca_);
    for (const Enclave& e : enclaves_) {
      for (const CredentialArtifact& a : e.artifacts()) out.push_back(&a);
    }
    std::sort(out.begin(), out.end(),
              [](const CredentialArtifact* a, const CredentialArtifact* b) {
                return a->relative_path < b->relative_path;
              });
    return out;
  }

  const CredentialArtifact* find_artifact(std::string_view relative_path) const {
    if (ca_.relative_path == relative_path) return &ca_;
    for (const Enclave& e : enclaves_) {
      for (const CredentialArtifact& a : e.artifacts()) {
        if (a.relative_path == relative_path) return &a;
      }
    }
    return nullptr;
  }

 private:
  std::string root_name_;
  CredentialArtifact ca_;
  std::vector<Enclave> enclaves_;
};

// ---------------------------------------------------------------------------
// Deterministic credential generation.

namespace detail_gen {

// Keyed counter-mode byte stream: block i = SHA-256(le64(seed) || label || le64(i)).
inline std::vector<std::uint8_t> byte_stream(std::uint64_t seed, std::string_view label,
                                             std::size_t count) {
  std::vector<std::uint8_t> out;
  out.reserve(count);
  std::uint64_t block = 0;
  while (out.size() < count) {
    trustbench::detail::Sha256 h;
    std::array<std::uint8_t, 8> le{};
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    h.update(std::span<const std::uint8_t>(le.data(), le.size()));
    h.update(label);
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(block >> (8 * i));
    h.update(std::span<const std::uint8_t>(le.data(), le.size()));
    const auto digest = h.finalize();
    for (std::uint8_t b : digest) {
      if (out.size() == count) break;
      out.push_back(b);
    }
    ++block;
  }
  return out;
}

inline std::string pem_wrap(std::string_view type, std::span<const std::uint8_t> der) {
  std::string body = trustbench::detail::base64_encode(der);
  std::string out = "-----BEGIN " + std::string(type) + "-----\n";
  for (std::size_t i = 0; i < body.size(); i += 64) {
    out += body.substr(i, 64);
    out += '\n';
  }
  out += "-----END " + std::string(type) + "-----\n";
  return out;
}

inline std::vector<std::uint8_t> to_bytes(std::string_view text) {
  return std::vector<std::uint8_t>(text.begin(), text.end());
}

inline CredentialArtifact make_pem_artifact(ArtifactKind kind, std::string relative_path,
                                            std::string_view pem_type, std::uint64_t seed,
                                            std::string_view label, std::size_t der_base) {
  // Derive a small deterministic size jitter so trees with different seeds
  // differ in length as well as bytes.
  const auto jitter = byte_stream(seed, std::string(label) + ":size", 1);
  const std::size_t der_size = der_base + jitter[0];
  const auto der = byte_stream(seed, label, der_size);
  return CredentialArtifact{kind, std::move(relative_path),
                            to_bytes(pem_wrap(pem_type, der))};
}

inline std::string hex_blob(std::uint64_t seed, std::string_view label, std::size_t bytes) {
  const auto raw = byte_stream(seed, label, bytes);
  return trustbench::detail::hex_encode(std::span<const std::uint8_t>(raw.data(), raw.size()));
}

inline Enclave make_enclave(std::string_view root_name, std::string_view name,
                            std::uint64_t seed) {
  const std::string base = "enclaves/" + std::string(name) + "/";
  std::vector<CredentialArtifact> artifacts;
  artifacts.push_back(make_pem_artifact(ArtifactKind::identity_cert,
                                        base + "identity.cert.pem", "CERTIFICATE", seed,
                                        "cert:" + std::string(name), 800));
  artifacts.push_back(make_pem_artifact(ArtifactKind::private_key,
                                        base + "identity.key.pem", "PRIVATE KEY", seed,
                                        "key:" + std::string(name), 1100));

  std::string permissions =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<permissions>\n"
      "  <grant name=\"" + std::string(name) + "\">\n"
      "    <subject_name>CN=/" + std::string(name) + "</subject_name>\n"
      "    <allow_rule>\n"
      "      <publish><topics><topic>*</topic></topics></publish>\n"
      "      <subscribe><topics><topic>*</topic></topics></subscribe>\n"
      "    </allow_rule>\n"
      "    <signature>" + hex_blob(seed, "perm:" + std::string(name), 48) + "</signature>\n"
      "  </grant>\n"
      "</permissions>\n";
  artifacts.push_back(CredentialArtifact{ArtifactKind::permissions_xml,
                                         base + "permissions.xml", to_bytes(permissions)});

  std::string governance =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<governance>\n"
      "  <domain_rule domain=\"0\">\n"
      "    <allow_unauthenticated_participants>false</allow_unauthenticated_participants>\n"
      "    <enable_join_access_control>true</enable_join_access_control>\n"
      "    <root>" + std::string(root_name) + "</root>\n"
      "    <signature>" + hex_blob(seed, "gov:" + std::string(name), 48) + "</signature>\n"
      "  </domain_rule>\n"
      "</governance>\n";
  artifacts.push_back(CredentialArtifact{ArtifactKind::governance_xml,
                                         base + "governance.xml", to_bytes(governance)});

  return Enclave(std::string(name), std::move(artifacts));
}

}  // namespace detail_gen

// Build a complete tree with deterministic placeholder credentials. The same
// (root_name, enclave_names, seed) always yields byte-identical artifacts;
// enclave content depends only on (seed, enclave name).
inline KeystoreTree create_keystore(std::string_view root_name,
                                    const std::vector<std::string>& enclave_names,
                                    std::uint64_t seed) {
  require_identifier(root_name, "root name");
  if (enclave_names.empty()) {
    throw ValidationError("keystore '" + std::string(root_name) + "' has no enclaves");
  }
  CredentialArtifact ca = detail_gen::make_pem_artifact(
      ArtifactKind::ca_cert, "ca.cert.pem", "CERTIFICATE", seed,
      "ca:" + std::string(root_name), 900);
  std::vector<Enclave> enclaves;
  enclaves.reserve(enclave_names.size());
  for (const std::string& name : enclave_names) {
    require_identifier(name, "enclave name");
    enclaves.push_back(detail_gen::make_enclave(root_name, name, seed));
  }
  return KeystoreTree(std::string(root_name), std::move(ca), std::move(enclaves));
}

// Return a copy of `tree` with one more enclave, generated under `seed`.
inline KeystoreTree create_enclave(const KeystoreTree& tree, std::string_view name,
                                   std::uint64_t seed) {
  require_identifier(name, "enclave name");
  if (tree.find_enclave(name) != nullptr) {
    throw ValidationError("duplicate enclave name '" + std::string(name) + "'");
  }
  std::vector<Enclave> enclaves = tree.enclaves();
  enclaves.push_back(detail_gen::make_enclave(tree.root_name(), name, seed));
  return KeystoreTree(tree.root_name(), tree.ca(), std::move(enclaves));
}

// ---------------------------------------------------------------------------
// Disk I/O.

namespace detail_io {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return data;
}

inline void write_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(content.data()),
            static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

}  // namespace detail_io

// Write `tree` under `directory` as directory/<root_name>/... Refuses to
// write into an existing root so stale files can never leak into a tree.
inline void save_tree(const KeystoreTree& tree, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  const fs::path root = directory / tree.root_name();
  std::error_code ec;
  if (fs::exists(root, ec)) {
    throw IoError("refusing to overwrite existing '" + root.string() + "'");
  }
  fs::create_directories(root / "enclaves", ec);
  if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());
  detail_io::write_file(root / "ca.cert.pem", tree.ca().content);
  for (const Enclave& e : tree.enclaves()) {
    const fs::path dir = root / "enclaves" / e.name();
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    for (const CredentialArtifact& a : e.artifacts()) {
      detail_io::write_file(root / a.relative_path, a.content);
    }
  }
}

// Read a tree back from its root directory (the directory created by
// save_tree: its basename becomes root_name). Structure is checked
// exhaustively; unexpected entries are an error, not a warning.
inline KeystoreTree load_tree(const std::filesystem::path& root_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root_dir, ec)) {
    throw IoError("'" + root_dir.string() + "' is not a directory");
  }
  const std::string root_name = root_dir.filename().string();

  bool saw_ca = false;
  bool saw_enclaves_dir = false;
  for (const fs::directory_entry& entry : fs::directory_iterator(root_dir)) {
    const std::string name = entry.path().filename().string();
    if (name == "ca.cert.pem" && entry.is_regular_file()) {
      saw_ca = true;
    } else if (name == "enclaves" && entry.is_directory()) {
      saw_enclaves_dir = true;
    } else {
      throw StructuralError("unexpected entry '" + entry.path().string() + "'");
    }
  }
  if (!saw_ca) throw StructuralError("missing '" + (root_dir / "ca.cert.pem").string() + "'");
  if (!saw_enclaves_dir) {
    throw StructuralError("missing '" + (root_dir / "enclaves").string() + "'");
  }

  CredentialArtifact ca{ArtifactKind::ca_cert, "ca.cert.pem",
                        detail_io::read_file(root_dir / "ca.cert.pem")};

  std::vector<Enclave> enclaves;
  for (const fs::directory_entry& entry : fs::directory_iterator(root_dir / "enclaves")) {
    if (!entry.is_directory()) {
      throw StructuralError("unexpected entry '" + entry.path().string() + "'");
    }
    const std::string enclave_name = entry.path().filename().string();
    std::vector<CredentialArtifact> artifacts;
    for (const fs::directory_entry& file : fs::directory_iterator(entry.path())) {
      const std::string filename = file.path().filename().string();
      const std::optional<ArtifactKind> kind = kind_from_filename(filename);
      if (!kind || *kind == ArtifactKind::ca_cert || !file.is_regular_file()) {
        throw StructuralError("unexpected entry '" + file.path().string() + "'");
      }
      artifacts.push_back(CredentialArtifact{
          *kind, "enclaves/" + enclave_name + "/" + filename,
          detail_io::read_file(file.path())});
    }
    for (const char* required : {"governance.xml", "identity.cert.pem",
                                 "identity.key.pem", "permissions.xml"}) {
      const bool present =
          std::any_of(artifacts.begin(), artifacts.end(),
                      [&](const CredentialArtifact& a) {
                        return a.relative_path.ends_with(std::string("/") + required);
                      });
      if (!present) {
        throw StructuralError("missing '" + (entry.path() / required).string() + "'");
      }
    }
    enclaves.push_back(Enclave(enclave_name, std::move(artifacts)));
  }
  return KeystoreTree(root_name, std::move(ca), std::move(enclaves));
}

// ---------------------------------------------------------------------------
// Fingerprinting.

// SHA-256 over every (relative_path, content) pair in path order, each field
// length-prefixed. The root directory name is deliberately excluded: a tree
// rebuilt under any directory name carries the same identity.
struct Fingerprint {
  std::string hex;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
  friend auto operator<=>(const Fingerprint&, const Fingerprint&) = default;
};

inline Fingerprint fingerprint_of(const KeystoreTree& tree) {
  trustbench::detail::Sha256 h;
  const auto u64le = [&](std::uint64_t v) {
    std::array<std::uint8_t, 8> le{};
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
    h.update(std::span<const std::uint8_t>(le.data(), le.size()));
  };
  for (const CredentialArtifact* a : tree.artifacts_by_path()) {
    u64le(a->relative_path.size());
    h.update(a->relative_path);
    u64le(a->content.size());
    h.update(std::span<const std::uint8_t>(a->content.data(), a->content.size()));
  }
  const auto digest = h.finalize();
  return Fingerprint{trustbench::detail::hex_encode(
      std::span<const std::uint8_t>(digest.data(), digest.size()))};
}

// Full structural equality, root name included (unlike fingerprints).
inline bool trees_equal(const KeystoreTree& a, const KeystoreTree& b) {
  return a.root_name() == b.root_name() && a.ca() == b.ca() &&
         a.enclaves() == b.enclaves();
}

}  // namespace trustbench::keystore
