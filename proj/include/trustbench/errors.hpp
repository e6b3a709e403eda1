#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace trustbench {

// Base class for every error thrown by this library. Callers that do not
// care about the specific failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violated a documented precondition (bad name, bad range, bad value).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Filesystem or socket operation failed.
class IoError : public Error {
 public:
  using Error::Error;
};

// On-disk or reconstructed layout does not match the expected tree shape.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Malformed wire bytes or text. `offset` is the byte position at which
// decoding gave up, when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t offset = 0)
      : Error(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_ = 0;
};

// An operation was refused because the caller is not authenticated or not
// authorized for the target.
class AccessDeniedError : public Error {
 public:
  using Error::Error;
};

// A network transfer failed partway through. Carries enough context to
// resume or report: which file, which chunk, how many queries had been sent.
class TransferError : public Error {
 public:
  TransferError(const std::string& what, std::string session, std::string file_tag,
                std::int64_t chunk_index, std::uint64_t queries_sent)
      : Error(what),
        session_(std::move(session)),
        file_tag_(std::move(file_tag)),
        chunk_index_(chunk_index),
        queries_sent_(queries_sent) {}

  const std::string& session() const noexcept { return session_; }
  const std::string& file_tag() const noexcept { return file_tag_; }
  // -1 identifies the per-file header query rather than a data chunk.
  std::int64_t chunk_index() const noexcept { return chunk_index_; }
  std::uint64_t queries_sent() const noexcept { return queries_sent_; }

 private:
  std::string session_;
  std::string file_tag_;
  std::int64_t chunk_index_ = 0;
  std::uint64_t queries_sent_ = 0;
};

// Reassembly was asked to produce output before every chunk arrived.
class IncompleteError : public Error {
 public:
  using Error::Error;
};

// Reassembly saw contradictory data for the same chunk or header.
class CorruptError : public Error {
 public:
  using Error::Error;
};

}  // namespace trustbench
