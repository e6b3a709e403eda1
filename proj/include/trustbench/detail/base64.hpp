#pragma once

// RFC 4648 base64, standard alphabet, '=' padding. Decoding is strict:
// anything that encode() could not have produced is rejected.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustbench/errors.hpp"

namespace trustbench::detail {

inline constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    const std::uint32_t n = (static_cast<std::uint32_t>(data[i]) << 16) |
                            (static_cast<std::uint32_t>(data[i + 1]) << 8) |
                            static_cast<std::uint32_t>(data[i + 2]);
    out.push_back(kBase64Alphabet[(n >> 18) & 0x3f]);
    out.push_back(kBase64Alphabet[(n >> 12) & 0x3f]);
    out.push_back(kBase64Alphabet[(n >> 6) & 0x3f]);
    out.push_back(kBase64Alphabet[n & 0x3f]);
  }
  const std::size_t rest = data.size() - i;
  if (rest == 1) {
    const std::uint32_t n = static_cast<std::uint32_t>(data[i]) << 16;
    out.push_back(kBase64Alphabet[(n >> 18) & 0x3f]);
    out.push_back(kBase64Alphabet[(n >> 12) & 0x3f]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const std::uint32_t n = (static_cast<std::uint32_t>(data[i]) << 16) |
                            (static_cast<std::uint32_t>(data[i + 1]) << 8);
    out.push_back(kBase64Alphabet[(n >> 18) & 0x3f]);
    out.push_back(kBase64Alphabet[(n >> 12) & 0x3f]);
    out.push_back(kBase64Alphabet[(n >> 6) & 0x3f]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_encode(std::string_view text) {
  return base64_encode(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ValidationError("base64: length " + std::to_string(text.size()) +
                          " is not a multiple of 4");
  }
  std::array<std::int8_t, 256> table{};
  table.fill(-1);
  for (std::size_t i = 0; i < kBase64Alphabet.size(); ++i) {
    table[static_cast<std::uint8_t>(kBase64Alphabet[i])] = static_cast<std::int8_t>(i);
  }

  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last_group = i + 4 == text.size();
    int pad = 0;
    std::uint32_t n = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        // '=' may appear only as the final one or two characters.
        if (!last_group || j < 2 || (j == 2 && text[i + 3] != '=')) {
          throw ValidationError("base64: misplaced padding");
        }
        ++pad;
        n <<= 6;
        continue;
      }
      const std::int8_t v = table[static_cast<std::uint8_t>(c)];
      if (v < 0) {
        throw ValidationError(std::string("base64: invalid character '") + c + "'");
      }
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    // Reject non-canonical trailing bits so decode() accepts exactly the
    // strings encode() produces.
    if ((pad == 1 && (n & 0xff) != 0) || (pad == 2 && (n & 0xffff) != 0)) {
      throw ValidationError("base64: non-zero padding bits");
    }
    out.push_back(static_cast<std::uint8_t>((n >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

inline std::string base64_decode_text(std::string_view text) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace trustbench::detail
