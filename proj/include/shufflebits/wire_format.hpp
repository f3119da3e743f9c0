#pragma once

// Envelope layout, version 1 (all multi-byte fields little-endian):
//
//   offset size field
//        0    4 magic "SHFB"
//        4    1 version (1)
//        5    1 mode (0 fixed, 1 per-request, 2 per-element)
//        6    1 dtype (0 binary32)
//        7    1 cascade (0 none, 1 external stage applied to payload)
//        8   12 nonce
//       20    8 count
//       28    4 dim
//       32    4 CRC-32 of the payload bytes as stored
//       36      payload: count * dim words of 4 bytes

#include <sodium.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shufflebits/bitperm.hpp"
#include "shufflebits/error.hpp"
#include "shufflebits/keystream.hpp"
#include "shufflebits/tensor_codec.hpp"

namespace shufflebits {

inline constexpr std::size_t kHeaderBytes = 36;
inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeBinary32 = 0;
inline constexpr std::array<std::uint8_t, 4> kMagic{'S', 'H', 'F', 'B'};

struct EnvelopeHeader {
  std::uint8_t version = kFormatVersion;
  KeyMode mode = KeyMode::PerRequest;
  std::uint8_t dtype = kDtypeBinary32;
  bool cascade = false;
  Nonce nonce{};
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
  std::uint32_t checksum = 0;

  friend bool operator==(const EnvelopeHeader&, const EnvelopeHeader&) = default;
};

struct Envelope {
  EnvelopeHeader header;
  FeatureBatch payload;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, std::numeric_limits<uInt>::max());
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> payload_to_bytes(std::span<const Word32> words) {
  std::vector<std::uint8_t> out(words.size() * 4);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint32_t w = words[i].bits;
    out[4 * i] = static_cast<std::uint8_t>(w);
    out[4 * i + 1] = static_cast<std::uint8_t>(w >> 8);
    out[4 * i + 2] = static_cast<std::uint8_t>(w >> 16);
    out[4 * i + 3] = static_cast<std::uint8_t>(w >> 24);
  }
  return out;
}

inline std::vector<Word32> payload_from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw Error(ErrorCode::LengthMismatch, "payload of " + std::to_string(bytes.size()) + " bytes is not whole words");
  }
  std::vector<Word32> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].bits = static_cast<std::uint32_t>(bytes[4 * i]) | static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                  static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                  static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
  }
  return out;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, std::size_t width) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Serializes header and payload. The checksum field of `header` is ignored
/// and recomputed from the payload.
inline std::vector<std::uint8_t> write_envelope(const EnvelopeHeader& header, const FeatureBatch& payload) {
  if (header.count != payload.count || header.dim != payload.dim ||
      payload.words.size() != payload.count * payload.dim) {
    throw Error(ErrorCode::DimensionMismatch, "header declares " + std::to_string(header.count) + " x " +
                                                  std::to_string(header.dim) + ", payload holds " +
                                                  std::to_string(payload.words.size()) + " words");
  }
  const auto body = payload_to_bytes(payload.words);
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + body.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(header.version);
  out.push_back(static_cast<std::uint8_t>(header.mode));
  out.push_back(header.dtype);
  out.push_back(header.cascade ? 1 : 0);
  out.insert(out.end(), header.nonce.bytes.begin(), header.nonce.bytes.end());
  detail::put_le(out, header.count, 8);
  detail::put_le(out, header.dim, 4);
  detail::put_le(out, crc32_of(body), 4);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

/// Header fields only; no length or checksum validation against a payload.
inline EnvelopeHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::LengthMismatch,
                "envelope needs at least 36 bytes, got " + std::to_string(bytes.size()));
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "not a SHFB envelope");
  }
  EnvelopeHeader h;
  h.version = bytes[4];
  if (h.version != kFormatVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "format version " + std::to_string(h.version));
  }
  if (bytes[5] > static_cast<std::uint8_t>(KeyMode::PerElement)) {
    throw Error(ErrorCode::InvalidHeader, "unknown key mode " + std::to_string(bytes[5]));
  }
  h.mode = static_cast<KeyMode>(bytes[5]);
  h.dtype = bytes[6];
  if (h.dtype != kDtypeBinary32) throw Error(ErrorCode::UnsupportedDtype, "dtype " + std::to_string(h.dtype));
  if (bytes[7] > 1) throw Error(ErrorCode::InvalidHeader, "cascade flag " + std::to_string(bytes[7]));
  h.cascade = bytes[7] == 1;
  std::copy_n(bytes.begin() + 8, kNonceBytes, h.nonce.bytes.begin());
  h.count = detail::get_le(bytes, 20, 8);
  h.dim = static_cast<std::uint32_t>(detail::get_le(bytes, 28, 4));
  h.checksum = static_cast<std::uint32_t>(detail::get_le(bytes, 32, 4));
  return h;
}

inline Envelope read_envelope(std::span<const std::uint8_t> bytes) {
  EnvelopeHeader h = parse_header(bytes);
  const std::uint64_t max_words = (std::numeric_limits<std::uint64_t>::max() - kHeaderBytes) / 4;
  if (h.dim != 0 && h.count > max_words / h.dim) {
    throw Error(ErrorCode::LengthMismatch, "declared payload size overflows");
  }
  const std::uint64_t expected = kHeaderBytes + h.count * h.dim * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::LengthMismatch, "header declares " + std::to_string(expected) + " bytes, got " +
                                               std::to_string(bytes.size()));
  }
  const auto body = bytes.subspan(kHeaderBytes);
  const std::uint32_t crc = crc32_of(body);
  if (crc != h.checksum) {
    throw Error(ErrorCode::ChecksumMismatch, "payload CRC-32 does not match header");
  }
  Envelope env;
  env.header = h;
  env.payload = FeatureBatch::make(payload_from_bytes(body), static_cast<std::size_t>(h.count), h.dim);
  return env;
}

// ---- cascade stages -------------------------------------------------------

/// An invertible, length-preserving byte transform applied on top of the
/// shuffled payload.
using CascadeStage = std::function<std::vector<std::uint8_t>(std::span<const std::uint8_t>)>;

inline std::vector<std::uint8_t> apply_cascade_stage(std::span<const std::uint8_t> payload,
                                                     const CascadeStage& stage) {
  auto out = stage(payload);
  if (out.size() != payload.size()) {
    throw Error(ErrorCode::LengthChanged, "cascade stage turned " + std::to_string(payload.size()) + " bytes into " +
                                              std::to_string(out.size()));
  }
  return out;
}

/// Reference stage: XOR with a ChaCha20 keystream. Its own inverse.
struct XorKeystreamStage {
  std::array<std::uint8_t, 32> key{};
  Nonce nonce{};

  std::vector<std::uint8_t> operator()(std::span<const std::uint8_t> in) const {
    std::vector<std::uint8_t> out(in.size());
    if (!in.empty()) {
      crypto_stream_chacha20_ietf_xor(out.data(), in.data(), in.size(), nonce.bytes.data(), key.data());
    }
    return out;
  }
};

inline std::vector<std::uint8_t> identity_stage(std::span<const std::uint8_t> in) {
  return {in.begin(), in.end()};
}

}  // namespace shufflebits
