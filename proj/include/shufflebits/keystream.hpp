#pragma once

// One-time-pad style key schedule: every (master secret, nonce) pair, and
// optionally every element index under it, yields a fresh permutation key.
//
// Derivation is pinned for interop. ChaCha20 (RFC 8439 block function) keyed
// by the master secret with the 12-byte nonce produces a byte stream starting
// at block counter `base`. A Fisher-Yates shuffle of [0..31] runs for
// i = 31 down to 1; each step draws little-endian 32-bit words w, rejects
// w >= floor(2^32 / (i+1)) * (i+1), and swaps positions i and w mod (i+1).
// Request keys use base 0; element e uses base e * kElementBlockStride.

#include <sodium.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>

#include "shufflebits/bitperm.hpp"
#include "shufflebits/error.hpp"

namespace shufflebits {

inline constexpr std::size_t kMasterBytes = 32;
inline constexpr std::size_t kNonceBytes = 12;
inline constexpr std::size_t kChachaBlockBytes = 64;
/// ChaCha20 blocks reserved per element key (256 bytes, 64 draws).
inline constexpr std::uint64_t kElementBlockStride = 4;
inline constexpr std::uint64_t kMaxElementIndex =
    (std::uint64_t{1} << 32) / kElementBlockStride - 1;

struct MasterSecret {
  std::array<std::uint8_t, kMasterBytes> bytes{};
  friend bool operator==(const MasterSecret&, const MasterSecret&) = default;
};

struct Nonce {
  std::array<std::uint8_t, kNonceBytes> bytes{};
  friend bool operator==(const Nonce&, const Nonce&) = default;
};

enum class KeyMode : std::uint8_t { FixedKey = 0, PerRequest = 1, PerElement = 2 };

inline std::string_view to_string(KeyMode mode) noexcept {
  switch (mode) {
    case KeyMode::FixedKey: return "fixed";
    case KeyMode::PerRequest: return "per-request";
    case KeyMode::PerElement: return "per-element";
  }
  return "unknown";
}

namespace detail {

inline void ensure_sodium() {
  if (sodium_init() < 0) throw Error(ErrorCode::EntropyUnavailable, "libsodium failed to initialize");
}

inline int hex_value(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace detail

inline MasterSecret generate_master() {
  detail::ensure_sodium();
  MasterSecret secret;
  randombytes_buf(secret.bytes.data(), secret.bytes.size());
  return secret;
}

inline Nonce generate_nonce() {
  detail::ensure_sodium();
  Nonce nonce;
  randombytes_buf(nonce.bytes.data(), nonce.bytes.size());
  return nonce;
}

/// Parses exactly 24 hex characters.
inline Nonce nonce_from_hex(std::string_view hex) {
  if (hex.size() != 2 * kNonceBytes) {
    throw Error(ErrorCode::InvalidNonce, "nonce must be 24 hex characters, got " + std::to_string(hex.size()));
  }
  Nonce nonce;
  for (std::size_t i = 0; i < kNonceBytes; ++i) {
    const int hi = detail::hex_value(hex[2 * i]);
    const int lo = detail::hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::InvalidNonce, "nonce contains a non-hex character");
    nonce.bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return nonce;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

inline std::string to_hex(const Nonce& nonce) { return to_hex(std::span<const std::uint8_t>(nonce.bytes)); }

/// Lazily generated ChaCha20 keystream read as little-endian 32-bit words.
class ChachaWordStream {
 public:
  ChachaWordStream(const MasterSecret& master, const Nonce& nonce, std::uint32_t counter) noexcept
      : master_(&master), nonce_(&nonce), counter_(counter) {}

  std::uint32_t next() {
    if (offset_ == kChachaBlockBytes) refill();
    const std::uint32_t w = static_cast<std::uint32_t>(block_[offset_]) |
                            static_cast<std::uint32_t>(block_[offset_ + 1]) << 8 |
                            static_cast<std::uint32_t>(block_[offset_ + 2]) << 16 |
                            static_cast<std::uint32_t>(block_[offset_ + 3]) << 24;
    offset_ += 4;
    return w;
  }

 private:
  void refill() {
    if (exhausted_) throw Error(ErrorCode::IndexOutOfRange, "ChaCha20 block counter overflow");
    static constexpr std::array<std::uint8_t, kChachaBlockBytes> kZeros{};
    crypto_stream_chacha20_ietf_xor_ic(block_.data(), kZeros.data(), kChachaBlockBytes, nonce_->bytes.data(),
                                       counter_, master_->bytes.data());
    if (counter_ == std::numeric_limits<std::uint32_t>::max()) exhausted_ = true;
    ++counter_;
    offset_ = 0;
  }

  const MasterSecret* master_;
  const Nonce* nonce_;
  std::uint32_t counter_;
  bool exhausted_ = false;
  std::array<std::uint8_t, kChachaBlockBytes> block_{};
  std::size_t offset_ = kChachaBlockBytes;
};

/// Fisher-Yates shuffle of the identity map driven by the keystream at `base_block`.
inline PermutationKey derive_key_at_block(const MasterSecret& master, const Nonce& nonce, std::uint32_t base_block) {
  ChachaWordStream stream(master, nonce, base_block);
  std::array<std::uint8_t, kWordBits> map{};
  std::iota(map.begin(), map.end(), std::uint8_t{0});
  for (std::uint32_t i = kWordBits - 1; i >= 1; --i) {
    const std::uint64_t bound = std::uint64_t{i} + 1;
    const std::uint64_t limit = ((std::uint64_t{1} << 32) / bound) * bound;
    std::uint32_t w = stream.next();
    while (w >= limit) w = stream.next();
    std::swap(map[i], map[w % bound]);
  }
  return validate_key(std::span<const std::uint8_t>(map));
}

inline PermutationKey derive_request_key(const MasterSecret& master, const Nonce& nonce) {
  return derive_key_at_block(master, nonce, 0);
}

inline PermutationKey derive_element_key(const MasterSecret& master, const Nonce& nonce, std::uint64_t index) {
  if (index > kMaxElementIndex) {
    throw Error(ErrorCode::IndexOutOfRange,
                "element index " + std::to_string(index) + " exceeds " + std::to_string(kMaxElementIndex));
  }
  return derive_key_at_block(master, nonce, static_cast<std::uint32_t>(index * kElementBlockStride));
}

/// n! as an exact unsigned 128-bit integer; n <= 34 fits.
inline unsigned __int128 keyspace_size(unsigned width = kWordBits) {
  if (width > 34) throw Error(ErrorCode::OutOfRange, "n! overflows 128 bits for n > 34");
  unsigned __int128 acc = 1;
  for (unsigned k = 2; k <= width; ++k) acc *= k;
  return acc;
}

inline std::string to_decimal(unsigned __int128 value) {
  if (value == 0) return "0";
  std::string digits;
  while (value != 0) {
    digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  return digits;
}

}  // namespace shufflebits
