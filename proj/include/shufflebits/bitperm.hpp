#pragma once

// Keyed permutations of the 32 bit positions of a binary32 word.
//
// Bit positions are numbered MSB-first: position 0 is the sign bit, position
// 31 is the least significant mantissa bit. A key maps source position i to
// destination position map[i]; encryption moves every bit along that map and
// decryption applies the inverse map.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shufflebits/error.hpp"

namespace shufflebits {

inline constexpr std::size_t kWordBits = 32;

/// Opaque 32-bit pattern. Never routed through floating-point arithmetic.
struct Word32 {
  std::uint32_t bits = 0;

  friend constexpr bool operator==(Word32, Word32) = default;

  static Word32 from_float(float value) noexcept { return Word32{std::bit_cast<std::uint32_t>(value)}; }
  float to_float() const noexcept { return std::bit_cast<float>(bits); }

  /// Bit at MSB-first position `pos`.
  constexpr bool bit(std::size_t pos) const noexcept { return ((bits >> (31 - pos)) & 1u) != 0; }
};

class PermutationKey {
 public:
  using Map = std::array<std::uint8_t, kWordBits>;

  /// Identity key.
  constexpr PermutationKey() noexcept {
    for (std::size_t i = 0; i < kWordBits; ++i) map_[i] = static_cast<std::uint8_t>(i);
  }

  /// Destination position of source bit `source`.
  constexpr std::size_t operator[](std::size_t source) const noexcept { return map_[source]; }
  constexpr const Map& map() const noexcept { return map_; }

  constexpr bool is_identity() const noexcept { return *this == PermutationKey{}; }

  friend constexpr bool operator==(const PermutationKey&, const PermutationKey&) = default;

 private:
  // Only reachable through the checked factories below.
  struct Unchecked {};
  constexpr PermutationKey(Unchecked, const Map& map) noexcept : map_(map) {}

  template <class Int>
  friend PermutationKey validate_key(std::span<const Int> candidate);
  friend constexpr PermutationKey invert_key(const PermutationKey& key) noexcept;
  friend constexpr PermutationKey compose_keys(const PermutationKey& first,
                                               const PermutationKey& second) noexcept;
  friend constexpr PermutationKey rotation_key(long long shift) noexcept;

  Map map_{};
};

/// Builds a key from 32 destination indices, rejecting anything that is not a
/// bijection on {0,...,31}.
template <class Int>
PermutationKey validate_key(std::span<const Int> candidate) {
  if (candidate.size() != kWordBits) {
    throw Error(ErrorCode::OutOfRange,
                "key needs exactly 32 entries, got " + std::to_string(candidate.size()));
  }
  PermutationKey::Map map{};
  std::array<bool, kWordBits> seen{};
  for (std::size_t i = 0; i < kWordBits; ++i) {
    const auto v = candidate[i];
    if (v < Int{0} || static_cast<unsigned long long>(v) >= kWordBits) {
      throw Error(ErrorCode::OutOfRange, "entry " + std::to_string(i) + " is not in [0, 31]");
    }
    const auto dst = static_cast<std::size_t>(v);
    if (seen[dst]) {
      throw Error(ErrorCode::DuplicatePosition, "position " + std::to_string(dst) + " appears twice");
    }
    seen[dst] = true;
    map[i] = static_cast<std::uint8_t>(dst);
  }
  return PermutationKey(PermutationKey::Unchecked{}, map);
}

template <class Int>
PermutationKey validate_key(const std::vector<Int>& candidate) {
  return validate_key(std::span<const Int>(candidate));
}

template <class Int, std::size_t N>
PermutationKey validate_key(const std::array<Int, N>& candidate) {
  return validate_key(std::span<const Int>(candidate));
}

constexpr PermutationKey invert_key(const PermutationKey& key) noexcept {
  PermutationKey::Map inv{};
  for (std::size_t i = 0; i < kWordBits; ++i) inv[key.map_[i]] = static_cast<std::uint8_t>(i);
  return PermutationKey(PermutationKey::Unchecked{}, inv);
}

/// Key equivalent to encrypting with `first`, then with `second`.
constexpr PermutationKey compose_keys(const PermutationKey& first, const PermutationKey& second) noexcept {
  PermutationKey::Map out{};
  for (std::size_t i = 0; i < kWordBits; ++i) out[i] = second.map_[first.map_[i]];
  return PermutationKey(PermutationKey::Unchecked{}, out);
}

/// Key whose encryption rotates the word left (toward the MSB) by `shift`.
constexpr PermutationKey rotation_key(long long shift) noexcept {
  const auto s = static_cast<std::size_t>(((shift % 32) + 32) % 32);
  PermutationKey::Map map{};
  for (std::size_t i = 0; i < kWordBits; ++i) map[i] = static_cast<std::uint8_t>((i + kWordBits - s) % kWordBits);
  return PermutationKey(PermutationKey::Unchecked{}, map);
}

/// Output bit at key[i] equals input bit at i.
constexpr Word32 encrypt_word(Word32 plain, const PermutationKey& key) noexcept {
  std::uint32_t out = 0;
  for (std::size_t i = 0; i < kWordBits; ++i) {
    const std::uint32_t b = (plain.bits >> (31 - i)) & 1u;
    out |= b << (31 - key[i]);
  }
  return Word32{out};
}

/// `key` is the decryption key, i.e. invert_key of the encryption key.
constexpr Word32 decrypt_word(Word32 cipher, const PermutationKey& key) noexcept {
  return encrypt_word(cipher, key);
}

// ---- key serialization ----------------------------------------------------

/// "m0,m1,...,m31"
inline std::string key_to_text(const PermutationKey& key) {
  std::string out;
  for (std::size_t i = 0; i < kWordBits; ++i) {
    if (i != 0) out += ',';
    out += std::to_string(key[i]);
  }
  return out;
}

inline PermutationKey key_from_text(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) {
    text.remove_suffix(1);
  }
  std::vector<int> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string_view field = text.substr(pos, comma - pos);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
      throw Error(ErrorCode::InvalidKeyText, "cannot parse key entry '" + std::string(field) + "'");
    }
    values.push_back(value);
    pos = comma + 1;
  }
  return validate_key(values);
}

/// 32 bytes, byte i holds map[i].
inline std::array<std::uint8_t, kWordBits> key_to_bytes(const PermutationKey& key) { return key.map(); }

inline PermutationKey key_from_bytes(std::span<const std::uint8_t> bytes) {
  return validate_key(bytes);
}

}  // namespace shufflebits
