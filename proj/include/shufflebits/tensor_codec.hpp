#pragma once

// Element-wise bit shuffling over feature batches.
//
// Two execution paths produce bit-identical output under a single key: a
// scalar reference path that moves one bit at a time, and a bit-sliced path
// that transposes blocks of 32 words into 32 bit-planes, relabels the planes
// according to the key, and transposes back. Element index e = vector * dim +
// component; in per-element mode e selects the derived key.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shufflebits/bitperm.hpp"
#include "shufflebits/error.hpp"
#include "shufflebits/keystream.hpp"

namespace shufflebits {

/// Row-major batch of `count` feature vectors of width `dim`.
struct FeatureBatch {
  std::vector<Word32> words;
  std::size_t count = 0;
  std::size_t dim = 0;

  static FeatureBatch make(std::vector<Word32> words, std::size_t count, std::size_t dim) {
    if (words.size() != count * dim) {
      throw Error(ErrorCode::ShapeMismatch, std::to_string(words.size()) + " words cannot form " +
                                                std::to_string(count) + " x " + std::to_string(dim));
    }
    FeatureBatch b;
    b.words = std::move(words);
    b.count = count;
    b.dim = dim;
    return b;
  }

  static FeatureBatch from_floats(std::span<const float> values, std::size_t count, std::size_t dim) {
    std::vector<Word32> words;
    words.reserve(values.size());
    for (float v : values) words.push_back(Word32::from_float(v));
    return make(std::move(words), count, dim);
  }

  std::vector<float> to_floats() const {
    std::vector<float> out;
    out.reserve(words.size());
    for (auto w : words) out.push_back(w.to_float());
    return out;
  }

  friend bool operator==(const FeatureBatch&, const FeatureBatch&) = default;
};

namespace detail {

/// In-place transpose of a 32x32 bit matrix, MSB-first columns.
/// Afterwards bit j of rows[i] holds what bit i of rows[j] held.
inline void transpose32(std::array<std::uint32_t, 32>& rows) noexcept {
  std::uint32_t mask = 0x0000FFFFu;
  for (unsigned width = 16; width != 0; width >>= 1, mask ^= mask << width) {
    for (unsigned k = 0; k < 32; k = (k + width + 1) & ~width) {
      const std::uint32_t t = (rows[k] ^ (rows[k + width] >> width)) & mask;
      rows[k] ^= t;
      rows[k + width] ^= t << width;
    }
  }
}

inline void check_spans(std::span<const Word32> in, std::span<Word32> out) {
  if (in.size() != out.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "output span holds " + std::to_string(out.size()) + " words, input " + std::to_string(in.size()));
  }
}

}  // namespace detail

// ---- span-level kernels ---------------------------------------------------

inline void permute_scalar(std::span<const Word32> in, std::span<Word32> out, const PermutationKey& key) {
  detail::check_spans(in, out);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = encrypt_word(in[i], key);
}

inline void permute_bitsliced(std::span<const Word32> in, std::span<Word32> out, const PermutationKey& key) {
  detail::check_spans(in, out);
  const std::size_t full = in.size() - in.size() % kWordBits;
  std::array<std::uint32_t, 32> planes{};
  std::array<std::uint32_t, 32> moved{};
  for (std::size_t base = 0; base < full; base += kWordBits) {
    for (std::size_t k = 0; k < kWordBits; ++k) planes[k] = in[base + k].bits;
    detail::transpose32(planes);
    for (std::size_t p = 0; p < kWordBits; ++p) moved[key[p]] = planes[p];
    detail::transpose32(moved);
    for (std::size_t k = 0; k < kWordBits; ++k) out[base + k] = Word32{moved[k]};
  }
  permute_scalar(in.subspan(full), out.subspan(full), key);
}

/// Element i of `in` has absolute index first_index + i. With `decrypt` set,
/// each derived key is inverted before use.
inline void permute_per_element(std::span<const Word32> in, std::span<Word32> out, const MasterSecret& master,
                                const Nonce& nonce, std::uint64_t first_index, bool decrypt) {
  detail::check_spans(in, out);
  for (std::size_t i = 0; i < in.size(); ++i) {
    PermutationKey key = derive_element_key(master, nonce, first_index + i);
    if (decrypt) key = invert_key(key);
    out[i] = encrypt_word(in[i], key);
  }
}

// ---- batch operations -----------------------------------------------------

namespace detail {

inline FeatureBatch same_shape(const FeatureBatch& batch) {
  FeatureBatch out;
  out.words.resize(batch.words.size());
  out.count = batch.count;
  out.dim = batch.dim;
  return out;
}

inline FeatureBatch run_keyed(const FeatureBatch& batch, KeyMode mode, const MasterSecret& master,
                              const Nonce& nonce, bool decrypt) {
  FeatureBatch out = same_shape(batch);
  switch (mode) {
    case KeyMode::FixedKey:
      throw Error(ErrorCode::ModeMismatch, "fixed-key mode needs an explicit permutation key");
    case KeyMode::PerRequest: {
      PermutationKey key = derive_request_key(master, nonce);
      if (decrypt) key = invert_key(key);
      permute_scalar(batch.words, out.words, key);
      break;
    }
    case KeyMode::PerElement:
      permute_per_element(batch.words, out.words, master, nonce, 0, decrypt);
      break;
  }
  return out;
}

}  // namespace detail

/// Fixed-key encryption, scalar reference path.
inline FeatureBatch encrypt_batch(const FeatureBatch& batch, const PermutationKey& key) {
  FeatureBatch out = detail::same_shape(batch);
  permute_scalar(batch.words, out.words, key);
  return out;
}

inline FeatureBatch encrypt_batch(const FeatureBatch& batch, KeyMode mode, const MasterSecret& master,
                                  const Nonce& nonce) {
  return detail::run_keyed(batch, mode, master, nonce, false);
}

/// Fixed-key decryption; `decryption_key` is the inverse of the encryption key.
inline FeatureBatch decrypt_batch(const FeatureBatch& batch, const PermutationKey& decryption_key) {
  return encrypt_batch(batch, decryption_key);
}

inline FeatureBatch decrypt_batch(const FeatureBatch& batch, KeyMode mode, const MasterSecret& master,
                                  const Nonce& nonce) {
  return detail::run_keyed(batch, mode, master, nonce, true);
}

inline FeatureBatch encrypt_batch_bitsliced(const FeatureBatch& batch, const PermutationKey& key) {
  FeatureBatch out = detail::same_shape(batch);
  permute_bitsliced(batch.words, out.words, key);
  return out;
}

/// Fraction of words with each MSB-first bit position set.
inline std::array<double, kWordBits> bit_frequency_profile(std::span<const Word32> words) {
  if (words.empty()) throw Error(ErrorCode::EmptyBatch, "frequency profile of an empty batch");
  std::array<std::uint64_t, kWordBits> counts{};
  for (auto w : words) {
    for (std::size_t p = 0; p < kWordBits; ++p) counts[p] += (w.bits >> (31 - p)) & 1u;
  }
  std::array<double, kWordBits> freq{};
  const double n = static_cast<double>(words.size());
  for (std::size_t p = 0; p < kWordBits; ++p) freq[p] = static_cast<double>(counts[p]) / n;
  return freq;
}

inline std::array<double, kWordBits> bit_frequency_profile(const FeatureBatch& batch) {
  return bit_frequency_profile(std::span<const Word32>(batch.words));
}

}  // namespace shufflebits
