#pragma once

// Desk-scale threat model for shuffled features.
//
// A planted-linear synthetic task stands in for real re-identification
// features. An attribute probe (standardization followed by one dense
// softmax layer, trained with class-weighted cross-entropy) shows that plain
// features leak the class while per-element encrypted features do not. A
// frequency-matching attack recovers fixed keys from per-position bit
// statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "shufflebits/bitperm.hpp"
#include "shufflebits/error.hpp"
#include "shufflebits/keystream.hpp"
#include "shufflebits/tensor_codec.hpp"

namespace shufflebits::harness {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  /// Rows [first, first + n).
  Matrix slice_rows(std::size_t first, std::size_t n) const {
    Matrix out(n, cols);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(first * cols), n * cols, out.data.begin());
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct SyntheticDataset {
  Matrix features;
  std::vector<std::size_t> labels;
  Matrix planted;
  double noise_scale = 0.0;
  std::size_t classes = 0;

  friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

/// Largest-remainder apportionment of `count` items over `proportions`,
/// with every class guaranteed at least one item.
inline std::vector<std::size_t> apportion(std::size_t count, std::span<const double> proportions) {
  const std::size_t c = proportions.size();
  std::vector<std::size_t> counts(c, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double exact = proportions[k] * static_cast<double>(count);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < count; ++r, ++assigned) ++counts[remainders[r % c].second];
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) {
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      counts[k] = 1;
    }
  }
  return counts;
}

/// Rows are planted[label] + N(0, noise_scale^2) noise; labels are shuffled.
inline SyntheticDataset synth_dataset(std::uint64_t seed, std::size_t count, std::size_t dim, std::size_t classes,
                                      double noise_scale, std::span<const double> class_proportions) {
  if (classes < 2 || count < classes || dim == 0) {
    throw Error(ErrorCode::InvalidArgument, "need count >= classes >= 2 and dim >= 1");
  }
  if (noise_scale < 0.0 || !std::isfinite(noise_scale)) {
    throw Error(ErrorCode::InvalidArgument, "noise_scale must be finite and non-negative");
  }
  if (class_proportions.size() != classes) {
    throw Error(ErrorCode::InvalidProportions, "expected one proportion per class");
  }
  double total = 0.0;
  for (double p : class_proportions) {
    if (!(p > 0.0)) throw Error(ErrorCode::InvalidProportions, "proportions must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidProportions, "proportions must sum to 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticDataset ds;
  ds.classes = classes;
  ds.noise_scale = noise_scale;
  ds.planted = Matrix(classes, dim);
  for (double& v : ds.planted.data) v = normal(rng);

  const auto counts = apportion(count, class_proportions);
  ds.labels.reserve(count);
  for (std::size_t k = 0; k < classes; ++k) ds.labels.insert(ds.labels.end(), counts[k], k);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);

  ds.features = Matrix(count, dim);
  for (std::size_t r = 0; r < count; ++r) {
    const auto centre = ds.planted.row(ds.labels[r]);
    auto out = ds.features.row(r);
    for (std::size_t j = 0; j < dim; ++j) {
      const double noise = normal(rng);
      out[j] = noise_scale == 0.0 ? centre[j] : centre[j] + noise_scale * noise;
    }
  }
  return ds;
}

inline SyntheticDataset synth_dataset(std::uint64_t seed, std::size_t count, std::size_t dim, std::size_t classes,
                                      double noise_scale, const std::vector<double>& class_proportions) {
  return synth_dataset(seed, count, dim, classes, noise_scale, std::span<const double>(class_proportions));
}

inline std::vector<std::size_t> class_counts(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (auto y : labels) {
    if (y >= classes) throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(y) + " out of range");
    ++counts[y];
  }
  return counts;
}

/// w_c = N / (C * n_c).
inline std::vector<double> class_weights(std::span<const std::size_t> labels, std::size_t classes) {
  if (classes < 2) throw Error(ErrorCode::MissingClass, "at least two classes are required");
  const auto counts = class_counts(labels, classes);
  std::vector<double> w(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw Error(ErrorCode::MissingClass, "class " + std::to_string(c) + " has no samples");
    w[c] = static_cast<double>(labels.size()) / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  }
  return w;
}

/// Class count inferred as max label + 1.
inline std::vector<double> class_weights(std::span<const std::size_t> labels) {
  const std::size_t classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  return class_weights(labels, classes);
}

/// Mean of per-class recall over classes 0..C-1, C inferred from labels.
inline double balanced_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  }
  if (labels.empty()) throw Error(ErrorCode::MissingClass, "no labels");
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> hits(classes, 0);
  const auto totals = class_counts(labels, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) hits[labels[i]] += predictions[i] == labels[i] ? 1 : 0;
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] == 0) throw Error(ErrorCode::MissingClass, "class " + std::to_string(c) + " has no samples");
    sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
  }
  return sum / static_cast<double>(classes);
}

/// 1 - cos(u, v), clamped to [0, 1].
inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(ErrorCode::LengthMismatch, "vectors differ in length");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine distance of a zero vector");
  const double d = 1.0 - dot / std::sqrt(uu * vv);
  return std::clamp(d, 0.0, 1.0);
}

// ---- probe ----------------------------------------------------------------

inline constexpr double kVarianceFloor = 1e-5;

/// Standardization (inference-time batch normalization) followed by one
/// dense layer with `classes` outputs.
struct Probe {
  std::vector<double> mean;
  std::vector<double> variance;
  Matrix weights;  // classes x dim
  std::vector<double> bias;

  std::size_t dim() const noexcept { return mean.size(); }
  std::size_t classes() const noexcept { return bias.size(); }
};

struct TrainOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.05;
};

namespace detail {

inline Matrix standardize(const Matrix& x, const Probe& p) {
  Matrix z(x.rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    const double inv_sd = 1.0 / std::sqrt(p.variance[j]);
    for (std::size_t r = 0; r < x.rows; ++r) z(r, j) = (x(r, j) - p.mean[j]) * inv_sd;
  }
  return z;
}

inline Matrix logits(const Matrix& z, const Probe& p) {
  Matrix out(z.rows, p.classes());
  for (std::size_t r = 0; r < z.rows; ++r) {
    const auto zr = z.row(r);
    for (std::size_t c = 0; c < p.classes(); ++c) {
      const auto wc = p.weights.row(c);
      out(r, c) = std::inner_product(zr.begin(), zr.end(), wc.begin(), p.bias[c]);
    }
  }
  return out;
}

/// Row-wise softmax, in place.
inline void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) total += (v = std::exp(v - peak));
    for (double& v : row) v /= total;
  }
}

inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

inline void check_features(const Probe& p, const Matrix& x) {
  if (x.cols != p.dim()) {
    throw Error(ErrorCode::DimMismatch,
                "probe expects " + std::to_string(p.dim()) + " features, got " + std::to_string(x.cols));
  }
}

}  // namespace detail

/// Standardization statistics from `features`, zero weights and bias.
inline Probe initial_probe(const Matrix& features, std::size_t classes) {
  if (features.rows == 0 || features.cols == 0) throw Error(ErrorCode::DegenerateFeatures, "empty dataset");
  Probe p;
  p.mean.assign(features.cols, 0.0);
  p.variance.assign(features.cols, 0.0);
  const double n = static_cast<double>(features.rows);
  for (std::size_t j = 0; j < features.cols; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < features.rows; ++r) s += features(r, j);
    const double m = s / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < features.rows; ++r) ss += (features(r, j) - m) * (features(r, j) - m);
    p.mean[j] = m;
    p.variance[j] = std::max(ss / n, kVarianceFloor);
  }
  p.weights = Matrix(classes, features.cols);
  p.bias.assign(classes, 0.0);
  return p;
}

/// Ties go to the lowest class index.
inline std::vector<std::size_t> predict_probe(const Probe& probe, const Matrix& features) {
  detail::check_features(probe, features);
  return detail::argmax_rows(detail::logits(detail::standardize(features, probe), probe));
}

/// Class-weighted mean softmax cross-entropy: (1/N) * sum_i w[y_i] * -log p(y_i).
inline double weighted_loss(const Probe& probe, const Matrix& features, std::span<const std::size_t> labels,
                            std::span<const double> weights) {
  detail::check_features(probe, features);
  Matrix prob = detail::logits(detail::standardize(features, probe), probe);
  detail::softmax_rows(prob);
  double loss = 0.0;
  for (std::size_t r = 0; r < prob.rows; ++r) {
    loss -= weights[labels[r]] * std::log(std::max(prob(r, labels[r]), std::numeric_limits<double>::min()));
  }
  return loss / static_cast<double>(prob.rows);
}

/// Full-batch gradient descent on class-weighted cross-entropy. Returns the
/// parameters with the best training balanced accuracy seen, earliest first.
inline Probe train_probe(const Matrix& features, std::span<const std::size_t> labels, std::size_t classes,
                         const TrainOptions& options = {}) {
  if (options.epochs == 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (!(options.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be > 0");
  if (features.rows == 0) throw Error(ErrorCode::DegenerateFeatures, "empty dataset");
  if (labels.size() != features.rows) throw Error(ErrorCode::LengthMismatch, "one label per row required");

  const auto w = class_weights(labels, classes);
  Probe probe = initial_probe(features, classes);
  const Matrix z = detail::standardize(features, probe);
  const double n = static_cast<double>(features.rows);

  Probe best = probe;
  double best_score = -1.0;
  Matrix grad_w(classes, features.cols);
  std::vector<double> grad_b(classes);

  for (std::size_t epoch = 0; epoch <= options.epochs; ++epoch) {
    Matrix prob = detail::logits(z, probe);
    const double score = balanced_accuracy(detail::argmax_rows(prob), labels);
    if (score > best_score) {
      best_score = score;
      best = probe;
    }
    if (epoch == options.epochs) break;

    detail::softmax_rows(prob);
    std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t r = 0; r < z.rows; ++r) {
      const double wy = w[labels[r]] / n;
      const auto zr = z.row(r);
      for (std::size_t c = 0; c < classes; ++c) {
        const double delta = wy * (prob(r, c) - (c == labels[r] ? 1.0 : 0.0));
        grad_b[c] += delta;
        auto gc = grad_w.row(c);
        for (std::size_t j = 0; j < zr.size(); ++j) gc[j] += delta * zr[j];
      }
    }
    for (std::size_t i = 0; i < grad_w.data.size(); ++i) probe.weights.data[i] -= options.learning_rate * grad_w.data[i];
    for (std::size_t c = 0; c < classes; ++c) probe.bias[c] -= options.learning_rate * grad_b[c];
  }
  return best;
}

inline Probe train_probe(const SyntheticDataset& dataset, std::size_t epochs, double learning_rate) {
  return train_probe(dataset.features, dataset.labels, dataset.classes, TrainOptions{epochs, learning_rate});
}

// ---- feature <-> word conversion -----------------------------------------

/// Rounds each feature to binary32.
inline FeatureBatch encode_features(const Matrix& features) {
  std::vector<Word32> words;
  words.reserve(features.data.size());
  for (double v : features.data) words.push_back(Word32::from_float(static_cast<float>(v)));
  return FeatureBatch::make(std::move(words), features.rows, features.cols);
}

/// Reinterprets words as binary32; NaN and infinities become 0.
inline Matrix decode_features(const FeatureBatch& batch) {
  Matrix out(batch.count, batch.dim);
  for (std::size_t i = 0; i < batch.words.size(); ++i) {
    const float v = batch.words[i].to_float();
    out.data[i] = std::isfinite(v) ? static_cast<double>(v) : 0.0;
  }
  return out;
}

// ---- frequency attack -----------------------------------------------------

struct KeyRecovery {
  PermutationKey key;
  /// Some frequencies in a profile were within the tie tolerance of each other.
  bool ambiguous = false;
  /// Smallest gap between adjacent sorted plaintext frequencies.
  double min_plain_gap = 0.0;
};

/// Matches plaintext positions to ciphertext positions by frequency rank.
/// Exact when plaintext frequencies are pairwise separated by more than twice
/// the sampling error. Ties keep position order.
inline KeyRecovery recover_key_from_frequencies(std::span<const double> plain_profile,
                                                std::span<const double> cipher_profile,
                                                double tie_tolerance = 0.0) {
  if (plain_profile.size() != kWordBits || cipher_profile.size() != kWordBits) {
    throw Error(ErrorCode::ProfileLengthInvalid, "profiles must have 32 entries, got " +
                                                     std::to_string(plain_profile.size()) + " and " +
                                                     std::to_string(cipher_profile.size()));
  }
  auto rank = [](std::span<const double> profile) {
    std::array<std::size_t, kWordBits> order{};
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return profile[a] < profile[b]; });
    return order;
  };
  const auto plain_order = rank(plain_profile);
  const auto cipher_order = rank(cipher_profile);

  KeyRecovery out;
  out.min_plain_gap = std::numeric_limits<double>::infinity();
  for (std::size_t r = 1; r < kWordBits; ++r) {
    const double plain_gap = plain_profile[plain_order[r]] - plain_profile[plain_order[r - 1]];
    const double cipher_gap = cipher_profile[cipher_order[r]] - cipher_profile[cipher_order[r - 1]];
    out.min_plain_gap = std::min(out.min_plain_gap, plain_gap);
    if (plain_gap <= tie_tolerance || cipher_gap <= tie_tolerance) out.ambiguous = true;
  }
  std::array<std::size_t, kWordBits> map{};
  for (std::size_t r = 0; r < kWordBits; ++r) map[plain_order[r]] = cipher_order[r];
  out.key = validate_key(map);
  return out;
}

/// Words whose MSB-first bit p is set independently with probability probs[p].
inline std::vector<Word32> biased_words(std::uint64_t seed, std::size_t n, std::span<const double> probs) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Word32> out(n);
  for (auto& w : out) {
    std::uint32_t bits = 0;
    for (std::size_t p = 0; p < kWordBits; ++p) bits |= (unit(rng) < probs[p] ? 1u : 0u) << (31 - p);
    w.bits = bits;
  }
  return out;
}

/// Per-position probabilities (p + 1) / 33, pairwise about 0.03 apart.
inline std::array<double, kWordBits> staircase_profile() {
  std::array<double, kWordBits> probs{};
  for (std::size_t p = 0; p < kWordBits; ++p) probs[p] = static_cast<double>(p + 1) / 33.0;
  return probs;
}

// ---- end-to-end harness ---------------------------------------------------

struct HarnessConfig {
  std::uint64_t seed = 1501;
  std::size_t count = 2000;
  std::size_t dim = 64;
  double noise_scale = 0.1;
  /// Leading fraction of rows used for training; the rest is held out.
  double train_fraction = 0.75;
  TrainOptions train{};
  std::size_t attack_words = 100000;
};

struct FrequencyAttackResult {
  std::size_t words = 0;
  std::size_t positions_recovered = 0;
  bool exact = false;
  bool ambiguous = false;
};

struct HarnessReport {
  std::uint64_t seed = 0;
  double plain_balanced_accuracy = 0.0;
  double cipher_balanced_accuracy = 0.0;
  std::string keyspace;
  FrequencyAttackResult frequency_attack;
};

/// Demo-only secrets derived from the seed so runs are reproducible.
inline MasterSecret seeded_master(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5348464253454544ull);
  MasterSecret m;
  for (auto& b : m.bytes) b = static_cast<std::uint8_t>(rng());
  return m;
}

inline Nonce seeded_nonce(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x4e4f4e43455f5f5full);
  Nonce n;
  for (auto& b : n.bytes) b = static_cast<std::uint8_t>(rng());
  return n;
}

/// Trains on the leading rows, reports balanced accuracy on the held-out rows.
inline double probe_holdout_accuracy(const Matrix& features, std::span<const std::size_t> labels,
                                     std::size_t classes, std::size_t train_rows, const TrainOptions& options) {
  const Matrix train = features.slice_rows(0, train_rows);
  const Matrix test = features.slice_rows(train_rows, features.rows - train_rows);
  const Probe probe = train_probe(train, labels.first(train_rows), classes, options);
  return balanced_accuracy(predict_probe(probe, test), labels.subspan(train_rows));
}

inline HarnessReport run_harness(const HarnessConfig& cfg = {}) {
  HarnessReport report;
  report.seed = cfg.seed;
  report.keyspace = to_decimal(keyspace_size());

  const std::vector<double> balanced{0.5, 0.5};
  const SyntheticDataset ds = synth_dataset(cfg.seed, cfg.count, cfg.dim, 2, cfg.noise_scale, balanced);
  const auto train_rows = static_cast<std::size_t>(std::round(cfg.train_fraction * static_cast<double>(cfg.count)));
  if (train_rows == 0 || train_rows >= cfg.count) {
    throw Error(ErrorCode::InvalidArgument, "train_fraction leaves no train or test rows");
  }

  const FeatureBatch plain = encode_features(ds.features);
  report.plain_balanced_accuracy =
      probe_holdout_accuracy(decode_features(plain), ds.labels, ds.classes, train_rows, cfg.train);

  const FeatureBatch cipher =
      encrypt_batch(plain, KeyMode::PerElement, seeded_master(cfg.seed), seeded_nonce(cfg.seed));
  report.cipher_balanced_accuracy =
      probe_holdout_accuracy(decode_features(cipher), ds.labels, ds.classes, train_rows, cfg.train);

  const auto probs = staircase_profile();
  const auto words = biased_words(cfg.seed, cfg.attack_words, probs);
  const PermutationKey fixed = derive_request_key(seeded_master(cfg.seed + 1), seeded_nonce(cfg.seed + 1));
  std::vector<Word32> shuffled(words.size());
  permute_bitsliced(words, shuffled, fixed);
  const auto recovered =
      recover_key_from_frequencies(bit_frequency_profile(words), bit_frequency_profile(shuffled));

  FrequencyAttackResult& fa = report.frequency_attack;
  fa.words = words.size();
  for (std::size_t p = 0; p < kWordBits; ++p) fa.positions_recovered += recovered.key[p] == fixed[p] ? 1 : 0;
  fa.exact = recovered.key == fixed;
  fa.ambiguous = recovered.ambiguous;
  return report;
}

}  // namespace shufflebits::harness
