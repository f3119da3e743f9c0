#include "shufflebits/attack_harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

using namespace shufflebits;
using namespace shufflebits::harness;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no shufflebits::Error thrown";
  return ErrorCode::InvalidArgument;
}

const std::vector<double> kBalanced{0.5, 0.5};

}  // namespace

TEST(SynthDataset, Deterministic) {
  EXPECT_EQ(synth_dataset(9, 200, 8, 2, 0.3, kBalanced), synth_dataset(9, 200, 8, 2, 0.3, kBalanced));
  EXPECT_NE(synth_dataset(9, 200, 8, 2, 0.3, kBalanced), synth_dataset(10, 200, 8, 2, 0.3, kBalanced));
}

TEST(SynthDataset, ZeroNoiseRowsEqualPlantedRows) {
  const auto ds = synth_dataset(1, 50, 6, 3, 0.0, std::vector<double>{0.2, 0.3, 0.5});
  for (std::size_t r = 0; r < 50; ++r) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(ds.features(r, j), ds.planted(ds.labels[r], j));
  }
}

TEST(SynthDataset, Apportionment) {
  const auto ds = synth_dataset(2, 100, 4, 2, 0.1, std::vector<double>{0.75, 0.25});
  const auto counts = class_counts(ds.labels, 2);
  EXPECT_EQ(counts, (std::vector<std::size_t>{75, 25}));

  EXPECT_EQ(apportion(10, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(apportion(3, std::vector<double>{0.98, 0.01, 0.01}), (std::vector<std::size_t>{1, 1, 1}));
}

TEST(SynthDataset, RejectsBadInput) {
  EXPECT_EQ(code_of([] { synth_dataset(1, 10, 2, 2, 0.1, std::vector<double>{0.5, 0.6}); }),
            ErrorCode::InvalidProportions);
  EXPECT_EQ(code_of([] { synth_dataset(1, 10, 2, 2, 0.1, std::vector<double>{1.0}); }),
            ErrorCode::InvalidProportions);
  EXPECT_EQ(code_of([] { synth_dataset(1, 10, 2, 2, 0.1, std::vector<double>{1.0, 0.0}); }),
            ErrorCode::InvalidProportions);
  EXPECT_EQ(code_of([] { synth_dataset(1, 1, 2, 2, 0.1, kBalanced); }), ErrorCode::InvalidArgument);
}

TEST(ClassWeights, Examples) {
  const std::vector<std::size_t> even{0, 1, 0, 1};
  EXPECT_EQ(class_weights(even), (std::vector<double>{1.0, 1.0}));

  const std::vector<std::size_t> skewed{0, 0, 0, 1};
  const auto w = class_weights(skewed);
  EXPECT_DOUBLE_EQ(w[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(w[1], 2.0);
  double mean = 0.0;
  for (auto y : skewed) mean += w[y];
  EXPECT_DOUBLE_EQ(mean / 4.0, 1.0);

  const std::vector<std::size_t> single{0, 0, 0};
  EXPECT_EQ(code_of([&] { class_weights(single); }), ErrorCode::MissingClass);
  EXPECT_EQ(code_of([&] { class_weights(single, 2); }), ErrorCode::MissingClass);
}

TEST(BalancedAccuracy, Examples) {
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  EXPECT_EQ(balanced_accuracy(labels, labels), 1.0);
  EXPECT_EQ(balanced_accuracy(std::vector<std::size_t>{0, 1, 1, 1}, labels), 0.75);
  EXPECT_EQ(balanced_accuracy(std::vector<std::size_t>{1, 1, 1, 1}, labels), 0.5);

  EXPECT_EQ(code_of([&] { balanced_accuracy(std::vector<std::size_t>{0, 1}, labels); }), ErrorCode::LengthMismatch);
  const std::vector<std::size_t> gap{0, 2, 2, 0};
  EXPECT_EQ(code_of([&] { balanced_accuracy(gap, gap); }), ErrorCode::MissingClass);
}

TEST(BalancedAccuracy, MatchesConfusionMatrixOracle) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t classes = 2 + rng() % 5, n = classes + rng() % 200;
    std::vector<std::size_t> labels(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < classes ? i : rng() % classes;
    std::shuffle(labels.begin(), labels.end(), rng);
    for (auto& p : preds) p = rng() % classes;
    EXPECT_EQ(balanced_accuracy(preds, labels), oracle::balanced_accuracy_confusion(preds, labels));
  }
}

TEST(CosineDistance, Examples) {
  const std::vector<double> u{1.0, 2.0, -3.0};
  EXPECT_NEAR(cosine_distance(u, u), 0.0, 1e-15);
  EXPECT_EQ(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0);
  EXPECT_NEAR(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{1, 1}), 1.0 - 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{-1, 0}), 1.0);

  EXPECT_EQ(code_of([] { cosine_distance(std::vector<double>{0, 0}, std::vector<double>{1, 1}); }),
            ErrorCode::ZeroVector);
  EXPECT_EQ(code_of([] { cosine_distance(std::vector<double>{1}, std::vector<double>{1, 1}); }),
            ErrorCode::LengthMismatch);
}

TEST(CosineDistance, ScaleInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> u(16), v(16);
    for (auto& x : u) x = normal(rng);
    const double alpha = std::exp(normal(rng) * 3.0);
    for (std::size_t i = 0; i < u.size(); ++i) v[i] = alpha * u[i];
    EXPECT_NEAR(cosine_distance(u, v), 0.0, 1e-12);
  }
}

TEST(CosineDistance, EncryptDecryptRoundtripIsZero) {
  const auto ds = synth_dataset(5, 20, 32, 2, 0.5, kBalanced);
  const auto plain = encode_features(ds.features);
  MasterSecret m;
  m.bytes.fill(3);
  Nonce n;
  const auto back = decrypt_batch(encrypt_batch(plain, KeyMode::PerElement, m, n), KeyMode::PerElement, m, n);
  const auto a = decode_features(plain), b = decode_features(back);
  for (std::size_t r = 0; r < a.rows; ++r) EXPECT_EQ(cosine_distance(a.row(r), b.row(r)), 0.0);
}

TEST(TrainProbe, SeparableZeroNoise) {
  const auto ds = synth_dataset(6, 300, 16, 3, 0.0, std::vector<double>{0.2, 0.3, 0.5});
  const auto probe = train_probe(ds, 200, 0.05);
  const auto pred = predict_probe(probe, ds.features);
  EXPECT_EQ(balanced_accuracy(pred, ds.labels), 1.0);
  for (std::size_t r = 0; r < 10; ++r) EXPECT_EQ(pred[r], ds.labels[r]);
}

TEST(TrainProbe, LossDecreases) {
  const auto ds = synth_dataset(7, 400, 10, 2, 2.0, std::vector<double>{0.7, 0.3});
  const auto w = class_weights(ds.labels, 2);
  const double initial = weighted_loss(initial_probe(ds.features, 2), ds.features, ds.labels, w);
  EXPECT_NEAR(initial, std::log(2.0), 1e-12);
  const auto probe = train_probe(ds, 100, 0.05);
  EXPECT_LT(weighted_loss(probe, ds.features, ds.labels, w), initial);
}

TEST(TrainProbe, CiphertextFeaturesNearChance) {
  const auto ds = synth_dataset(8, 2000, 64, 2, 0.1, kBalanced);
  MasterSecret m;
  m.bytes.fill(9);
  Nonce n;
  n.bytes.fill(1);
  const auto cipher = decode_features(encrypt_batch(encode_features(ds.features), KeyMode::PerElement, m, n));
  const double ba = probe_holdout_accuracy(cipher, ds.labels, 2, 1500, TrainOptions{});
  EXPECT_GE(ba, 0.4);
  EXPECT_LE(ba, 0.6);
}

TEST(TrainProbe, Preconditions) {
  const auto ds = synth_dataset(1, 20, 2, 2, 0.1, kBalanced);
  EXPECT_EQ(code_of([&] { train_probe(ds, 0, 0.1); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { train_probe(ds, 10, 0.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { train_probe(Matrix{}, std::vector<std::size_t>{}, 2); }), ErrorCode::DegenerateFeatures);
}

TEST(TrainProbe, ConstantFeatureIsFloored) {
  auto ds = synth_dataset(2, 100, 4, 2, 0.1, kBalanced);
  for (std::size_t r = 0; r < ds.features.rows; ++r) ds.features(r, 2) = 7.0;
  const auto probe = train_probe(ds, 50, 0.05);
  EXPECT_EQ(probe.variance[2], kVarianceFloor);
  for (double v : probe.variance) EXPECT_GT(v, 0.0);
  EXPECT_EQ(balanced_accuracy(predict_probe(probe, ds.features), ds.labels), 1.0);
}

TEST(PredictProbe, TieBreakAndDimCheck) {
  Probe p;
  p.mean.assign(3, 0.0);
  p.variance.assign(3, 1.0);
  p.weights = Matrix(4, 3);
  p.bias.assign(4, 0.0);
  Matrix x(5, 3, 1.5);
  for (auto c : predict_probe(p, x)) EXPECT_EQ(c, 0u);
  EXPECT_EQ(code_of([&] { predict_probe(p, Matrix(2, 4)); }), ErrorCode::DimMismatch);
}

TEST(RecoverKey, RotationFromDistinctProfile) {
  std::array<double, 32> plain{};
  for (std::size_t p = 0; p < 32; ++p) plain[p] = static_cast<double>(p) / 33.0;
  const auto key = rotation_key(1);
  std::array<double, 32> cipher{};
  for (std::size_t p = 0; p < 32; ++p) cipher[key[p]] = plain[p];
  const auto got = recover_key_from_frequencies(plain, cipher);
  EXPECT_EQ(got.key, key);
  EXPECT_FALSE(got.ambiguous);
  EXPECT_NEAR(got.min_plain_gap, 1.0 / 33.0, 1e-15);
}

TEST(RecoverKey, UniformProfileIsAmbiguous) {
  std::array<double, 32> flat{};
  flat.fill(0.5);
  const auto got = recover_key_from_frequencies(flat, flat);
  EXPECT_TRUE(got.ambiguous);
  EXPECT_TRUE(got.key.is_identity());
}

TEST(RecoverKey, ProfileLength) {
  const std::vector<double> short_profile(31, 0.5), ok(32, 0.5);
  EXPECT_EQ(code_of([&] { recover_key_from_frequencies(short_profile, ok); }), ErrorCode::ProfileLengthInvalid);
  EXPECT_EQ(code_of([&] { recover_key_from_frequencies(ok, short_profile); }), ErrorCode::ProfileLengthInvalid);
}

TEST(RecoverKey, SampledFixedKeyCiphertext) {
  const auto probs = staircase_profile();
  const auto words = biased_words(11, 100000, probs);
  std::mt19937_64 rng(12);
  std::vector<int> v(32);
  std::iota(v.begin(), v.end(), 0);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(v.begin(), v.end(), rng);
    const auto key = validate_key(v);
    std::vector<Word32> cipher(words.size());
    permute_scalar(words, cipher, key);
    const auto got = recover_key_from_frequencies(bit_frequency_profile(words), bit_frequency_profile(cipher));
    EXPECT_EQ(got.key, key);
  }
}

TEST(Harness, DefaultRunSeparatesPlainFromCipher) {
  const auto report = run_harness();
  EXPECT_GE(report.plain_balanced_accuracy, 0.9);
  EXPECT_GE(report.cipher_balanced_accuracy, 0.4);
  EXPECT_LE(report.cipher_balanced_accuracy, 0.6);
  EXPECT_EQ(report.keyspace, "263130836933693530167218012160000000");
  EXPECT_TRUE(report.frequency_attack.exact);
  EXPECT_EQ(report.frequency_attack.positions_recovered, 32u);
}
