// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <json.hpp>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "shufflebits/shufflebits.hpp"

using namespace shufflebits;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> check;
};

PermutationKey random_key(std::mt19937_64& rng) {
  std::vector<int> v(32);
  std::iota(v.begin(), v.end(), 0);
  std::shuffle(v.begin(), v.end(), rng);
  return validate_key(v);
}

std::vector<std::uint8_t> slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome keyspace_exact() {
  const std::string exact = to_decimal(keyspace_size());
  const bool matches = exact == "263130836933693530167218012160000000" && exact == oracle::decimal_factorial(32);
  const double rounded = std::round(static_cast<double>(keyspace_size()) / 1e33) / 100.0;
  std::ostringstream d;
  d << "32! = " << exact << ", scientific " << rounded << "e+35";
  return {matches && rounded == 2.63, d.str()};
}

Outcome roundtrip_identity() {
  std::mt19937_64 rng(2);
  const std::uint32_t forced[] = {0x00000000u, 0x80000000u, 0x7F800000u, 0xFF800000u, 0x7FC00000u,
                                  0x7FC00001u, 0xFFFFFFFFu, 0x7F800001u, 0x00000001u, 0x807FFFFFu};
  std::size_t checked = 0, failures = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto key = random_key(rng);
    const auto dec = invert_key(key);
    for (auto w : forced) {
      failures += decrypt_word(encrypt_word(Word32{w}, key), dec).bits != w;
      ++checked;
    }
    for (int i = 0; i < 1000; ++i) {
      const Word32 w{static_cast<std::uint32_t>(rng())};
      failures += decrypt_word(encrypt_word(w, key), dec) != w;
      ++checked;
    }
  }
  return {checked >= 1000000 && failures == 0,
          std::to_string(checked) + " words under 1000 keys, " + std::to_string(failures) + " mismatches"};
}

Outcome rotation_semantics() {
  const Word32 one{0x3F800000u};
  const Word32 enc = encrypt_word(one, rotation_key(1));
  const Word32 dec = decrypt_word(enc, rotation_key(-1));
  bool ok = enc.bits == 0x7F000000u && dec == one && invert_key(rotation_key(1)) == rotation_key(-1);
  std::mt19937_64 rng(3);
  std::size_t failures = 0;
  for (int shift = 0; shift < 32; ++shift) {
    const auto key = rotation_key(shift);
    for (int i = 0; i < 1000; ++i) {
      const auto w = static_cast<std::uint32_t>(rng());
      const auto c = encrypt_word(Word32{w}, key);
      failures += c.bits != std::rotl(w, shift);
      failures += decrypt_word(c, invert_key(key)).bits != w;
    }
  }
  ok = ok && failures == 0;
  std::ostringstream d;
  d << "0x3F800000 -> 0x" << std::hex << std::uppercase << enc.bits << " -> 0x" << dec.bits << std::dec
    << "; 32 shifts, " << failures << " mismatches";
  return {ok, d.str()};
}

Outcome path_equivalence() {
  std::mt19937_64 rng(4);
  std::size_t pairs = 0, odd_lengths = 0, mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = rng() % 2048;
    std::vector<Word32> words(n);
    for (auto& w : words) w.bits = static_cast<std::uint32_t>(rng());
    const auto batch = FeatureBatch::make(std::move(words), 1, n);
    const auto key = random_key(rng);
    mismatches += encrypt_batch_bitsliced(batch, key) != encrypt_batch(batch, key);
    odd_lengths += n % 32 != 0;
    ++pairs;
  }
  return {mismatches == 0 && odd_lengths > 0, std::to_string(pairs) + " pairs (" + std::to_string(odd_lengths) +
                                                  " with a tail), " + std::to_string(mismatches) + " mismatches"};
}

Outcome frequency_invariance() {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> values(100000);
  for (auto& v : values) v = normal(rng);
  const auto batch = FeatureBatch::from_floats(values, 1000, 100);
  const auto key = random_key(rng);

  auto plain = bit_frequency_profile(batch);
  auto fixed = bit_frequency_profile(encrypt_batch_bitsliced(batch, key));
  std::sort(plain.begin(), plain.end());
  std::sort(fixed.begin(), fixed.end());
  double max_sorted_diff = 0.0;
  for (std::size_t p = 0; p < 32; ++p) max_sorted_diff = std::max(max_sorted_diff, std::abs(plain[p] - fixed[p]));

  MasterSecret m;
  for (auto& b : m.bytes) b = static_cast<std::uint8_t>(rng());
  Nonce n;
  for (auto& b : n.bytes) b = static_cast<std::uint8_t>(rng());
  const auto mixed = bit_frequency_profile(encrypt_batch(batch, KeyMode::PerElement, m, n));
  double pop = 0.0;
  for (auto w : batch.words) pop += std::popcount(w.bits);
  const double rho = pop / (32.0 * static_cast<double>(batch.words.size()));
  const double sd = std::sqrt(rho * (1.0 - rho) / static_cast<double>(batch.words.size()));
  double worst = 0.0;
  for (double f : mixed) worst = std::max(worst, std::abs(f - rho) / sd);

  std::ostringstream d;
  d << "fixed-key sorted max diff " << max_sorted_diff << "; per-element worst deviation " << worst
    << " sd around rho=" << rho;
  return {max_sorted_diff <= 1e-12 && worst <= 5.0, d.str()};
}

Outcome leak_contrast() {
  const auto r = harness::run_harness();
  std::ostringstream d;
  d << "synthetic substitute for the real-attribute experiment (not reproducible at desk scale): plain "
    << r.plain_balanced_accuracy << ", per-element cipher " << r.cipher_balanced_accuracy << " (seed " << r.seed
    << ")";
  return {r.plain_balanced_accuracy >= 0.90 && r.cipher_balanced_accuracy >= 0.40 &&
              r.cipher_balanced_accuracy <= 0.60,
          d.str()};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(7);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t classes = 2 + rng() % 6, n = classes + rng() % 300;
    std::vector<std::size_t> labels(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < classes ? i : rng() % classes;
    std::shuffle(labels.begin(), labels.end(), rng);
    for (auto& p : preds) p = rng() % (classes + 1);
    mismatches += harness::balanced_accuracy(preds, labels) != oracle::balanced_accuracy_confusion(preds, labels);
  }
  return {mismatches == 0, "1000 random sets, " + std::to_string(mismatches) + " mismatches"};
}

Outcome fixed_key_weakness() {
  std::mt19937_64 rng(8);
  std::array<double, 32> plain{};
  for (std::size_t p = 0; p < 32; ++p) plain[p] = static_cast<double>(p) / 33.0;
  std::shuffle(plain.begin(), plain.end(), rng);
  std::size_t exact = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const auto key = t == 0 ? rotation_key(1) : random_key(rng);
    std::array<double, 32> cipher{};
    for (std::size_t p = 0; p < 32; ++p) cipher[key[p]] = plain[p];
    const auto got = harness::recover_key_from_frequencies(plain, cipher);
    exact += got.key == key && !got.ambiguous;
  }
  std::array<double, 32> flat{};
  flat.fill(0.25);
  const auto uniform = harness::recover_key_from_frequencies(flat, flat);
  return {exact == trials && uniform.ambiguous,
          std::to_string(exact) + "/" + std::to_string(trials) + " planted keys recovered; uniform profile " +
              (uniform.ambiguous ? "flagged ambiguous" : "NOT flagged")};
}

Outcome wire_conformance() {
  const auto bytes = slurp(SHUFFLEBITS_TEST_DATA "/golden_v1.shfb");
  const auto env = read_envelope(bytes);
  const auto& h = env.header;
  bool ok = bytes.size() == 60 && h.version == 1 && h.mode == KeyMode::PerElement && h.dtype == 0 && !h.cascade &&
            to_hex(h.nonce) == "000102030405060708090a0b" && h.count == 2 && h.dim == 3 &&
            h.checksum == 0xE22EF325u && env.payload.words[1].bits == 0x3F800000u &&
            write_envelope(h, env.payload) == bytes;
  auto bad = bytes;
  bad[kHeaderBytes] ^= 0x01;
  bool checksum_caught = false;
  try {
    read_envelope(bad);
  } catch (const Error& e) {
    checksum_caught = e.code() == ErrorCode::ChecksumMismatch;
  }
  return {ok && checksum_caught, std::string("golden fields ") + (ok ? "match" : "DIFFER") +
                                     ", one-byte corruption " + (checksum_caught ? "-> ChecksumMismatch" : "missed")};
}

Outcome end_to_end_cli() {
  const fs::path dir = fs::temp_directory_path() / ("shufflebits_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };
  std::ostringstream out, err;

  std::mt19937_64 rng(10);
  std::vector<std::uint8_t> data(1 << 20);
  for (auto& b : data) b = static_cast<std::uint8_t>(rng());
  {
    std::ofstream f(p("in.bin"), std::ios::binary);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  }
  bool ok = cli::run({"keygen", "--out", p("master.key")}, out, err) == 0;
  ok = ok && cli::run({"encrypt", "--in", p("in.bin"), "--out", p("f.shfb"), "--master", p("master.key"), "--nonce",
                       "0123456789abcdef01234567", "--mode", "per-element", "--dim", "512"},
                      out, err) == 0;
  ok = ok && cli::run({"decrypt", "--in", p("f.shfb"), "--out", p("out.bin"), "--master", p("master.key")}, out,
                      err) == 0;
  const bool identical = ok && slurp(p("out.bin")) == data;

  std::ostringstream bench_out;
  const int bench_rc = cli::run({"bench", "--words", std::to_string(1 << 20), "--repeat", "3", "--json"}, bench_out, err);
  fs::remove_all(dir);
  if (bench_rc != 0) return {false, "bench failed: " + err.str()};
  const auto j = nlohmann::json::parse(bench_out.str());
  const double scalar = j["scalar_words_per_second"], sliced = j["bitsliced_words_per_second"];
  std::ostringstream d;
  d << "1 MiB per-element roundtrip " << (identical ? "byte-identical" : "DIFFERS") << "; bench 2^20 words: scalar "
    << static_cast<long long>(scalar) << " w/s, bit-sliced " << static_cast<long long>(sliced) << " w/s ("
    << sliced / scalar << "x)";
  return {identical && sliced >= scalar && j["outputs_match"].get<bool>(), d.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "key-space exactness", 1.0, keyspace_exact},
      {2, "roundtrip identity", 10.0, roundtrip_identity},
      {3, "rotation semantics", 1.0, rotation_semantics},
      {4, "path equivalence", 10.0, path_equivalence},
      {5, "frequency-multiset invariance", 30.0, frequency_invariance},
      {6, "leak/no-leak contrast", 60.0, leak_contrast},
      {7, "metric oracle equivalence", 5.0, metric_oracle},
      {8, "fixed-key weakness", 1.0, fixed_key_weakness},
      {9, "wire conformance", 1.0, wire_conformance},
      {10, "end-to-end CLI", 30.0, end_to_end_cli},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs < c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " (" << std::fixed
              << std::setprecision(2) << secs << "s / " << std::setprecision(0) << c.budget_seconds << "s"
              << (in_budget ? "" : ", OVER BUDGET") << ")  " << std::defaultfloat << std::setprecision(6) << o.detail
              << "\n";
  }
  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
