#include "cli.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <thread>

#include "shufflebits/shufflebits.hpp"

namespace shufflebits::cli {

namespace {

namespace fs = std::filesystem;

/// Operational failure that names the path involved.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return bytes;
}

MasterSecret read_master(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() != kMasterBytes) {
    throw IoError("master secret '" + path + "' must be exactly 32 bytes, found " + std::to_string(bytes.size()));
  }
  MasterSecret m;
  std::copy(bytes.begin(), bytes.end(), m.bytes.begin());
  return m;
}

/// 32-byte files are the binary form, anything else the text form.
PermutationKey read_key(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    if (bytes.size() == kWordBits) return key_from_bytes(bytes);
    return key_from_text(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    throw IoError("invalid key file '" + path + "': " + e.what());
  }
}

std::array<std::uint8_t, 32> read_cascade_key(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() != 32) throw IoError("cascade key '" + path + "' must be exactly 32 bytes");
  std::array<std::uint8_t, 32> key{};
  std::copy(bytes.begin(), bytes.end(), key.begin());
  return key;
}

std::vector<Word32> read_raw_words(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() % 4 != 0) {
    throw IoError("input '" + path + "' has " + std::to_string(bytes.size()) +
                  " bytes, not a whole number of binary32 words");
  }
  return payload_from_bytes(bytes);
}

std::string require_master(const CommandPlan& plan) {
  if (plan.master.empty()) throw UsageError("--master (or SHUFFLEBITS_MASTER) is required for this key mode");
  return plan.master;
}

void apply_key(std::span<const Word32> in, std::span<Word32> out, const EnvelopeHeader& h,
               const std::optional<PermutationKey>& fixed, const std::optional<MasterSecret>& master, bool decrypt) {
  switch (h.mode) {
    case KeyMode::FixedKey:
      permute_bitsliced(in, out, decrypt ? invert_key(*fixed) : *fixed);
      break;
    case KeyMode::PerRequest: {
      const auto key = derive_request_key(*master, h.nonce);
      permute_bitsliced(in, out, decrypt ? invert_key(key) : key);
      break;
    }
    case KeyMode::PerElement:
      permute_per_element(in, out, *master, h.nonce, 0, decrypt);
      break;
  }
}

int cmd_keygen(const CommandPlan& plan, std::ostream& out) {
  if (!plan.permutation && !plan.rotate) {
    const auto master = generate_master();
    write_file_atomic(plan.out, {master.bytes.begin(), master.bytes.end()}, true);
    out << "wrote 32-byte master secret to " << plan.out << "\n";
    return kExitOk;
  }
  const PermutationKey key =
      plan.rotate ? rotation_key(*plan.rotate) : derive_request_key(generate_master(), generate_nonce());
  if (plan.binary) {
    const auto bytes = key_to_bytes(key);
    write_file_atomic(plan.out, {bytes.begin(), bytes.end()}, true);
  } else {
    const auto text = key_to_text(key) + "\n";
    write_file_atomic(plan.out, {text.begin(), text.end()}, true);
  }
  out << "wrote permutation key to " << plan.out << "\n";
  return kExitOk;
}

int cmd_encrypt(const CommandPlan& plan, std::ostream& out, std::ostream& err) {
  std::optional<PermutationKey> fixed;
  std::optional<MasterSecret> master;
  EnvelopeHeader h;
  h.mode = plan.mode;
  if (plan.mode == KeyMode::FixedKey) {
    fixed = read_key(plan.key);
  } else {
    master = read_master(require_master(plan));
    h.nonce = plan.random_nonce ? generate_nonce() : *plan.nonce;
    if (plan.random_nonce) out << "nonce: " << to_hex(h.nonce) << "\n";
  }

  auto words = read_raw_words(plan.in);
  if (plan.dim) {
    if (*plan.dim == 0 || words.size() % *plan.dim != 0) {
      throw IoError("input '" + plan.in + "' holds " + std::to_string(words.size()) +
                    " words, not a multiple of --dim " + std::to_string(*plan.dim));
    }
    h.dim = *plan.dim;
  } else {
    if (words.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw IoError("input '" + plan.in + "' is too long to be one vector; pass --dim");
    }
    h.dim = static_cast<std::uint32_t>(words.size());
  }
  h.count = h.dim == 0 ? 0 : words.size() / h.dim;

  if (plan.mode != KeyMode::FixedKey && fs::exists(plan.out)) {
    std::ifstream prev(plan.out, std::ios::binary);
    std::vector<std::uint8_t> head(kHeaderBytes);
    if (prev.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()))) {
      try {
        if (parse_header(head).nonce == h.nonce) {
          err << "warning: '" << plan.out << "' was already encrypted with nonce " << to_hex(h.nonce)
              << "; reusing a nonce reuses its keys\n";
        }
      } catch (const Error&) {
      }
    }
  }

  FeatureBatch batch = FeatureBatch::make(std::vector<Word32>(words.size()), h.count, h.dim);
  apply_key(words, batch.words, h, fixed, master, false);

  if (!plan.cascade_key.empty()) {
    const XorKeystreamStage stage{read_cascade_key(plan.cascade_key), h.nonce};
    batch.words = payload_from_bytes(apply_cascade_stage(payload_to_bytes(batch.words), stage));
    h.cascade = true;
  }
  write_file_atomic(plan.out, write_envelope(h, batch));
  return kExitOk;
}

int cmd_decrypt(const CommandPlan& plan) {
  const auto env = read_envelope(read_file(plan.in));
  const EnvelopeHeader& h = env.header;
  std::vector<Word32> words = env.payload.words;
  if (h.cascade) {
    if (plan.cascade_key.empty()) throw UsageError("envelope has a cascade stage; --cascade-key is required");
    const XorKeystreamStage stage{read_cascade_key(plan.cascade_key), h.nonce};
    words = payload_from_bytes(apply_cascade_stage(payload_to_bytes(words), stage));
  }
  std::optional<PermutationKey> fixed;
  std::optional<MasterSecret> master;
  if (h.mode == KeyMode::FixedKey) {
    if (plan.key.empty()) throw UsageError("envelope uses fixed-key mode; --key is required");
    fixed = read_key(plan.key);
  } else {
    master = read_master(require_master(plan));
  }
  std::vector<Word32> plain(words.size());
  apply_key(words, plain, h, fixed, master, true);
  write_file_atomic(plan.out, payload_to_bytes(plain));
  return kExitOk;
}

int cmd_inspect(const CommandPlan& plan, std::ostream& out) {
  const auto env = read_envelope(read_file(plan.in));
  const auto& h = env.header;
  std::ostringstream crc;
  crc << "0x" << std::hex << std::setw(8) << std::setfill('0') << h.checksum;
  if (plan.json) {
    nlohmann::json j{{"version", h.version},
                     {"mode", std::string(to_string(h.mode))},
                     {"dtype", "binary32"},
                     {"cascade", h.cascade},
                     {"nonce", to_hex(h.nonce)},
                     {"count", h.count},
                     {"dim", h.dim},
                     {"checksum", crc.str()}};
    out << j.dump(2) << "\n";
  } else {
    out << "version:  " << static_cast<int>(h.version) << "\n"
        << "mode:     " << to_string(h.mode) << "\n"
        << "dtype:    binary32\n"
        << "cascade:  " << (h.cascade ? "external stage" : "none") << "\n"
        << "nonce:    " << to_hex(h.nonce) << "\n"
        << "count:    " << h.count << "\n"
        << "dim:      " << h.dim << "\n"
        << "checksum: " << crc.str() << "\n";
  }
  return kExitOk;
}

template <class Kernel>
double best_words_per_second(std::span<const Word32> in, std::span<Word32> out, std::size_t repeat,
                             unsigned threads, Kernel kernel) {
  double best = 0.0;
  for (std::size_t r = 0; r < repeat; ++r) {
    const auto start = std::chrono::steady_clock::now();
    if (threads <= 1) {
      kernel(in, out);
    } else {
      // Chunk boundaries stay multiples of 32 so every worker sees full blocks.
      const std::size_t blocks = (in.size() + 31) / 32;
      const std::size_t per = (blocks + threads - 1) / threads * 32;
      std::vector<std::jthread> pool;
      for (std::size_t begin = 0; begin < in.size(); begin += per) {
        const std::size_t n = std::min(per, in.size() - begin);
        pool.emplace_back([&, begin, n] { kernel(in.subspan(begin, n), out.subspan(begin, n)); });
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    best = std::max(best, static_cast<double>(in.size()) / std::max(secs, 1e-9));
  }
  return best;
}

int cmd_bench(const CommandPlan& plan, std::ostream& out) {
  std::mt19937_64 rng(plan.seed);
  std::vector<Word32> words(plan.words);
  for (auto& w : words) w.bits = static_cast<std::uint32_t>(rng());
  std::vector<int> order(kWordBits);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto key = validate_key(order);

  std::vector<Word32> scalar(words.size()), sliced(words.size());
  const double scalar_rate = best_words_per_second(
      words, scalar, plan.repeat, plan.threads,
      [&](std::span<const Word32> i, std::span<Word32> o) { permute_scalar(i, o, key); });
  const double sliced_rate = best_words_per_second(
      words, sliced, plan.repeat, plan.threads,
      [&](std::span<const Word32> i, std::span<Word32> o) { permute_bitsliced(i, o, key); });
  const bool match = scalar == sliced;

  if (plan.json) {
    nlohmann::json j{{"words", plan.words},
                     {"threads", plan.threads},
                     {"scalar_words_per_second", scalar_rate},
                     {"bitsliced_words_per_second", sliced_rate},
                     {"speedup", sliced_rate / scalar_rate},
                     {"outputs_match", match}};
    out << j.dump(2) << "\n";
  } else {
    out << std::fixed << std::setprecision(0) << "words:                      " << plan.words << "\n"
        << "scalar_words_per_second:    " << scalar_rate << "\n"
        << "bitsliced_words_per_second: " << sliced_rate << "\n"
        << std::setprecision(2) << "speedup:                    " << sliced_rate / scalar_rate << "\n"
        << "outputs_match:              " << (match ? "true" : "false") << "\n";
  }
  return match ? kExitOk : kExitFailure;
}

int cmd_attack_demo(const CommandPlan& plan, std::ostream& out) {
  harness::HarnessConfig cfg;
  cfg.seed = plan.seed;
  const auto r = harness::run_harness(cfg);
  const auto& fa = r.frequency_attack;
  if (plan.json) {
    nlohmann::json j{{"plain_balanced_accuracy", r.plain_balanced_accuracy},
                     {"cipher_balanced_accuracy", r.cipher_balanced_accuracy},
                     {"keyspace", r.keyspace},
                     {"frequency_attack_result",
                      {{"words", fa.words},
                       {"positions_recovered", fa.positions_recovered},
                       {"exact", fa.exact},
                       {"ambiguous", fa.ambiguous}}},
                     {"seed", r.seed}};
    out << j.dump(2) << "\n";
  } else {
    out << std::fixed << std::setprecision(4) << "seed:                     " << r.seed << "\n"
        << "plain_balanced_accuracy:  " << r.plain_balanced_accuracy << "\n"
        << "cipher_balanced_accuracy: " << r.cipher_balanced_accuracy << "\n"
        << "keyspace:                 " << r.keyspace << "\n"
        << "frequency_attack_result:  " << fa.positions_recovered << "/32 positions recovered from " << fa.words
        << " fixed-key words (" << (fa.exact ? "exact key" : "partial") << (fa.ambiguous ? ", ambiguous" : "")
        << ")\n";
  }
  return kExitOk;
}

int cmd_analyze_freq(const CommandPlan& plan, std::ostream& out) {
  const auto env = read_envelope(read_file(plan.in));
  if (env.payload.words.empty()) throw Error(ErrorCode::EmptyBatch, "envelope '" + plan.in + "' has no payload");
  const auto cipher = bit_frequency_profile(env.payload.words);

  std::optional<harness::KeyRecovery> recovery;
  if (!plan.plain.empty()) {
    const auto plain_words = read_raw_words(plan.plain);
    if (plain_words.empty()) throw IoError("reference plaintext '" + plan.plain + "' is empty");
    const auto plain = bit_frequency_profile(plain_words);
    // Twice the worst-case sampling error of either profile.
    const double n = static_cast<double>(std::min(plain_words.size(), env.payload.words.size()));
    recovery = harness::recover_key_from_frequencies(plain, cipher, 2.0 * std::sqrt(0.25 / n));
  }

  if (plan.json) {
    nlohmann::json j{{"words", env.payload.words.size()}, {"mode", std::string(to_string(env.header.mode))},
                     {"profile", cipher}};
    if (recovery) {
      j["recovered_key"] = key_to_text(recovery->key);
      j["ambiguous"] = recovery->ambiguous;
    }
    out << j.dump(2) << "\n";
  } else {
    out << "words: " << env.payload.words.size() << "  mode: " << to_string(env.header.mode) << "\n";
    out << std::fixed << std::setprecision(6);
    for (std::size_t p = 0; p < kWordBits; ++p) out << "position " << std::setw(2) << p << ": " << cipher[p] << "\n";
    if (recovery) {
      out << "recovered_key: " << key_to_text(recovery->key) << "\n"
          << "ambiguous:     " << (recovery->ambiguous ? "true" : "false") << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes, bool owner_only) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, owner_only ? 0600 : 0644);
  if (fd < 0) throw IoError("cannot create '" + tmp + "': " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      ::unlink(tmp.c_str());
      throw IoError("cannot write '" + tmp + "': " + why);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    const std::string why = std::strerror(errno);
    ::unlink(tmp.c_str());
    throw IoError("cannot flush '" + tmp + "': " + why);
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    const std::string why = std::strerror(errno);
    ::unlink(tmp.c_str());
    throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + why);
  }
}

CommandPlan parse_args(const std::vector<std::string>& args, const std::optional<std::string>& env_master) {
  CommandPlan plan;
  CLI::App app{"Keyed bit-position shuffling for binary32 feature vectors", "shufflebits"};
  app.require_subcommand(1);

  std::string mode_name = "per-request";
  std::string nonce_hex;
  std::size_t dim = 0;
  long long rotate = 0;
  const std::map<std::string, KeyMode> modes{
      {"fixed", KeyMode::FixedKey}, {"per-request", KeyMode::PerRequest}, {"per-element", KeyMode::PerElement}};

  auto* keygen = app.add_subcommand("keygen", "Write a fresh master secret or permutation key");
  keygen->add_option("--out", plan.out, "Output path")->required();
  keygen->add_flag("--permutation", plan.permutation, "Write a random permutation key instead of a master secret");
  auto* rotate_opt = keygen->add_option("--rotate", rotate, "Write the key that rotates words left by N bits");
  keygen->add_flag("--binary", plan.binary, "Write the 32-byte binary key form instead of text");

  auto* encrypt = app.add_subcommand("encrypt", "Encrypt raw little-endian binary32 data into a .shfb envelope");
  encrypt->add_option("--in", plan.in, "Raw input file")->required();
  encrypt->add_option("--out", plan.out, "Envelope output path")->required();
  encrypt->add_option("--mode", mode_name, "Key mode")->check(CLI::IsMember({"fixed", "per-request", "per-element"}));
  encrypt->add_option("--master", plan.master, "Master secret file");
  auto* nonce_opt = encrypt->add_option("--nonce", nonce_hex, "Nonce as 24 hex characters");
  auto* random_opt = encrypt->add_flag("--random-nonce", plan.random_nonce, "Generate and print a fresh nonce");
  nonce_opt->excludes(random_opt);
  encrypt->add_option("--key", plan.key, "Permutation key file (fixed mode)");
  auto* dim_opt = encrypt->add_option("--dim", dim, "Feature dimensionality per vector")->check(CLI::PositiveNumber);
  encrypt->add_option("--cascade-key", plan.cascade_key, "32-byte key for the XOR-keystream cascade stage");

  auto* decrypt = app.add_subcommand("decrypt", "Decrypt a .shfb envelope to raw little-endian binary32 data");
  decrypt->add_option("--in", plan.in, "Envelope input")->required();
  decrypt->add_option("--out", plan.out, "Raw output path")->required();
  decrypt->add_option("--master", plan.master, "Master secret file");
  decrypt->add_option("--key", plan.key, "Permutation key file used for encryption (fixed mode)");
  decrypt->add_option("--cascade-key", plan.cascade_key, "32-byte key for the XOR-keystream cascade stage");

  auto* inspect = app.add_subcommand("inspect", "Print envelope header fields");
  inspect->add_option("--in", plan.in, "Envelope input")->required();
  inspect->add_flag("--json", plan.json, "Emit JSON");

  auto* bench = app.add_subcommand("bench", "Compare scalar and bit-sliced throughput");
  bench->add_option("--words", plan.words, "Words per run")->check(CLI::PositiveNumber);
  bench->add_option("--repeat", plan.repeat, "Runs per path; the best is reported")->check(CLI::PositiveNumber);
  bench->add_option("--threads", plan.threads, "Worker threads")->check(CLI::Range(1u, 256u));
  bench->add_option("--seed", plan.seed, "Data and key seed");
  bench->add_flag("--json", plan.json, "Emit JSON");

  auto* attack = app.add_subcommand("attack-demo", "Run the attribute-probe and frequency-attack demonstration");
  attack->add_option("--seed", plan.seed, "Harness seed");
  attack->add_flag("--json", plan.json, "Emit JSON");

  auto* analyze = app.add_subcommand("analyze-freq", "Print the per-position bit frequencies of an envelope payload");
  analyze->add_option("--in", plan.in, "Envelope input")->required();
  analyze->add_option("--plain", plan.plain, "Raw plaintext sample; enables frequency key recovery");
  analyze->add_flag("--json", plan.json, "Emit JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  if (chosen->get_help_ptr() != nullptr && chosen->get_help_ptr()->count() > 0) throw HelpRequested(chosen->help());

  if (name == "keygen") {
    plan.subcommand = Subcommand::Keygen;
    if (rotate_opt->count() > 0) plan.rotate = rotate;
  } else if (name == "encrypt") {
    plan.subcommand = Subcommand::Encrypt;
    plan.mode = modes.at(mode_name);
    if (dim_opt->count() > 0) {
      if (dim > std::numeric_limits<std::uint32_t>::max()) throw UsageError("--dim must fit in 32 bits");
      plan.dim = static_cast<std::uint32_t>(dim);
    }
    if (plan.mode == KeyMode::FixedKey) {
      if (plan.key.empty()) throw UsageError("--mode fixed requires --key");
    } else {
      if (plan.master.empty() && env_master) plan.master = *env_master;
      if (plan.master.empty()) throw UsageError("--master (or SHUFFLEBITS_MASTER) is required");
      if (nonce_opt->count() == 0 && !plan.random_nonce) throw UsageError("--nonce or --random-nonce is required");
    }
    if (nonce_opt->count() > 0) {
      try {
        plan.nonce = nonce_from_hex(nonce_hex);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
    }
  } else if (name == "decrypt") {
    plan.subcommand = Subcommand::Decrypt;
    if (plan.master.empty() && env_master) plan.master = *env_master;
  } else if (name == "inspect") {
    plan.subcommand = Subcommand::Inspect;
  } else if (name == "bench") {
    plan.subcommand = Subcommand::Bench;
  } else if (name == "attack-demo") {
    plan.subcommand = Subcommand::AttackDemo;
  } else {
    plan.subcommand = Subcommand::AnalyzeFreq;
  }
  return plan;
}

int execute(const CommandPlan& plan, std::ostream& out, std::ostream& err) {
  try {
    switch (plan.subcommand) {
      case Subcommand::Keygen: return cmd_keygen(plan, out);
      case Subcommand::Encrypt: return cmd_encrypt(plan, out, err);
      case Subcommand::Decrypt: return cmd_decrypt(plan);
      case Subcommand::Inspect: return cmd_inspect(plan, out);
      case Subcommand::Bench: return cmd_bench(plan, out);
      case Subcommand::AttackDemo: return cmd_attack_demo(plan, out);
      case Subcommand::AnalyzeFreq: return cmd_analyze_freq(plan, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << (plan.in.empty() ? "" : "'" + plan.in + "': ") << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::optional<std::string> env_master;
  if (const char* v = std::getenv("SHUFFLEBITS_MASTER"); v != nullptr && *v != '\0') env_master = v;
  CommandPlan plan;
  try {
    plan = parse_args(args, env_master);
  } catch (const HelpRequested& h) {
    out << h.what();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }
  return execute(plan, out, err);
}

}  // namespace shufflebits::cli
