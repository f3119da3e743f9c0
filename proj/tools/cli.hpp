#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shufflebits/keystream.hpp"

namespace shufflebits::cli {

enum class Subcommand { Keygen, Encrypt, Decrypt, Inspect, Bench, AttackDemo, AnalyzeFreq };

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CommandPlan {
  Subcommand subcommand = Subcommand::Inspect;

  std::string in;
  std::string out;
  std::string master;       // master-secret path, possibly from SHUFFLEBITS_MASTER
  std::string key;          // permutation key file (fixed mode)
  std::string cascade_key;  // 32-byte key for the reference cascade stage
  std::string plain;        // reference plaintext for analyze-freq

  KeyMode mode = KeyMode::PerRequest;
  std::optional<Nonce> nonce;
  bool random_nonce = false;
  std::optional<std::uint32_t> dim;

  bool permutation = false;
  std::optional<long long> rotate;
  bool binary = false;

  std::size_t words = std::size_t{1} << 20;
  std::size_t repeat = 3;
  unsigned threads = 1;
  std::uint64_t seed = 1501;
  bool json = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for --help; carries the rendered help text.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `args` excludes the program name. `env_master` stands in for
/// SHUFFLEBITS_MASTER.
CommandPlan parse_args(const std::vector<std::string>& args, const std::optional<std::string>& env_master = {});

int execute(const CommandPlan& plan, std::ostream& out, std::ostream& err);

/// parse_args + execute with exit-code mapping.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes, bool owner_only = false);

}  // namespace shufflebits::cli
