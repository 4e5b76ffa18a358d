#pragma once

// Command-line front end: descriptor parsing, run configuration, dispatch and
// the self-test suite.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabhash/tabulation.hpp"
#include "tabhash/valuefn.hpp"

namespace tabhash {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitBudget = 3 };

// Bad flags, missing required options or malformed descriptors.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// "simple:k=8,c=4,l=16", "mixed:k=8,c=4,d=1,l=16", "random:k=8,c=4,l=16".
SchemeDescriptor parse_scheme(const std::string& text);

// "bin:target=0,w=uniform", "threshold:l=64,w=uniform" with optional
// keys=all|random:<n>|cube:<side> (default all), or "file:<path>" with CSV
// rows key,bin,value. Numeric w scales every key.
struct ValueDescriptor {
  enum class Kind { bin, threshold, file } kind = Kind::bin;
  std::uint64_t parameter = 0;  // target bin or threshold l
  double weight = 1.0;
  enum class Keys { all, random, cube } keys = Keys::all;
  std::uint64_t key_count = 0;  // n for random, side for cube
  std::string path;
};

ValueDescriptor parse_value(const std::string& text);
ValueFunction build_value(const ValueDescriptor& desc, const SchemeParams& params, std::uint64_t seed);
std::vector<WeightedKey> build_weights(const ValueDescriptor& desc, const SchemeParams& params, std::uint64_t seed);

// Comma-separated reals, each >= 2 ("ln" is not accepted here).
std::vector<double> parse_p_list(const std::string& text);
// Decimal or 0x-hex.
std::uint64_t parse_u64(const std::string& text);

struct RunConfig {
  std::string command;
  std::string scheme;
  std::string value;
  std::vector<double> ps{2.0, 4.0, 8.0};
  std::string mode = "mc";  // exact | mc
  std::uint64_t samples = 10000;
  std::uint64_t seed = 1;
  std::string sign = "none";  // none | simple | mixed
  std::optional<std::uint64_t> query;
  std::string theorem = "simple";  // random | simple | mixed
  std::string grid = "std";        // std | tiny
  bool query_sweep = false;
  std::string format = "csv";  // csv | json
  double max_abs = 1.0;
  double sigma2 = 1.0;
  std::vector<std::uint64_t> keys;
  std::uint64_t key_count = 0;
  std::uint64_t balls = 1 << 16;
  double red_fraction = 1.0 / 3.0;
  std::uint64_t bins = 256;
  std::uint64_t trials = 100;
  std::optional<std::uint64_t> permute_seed;
  bool strict = false;
  std::uint64_t bench_keys = 1000000;
  bool quick = false;
  bool inject_fault = false;
  // Not part of the replay identity.
  std::string output;
  unsigned threads = 1;
  std::string config_path;

  // Fields that determine the output, in fixed order.
  nlohmann::ordered_json to_json() const;
  std::string config_hash() const;
};

// Throws UsageError. TABHASH_THREADS overrides --threads; --config <path>
// supplies fields not given on the command line.
RunConfig parse_args(int argc, const char* const* argv);

// Fills fields absent from `given` (option names without dashes).
void apply_config_json(RunConfig& config, const nlohmann::json& j, const std::vector<std::string>& given);

// "# tabhash config_hash=<hex> config=<json>".
std::string csv_header(const RunConfig& config);

// Runs the command, writing results to `out` (or config.output) and
// diagnostics to `err`. Returns an ExitCode.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

struct SelftestRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<SelftestRow> selftest_rows(bool quick, bool inject_fault, unsigned threads = 1);
int selftest(bool quick, bool inject_fault, unsigned threads, std::ostream& out);

// Parses and runs, mapping errors to exit codes.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tabhash
