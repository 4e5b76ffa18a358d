#pragma once

// Packaged experiments: the adversarial lower-bound instance, bound sweeps,
// query-conditioned sweeps, independence tests, k-partition MinHash and a
// throughput bench.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabhash/bounds.hpp"
#include "tabhash/moments.hpp"
#include "tabhash/tabulation.hpp"
#include "tabhash/valuefn.hpp"

namespace tabhash {

// CSV table of preformatted cells; cells containing commas are quoted.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  std::string to_csv() const;
};

// n distinct keys drawn from the universe of `params`.
std::vector<Key> random_keys(const SchemeParams& params, std::size_t n, std::uint64_t seed);
// [side]^{c-1} x Sigma, sorted.
std::vector<Key> cube_keys(const SchemeParams& params, std::uint64_t side);

// S = [r]^{c-1} x Sigma with v(x, j) = [x in S]([j = 0] - 1/m) and
// r = 1 + floor(p / log(e^2 m / (4(1 - 1/m)))), so r = 1 while that ratio is below 1.
struct LowerBoundInstance {
  SchemeParams params;
  double p = 2.0;
  double gamma = 1.0;  // max{1, p / log(e^2 m / (4(1 - 1/m)))}
  std::uint64_t r = 1;
  std::vector<Key> keys;
  ValueFunction v;
  ValueStats stats;

  // Psi_p(gamma^{c-1} M_v, gamma^{c-1} sigma_v^2).
  double shape() const;
};

// Throws RangeError when p > L_1 |Sigma| log m or 1 + floor(gamma_p) > |Sigma|.
LowerBoundInstance build_lower_bound_instance(const SchemeParams& params, double p, const ConstantPolicy& policy = {});

// Exact ||V - E V||_p under simple tabulation for the instance, for each p.
std::vector<double> lower_bound_exact_pnorms(const LowerBoundInstance& inst, const std::vector<double>& ps);

struct LowerBoundRow {
  double p = 2.0;
  double gamma = 1.0;
  std::uint64_t r = 1;
  std::uint64_t support = 0;
  double norm = 0.0;
  double shape = 0.0;
  double ratio = 0.0;
};

// One instance per p, each evaluated at its own p.
std::vector<LowerBoundRow> lower_bound_sweep(const SchemeParams& params, const std::vector<double>& ps,
                                             const ConstantPolicy& policy = {});
Table lower_bound_table(const std::vector<LowerBoundRow>& rows);

enum class SweepGrid { standard, tiny };

struct SweepConfig {
  SchemeKind theorem = SchemeKind::simple;
  SweepGrid grid = SweepGrid::standard;
  std::uint64_t samples = 10000;
  std::uint64_t base_seed = 1;
  unsigned threads = 1;
  ConstantPolicy policy;
};

struct SweepRow {
  std::string scheme;
  std::string value;
  unsigned c = 0;
  std::uint64_t m = 0;
  std::uint64_t n = 0;
  double p = 2.0;
  MomentEstimate estimate;
  double gamma = 1.0;  // gamma_p of the theorem (1 for fully random)
};

// For every (c, m, value function) of the grid, Monte Carlo p-norms of the
// hash-based sum next to the theorem's bound and constant-free shape.
//   standard: c in {2,3,4}, k = 8, m in {2^8, 2^16}, p in {2,4,8,16,ln n};
//             single-bin on 4096 random keys, threshold l = m/4 on the same
//             keys, single-bin on [4]^{c-1} x Sigma.
//   tiny:     c = 2, k = 4, m = 2^4, 256 samples floor.
std::vector<SweepRow> run_bound_sweep(const SweepConfig& config);
Table sweep_table(const std::vector<SweepRow>& rows);

struct QuerySweepRow {
  std::string scheme;
  unsigned c = 0;
  std::uint64_t m = 0;
  std::uint64_t n = 0;
  double p = 2.0;
  double estimate = 0.0;  // aggregate over query bins
  double std_error = 0.0;
  double shape = 0.0;
  double max_bucket_shape_ratio = 0.0;
  std::uint64_t buckets = 0;
};

// Collision-weight query value function (keys sharing h(q)'s bin) for simple
// and mixed tabulation; conditional moments bucketed by h(q).
std::vector<QuerySweepRow> run_query_sweep(const SweepConfig& config);
Table query_sweep_table(const std::vector<QuerySweepRow>& rows);

struct IndependenceReport {
  bool three_wise_uniform = false;
  std::uint64_t triples = 0;
  std::uint64_t fillings = 0;
  std::uint64_t seeds = 0;
  double simple_xor_zero_fraction = 0.0;
  double mixed_xor_zero_fraction = 0.0;
};

// Exhaustive 3-wise uniformity of simple tabulation on `tiny` (at most 16 key
// bits), and the frequency over `seeds` seeds with which
// h(00) ^ h(01) ^ h(10) ^ h(11) = 0 for simple tabulation on `simple` and
// mixed tabulation on `mixed` (keys differ in the first two characters).
IndependenceReport independence_test(const SchemeParams& tiny, const SchemeParams& simple,
                                     const SchemeParams& mixed, std::uint64_t seeds, std::uint64_t base_seed = 1);

struct KPartitionConfig {
  std::uint64_t n_balls = 1 << 16;
  double red_fraction = 1.0 / 3.0;
  std::uint64_t k_bins = 256;
  SchemeDescriptor scheme{SchemeKind::mixed, {8, 4, 32, 1}};
  std::uint64_t trials = 100;
  std::uint64_t base_seed = 1;
  // Red balls are a random subset instead of the first ones.
  std::optional<std::uint64_t> color_permutation_seed;
  // Reject configurations violating k <= |Sigma| / (4 d ln|Sigma|).
  bool strict = false;
  unsigned threads = 1;

  void validate() const;
  bool within_alphabet_bound() const;
};

struct KPartitionTrial {
  double estimate = 0.0;
  double error = 0.0;
  std::uint64_t nonempty_bins = 0;
  std::uint64_t y = 0;  // balls whose local value has q leading zeros
};

struct KPartitionReport {
  std::vector<KPartitionTrial> trials;
  unsigned q = 0;
  double expected_y = 0.0;
  double y_band = 0.0;  // 8 sqrt(ln|Sigma| / |Sigma|)
  double error_threshold = 0.0;  // 5 / sqrt(k)
  std::uint64_t within_error = 0;
  std::uint64_t y_within_band = 0;
  bool within_alphabet_bound = true;
};

KPartitionReport minhash_kpartition(const KPartitionConfig& config);

// q = ceil(log2(n / (2|Sigma|/3))), clamped at 0.
unsigned minhash_mask_bits(std::uint64_t n, std::uint64_t alphabet);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);

struct BenchReport {
  std::uint64_t keys = 0;
  double simple_ns = 0.0;
  double mixed_ns = 0.0;
  double ratio = 0.0;
  double simple_repeat_ns = 0.0;
  std::uint64_t simple_table_bytes = 0;
  std::uint64_t checksum = 0;
};

// Hashes a fixed pseudo-random stream of keys with simple and mixed
// tabulation of the given shape; wall-clock timings, report only.
BenchReport throughput_bench(const SchemeParams& params, std::uint64_t n_keys, std::uint64_t seed = 1);

}  // namespace tabhash
