#pragma once

// Central p-norms of hash-based sums: exhaustive enumeration over all table
// fillings on tiny instances, and seeded Monte Carlo with jackknife standard
// errors at desk scale.

#include <cstdint>
#include <string>
#include <vector>

#include "tabhash/bounds.hpp"
#include "tabhash/tabulation.hpp"
#include "tabhash/valuefn.hpp"

namespace tabhash {

enum class SignMode { none, simple_sign, mixed_sign };
enum class MomentMode { exact, monte_carlo };

std::string to_string(SignMode mode);
std::string to_string(MomentMode mode);

inline constexpr std::uint64_t kMaxExactSupport = 256;
inline constexpr std::uint64_t kJackknifeBlock = 100;
inline constexpr std::uint64_t kMinSamples = 100;

struct MomentRequest {
  SchemeDescriptor scheme;
  std::vector<double> ps{2.0, 4.0, 8.0};
  MomentMode mode = MomentMode::monte_carlo;
  std::uint64_t samples = 10000;
  std::uint64_t base_seed = 1;
  SignMode sign_mode = SignMode::none;
  unsigned threads = 1;
  ConstantPolicy policy;

  // Throws DomainError for p < 2, too few samples or a sign mode that does
  // not fit the scheme.
  void validate() const;
};

struct MomentEstimate {
  double p = 2.0;
  double estimate = 0.0;   // ||X - E X||_p
  double std_error = 0.0;  // 0 in exact mode
  double bound = 0.0;      // theorem bound with the policy constants
  double ratio = 0.0;      // estimate / bound
  double shape = 0.0;      // constant-free Psi_p shape
  double shape_ratio = 0.0;
};

struct BucketMoments {
  std::uint64_t query_bin = 0;
  std::uint64_t count = 0;
  ValueStats stats;
  std::vector<MomentEstimate> estimates;
};

struct MomentReport {
  std::string scheme;
  MomentMode mode = MomentMode::monte_carlo;
  SignMode sign_mode = SignMode::none;
  std::uint64_t samples = 0;  // Monte Carlo samples or table fillings
  std::uint64_t base_seed = 0;
  double mean = 0.0;  // exact E X, or the analytic 0 in Monte Carlo mode
  ValueStats stats;
  std::vector<MomentEstimate> estimates;
  // Conditioned on h(q), one entry per observed query bin (query sums only).
  std::vector<BucketMoments> buckets;
  double wall_seconds = 0.0;

  // Fixed field order. Timing is included only when asked for.
  std::string to_json(bool with_timing = false) const;
  // Rows: bucket,p,estimate,std_error,bound,ratio,shape,shape_ratio.
  std::string to_csv() const;
};

// One evaluation of the statistic; `bucket` is h(q) for query sums, else 0.
struct Observation {
  double value = 0.0;
  std::uint64_t bucket = 0;
};

// exp((1/p) (logsumexp_i p log|x_i - center| - log n)).
double pnorm(const std::vector<double>& values, double p, double center = 0.0);

struct JackknifeResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

// p-norm with delete-one-block jackknife over blocks of kJackknifeBlock
// consecutive samples; the remainder joins the last block.
JackknifeResult jackknife_pnorm(const std::vector<double>& values, double p, double center = 0.0);

// Seeds of Monte Carlo sample i.
std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t i);
std::uint64_t sign_seed(std::uint64_t sample_seed);

// Table shapes enumerated for a scheme (plus sign tables when requested). A
// fully random function is one table indexed by the whole key.
std::vector<TableShape> enumeration_shapes(const SchemeDescriptor& scheme, SignMode sign);

// Exact ||N_0 - E N_0||_p under simple tabulation, N_0 = #{x in [side]^{c-1} x Sigma : h(x) = 0}.
// Prefix rows enter only through how their `side` used entries fall into the m
// bins, so the law is a mixture over occupancy vectors of sums of |Sigma|
// i.i.d. draws. Throws SizeError when too many occupancy vectors arise.
std::vector<double> cube_single_bin_pnorms(const SchemeParams& params, std::uint64_t side,
                                           const std::vector<double>& ps);

// Enumerates all table fillings. When that is over budget, uniform single-bin
// functions on [side]^{c-1} x Sigma under simple tabulation without signs use
// cube_single_bin_pnorms; `samples` is then 0.
MomentReport exact_moments(const MomentRequest& req, const ValueFunction& v);
MomentReport monte_carlo_moments(const MomentRequest& req, const ValueFunction& v);
MomentReport estimate_moments(const MomentRequest& req, const ValueFunction& v);

// Query-conditioned sums: per-bucket moments around the bucket mean (exact)
// or 0 (Monte Carlo), plus the aggregate over all buckets.
MomentReport exact_query_moments(const MomentRequest& req, const QueryValueFunction& v);
MomentReport monte_carlo_query_moments(const MomentRequest& req, const QueryValueFunction& v);
MomentReport estimate_query_moments(const MomentRequest& req, const QueryValueFunction& v);

// sum_j (sum_x eps(x) v(x, h(x) xor j))^2. Throws SizeError above 2^26 cells.
double sum_of_squares_statistic(const ValueFunction& v, const SimpleTabHash& h, const SignFunction& eps);

// max{1, (p / (2 log(e^2 m sum||v[x]||_2^2 / sum||v[x]||_1^2)))^c} sum||v[x]||_2^2,
// the constant-free bound on the p/2-norm of the statistic.
double sum_of_squares_shape(double p, const ValueStats& stats, const SchemeParams& params);

struct SumOfSquaresReport {
  double p = 2.0;
  double norm = 0.0;  // ||S||_{p/2}
  double std_error = 0.0;
  double shape = 0.0;
  double ratio = 0.0;
};

// Monte Carlo p/2-norms of the statistic over seeds (simple scheme only).
std::vector<SumOfSquaresReport> sum_of_squares_moments(const MomentRequest& req, const ValueFunction& v);

struct SymmetrizationRow {
  double p = 2.0;
  double plain = 0.0;   // ||sum v(x, h(x))||_p
  double signed_norm = 0.0;  // ||sum eps(x) v(x, h(x))||_p
  double lower = 0.0;   // 2^-c signed_norm
  double upper = 0.0;   // 2^c signed_norm
  bool pass = true;
};

struct SymmetrizationReport {
  std::vector<SymmetrizationRow> rows;
  bool all_pass() const;
};

// Exhaustive two-sided check 2^-c ||sum eps v||_p <= ||sum v||_p <= 2^c ||sum eps v||_p
// for simple tabulation. Throws SizeError when not enumerable.
SymmetrizationReport symmetrization_check(const ValueFunction& v, const SchemeParams& params,
                                          const std::vector<double>& ps, unsigned threads = 1);

struct KhintchineRow {
  double p = 2.0;
  double norm = 0.0;  // ||sum w(x) eps(x)||_p under the mixed sign function
  double std_error = 0.0;
  double gamma = 1.0;
  double rhs = 0.0;  // sqrt(p) sqrt(sum w^2) gamma^{c/2}
  double ratio = 0.0;
  double rademacher = 0.0;  // same norm for i.i.d. signs
  double rademacher_std_error = 0.0;
  double khintchine_rhs = 0.0;  // sqrt(p) sqrt(e sum w^2)
  double rademacher_ratio = 0.0;
};

struct KhintchineReport {
  bool exact = false;
  std::uint64_t samples = 0;
  std::vector<KhintchineRow> rows;
};

// Sign sums sum_x w(x) eps(x) for the mixed sign function of `params`
// (d >= 1). Exact when the sign-relevant tables are enumerable and `trials`
// is 0, Monte Carlo otherwise.
KhintchineReport khintchine_check(const std::vector<WeightedKey>& weights, const SchemeParams& params,
                                  const std::vector<double>& ps, std::uint64_t trials, std::uint64_t base_seed,
                                  unsigned threads = 1);

}  // namespace tabhash
