#pragma once

// The Psi_p moment function, the gamma_p inflation factors of the tabulation
// moment bounds, and the tail bounds derived from them. All logarithms are
// natural.

#include <cstdint>
#include <string>
#include <vector>

#include "tabhash/tabulation.hpp"
#include "tabhash/valuefn.hpp"

namespace tabhash {

struct PsiInput {
  double p = 2.0;
  double max_abs = 1.0;  // M
  double sigma2 = 1.0;   // sigma^2
};

// Which branch of Psi_p applies. `degenerate` covers M = 0 or sigma^2 = 0,
// where Psi_p is defined as 0.
enum class PsiCase : int { degenerate = 0, sparse = 1, gaussian = 2, poisson = 3 };

// Throws DomainError for p < 2, negative or non-finite M, sigma^2.
PsiCase psi_case(const PsiInput& in);

// Psi_p(M, sigma^2):
//   (sigma^2 / (p M^2))^{1/p} M        if p < log(p M^2 / sigma^2)
//   sqrt(p) sigma / 2                  if p < e^2 sigma^2 / M^2
//   p M / (e log(p M^2 / sigma^2))     otherwise
double psi(const PsiInput& in);

// M sup_{2 <= s <= p} (p/s) (sigma^2 / (p M^2))^{1/s}, evaluated at the
// closed-form maximizer and confirmed on a grid refined by golden section.
double psi_sup_form(const PsiInput& in);

struct PropertyCheck {
  std::string name;
  bool applicable = true;
  bool pass = true;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack() const { return rhs - lhs; }
};

struct PsiPropertyReport {
  std::vector<PropertyCheck> checks;
  bool all_pass() const;
};

// Sup-form equality, the Bernstein-type upper bound, the sqrt(p) sigma / 2
// lower bound, the far-out bound (only when e^2 sigma^2 / M^2 <= p) and the
// two growth inequalities for `lambda` >= 1.
PsiPropertyReport psi_property_checks(const PsiInput& in, double lambda);

// Universal constants the moment theorems leave symbolic. Defaults are
// configuration, not derived values.
struct ConstantPolicy {
  double sampling_l = 16.0 * 2.718281828459045;  // L of the fully random bound
  double l1 = 1.0;                               // L_1
  double k_c_base = 2.0;                         // L_2 in K_c = (L_2 c)^{c-1}
  double markov_l = 16.0 * 2.718281828459045;    // L of the Markov tail

  void validate() const;
};

struct GammaInput {
  double p = 2.0;
  std::uint64_t m = 2;
  unsigned c = 1;
  std::uint64_t alphabet = 2;
  double spread = 1.0;
  double weight_ratio = 1.0;
};

// max{log m + log(weight_ratio)/c, p} / log(e^2 m / spread).
double gamma_p_simple(const GammaInput& in);
// max{1, log m / log|Sigma|, p / log|Sigma|}.
double gamma_p_mixed(double p, std::uint64_t m, std::uint64_t alphabet);
// max{1, p / log(e^2 m / spread)}: the lower-bound instance's gamma_p.
double gamma_p_lower_bound(double p, std::uint64_t m, double spread);
// max{1, p / log|Sigma|}: gamma_p of the mixed sign-sum inequality.
double gamma_p_khintchine(double p, std::uint64_t alphabet);

GammaInput gamma_input(double p, const ValueStats& stats, const SchemeParams& params);

// L Psi_p(M_v, sigma_v^2).
double moment_bound_fully_random(double p, const ValueStats& stats, const ConstantPolicy& policy = {});
// L_1 Psi_p(K_c g^{c-1} M_v, K_c g^{c-1} sigma_v^2) with K_c = (L_2 c)^{c-1}.
double moment_bound_simple_tab(double p, const ValueStats& stats, const SchemeParams& params,
                               const ConstantPolicy& policy = {});
// Psi_p(K_c g^c M_v, K_c g^c sigma_v^2) with K_c = L_1 (L_2 c)^c.
double moment_bound_mixed_tab(double p, const ValueStats& stats, const SchemeParams& params,
                              const ConstantPolicy& policy = {});

// Constant-free shapes Psi_p(g^e M_v, g^e sigma_v^2) with e = c-1 (simple)
// or e = c (mixed); the acceptance ratios are taken against these.
double simple_tab_shape(double p, const ValueStats& stats, const SchemeParams& params);
double mixed_tab_shape(double p, const ValueStats& stats, const SchemeParams& params);

// Theorem bound matching a scheme kind.
double moment_bound(SchemeKind kind, double p, const ValueStats& stats, const SchemeParams& params,
                    const ConstantPolicy& policy = {});
double moment_shape(SchemeKind kind, double p, const ValueStats& stats, const SchemeParams& params);

// C(x) = (x + 1) log(x + 1) - x.
double bennett_c(double x);

// min(1, 2 exp(-(sigma^2/M^2) C(t M / sigma^2))).
double bennett_tail(double t, double max_abs, double sigma2);
// The two-branch relaxation: 2 exp(-t^2 / (3 sigma^2)) for t <= sigma^2/M,
// else 2 exp(-(t / (2M)) log(1 + t M / sigma^2)); clamped to 1.
double bennett_tail_simplified(double t, double max_abs, double sigma2);

struct MarkovTail {
  double probability = 1.0;  // clamped to [0, 1]
  double raw = 1.0;          // unclamped branch value
  double p = 2.0;            // moment used by Markov's inequality
  int branch = 1;
};

// Tail bound from ||Y - EY||_p <= L Psi_p(M, sigma^2) for all p via Markov.
MarkovTail markov_tail_from_psi(double t, double max_abs, double sigma2, double l);

// exp(-(sigma^2/M^2) C(t M/sigma^2) / K_{c,gamma}) + |U|^{-gamma}, clamped to 1,
// with K_{c,gamma} = L_1 (L_2 c^2 gamma)^c. Requires m <= |U|^gamma.
double mixed_tail(double t, const ValueStats& stats, const SchemeParams& params, double gamma,
                  const ConstantPolicy& policy = {});

// E[|X - lambda|^p]^{1/p} for X ~ Poisson(lambda), by summing the pmf up to a
// cutoff that is doubled until the result is stable to 1e-12 relative.
double poisson_central_pnorm(double lambda, double p);

}  // namespace tabhash
