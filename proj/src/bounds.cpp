#include "tabhash/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace tabhash {

namespace {

constexpr double kE = std::numbers::e;
constexpr double kE2 = kE * kE;

void check_p(double p) {
  if (!(p >= 2.0) || !std::isfinite(p)) throw DomainError("Psi_p needs p >= 2");
}

void check_input(const PsiInput& in) {
  check_p(in.p);
  if (!(in.max_abs >= 0.0) || !std::isfinite(in.max_abs)) throw DomainError("Psi_p needs finite M >= 0");
  if (!(in.sigma2 >= 0.0) || !std::isfinite(in.sigma2)) throw DomainError("Psi_p needs finite sigma^2 >= 0");
}

// log(p M^2 / sigma^2).
double log_ratio(const PsiInput& in) {
  return std::log(in.p) + 2.0 * std::log(in.max_abs) - std::log(in.sigma2);
}

double log_sup_term(double p, double log_alpha, double s) { return std::log(p) - std::log(s) + log_alpha / s; }

}  // namespace

PsiCase psi_case(const PsiInput& in) {
  check_input(in);
  if (in.max_abs == 0.0 || in.sigma2 == 0.0) return PsiCase::degenerate;
  const double lr = log_ratio(in);
  if (in.p < lr) return PsiCase::sparse;
  if (lr < 2.0) return PsiCase::gaussian;
  return PsiCase::poisson;
}

double psi(const PsiInput& in) {
  const double lr = (in.max_abs > 0.0 && in.sigma2 > 0.0) ? log_ratio(in) : 0.0;
  switch (psi_case(in)) {
    case PsiCase::degenerate:
      return 0.0;
    case PsiCase::sparse:
      return in.max_abs * std::exp(-lr / in.p);
    case PsiCase::gaussian:
      return 0.5 * std::sqrt(in.p * in.sigma2);
    case PsiCase::poisson:
      return in.p * in.max_abs / (kE * lr);
  }
  return 0.0;
}

double psi_sup_form(const PsiInput& in) {
  if (psi_case(in) == PsiCase::degenerate) return 0.0;
  const double p = in.p;
  const double log_alpha = -log_ratio(in);  // log(sigma^2 / (p M^2))
  const double s_star = std::min(std::max(2.0, -log_alpha), p);
  double best_s = s_star;
  double best = log_sup_term(p, log_alpha, s_star);

  // Grid over [2, p], then golden-section refinement around the best node.
  constexpr int kNodes = 65;
  double grid_s = 2.0;
  double grid_best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kNodes; ++i) {
    const double s = 2.0 + (p - 2.0) * static_cast<double>(i) / (kNodes - 1);
    const double val = log_sup_term(p, log_alpha, s);
    if (val > grid_best) {
      grid_best = val;
      grid_s = s;
    }
  }
  const double step = (p - 2.0) / (kNodes - 1);
  double lo = std::max(2.0, grid_s - step);
  double hi = std::min(p, grid_s + step);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double a = hi - inv_phi * (hi - lo);
    const double b = lo + inv_phi * (hi - lo);
    if (log_sup_term(p, log_alpha, a) < log_sup_term(p, log_alpha, b)) {
      lo = a;
    } else {
      hi = b;
    }
  }
  for (double s : {grid_s, 0.5 * (lo + hi)}) {
    const double val = log_sup_term(p, log_alpha, s);
    if (val > best) {
      best = val;
      best_s = s;
    }
  }
  (void)best_s;
  return in.max_abs * std::exp(best);
}

bool PsiPropertyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return !c.applicable || c.pass; });
}

PsiPropertyReport psi_property_checks(const PsiInput& in, double lambda) {
  if (!(lambda >= 1.0)) throw DomainError("growth checks need lambda >= 1");
  constexpr double kRel = 1e-12;
  PsiPropertyReport report;
  const double value = psi(in);
  const double sigma = std::sqrt(in.sigma2);
  auto le = [&](std::string name, double lhs, double rhs, bool applicable = true) {
    PropertyCheck c{std::move(name), applicable, true, lhs, rhs};
    if (applicable) c.pass = lhs <= rhs + kRel * std::max(std::abs(lhs), std::abs(rhs));
    report.checks.push_back(c);
  };

  const double sup = psi_sup_form(in);
  {
    PropertyCheck c{"psi-relation", true, true, value, sup};
    c.pass = std::abs(value - sup) <= 1e-9 * std::max(value, sup);
    report.checks.push_back(c);
  }
  le("psi-bernstein", value, std::max(0.5 * std::sqrt(in.p) * sigma, in.p * in.max_abs / (2.0 * kE)));
  le("psi-lower-bound", 0.5 * std::sqrt(in.p) * sigma, value);
  const bool far = in.max_abs > 0.0 && kE2 * in.sigma2 / (in.max_abs * in.max_abs) <= in.p;
  le("psi-far-out", value, far ? in.p * in.max_abs / (kE * log_ratio(in)) : 0.0, far);
  le("psi-growth", psi({in.p, lambda * in.max_abs, lambda * in.sigma2}), lambda * value);
  le("psi-reverse-growth", lambda * value, psi({in.p, lambda * lambda * in.max_abs, lambda * lambda * in.sigma2}));
  return report;
}

void ConstantPolicy::validate() const {
  if (!(sampling_l >= 1.0 && l1 >= 1.0 && k_c_base >= 1.0 && markov_l >= 1.0))
    throw DomainError("constant policy values must all be >= 1");
}

double gamma_p_simple(const GammaInput& in) {
  check_p(in.p);
  if (in.m < 1 || in.c < 1) throw DomainError("gamma_p needs m >= 1 and c >= 1");
  const double md = static_cast<double>(in.m);
  const double denom = std::log(kE2 * md / in.spread);
  if (!(denom > 0.0)) throw DomainError("gamma_p denominator log(e^2 m / spread) must be positive");
  const double numer = std::max(std::log(md) + std::log(in.weight_ratio) / static_cast<double>(in.c), in.p);
  return numer / denom;
}

double gamma_p_mixed(double p, std::uint64_t m, std::uint64_t alphabet) {
  check_p(p);
  if (alphabet < 2) throw DomainError("gamma_p needs |Sigma| >= 2");
  const double la = std::log(static_cast<double>(alphabet));
  return std::max({1.0, std::log(static_cast<double>(m)) / la, p / la});
}

double gamma_p_lower_bound(double p, std::uint64_t m, double spread) {
  check_p(p);
  const double denom = std::log(kE2 * static_cast<double>(m) / spread);
  if (!(denom > 0.0)) throw DomainError("gamma_p denominator must be positive");
  return std::max(1.0, p / denom);
}

double gamma_p_khintchine(double p, std::uint64_t alphabet) {
  check_p(p);
  if (alphabet < 2) throw DomainError("gamma_p needs |Sigma| >= 2");
  return std::max(1.0, p / std::log(static_cast<double>(alphabet)));
}

GammaInput gamma_input(double p, const ValueStats& stats, const SchemeParams& params) {
  return {p, params.range_size(), params.num_chars, params.alphabet_size(), stats.spread, stats.weight_ratio};
}

double moment_bound_fully_random(double p, const ValueStats& stats, const ConstantPolicy& policy) {
  policy.validate();
  return policy.sampling_l * psi({p, stats.max_abs, stats.sigma2});
}

double simple_tab_shape(double p, const ValueStats& stats, const SchemeParams& params) {
  const double g = std::pow(gamma_p_simple(gamma_input(p, stats, params)), params.num_chars - 1.0);
  return psi({p, g * stats.max_abs, g * stats.sigma2});
}

double mixed_tab_shape(double p, const ValueStats& stats, const SchemeParams& params) {
  const double g = std::pow(gamma_p_mixed(p, params.range_size(), params.alphabet_size()),
                            static_cast<double>(params.num_chars));
  return psi({p, g * stats.max_abs, g * stats.sigma2});
}

double moment_bound_simple_tab(double p, const ValueStats& stats, const SchemeParams& params,
                               const ConstantPolicy& policy) {
  policy.validate();
  const double c = params.num_chars;
  const double k_c = std::pow(policy.k_c_base * c, c - 1.0);
  const double g = std::pow(gamma_p_simple(gamma_input(p, stats, params)), c - 1.0);
  return policy.l1 * psi({p, k_c * g * stats.max_abs, k_c * g * stats.sigma2});
}

double moment_bound_mixed_tab(double p, const ValueStats& stats, const SchemeParams& params,
                              const ConstantPolicy& policy) {
  policy.validate();
  const double c = params.num_chars;
  const double k_c = policy.l1 * std::pow(policy.k_c_base * c, c);
  const double g = std::pow(gamma_p_mixed(p, params.range_size(), params.alphabet_size()), c);
  return psi({p, k_c * g * stats.max_abs, k_c * g * stats.sigma2});
}

double moment_bound(SchemeKind kind, double p, const ValueStats& stats, const SchemeParams& params,
                    const ConstantPolicy& policy) {
  switch (kind) {
    case SchemeKind::fully_random:
      return moment_bound_fully_random(p, stats, policy);
    case SchemeKind::simple:
      return moment_bound_simple_tab(p, stats, params, policy);
    case SchemeKind::mixed:
      return moment_bound_mixed_tab(p, stats, params, policy);
  }
  return 0.0;
}

double moment_shape(SchemeKind kind, double p, const ValueStats& stats, const SchemeParams& params) {
  switch (kind) {
    case SchemeKind::fully_random:
      return psi({p, stats.max_abs, stats.sigma2});
    case SchemeKind::simple:
      return simple_tab_shape(p, stats, params);
    case SchemeKind::mixed:
      return mixed_tab_shape(p, stats, params);
  }
  return 0.0;
}

double bennett_c(double x) { return (x + 1.0) * std::log1p(x) - x; }

double bennett_tail(double t, double max_abs, double sigma2) {
  if (t < 0.0) throw DomainError("tail bounds need t >= 0");
  if (max_abs == 0.0 || sigma2 == 0.0) return t > 0.0 ? 0.0 : 1.0;
  const double ratio = sigma2 / (max_abs * max_abs);
  return std::min(1.0, 2.0 * std::exp(-ratio * bennett_c(t * max_abs / sigma2)));
}

double bennett_tail_simplified(double t, double max_abs, double sigma2) {
  if (t < 0.0) throw DomainError("tail bounds need t >= 0");
  if (max_abs == 0.0 || sigma2 == 0.0) return t > 0.0 ? 0.0 : 1.0;
  double bound = 0.0;
  if (t <= sigma2 / max_abs) {
    bound = 2.0 * std::exp(-t * t / (3.0 * sigma2));
  } else {
    bound = 2.0 * std::exp(-(t / (2.0 * max_abs)) * std::log1p(t * max_abs / sigma2));
  }
  return std::min(1.0, bound);
}

MarkovTail markov_tail_from_psi(double t, double max_abs, double sigma2, double l) {
  if (!(t > 0.0)) throw DomainError("Markov tail needs t > 0");
  if (!(l > 0.0)) throw DomainError("Markov tail needs L > 0");
  MarkovTail out;
  if (max_abs == 0.0 || sigma2 == 0.0) {
    out.probability = out.raw = 0.0;
    return out;
  }
  const double sigma = std::sqrt(sigma2);
  const double first_end = l * std::max(max_abs, kE * sigma / std::sqrt(2.0));
  const double second_end = l * kE2 * sigma2 / (2.0 * max_abs);
  if (t <= first_end) {
    out.branch = 1;
    out.p = 2.0;
    out.raw = l * l * sigma2 / (2.0 * t * t);
  } else if (t <= second_end) {
    out.branch = 2;
    out.p = 4.0 * t * t / (kE2 * l * l * sigma2);
    out.raw = std::exp(-out.p);
  } else {
    out.branch = 3;
    out.p = (t / (l * max_abs)) * std::log(2.0 * t * max_abs / (l * sigma2));
    out.raw = std::exp(-out.p);
  }
  out.probability = std::min(1.0, out.raw);
  return out;
}

double mixed_tail(double t, const ValueStats& stats, const SchemeParams& params, double gamma,
                  const ConstantPolicy& policy) {
  if (t < 0.0) throw DomainError("tail bounds need t >= 0");
  if (!(gamma >= 1.0)) throw DomainError("mixed tail needs gamma >= 1");
  policy.validate();
  const double log_u = static_cast<double>(params.key_bits()) * std::log(2.0);
  if (static_cast<double>(params.range_bits) * std::log(2.0) > gamma * log_u * (1.0 + 1e-12))
    throw DomainError("mixed tail needs m <= |U|^gamma");
  const double c = params.num_chars;
  const double k = policy.l1 * std::pow(policy.k_c_base * c * c * gamma, c);
  const double additive = std::exp(-gamma * log_u);
  double main = 0.0;
  if (stats.max_abs == 0.0 || stats.sigma2 == 0.0) {
    main = t > 0.0 ? 0.0 : 1.0;
  } else {
    const double ratio = stats.sigma2 / (stats.max_abs * stats.max_abs);
    main = std::exp(-ratio * bennett_c(t * stats.max_abs / stats.sigma2) / k);
  }
  return std::min(1.0, main + additive);
}

namespace {

double poisson_log_moment(double lambda, double p, std::uint64_t cutoff) {
  const double log_lambda = std::log(lambda);
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(cutoff + 1);
  for (std::uint64_t n = 0; n <= cutoff; ++n) {
    const double nd = static_cast<double>(n);
    const double dev = std::abs(nd - lambda);
    if (dev == 0.0) continue;
    const double term = nd * log_lambda - lambda - std::lgamma(nd + 1.0) + p * std::log(dev);
    terms.push_back(term);
    peak = std::max(peak, term);
  }
  double sum = 0.0;
  for (double term : terms) sum += std::exp(term - peak);
  return peak + std::log(sum);
}

}  // namespace

double poisson_central_pnorm(double lambda, double p) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("Poisson mean must be positive");
  check_p(p);
  auto cutoff = static_cast<std::uint64_t>(std::ceil(lambda + 50.0 * std::sqrt(lambda) + 50.0 * p));
  double current = poisson_log_moment(lambda, p, cutoff) / p;
  for (int i = 0; i < 8; ++i) {
    cutoff *= 2;
    const double next = poisson_log_moment(lambda, p, cutoff) / p;
    const bool stable = std::abs(std::expm1(next - current)) < 1e-12;
    current = next;
    if (stable) break;
  }
  return std::exp(current);
}

}  // namespace tabhash
