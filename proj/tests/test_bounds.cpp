#include <cmath>
#include <numbers>

#include "doctest.h"
#include "tabhash/bounds.hpp"

using namespace tabhash;

namespace {

constexpr double kE = std::numbers::e;

// Log-spaced grid of 100 p values in [2, 64] and 100 ratios sigma^2/M^2 in
// [1e-8, 1e8].
template <class F>
void for_grid(F&& f) {
  for (int i = 0; i < 100; ++i) {
    const double p = 2.0 * std::pow(32.0, i / 99.0);
    for (int j = 0; j < 100; ++j) {
      const double ratio = std::pow(10.0, -8.0 + 16.0 * j / 99.0);
      f(p, ratio);
    }
  }
}

}  // namespace

TEST_CASE("psi hand values") {
  CHECK(psi_case({2, 1, 1}) == PsiCase::gaussian);
  CHECK(psi({2, 1, 1}) == doctest::Approx(0.70711).epsilon(1e-5));

  CHECK(psi_case({20, 1, 1}) == PsiCase::poisson);
  CHECK(psi({20, 1, 1}) == doctest::Approx(20.0 / (kE * std::log(20.0))).epsilon(1e-14));
  CHECK(psi({20, 1, 1}) == doctest::Approx(2.4558).epsilon(1e-3));

  CHECK(psi_case({20, 1, 1e-12}) == PsiCase::sparse);
  CHECK(psi({20, 1, 1e-12}) == doctest::Approx(0.2161).epsilon(1e-3));
  CHECK(psi({20, 1, 1e-12}) == doctest::Approx(std::pow(5e-14, 1.0 / 20)).epsilon(1e-13));
}

TEST_CASE("psi domain") {
  CHECK_THROWS_AS(psi({1.5, 1, 1}), DomainError);
  CHECK_THROWS_AS(psi({2, -1, 1}), DomainError);
  CHECK_THROWS_AS(psi({2, 1, -1}), DomainError);
  CHECK(psi({4, 0, 1}) == 0.0);
  CHECK(psi({4, 1, 0}) == 0.0);
  CHECK(psi_case({4, 0, 0}) == PsiCase::degenerate);
}

TEST_CASE("exactly one psi case fires") {
  int counts[4] = {0, 0, 0, 0};
  for_grid([&](double p, double ratio) {
    const double m = 1.0;
    const double s2 = ratio;
    const bool c1 = p < std::log(p * m * m / s2);
    const bool c2 = p < kE * kE * s2 / (m * m);
    const bool c3 = std::log(p * m * m / s2) <= p && kE * kE * s2 / (m * m) <= p;
    CHECK(int(c1) + int(c2) + int(c3) == 1);
    const auto got = psi_case({p, m, s2});
    CHECK(got == (c1 ? PsiCase::sparse : c2 ? PsiCase::gaussian : PsiCase::poisson));
    counts[static_cast<int>(got)]++;
  });
  CHECK(counts[1] > 0);
  CHECK(counts[2] > 0);
  CHECK(counts[3] > 0);
}

TEST_CASE("psi equals its sup form on the grid") {
  double worst = 0;
  for_grid([&](double p, double ratio) {
    const PsiInput in{p, 1.0, ratio};
    const double a = psi(in);
    const double b = psi_sup_form(in);
    worst = std::max(worst, std::abs(a - b) / a);
  });
  CHECK(worst <= 1e-9);
}

TEST_CASE("psi sup form at p = 2 is sqrt(2) sigma / 2") {
  for (double s2 : {0.2, 1.0, 9.0, 1e4}) {
    CHECK(psi_sup_form({2, 1, s2}) == doctest::Approx(0.5 * std::sqrt(2.0 * s2)).epsilon(1e-12));
  }
}

TEST_CASE("psi sandwich and scaling on the grid") {
  for_grid([&](double p, double ratio) {
    for (double m : {1e-3, 1.0, 7.5}) {
      const double s2 = ratio * m * m;
      const double v = psi({p, m, s2});
      const double lower = 0.5 * std::sqrt(p * s2);
      const double upper = std::max(lower, p * m / (2.0 * kE));
      REQUIRE(lower <= v * (1 + 1e-12));
      REQUIRE(v <= upper * (1 + 1e-12));
      for (double lambda : {0.5, 3.0, 100.0}) {
        const double scaled = psi({p, lambda * m, lambda * lambda * s2});
        REQUIRE(std::abs(scaled - lambda * v) <= 1e-12 * lambda * v);
      }
    }
  });
}

TEST_CASE("psi property checks") {
  const auto r = psi_property_checks({2, 1, 1}, 1.0);
  CHECK(r.all_pass());
  for (const auto& c : r.checks) {
    if (c.name == "psi-lower-bound") CHECK(c.slack() == doctest::Approx(0.0).epsilon(1e-12));
    if (c.name == "psi-growth") CHECK(c.slack() == doctest::Approx(0.0).epsilon(1e-12));
    if (c.name == "psi-far-out") CHECK(!c.applicable);
  }

  const auto far = psi_property_checks({20, 1, 1}, 2.0);
  for (const auto& c : far.checks)
    if (c.name == "psi-far-out") CHECK(c.applicable);
  CHECK(far.all_pass());

  for_grid([&](double p, double ratio) {
    for (double lambda : {1.0, 1.7, 40.0}) REQUIRE(psi_property_checks({p, 1.0, ratio}, lambda).all_pass());
  });
  CHECK_THROWS_AS(psi_property_checks({2, 1, 1}, 0.5), DomainError);
}

TEST_CASE("gamma_p for simple tabulation") {
  // Threshold value function: spread 4l(1 - l/m).
  const double m = 1024, l = 64, spread = 4 * l * (1 - l / m);
  const GammaInput in{10.0, 1024, 3, 256, spread, 50.0};
  const double expect = std::max(std::log(m) + std::log(50.0) / 3, 10.0) / std::log(kE * kE * m / spread);
  CHECK(gamma_p_simple(in) == doctest::Approx(expect).epsilon(1e-14));

  const GammaInput plain{4.0, 1 << 16, 2, 256, 1.0, 1.0};
  const double g = gamma_p_simple(plain);
  CHECK(g == doctest::Approx(std::log(65536.0) / std::log(kE * kE * 65536.0)).epsilon(1e-14));
  CHECK(g < 1.0);

  GammaInput big{100.0, 1024, 2, 256, 1.0, 1.0};
  const double g1 = gamma_p_simple(big);
  big.p = 200.0;
  CHECK(gamma_p_simple(big) == doctest::Approx(2 * g1).epsilon(1e-14));

  CHECK_THROWS_AS(gamma_p_simple(GammaInput{4.0, 2, 2, 256, 2 * kE * kE, 1.0}), DomainError);
}

TEST_CASE("gamma_p for mixed tabulation") {
  const double ls = std::log(256.0);
  CHECK(gamma_p_mixed(2.0, 256, 256) == 1.0);
  CHECK(gamma_p_mixed(2.0, 65536, 256) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(gamma_p_mixed(3 * ls, 1 << 20, 256) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(gamma_p_khintchine(2.0, 256) == 1.0);
  CHECK(gamma_p_khintchine(4 * ls, 256) == doctest::Approx(4.0));
}

TEST_CASE("fully random moment bound") {
  ValueStats s;
  s.max_abs = 1;
  s.sigma2 = 1;
  CHECK(moment_bound_fully_random(2, s) == doctest::Approx(16 * kE * std::sqrt(0.5)).epsilon(1e-14));
  CHECK(moment_bound_fully_random(2, s) == doctest::Approx(30.75).epsilon(1e-3));
  CHECK(moment_bound_fully_random(8, ValueStats{}) == 0.0);

  for (double ratio : {1e-6, 1e-2, 1.0, 1e3}) {
    s.sigma2 = ratio;
    double prev = 0;
    for (double p = 2; p <= 64; p += 0.25) {
      const double b = moment_bound_fully_random(p, s);
      CHECK(b >= prev * (1 - 1e-12));
      prev = b;
    }
  }
}

TEST_CASE("simple tabulation moment bound") {
  ValueStats s;
  s.max_abs = 0.75;
  s.sigma2 = 3.0;
  s.spread = 3.0;
  s.weight_ratio = 10.0;
  const SchemeParams one{8, 1, 8, 0};
  const ConstantPolicy policy;
  for (double p : {2.0, 5.0, 30.0})
    CHECK(moment_bound_simple_tab(p, s, one, policy) == doctest::Approx(psi({p, 0.75, 3.0})).epsilon(1e-14));

  // Threshold instance.
  const SchemeParams params{8, 3, 10, 0};
  const double m = 1024, l = 100;
  std::vector<double> w{1.0, -2.0, 0.5, 3.0};
  double sum_w2 = 0, max_w = 0, max_w2 = 0;
  for (double x : w) {
    sum_w2 += x * x;
    max_w = std::max(max_w, std::abs(x));
    max_w2 = std::max(max_w2, x * x);
  }
  std::vector<WeightedKey> wk;
  for (std::size_t i = 0; i < w.size(); ++i) wk.push_back({Key{i}, w[i]});
  const auto th = ValueFunction::threshold(wk, 100, 1024).stats();
  const double p = 12;
  const double g = std::max(std::log(m) + std::log(sum_w2 / max_w2) / 3, p) /
                   std::log(kE * kE * m / (4 * l * (1 - l / m)));
  const double k_c = std::pow(2.0 * 3, 2.0);
  const double scale = k_c * g * g;
  const double expect = psi({p, scale * max_w * (1 - l / m), scale * sum_w2 * (l / m) * (1 - l / m)});
  CHECK(moment_bound_simple_tab(p, th, params, policy) == doctest::Approx(expect).epsilon(1e-12));

  double prev = 0;
  for (double spread = 1; spread < 100; spread *= 1.3) {
    s.spread = spread;
    const double b = moment_bound_simple_tab(16, s, params, policy);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("mixed tabulation moment bound") {
  ValueStats s;
  s.max_abs = 2;
  s.sigma2 = 5;
  const ConstantPolicy policy;
  const SchemeParams one{8, 1, 16, 1};
  // c = 1: K_c = L1 * L2, exponent 1.
  const double g = gamma_p_mixed(6, 65536, 256);
  const double k = policy.l1 * policy.k_c_base;
  CHECK(moment_bound_mixed_tab(6, s, one, policy) == doctest::Approx(psi({6, k * g * 2, k * g * 5})).epsilon(1e-14));

  const SchemeParams four{8, 4, 16, 1};
  const double k4 = std::pow(8.0, 4.0);
  const double g4 = std::pow(gamma_p_mixed(30, 65536, 256), 4.0);
  CHECK(moment_bound_mixed_tab(30, s, four, policy) ==
        doctest::Approx(psi({30, k4 * g4 * 2, k4 * g4 * 5})).epsilon(1e-12));

  double prev = 0;
  for (double p = 2; p <= 64; p *= 1.25) {
    const double b = moment_bound_mixed_tab(p, s, four, policy);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK(mixed_tab_shape(30, s, four) == doctest::Approx(psi({30, g4 * 2, g4 * 5})).epsilon(1e-12));
}

TEST_CASE("Bennett tail") {
  CHECK(bennett_tail(0, 1, 1) == 1.0);
  CHECK(bennett_c(kE - 1) == doctest::Approx(1.0).epsilon(1e-15));
  for (double m : {0.5, 1.0, 2.0}) {
    for (double s2 : {0.5, 4.0}) {
      CHECK(bennett_tail(s2 * (kE - 1) / m, m, s2) ==
            doctest::Approx(std::min(1.0, 2 * std::exp(-s2 / (m * m)))).epsilon(1e-13));
    }
  }
  // Both branches of the relaxation are weaker than Bennett but within a
  // factor 3 in the exponent at the branch point.
  for (double s2 : {1.0, 10.0, 100.0}) {
    const double t = s2;  // M = 1
    const double exact = s2 * bennett_c(t / s2);
    const double left = t * t / (3 * s2);
    const double right = (t / 2) * std::log1p(t / s2);
    CHECK(left <= exact);
    CHECK(right <= exact);
    CHECK(exact <= 3 * left);
    CHECK(exact <= 3 * right);
    CHECK(bennett_tail(t, 1, s2) <= bennett_tail_simplified(t, 1, s2));
  }
}

TEST_CASE("Markov tail from psi") {
  const double l = 16 * kE;
  const double m = 1, s2 = 100;
  const double first_end = l * std::max(m, kE * 10 / std::sqrt(2.0));
  const auto a = markov_tail_from_psi(first_end * 0.5, m, s2, l);
  CHECK(a.branch == 1);
  CHECK(a.raw == doctest::Approx(l * l * s2 / (2 * std::pow(first_end * 0.5, 2))));

  const double second_end = l * kE * kE * s2 / (2 * m);
  const auto before = markov_tail_from_psi(second_end, m, s2, l);
  const auto after = markov_tail_from_psi(second_end * (1 + 1e-12), m, s2, l);
  CHECK(before.branch == 2);
  CHECK(after.branch == 3);
  CHECK(after.raw / before.raw <= kE);
  CHECK(before.raw / after.raw <= kE);

  double prev = 2;
  for (double t = 1; t < 1e6; t *= 1.1) {
    const auto r = markov_tail_from_psi(t, m, s2, l);
    CHECK(r.probability <= 1.0);
    if (t > first_end) {
      CHECK(r.probability <= prev * (1 + 1e-12));
      prev = r.probability;
    }
  }
}

TEST_CASE("mixed tail") {
  const SchemeParams params{8, 4, 16, 1};
  ValueStats s;
  s.max_abs = 1;
  s.sigma2 = 50;
  CHECK(mixed_tail(0, s, params, 1.0) == 1.0);
  CHECK(mixed_tail(1e12, s, params, 1.0) == doctest::Approx(std::pow(2.0, -32)).epsilon(1e-9));
  CHECK_THROWS_AS(mixed_tail(1, s, SchemeParams{2, 2, 16, 1}, 1.0), DomainError);

  const ConstantPolicy policy;
  const double k = policy.l1 * std::pow(policy.k_c_base * 16 * 2.0, 4.0);
  for (double t = 10; t < 1e4; t *= 2) {
    const double main = mixed_tail(t, s, params, 2.0) - std::pow(2.0, -64);
    const double bennett_exponent = -std::log(bennett_tail(t, 1, 50) / 2);
    if (main > 1e-300) CHECK(-std::log(main) / bennett_exponent == doctest::Approx(1 / k).epsilon(1e-6));
  }
}

TEST_CASE("Poisson central p-norms") {
  CHECK(poisson_central_pnorm(1, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(poisson_central_pnorm(4, 2) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(poisson_central_pnorm(1, 4) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(poisson_central_pnorm(0.25, 2) == doctest::Approx(0.5).epsilon(1e-12));
  // E(X - l)^3 = l.
  CHECK(std::pow(poisson_central_pnorm(10, 3), 3) >= 10.0);
  CHECK_THROWS_AS(poisson_central_pnorm(0, 2), DomainError);
}

TEST_CASE("Poisson envelope") {
  double lo = 1e300, hi = 0;
  for (double lambda : {0.25, 1.0, 4.0, 16.0, 64.0}) {
    for (int p = 2; p <= 32; ++p) {
      const double r = poisson_central_pnorm(lambda, p) / psi({double(p), 1.0, lambda});
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  MESSAGE("Poisson envelope [" << lo << ", " << hi << "]");
  CHECK(lo > 0);
  CHECK(hi / lo <= 20.0);
  CHECK(lo == doctest::Approx(1.27334).epsilon(1e-4));
  CHECK(hi == doctest::Approx(1.77628).epsilon(1e-4));
}
