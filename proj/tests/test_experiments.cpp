#include <cmath>
#include <numeric>

#include "doctest.h"
#include "tabhash/experiments.hpp"

using namespace tabhash;

TEST_CASE("lower-bound instance with gamma_p <= 1 uses one prefix") {
  const SchemeParams params{4, 3, 4, 0};
  const auto inst = build_lower_bound_instance(params, 2.0);
  CHECK(inst.gamma == doctest::Approx(1.0));
  CHECK(inst.r == 1);
  REQUIRE(inst.keys.size() == 16);
  for (const auto& k : inst.keys) CHECK((k.packed & 0xff) == 0);
}

TEST_CASE("lower-bound instance support for c=2, k=4, m=4, p=8") {
  const SchemeParams params{4, 2, 2, 0};
  const auto inst = build_lower_bound_instance(params, 8.0);
  const double gamma = 8.0 / std::log(std::exp(2.0) * 4.0 / 3.0);
  CHECK(inst.gamma == doctest::Approx(gamma).epsilon(1e-12));
  CHECK(inst.r == 1 + static_cast<std::uint64_t>(std::floor(gamma)));
  CHECK(inst.keys.size() == inst.r * 16);
}

TEST_CASE("lower-bound stats match closed forms") {
  for (unsigned c : {2u, 3u}) {
    for (double p : {2.0, 4.0, 8.0}) {
      const SchemeParams params{4, c, 2, 0};
      const auto inst = build_lower_bound_instance(params, p);
      const double m = 4.0;
      const double sigma2 = (1 / m) * (1 - 1 / m) * 16.0 * std::pow(static_cast<double>(inst.r), c - 1.0);
      CHECK(std::abs(inst.stats.sigma2 - sigma2) <= 1e-12 * sigma2);
      CHECK(std::abs(inst.stats.max_abs - (1 - 1 / m)) <= 1e-12);
      const auto grid = inst.v.stats_by_grid();
      CHECK(std::abs(grid.sigma2 - sigma2) <= 1e-12 * sigma2);
      for (std::size_t i = 0; i < inst.v.size(); ++i) {
        double row = 0;
        for (std::uint64_t j = 0; j < 4; ++j) row += inst.v(i, j);
        CHECK(std::abs(row) <= 1e-12);
      }
    }
  }
}

TEST_CASE("lower-bound preconditions") {
  CHECK_THROWS_AS(build_lower_bound_instance({4, 2, 2, 0}, 40.0), RangeError);
  CHECK_THROWS_AS(build_lower_bound_instance({1, 2, 1, 0}, 2.0), RangeError);
}

TEST_CASE("lower-bound oracle matches exhaustive enumeration") {
  const SchemeParams params{2, 2, 1, 0};
  const auto inst = build_lower_bound_instance(params, 2.0);
  REQUIRE(inst.r == 2);
  const std::vector<double> ps{2, 4, 8};
  const auto oracle = lower_bound_exact_pnorms(inst, ps);
  MomentRequest req;
  req.scheme = SchemeDescriptor{SchemeKind::simple, params};
  req.ps = ps;
  req.mode = MomentMode::exact;
  const auto exact = exact_moments(req, inst.v);
  for (std::size_t i = 0; i < ps.size(); ++i)
    CHECK(oracle[i] == doctest::Approx(exact.estimates[i].estimate).epsilon(1e-9));
}

TEST_CASE("lower-bound oracle matches exhaustive enumeration at c=3") {
  const SchemeParams params{1, 3, 1, 0};
  ConstantPolicy policy;
  policy.l1 = 4;
  const auto inst = build_lower_bound_instance(params, 2.0, policy);
  const std::vector<double> ps{2, 4};
  const auto oracle = lower_bound_exact_pnorms(inst, ps);
  MomentRequest req;
  req.scheme = SchemeDescriptor{SchemeKind::simple, params};
  req.ps = ps;
  req.mode = MomentMode::exact;
  const auto exact = exact_moments(req, inst.v);
  for (std::size_t i = 0; i < ps.size(); ++i)
    CHECK(oracle[i] == doctest::Approx(exact.estimates[i].estimate).epsilon(1e-9));
}

TEST_CASE("lower-bound oracle matches Monte Carlo") {
  const SchemeParams params{4, 2, 2, 0};
  const auto inst = build_lower_bound_instance(params, 8.0);
  const std::vector<double> ps{2, 4, 8};
  const auto oracle = lower_bound_exact_pnorms(inst, ps);
  MomentRequest req;
  req.scheme = SchemeDescriptor{SchemeKind::simple, params};
  req.ps = ps;
  req.samples = 40000;
  const auto mc = monte_carlo_moments(req, inst.v);
  for (std::size_t i = 0; i < ps.size(); ++i)
    CHECK(std::abs(mc.estimates[i].estimate - oracle[i]) <= 4 * mc.estimates[i].std_error + 1e-12);
}

TEST_CASE("lower-bound sweep ratios are positive") {
  const auto rows = lower_bound_sweep({4, 2, 2, 0}, {2, 4, 8});
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.ratio > 0.0);
    CHECK(r.support == r.r * 16);
  }
  const auto csv = lower_bound_table(rows).to_csv();
  CHECK(csv.rfind("p,gamma_p,r,support,norm,shape,ratio\n", 0) == 0);
}

TEST_CASE("table quoting") {
  Table t{{"a", "b"}, {}};
  t.add({"x,y", "z"});
  CHECK(t.to_csv() == "a,b\n\"x,y\",z\n");
}

TEST_CASE("tiny bound sweep") {
  SweepConfig cfg;
  cfg.grid = SweepGrid::tiny;
  cfg.samples = 2000;
  for (auto kind : {SchemeKind::fully_random, SchemeKind::simple, SchemeKind::mixed}) {
    cfg.theorem = kind;
    const auto rows = run_bound_sweep(cfg);
    CHECK(rows.size() == 3 * 4);
    for (const auto& r : rows) {
      CHECK(r.estimate.estimate > 0.0);
      CHECK(r.estimate.ratio < 1.0);
      CHECK(r.gamma >= 1.0);
    }
  }
}

TEST_CASE("fully random and simple tabulation agree at p = 2") {
  SweepConfig cfg;
  cfg.grid = SweepGrid::tiny;
  cfg.samples = 20000;
  cfg.theorem = SchemeKind::fully_random;
  const auto fr = run_bound_sweep(cfg);
  cfg.theorem = SchemeKind::simple;
  const auto st = run_bound_sweep(cfg);
  for (std::size_t i = 0; i < fr.size(); ++i) {
    if (fr[i].p != 2.0) continue;
    const double se = std::hypot(fr[i].estimate.std_error, st[i].estimate.std_error);
    CHECK(std::abs(fr[i].estimate.estimate - st[i].estimate.estimate) <= 4 * se);
  }
}

TEST_CASE("sweeps are reproducible") {
  SweepConfig cfg;
  cfg.grid = SweepGrid::tiny;
  cfg.samples = 500;
  const auto a = sweep_table(run_bound_sweep(cfg)).to_csv();
  cfg.threads = 3;
  CHECK(sweep_table(run_bound_sweep(cfg)).to_csv() == a);
  CHECK(query_sweep_table(run_query_sweep(cfg)).to_csv() ==
        query_sweep_table(run_query_sweep(cfg)).to_csv());
}

TEST_CASE("tiny query sweep") {
  SweepConfig cfg;
  cfg.grid = SweepGrid::tiny;
  cfg.samples = 2000;
  for (auto kind : {SchemeKind::simple, SchemeKind::mixed}) {
    cfg.theorem = kind;
    const auto rows = run_query_sweep(cfg);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
      CHECK(r.buckets > 1);
      CHECK(r.estimate > 0.0);
      CHECK(r.max_bucket_shape_ratio > 0.0);
    }
  }
}

TEST_CASE("independence") {
  const auto rep = independence_test({2, 2, 2, 0}, {1, 2, 4, 0}, {8, 2, 8, 1}, 10000);
  CHECK(rep.three_wise_uniform);
  CHECK(rep.triples == 560);
  CHECK(rep.fillings == 65536);
  CHECK(rep.simple_xor_zero_fraction == 1.0);
  CHECK(rep.mixed_xor_zero_fraction < 0.5);
}

TEST_CASE("4-tuple XOR vanishes for every filling at c=2, k=1") {
  const SchemeParams params{1, 2, 2, 0};
  const TableFillingEnumerator en({{2, 1, 2}});
  for (std::uint64_t f = 0; f < en.count(); ++f) {
    SimpleTabHash h(params, en.filling(f)[0]);
    CHECK((h(Key{0}) ^ h(Key{1}) ^ h(Key{2}) ^ h(Key{3})) == 0);
  }
}

TEST_CASE("minhash mask bits") {
  CHECK(minhash_mask_bits(1 << 16, 256) == 9);
  CHECK(minhash_mask_bits(10, 256) == 0);
}

TEST_CASE("minhash all red") {
  KPartitionConfig cfg;
  cfg.n_balls = 4096;
  cfg.red_fraction = 1.0;
  cfg.k_bins = 16;
  cfg.trials = 10;
  const auto rep = minhash_kpartition(cfg);
  for (const auto& t : rep.trials) CHECK(t.estimate == 1.0);
}

TEST_CASE("minhash with one bin") {
  KPartitionConfig cfg;
  cfg.n_balls = 3000;
  cfg.k_bins = 1;
  cfg.trials = 600;
  const auto rep = minhash_kpartition(cfg);
  double mean = 0;
  for (const auto& t : rep.trials) {
    CHECK((t.estimate == 0.0 || t.estimate == 1.0));
    CHECK(t.nonempty_bins == 1);
    mean += t.estimate;
  }
  mean /= 600.0;
  CHECK(std::abs(mean - 1.0 / 3.0) <= 4 * std::sqrt((1.0 / 3) * (2.0 / 3) / 600));
}

TEST_CASE("minhash acceptance configuration") {
  KPartitionConfig cfg;
  cfg.scheme = SchemeDescriptor{SchemeKind::fully_random, {8, 4, 32, 0}};
  const auto oracle = minhash_kpartition(cfg);
  CHECK(oracle.within_error >= 95);
  cfg.scheme = SchemeDescriptor{SchemeKind::mixed, {8, 4, 32, 1}};
  const auto rep = minhash_kpartition(cfg);
  CHECK(rep.q == 9);
  CHECK(rep.expected_y == 128.0);
  CHECK(rep.within_error >= 95);
  CHECK(rep.y_within_band >= 95);
  CHECK_FALSE(rep.within_alphabet_bound);
}

TEST_CASE("minhash config validation") {
  KPartitionConfig cfg;
  cfg.strict = true;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg.strict = false;
  cfg.k_bins = 3;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg.k_bins = 256;
  cfg.red_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("minhash error law is invariant under relabeling balls") {
  KPartitionConfig cfg;
  cfg.n_balls = 4096;
  cfg.k_bins = 16;
  cfg.trials = 300;
  cfg.scheme = SchemeDescriptor{SchemeKind::mixed, {8, 2, 32, 1}};
  const auto a = minhash_kpartition(cfg);
  cfg.color_permutation_seed = 99;
  const auto b = minhash_kpartition(cfg);
  std::vector<double> ea, eb;
  for (const auto& t : a.trials) ea.push_back(t.error);
  for (const auto& t : b.trials) eb.push_back(t.error);
  CHECK(ks_statistic(ea, eb) <= 1.95 * std::sqrt(2.0 / 300));
}

TEST_CASE("ks statistic") {
  CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(ks_statistic({1, 2}, {3, 4}) == 1.0);
}

TEST_CASE("throughput bench reports") {
  const auto r = throughput_bench({8, 4, 32, 1}, 100000);
  CHECK(r.keys == 100000);
  CHECK(r.simple_table_bytes == 4 * 256 * 8);
  CHECK(r.simple_ns > 0.0);
  CHECK(r.mixed_ns > 0.0);
  MESSAGE("mixed/simple ratio " << r.ratio << ", repeat " << r.simple_repeat_ns / r.simple_ns);
}
