#include "tabhash/experiments.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>

#include "tabhash/format.hpp"
#include "tabhash/parallel.hpp"

namespace tabhash {

namespace {

constexpr std::uint64_t kRandomKeysStream = 0x6b657973;

std::string quote_csv(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

SchemeDescriptor descriptor_for(SchemeKind kind, unsigned k, unsigned c, unsigned l) {
  return SchemeDescriptor{kind, {k, c, l, kind == SchemeKind::mixed ? 1u : 0u}};
}

double theorem_gamma(SchemeKind kind, double p, const ValueStats& stats, const SchemeParams& params) {
  switch (kind) {
    case SchemeKind::fully_random:
      return 1.0;
    case SchemeKind::simple:
      return gamma_p_simple(gamma_input(p, stats, params));
    case SchemeKind::mixed:
      return gamma_p_mixed(p, params.range_size(), params.alphabet_size());
  }
  return 1.0;
}

struct GridShape {
  unsigned k;
  std::vector<unsigned> cs;
  std::vector<unsigned> ls;
  std::vector<double> ps;  // plus ln n
  std::size_t random_n;
  std::uint64_t cube_side;
};

GridShape grid_shape(SweepGrid grid) {
  if (grid == SweepGrid::tiny) return {4, {2}, {4}, {2, 4, 8}, 64, 2};
  return {8, {2, 3, 4}, {8, 16}, {2, 4, 8, 16}, 4096, 4};
}

}  // namespace

std::vector<Key> random_keys(const SchemeParams& params, std::size_t n, std::uint64_t seed) {
  const std::uint64_t universe_bits = params.key_bits();
  if (universe_bits < 64 && n > (std::uint64_t{1} << universe_bits)) throw SizeError("more keys than the universe");
  SplitMix64 rng(seed);
  std::set<std::uint64_t> seen;
  std::vector<Key> keys;
  keys.reserve(n);
  while (keys.size() < n) {
    const std::uint64_t x = rng() & low_mask(params.key_bits());
    if (seen.insert(x).second) keys.push_back(Key{x});
  }
  return keys;
}

std::vector<Key> cube_keys(const SchemeParams& params, std::uint64_t side) {
  const unsigned c = params.num_chars;
  const unsigned k = params.char_bits;
  std::uint64_t prefixes = 1;
  for (unsigned i = 0; i + 1 < c; ++i) prefixes *= side;
  std::vector<Key> keys;
  keys.reserve(prefixes * params.alphabet_size());
  for (std::uint64_t a = 0; a < params.alphabet_size(); ++a) {
    for (std::uint64_t idx = 0; idx < prefixes; ++idx) {
      std::uint64_t packed = 0;
      std::uint64_t rest = idx;
      for (unsigned i = 0; i + 1 < c; ++i) {
        packed |= (rest % side) << (i * k);
        rest /= side;
      }
      packed |= a << ((c - 1) * k);
      keys.push_back(Key{packed});
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::string Table::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += quote_csv(cells[i]);
    }
    out += '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out;
}

double LowerBoundInstance::shape() const {
  const double g = std::pow(gamma, params.num_chars - 1.0);
  return psi({p, g * stats.max_abs, g * stats.sigma2});
}

LowerBoundInstance build_lower_bound_instance(const SchemeParams& params, double p, const ConstantPolicy& policy) {
  params.validate();
  policy.validate();
  const double m = static_cast<double>(params.range_size());
  const double sigma = static_cast<double>(params.alphabet_size());
  if (p > policy.l1 * sigma * std::log(m)) throw RangeError("p exceeds L_1 |Sigma| log m");
  const double spread = 4.0 * (1.0 - 1.0 / m);
  const double gamma = gamma_p_lower_bound(p, params.range_size(), spread);
  // The side length uses the unclamped ratio, so small p gives r = 1.
  const double raw = p / std::log(std::exp(2.0) * m / spread);
  const auto r = static_cast<std::uint64_t>(1.0 + std::floor(raw));
  if (r > params.alphabet_size()) throw RangeError("1 + floor(gamma_p) exceeds |Sigma|");
  auto keys = cube_keys(params, r);
  auto v = ValueFunction::single_bin(uniform_weights(keys), 0, params.range_size());
  const auto stats = v.stats();
  return LowerBoundInstance{params, p, gamma, r, std::move(keys), std::move(v), stats};
}

std::vector<double> lower_bound_exact_pnorms(const LowerBoundInstance& inst, const std::vector<double>& ps) {
  return cube_single_bin_pnorms(inst.params, inst.r, ps);
}

std::vector<LowerBoundRow> lower_bound_sweep(const SchemeParams& params, const std::vector<double>& ps,
                                             const ConstantPolicy& policy) {
  std::vector<LowerBoundRow> rows;
  for (double p : ps) {
    const auto inst = build_lower_bound_instance(params, p, policy);
    LowerBoundRow row;
    row.p = p;
    row.gamma = inst.gamma;
    row.r = inst.r;
    row.support = inst.keys.size();
    row.norm = lower_bound_exact_pnorms(inst, {p})[0];
    row.shape = inst.shape();
    row.ratio = row.shape > 0 ? row.norm / row.shape : 0.0;
    rows.push_back(row);
  }
  return rows;
}

Table lower_bound_table(const std::vector<LowerBoundRow>& rows) {
  Table t{{"p", "gamma_p", "r", "support", "norm", "shape", "ratio"}, {}};
  for (const auto& r : rows)
    t.add({format_double(r.p), format_double(r.gamma), std::to_string(r.r), std::to_string(r.support),
           format_double(r.norm), format_double(r.shape), format_double(r.ratio)});
  return t;
}

std::vector<SweepRow> run_bound_sweep(const SweepConfig& config) {
  const auto g = grid_shape(config.grid);
  std::vector<SweepRow> rows;
  for (unsigned c : g.cs) {
    const SchemeParams key_params{g.k, c, 1, 0};
    const auto rkeys = random_keys(key_params, g.random_n, derive_seed(config.base_seed, kRandomKeysStream + c));
    const auto ckeys = cube_keys(key_params, g.cube_side);
    for (unsigned l : g.ls) {
      const auto scheme = descriptor_for(config.theorem, g.k, c, l);
      const std::uint64_t m = scheme.params.range_size();
      struct Named {
        std::string name;
        ValueFunction v;
      };
      std::vector<Named> values;
      values.push_back({"bin:random", ValueFunction::single_bin(uniform_weights(rkeys), 0, m)});
      values.push_back({"threshold:random,l=m/4", ValueFunction::threshold(uniform_weights(rkeys), m / 4, m)});
      values.push_back({"bin:cube", ValueFunction::single_bin(uniform_weights(ckeys), 0, m)});
      for (const auto& [name, v] : values) {
        MomentRequest req;
        req.scheme = scheme;
        req.ps = g.ps;
        req.ps.push_back(std::log(static_cast<double>(v.size())));
        req.mode = MomentMode::monte_carlo;
        req.samples = config.samples;
        req.base_seed = derive_seed(config.base_seed, fnv1a(scheme.to_string() + "|" + name));
        req.threads = config.threads;
        req.policy = config.policy;
        const auto report = monte_carlo_moments(req, v);
        for (const auto& e : report.estimates) {
          SweepRow row;
          row.scheme = scheme.to_string();
          row.value = name;
          row.c = c;
          row.m = m;
          row.n = v.size();
          row.p = e.p;
          row.estimate = e;
          row.gamma = theorem_gamma(config.theorem, e.p, report.stats, scheme.params);
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

Table sweep_table(const std::vector<SweepRow>& rows) {
  Table t{{"scheme", "value", "c", "m", "n", "p", "estimate", "std_error", "gamma_p", "shape", "shape_ratio", "bound",
           "ratio"},
          {}};
  for (const auto& r : rows)
    t.add({r.scheme, r.value, std::to_string(r.c), std::to_string(r.m), std::to_string(r.n), format_double(r.p),
           format_double(r.estimate.estimate), format_double(r.estimate.std_error), format_double(r.gamma),
           format_double(r.estimate.shape), format_double(r.estimate.shape_ratio), format_double(r.estimate.bound),
           format_double(r.estimate.ratio)});
  return t;
}

std::vector<QuerySweepRow> run_query_sweep(const SweepConfig& config) {
  const bool tiny = config.grid == SweepGrid::tiny;
  const unsigned k = tiny ? 4 : 8;
  const std::vector<unsigned> cs = tiny ? std::vector<unsigned>{2} : std::vector<unsigned>{2, 3};
  const unsigned l = tiny ? 4 : 8;
  const std::size_t n = tiny ? 64 : 4096;
  std::vector<QuerySweepRow> rows;
  for (unsigned c : cs) {
    const auto scheme = descriptor_for(config.theorem, k, c, l);
    const auto keys = random_keys(scheme.params, n, derive_seed(config.base_seed, kRandomKeysStream + c));
    const Key query = keys.front();
    auto v = QueryValueFunction::collision(uniform_weights(keys), query, scheme.params.range_size());
    MomentRequest req;
    req.scheme = scheme;
    req.ps = {2, 4, 8};
    req.samples = config.samples;
    req.base_seed = derive_seed(config.base_seed, fnv1a(scheme.to_string() + "|query"));
    req.threads = config.threads;
    req.policy = config.policy;
    const auto report = monte_carlo_query_moments(req, v);
    for (std::size_t i = 0; i < report.estimates.size(); ++i) {
      QuerySweepRow row;
      row.scheme = scheme.to_string();
      row.c = c;
      row.m = scheme.params.range_size();
      row.n = v.size();
      row.p = report.estimates[i].p;
      row.estimate = report.estimates[i].estimate;
      row.std_error = report.estimates[i].std_error;
      row.shape = report.estimates[i].shape;
      row.buckets = report.buckets.size();
      for (const auto& b : report.buckets)
        row.max_bucket_shape_ratio = std::max(row.max_bucket_shape_ratio, b.estimates[i].shape_ratio);
      rows.push_back(row);
    }
  }
  return rows;
}

Table query_sweep_table(const std::vector<QuerySweepRow>& rows) {
  Table t{{"scheme", "c", "m", "n", "p", "estimate", "std_error", "shape", "max_bucket_shape_ratio", "buckets"}, {}};
  for (const auto& r : rows)
    t.add({r.scheme, std::to_string(r.c), std::to_string(r.m), std::to_string(r.n), format_double(r.p),
           format_double(r.estimate), format_double(r.std_error), format_double(r.shape),
           format_double(r.max_bucket_shape_ratio), std::to_string(r.buckets)});
  return t;
}

IndependenceReport independence_test(const SchemeParams& tiny, const SchemeParams& simple, const SchemeParams& mixed,
                                     std::uint64_t seeds, std::uint64_t base_seed) {
  tiny.validate();
  if (tiny.key_bits() > 16 || tiny.range_bits > 4) throw SizeError("3-wise test needs at most 16 key bits and l <= 4");
  IndependenceReport report;
  const TableFillingEnumerator en({{tiny.num_chars, tiny.char_bits, tiny.range_bits}});
  const std::uint64_t n = std::uint64_t{1} << tiny.key_bits();
  const std::uint64_t m = tiny.range_size();
  std::vector<std::array<std::uint64_t, 3>> triples;
  for (std::uint64_t a = 0; a < n; ++a)
    for (std::uint64_t b = a + 1; b < n; ++b)
      for (std::uint64_t c = b + 1; c < n; ++c) triples.push_back({a, b, c});
  std::vector<std::uint64_t> counts(triples.size() * m * m * m, 0);
  std::vector<std::uint64_t> hv(n);
  for (std::uint64_t f = 0; f < en.count(); ++f) {
    SimpleTabHash h(tiny, en.filling(f)[0]);
    for (std::uint64_t x = 0; x < n; ++x) hv[x] = h(Key{x});
    for (std::size_t t = 0; t < triples.size(); ++t) {
      const auto& tr = triples[t];
      counts[t * m * m * m + (hv[tr[0]] * m + hv[tr[1]]) * m + hv[tr[2]]]++;
    }
  }
  const std::uint64_t expect = en.count() / (m * m * m);
  report.three_wise_uniform = en.count() % (m * m * m) == 0 &&
                              std::all_of(counts.begin(), counts.end(), [&](std::uint64_t x) { return x == expect; });
  report.triples = triples.size();
  report.fillings = en.count();

  auto quad = [](const SchemeParams& p) {
    std::array<Key, 4> keys;
    for (std::uint64_t a = 0; a < 2; ++a)
      for (std::uint64_t b = 0; b < 2; ++b) keys[a * 2 + b] = Key{a | (b << p.char_bits)};
    return keys;
  };
  simple.validate();
  mixed.validate();
  if (simple.num_chars < 2 || mixed.num_chars < 2) throw RangeError("the 4-tuple needs c >= 2");
  const auto qs = quad(simple);
  const auto qm = quad(mixed);
  std::uint64_t simple_zero = 0, mixed_zero = 0;
  for (std::uint64_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = sample_seed(base_seed, i);
    SimpleTabHash hs(simple, seed);
    MixedTabHash hm(mixed, seed);
    simple_zero += (hs(qs[0]) ^ hs(qs[1]) ^ hs(qs[2]) ^ hs(qs[3])) == 0;
    mixed_zero += (hm(qm[0]) ^ hm(qm[1]) ^ hm(qm[2]) ^ hm(qm[3])) == 0;
  }
  report.seeds = seeds;
  if (seeds) {
    report.simple_xor_zero_fraction = static_cast<double>(simple_zero) / static_cast<double>(seeds);
    report.mixed_xor_zero_fraction = static_cast<double>(mixed_zero) / static_cast<double>(seeds);
  }
  return report;
}

bool KPartitionConfig::within_alphabet_bound() const {
  const double sigma = static_cast<double>(scheme.params.alphabet_size());
  const double d = std::max(1u, scheme.params.derived_chars);
  return static_cast<double>(k_bins) <= sigma / (4.0 * d * std::log(sigma));
}

void KPartitionConfig::validate() const {
  scheme.validate();
  const auto& p = scheme.params;
  if (n_balls < 1) throw DomainError("need at least one ball");
  if (p.key_bits() < 64 && n_balls > (std::uint64_t{1} << p.key_bits())) throw DomainError("more balls than keys");
  if (!(red_fraction >= 0.0 && red_fraction <= 1.0)) throw DomainError("red fraction must lie in [0, 1]");
  if (k_bins < 1 || !std::has_single_bit(k_bins)) throw DomainError("k must be a power of two");
  if (static_cast<unsigned>(std::countr_zero(k_bins)) >= p.range_bits) throw DomainError("k needs fewer bits than l");
  if (trials < 1) throw DomainError("need at least one trial");
  if (strict && !within_alphabet_bound()) throw DomainError("k exceeds |Sigma| / (4 d ln|Sigma|)");
}

unsigned minhash_mask_bits(std::uint64_t n, std::uint64_t alphabet) {
  const double x = 3.0 * static_cast<double>(n) / (2.0 * static_cast<double>(alphabet));
  if (x <= 1.0) return 0;
  return static_cast<unsigned>(std::ceil(std::log2(x) - 1e-12));
}

KPartitionReport minhash_kpartition(const KPartitionConfig& config) {
  config.validate();
  const auto& params = config.scheme.params;
  const std::uint64_t n = config.n_balls;
  const unsigned bin_bits = static_cast<unsigned>(std::countr_zero(config.k_bins));
  const unsigned local_bits = params.range_bits - bin_bits;

  std::vector<std::uint8_t> red(n, 0);
  const auto reds = static_cast<std::uint64_t>(std::llround(config.red_fraction * static_cast<double>(n)));
  if (config.color_permutation_seed) {
    std::vector<std::uint64_t> order(n);
    for (std::uint64_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 rng(*config.color_permutation_seed);
    for (std::uint64_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::uint64_t i = 0; i < reds; ++i) red[order[i]] = 1;
  } else {
    for (std::uint64_t i = 0; i < reds; ++i) red[i] = 1;
  }

  KPartitionReport report;
  report.q = minhash_mask_bits(n, params.alphabet_size());
  report.expected_y = static_cast<double>(n) * std::ldexp(1.0, -static_cast<int>(report.q));
  const double sigma = static_cast<double>(params.alphabet_size());
  report.y_band = 8.0 * std::sqrt(std::log(sigma) / sigma);
  report.error_threshold = 5.0 / std::sqrt(static_cast<double>(config.k_bins));
  report.within_alphabet_bound = config.within_alphabet_bound();
  report.trials.resize(config.trials);

  const std::uint64_t none = ~std::uint64_t{0};
  parallel_for(config.trials, config.threads, [&](std::uint64_t t) {
    const auto h = make_hash(config.scheme, sample_seed(config.base_seed, t));
    std::vector<std::uint64_t> best(config.k_bins, none);
    std::vector<std::uint64_t> owner(config.k_bins, 0);
    std::uint64_t y = 0;
    std::visit(
        [&](const auto& f) {
          for (std::uint64_t x = 0; x < n; ++x) {
            const std::uint64_t hv = f(Key{x});
            const std::uint64_t bin = bin_bits ? hv >> local_bits : 0;
            const std::uint64_t local = hv & low_mask(local_bits);
            if (local < best[bin]) {  // keys ascend, so ties keep the smaller key
              best[bin] = local;
              owner[bin] = x;
            }
            if (report.q <= local_bits && (report.q == 0 || (local >> (local_bits - report.q)) == 0)) ++y;
          }
        },
        h);
    KPartitionTrial trial;
    std::uint64_t red_mins = 0;
    for (std::uint64_t b = 0; b < config.k_bins; ++b) {
      if (best[b] == none) continue;
      ++trial.nonempty_bins;
      red_mins += red[owner[b]];
    }
    trial.estimate = trial.nonempty_bins ? static_cast<double>(red_mins) / static_cast<double>(trial.nonempty_bins) : 0;
    trial.error = trial.estimate - static_cast<double>(reds) / static_cast<double>(n);
    trial.y = y;
    report.trials[t] = trial;
  });
  for (const auto& t : report.trials) {
    report.within_error += std::abs(t.error) <= report.error_threshold;
    report.y_within_band += std::abs(static_cast<double>(t.y) - report.expected_y) <= report.expected_y * report.y_band;
  }
  return report;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

BenchReport throughput_bench(const SchemeParams& params, std::uint64_t n_keys, std::uint64_t seed) {
  SchemeParams sp = params;
  sp.derived_chars = 0;
  SchemeParams mp = params;
  mp.derived_chars = std::max(1u, params.derived_chars);
  std::vector<Key> keys(n_keys);
  SplitMix64 rng(seed);
  for (auto& k : keys) k = Key{rng() & low_mask(sp.key_bits())};
  SimpleTabHash hs(sp, seed);
  MixedTabHash hm(mp, seed);

  BenchReport r;
  r.keys = n_keys;
  r.simple_table_bytes = std::uint64_t{sp.num_chars} * sp.alphabet_size() * sizeof(std::uint64_t);
  auto time = [&](const auto& h) {
    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t acc = 0;
    for (const auto& k : keys) acc ^= h(k);
    const double ns = std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count();
    r.checksum ^= acc;
    return n_keys ? ns / static_cast<double>(n_keys) : 0.0;
  };
  r.simple_ns = time(hs);
  r.mixed_ns = time(hm);
  r.simple_repeat_ns = time(hs);
  r.ratio = r.simple_ns > 0 ? r.mixed_ns / r.simple_ns : 0.0;
  return r;
}

}  // namespace tabhash
