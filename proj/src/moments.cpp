#include "tabhash/moments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <tuple>

#include "json.hpp"
#include "tabhash/format.hpp"
#include "tabhash/parallel.hpp"

namespace tabhash {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kSignStream = 0x5167;
constexpr std::uint64_t kRademacherStream = 0x7261;
constexpr std::uint64_t kSumOfSquaresCells = std::uint64_t{1} << 26;

double lse(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

struct NoSign {
  int operator()(Key) const { return 1; }
};

// A fully random function stored as one table row indexed by the packed key.
struct TableFunction {
  const TabulationTable* table;
  std::uint64_t operator()(Key x) const { return (*table)(0, x.packed); }
};

struct TableSign {
  const TabulationTable* table;
  int operator()(Key x) const { return (*table)(0, x.packed) ? -1 : 1; }
};

template <class Hash, class Sign>
double signed_sum(const ValueFunction& v, const Hash& h, const Sign& eps) {
  CompensatedSum s;
  const auto& keys = v.keys();
  for (std::size_t i = 0; i < keys.size(); ++i) s.add(eps(keys[i]) * v(i, h(keys[i])));
  return s.value();
}

template <class Hash, class Sign>
Observation signed_query_sum(const QueryValueFunction& v, const Hash& h, const Sign& eps) {
  const std::uint64_t hq = h(v.query());
  CompensatedSum s;
  const auto& keys = v.keys();
  for (std::size_t i = 0; i < keys.size(); ++i) s.add(eps(keys[i]) * v(i, h(keys[i]), hq));
  return {s.value(), hq};
}

SchemeParams sign3_params(const SchemeParams& p) { return SchemeParams{p.char_bits, p.derived_chars, 1, 0}; }

// Builds the hash and sign function of one table filling and hands them to f.
template <class F>
auto with_filling(const SchemeDescriptor& scheme, SignMode sign, const std::vector<TabulationTable>& t, F&& f) {
  const auto& p = scheme.params;
  switch (scheme.kind) {
    case SchemeKind::fully_random: {
      TableFunction h{&t[0]};
      if (sign == SignMode::none) return f(h, NoSign{});
      return f(h, TableSign{&t[1]});
    }
    case SchemeKind::simple: {
      SimpleTabHash h(p, t[0]);
      if (sign == SignMode::none) return f(h, NoSign{});
      return f(h, SignFunction(p, t[1]));
    }
    case SchemeKind::mixed:
      break;
  }
  MixedTabHash h(p, t[0], t[1], t[2]);
  if (sign == SignMode::none) return f(h, NoSign{});
  return f(h, MixedSignFunction(h, SignFunction(p, t[3]), SignFunction(sign3_params(p), t[4])));
}

template <class F>
auto with_seed(const SchemeDescriptor& scheme, SignMode sign, std::uint64_t seed, F&& f) {
  const auto& p = scheme.params;
  const std::uint64_t s = sign_seed(seed);
  switch (scheme.kind) {
    case SchemeKind::fully_random: {
      FullyRandomHash h(p, seed);
      if (sign == SignMode::none) return f(h, NoSign{});
      return f(h, FullyRandomSign(s));
    }
    case SchemeKind::simple: {
      SimpleTabHash h(p, seed);
      if (sign == SignMode::none) return f(h, NoSign{});
      return f(h, SignFunction(p, s));
    }
    case SchemeKind::mixed:
      break;
  }
  MixedTabHash h(p, seed);
  if (sign == SignMode::none) return f(h, NoSign{});
  return f(h, MixedSignFunction(h, s));
}

// Histogram of (channel, bucket, value) -> number of fillings.
using Histogram = std::map<std::tuple<unsigned, std::uint64_t, double>, std::uint64_t>;

// Enumerates all fillings; observe(tables, out) appends observations, one per
// channel.
template <class Observe>
Histogram enumerate_histogram(const TableFillingEnumerator& en, unsigned threads, Observe&& observe) {
  const std::uint64_t chunks = std::max<std::uint64_t>(1, std::uint64_t{threads} * 4);
  std::vector<Histogram> parts(std::min(chunks, en.count()));
  parallel_chunks(en.count(), threads, chunks, [&](std::uint64_t c, std::uint64_t b, std::uint64_t e) {
    Histogram& hist = parts[c];
    std::vector<Observation> out;
    for (std::uint64_t f = b; f < e; ++f) {
      out.clear();
      observe(en.filling(f), out);
      for (unsigned ch = 0; ch < out.size(); ++ch) hist[{ch, out[ch].bucket, out[ch].value}]++;
    }
  });
  Histogram merged;
  for (auto& part : parts)
    for (const auto& [k, n] : part) merged[k] += n;
  return merged;
}

struct Weighted {
  double value;
  std::uint64_t count;
};

double weighted_mean(const std::vector<Weighted>& xs) {
  CompensatedSum s;
  std::uint64_t n = 0;
  for (const auto& x : xs) {
    s.add(x.value * static_cast<double>(x.count));
    n += x.count;
  }
  return n ? s.value() / static_cast<double>(n) : 0.0;
}

double weighted_pnorm(const std::vector<Weighted>& xs, double p, double center) {
  double acc = kNegInf;
  std::uint64_t n = 0;
  for (const auto& x : xs) {
    n += x.count;
    const double dev = std::abs(x.value - center);
    if (dev == 0.0) continue;
    acc = lse(acc, std::log(static_cast<double>(x.count)) + p * std::log(dev));
  }
  if (n == 0 || acc == kNegInf) return 0.0;
  return std::exp((acc - std::log(static_cast<double>(n))) / p);
}

std::vector<Weighted> channel(const Histogram& h, unsigned ch, std::optional<std::uint64_t> bucket = std::nullopt) {
  std::vector<Weighted> out;
  for (const auto& [k, n] : h) {
    if (std::get<0>(k) != ch) continue;
    if (bucket && std::get<1>(k) != *bucket) continue;
    out.push_back({std::get<2>(k), n});
  }
  return out;
}

void fill_bound(MomentEstimate& e, const MomentRequest& req, const ValueStats& stats) {
  const auto kind = req.scheme.kind;
  const auto& params = req.scheme.params;
  e.bound = moment_bound(kind, e.p, stats, params, req.policy);
  e.shape = moment_shape(kind, e.p, stats, params);
  auto ratio = [&](double b) {
    if (b > 0.0) return e.estimate / b;
    return e.estimate == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  };
  e.ratio = ratio(e.bound);
  e.shape_ratio = ratio(e.shape);
}

MomentEstimate exact_estimate(const MomentRequest& req, const std::vector<Weighted>& xs, double p, double mean,
                              const ValueStats& stats) {
  MomentEstimate e;
  e.p = p;
  e.estimate = weighted_pnorm(xs, p, mean);
  fill_bound(e, req, stats);
  return e;
}

MomentEstimate sampled_estimate(const MomentRequest& req, const std::vector<double>& xs, double p,
                                const ValueStats& stats) {
  MomentEstimate e;
  e.p = p;
  const auto jk = jackknife_pnorm(xs, p, 0.0);
  e.estimate = jk.estimate;
  e.std_error = jk.std_error;
  fill_bound(e, req, stats);
  return e;
}

MomentReport base_report(const MomentRequest& req) {
  MomentReport r;
  r.scheme = req.scheme.to_string();
  r.mode = req.mode;
  r.sign_mode = req.sign_mode;
  r.base_seed = req.base_seed;
  return r;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TableFillingEnumerator exact_enumerator(const MomentRequest& req, std::size_t support) {
  if (support > kMaxExactSupport) throw SizeError("exact mode supports at most 256 keys");
  return TableFillingEnumerator(enumeration_shapes(req.scheme, req.sign_mode));
}

template <class Observe>
std::vector<Observation> sample_observations(const MomentRequest& req, Observe&& observe) {
  std::vector<Observation> out(req.samples);
  parallel_for(req.samples, req.threads, [&](std::uint64_t i) { out[i] = observe(sample_seed(req.base_seed, i)); });
  return out;
}

// Bound of the aggregate over query bins: the largest per-bin bound.
void aggregate_bounds(MomentReport& r) {
  for (std::size_t j = 0; j < r.estimates.size(); ++j) {
    auto& e = r.estimates[j];
    double bound = 0.0, shape = 0.0;
    for (const auto& b : r.buckets) {
      bound = std::max(bound, b.estimates[j].bound);
      shape = std::max(shape, b.estimates[j].shape);
    }
    e.bound = bound;
    e.shape = shape;
    e.ratio = bound > 0.0 ? e.estimate / bound : 0.0;
    e.shape_ratio = shape > 0.0 ? e.estimate / shape : 0.0;
  }
}

// All compositions of `total` into `parts` nonnegative parts.
void compositions(std::uint32_t total, std::size_t parts, std::vector<std::uint32_t>& cur,
                  std::vector<std::vector<std::uint32_t>>& out) {
  if (cur.size() + 1 == parts) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (std::uint32_t x = 0; x <= total; ++x) {
    cur.push_back(x);
    compositions(total - x, parts, cur, out);
    cur.pop_back();
  }
}

// log of the multinomial probability of occupancy vector n for sum(n) uniform
// draws over n.size() bins.
double log_multinomial(const std::vector<std::uint32_t>& n) {
  double total = 0;
  double out = 0;
  for (auto x : n) {
    total += x;
    out -= std::lgamma(x + 1.0);
  }
  return out + std::lgamma(total + 1.0) - total * std::log(static_cast<double>(n.size()));
}

// Nonincreasing positive parts of `total`, at most `max_parts` of them.
void partitions(std::uint32_t total, std::uint32_t largest, std::size_t max_parts, std::vector<std::uint32_t>& cur,
                std::vector<std::vector<std::uint32_t>>& out) {
  if (total == 0) {
    out.push_back(cur);
    return;
  }
  if (cur.size() == max_parts) return;
  for (std::uint32_t x = std::min(total, largest); x >= 1; --x) {
    cur.push_back(x);
    partitions(total - x, x, max_parts, cur, out);
    cur.pop_back();
  }
}

constexpr std::uint64_t kMaxOccupancyWork = std::uint64_t{1} << 27;

}  // namespace

std::string to_string(SignMode mode) {
  switch (mode) {
    case SignMode::none:
      return "none";
    case SignMode::simple_sign:
      return "simple_sign";
    case SignMode::mixed_sign:
      return "mixed_sign";
  }
  return "none";
}

std::string to_string(MomentMode mode) { return mode == MomentMode::exact ? "exact" : "monte_carlo"; }

void MomentRequest::validate() const {
  scheme.validate();
  policy.validate();
  if (ps.empty()) throw DomainError("at least one p is required");
  for (double p : ps)
    if (!(p >= 2.0) || !std::isfinite(p)) throw DomainError("moment orders must be finite and >= 2");
  if (mode == MomentMode::monte_carlo && samples < kMinSamples)
    throw DomainError("Monte Carlo needs at least 100 samples");
  if (sign_mode == SignMode::mixed_sign && scheme.kind != SchemeKind::mixed)
    throw DomainError("mixed sign functions need a mixed scheme");
  if (sign_mode == SignMode::simple_sign && scheme.kind == SchemeKind::mixed)
    throw DomainError("a mixed scheme pairs with mixed_sign");
  if (threads < 1) throw DomainError("threads must be >= 1");
}

std::string MomentReport::to_json(bool with_timing) const {
  using nlohmann::ordered_json;
  auto stats_json = [](const ValueStats& s) {
    ordered_json j;
    j["M"] = s.max_abs;
    j["sigma2"] = s.sigma2;
    j["spread"] = s.spread;
    j["weight_ratio"] = s.weight_ratio;
    j["total_l2_sq"] = s.total_l2_sq;
    return j;
  };
  auto estimates_json = [](const std::vector<MomentEstimate>& es) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : es) {
      ordered_json j;
      j["p"] = e.p;
      j["estimate"] = e.estimate;
      j["std_error"] = e.std_error;
      j["bound"] = e.bound;
      j["ratio"] = e.ratio;
      j["shape"] = e.shape;
      j["shape_ratio"] = e.shape_ratio;
      arr.push_back(j);
    }
    return arr;
  };
  ordered_json j;
  j["scheme"] = scheme;
  j["mode"] = to_string(mode);
  j["sign_mode"] = to_string(sign_mode);
  j["samples"] = samples;
  j["base_seed"] = base_seed;
  j["mean"] = mean;
  j["stats"] = stats_json(stats);
  j["estimates"] = estimates_json(estimates);
  if (!buckets.empty()) {
    ordered_json arr = ordered_json::array();
    for (const auto& b : buckets) {
      ordered_json jb;
      jb["query_bin"] = b.query_bin;
      jb["count"] = b.count;
      jb["stats"] = stats_json(b.stats);
      jb["estimates"] = estimates_json(b.estimates);
      arr.push_back(jb);
    }
    j["buckets"] = arr;
  }
  if (with_timing) j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

std::string MomentReport::to_csv() const {
  std::string out = "bucket,p,estimate,std_error,bound,ratio,shape,shape_ratio\n";
  auto rows = [&](const std::string& bucket, const std::vector<MomentEstimate>& es) {
    for (const auto& e : es) {
      out += bucket;
      for (double x : {e.p, e.estimate, e.std_error, e.bound, e.ratio, e.shape, e.shape_ratio}) {
        out += ',';
        out += format_double(x);
      }
      out += '\n';
    }
  };
  rows("all", estimates);
  for (const auto& b : buckets) rows(std::to_string(b.query_bin), b.estimates);
  return out;
}

double pnorm(const std::vector<double>& values, double p, double center) {
  if (values.empty()) return 0.0;
  double acc = kNegInf;
  for (double x : values) {
    const double dev = std::abs(x - center);
    if (dev > 0.0) acc = lse(acc, p * std::log(dev));
  }
  if (acc == kNegInf) return 0.0;
  return std::exp((acc - std::log(static_cast<double>(values.size()))) / p);
}

JackknifeResult jackknife_pnorm(const std::vector<double>& values, double p, double center) {
  const std::uint64_t n = values.size();
  JackknifeResult out;
  if (n == 0) return out;
  std::uint64_t block = kJackknifeBlock;
  if (n / block < 2) block = 1;
  const std::uint64_t blocks = n / block;
  if (blocks < 2) {
    out.estimate = pnorm(values, p, center);
    return out;
  }
  std::vector<double> sums(blocks, kNegInf);
  std::vector<std::uint64_t> sizes(blocks, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t g = std::min(i / block, blocks - 1);
    sizes[g]++;
    const double dev = std::abs(values[i] - center);
    if (dev > 0.0) sums[g] = lse(sums[g], p * std::log(dev));
  }
  std::vector<double> prefix(blocks + 1, kNegInf), suffix(blocks + 1, kNegInf);
  for (std::uint64_t g = 0; g < blocks; ++g) prefix[g + 1] = lse(prefix[g], sums[g]);
  for (std::uint64_t g = blocks; g-- > 0;) suffix[g] = lse(suffix[g + 1], sums[g]);
  auto norm = [p](double log_sum, std::uint64_t count) {
    return log_sum == kNegInf ? 0.0 : std::exp((log_sum - std::log(static_cast<double>(count))) / p);
  };
  out.estimate = norm(prefix[blocks], n);
  std::vector<double> loo(blocks);
  CompensatedSum mean;
  for (std::uint64_t g = 0; g < blocks; ++g) {
    loo[g] = norm(lse(prefix[g], suffix[g + 1]), n - sizes[g]);
    mean.add(loo[g]);
  }
  const double bar = mean.value() / static_cast<double>(blocks);
  CompensatedSum var;
  for (double x : loo) var.add((x - bar) * (x - bar));
  out.std_error = std::sqrt(var.value() * static_cast<double>(blocks - 1) / static_cast<double>(blocks));
  return out;
}

std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t i) { return derive_seed(base_seed, i); }
std::uint64_t sign_seed(std::uint64_t seed) { return derive_seed(seed, kSignStream); }

std::vector<TableShape> enumeration_shapes(const SchemeDescriptor& scheme, SignMode sign) {
  scheme.validate();
  const auto& p = scheme.params;
  std::vector<TableShape> shapes;
  switch (scheme.kind) {
    case SchemeKind::fully_random:
      shapes.push_back({1, p.key_bits(), p.range_bits});
      if (sign != SignMode::none) shapes.push_back({1, p.key_bits(), 1});
      break;
    case SchemeKind::simple:
      shapes.push_back({p.num_chars, p.char_bits, p.range_bits});
      if (sign != SignMode::none) shapes.push_back({p.num_chars, p.char_bits, 1});
      break;
    case SchemeKind::mixed:
      shapes.push_back({p.num_chars, p.char_bits, p.range_bits});
      shapes.push_back({p.num_chars, p.char_bits, p.derived_chars * p.char_bits});
      shapes.push_back({p.derived_chars, p.char_bits, p.range_bits});
      if (sign != SignMode::none) {
        shapes.push_back({p.num_chars, p.char_bits, 1});
        shapes.push_back({p.derived_chars, p.char_bits, 1});
      }
      break;
  }
  // Shapes wider than one key are never enumerable; report them as too large.
  for (const auto& s : shapes)
    if (s.char_bits > 32) throw SizeError("table too large to enumerate");
  return shapes;
}

std::vector<double> cube_single_bin_pnorms(const SchemeParams& params, std::uint64_t side,
                                           const std::vector<double>& ps) {
  params.validate();
  const std::size_t m = params.range_size();
  const unsigned c = params.num_chars;
  if (side < 1 || side > params.alphabet_size()) throw RangeError("cube side out of range");
  if (m > 4096 || side > 4096) throw SizeError("occupancy oracle needs m, side <= 4096");
  const auto r = static_cast<std::uint32_t>(side);

  // Law of the prefix occupancy: mult[j] = #{a in [r]^{c-1} : xor_i T(i, a_i) = j},
  // as vector -> log probability.
  std::map<std::vector<std::uint32_t>, double> law;
  if (c == 1) {
    std::vector<std::uint32_t> start(m, 0);
    start[0] = 1;
    law[start] = 0.0;
  } else if (c == 2) {
    // One prefix row: only the multiset of occupancies matters.
    std::vector<std::vector<std::uint32_t>> parts;
    std::vector<std::uint32_t> cur;
    partitions(r, r, m, cur, parts);
    for (auto& part : parts) {
      std::vector<std::uint32_t> occ(m, 0);
      std::copy(part.begin(), part.end(), occ.begin());
      double arrangements = std::lgamma(m + 1.0);
      for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j < m && occ[j] == occ[i]) ++j;
        arrangements -= std::lgamma(static_cast<double>(j - i) + 1.0);
        i = j;
      }
      law[occ] = arrangements + log_multinomial(occ);
    }
  } else {
    std::vector<std::vector<std::uint32_t>> comps;
    std::vector<std::uint32_t> cur;
    double count = 1.0;  // C(r + m - 1, m - 1)
    for (std::size_t i = 1; i < m; ++i) count = count * static_cast<double>(r + i) / static_cast<double>(i);
    if (count * static_cast<double>(m * m) > static_cast<double>(kMaxOccupancyWork))
      throw SizeError("too many occupancy vectors");
    compositions(r, m, cur, comps);
    std::vector<double> comp_logp(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) comp_logp[i] = log_multinomial(comps[i]);
    std::vector<std::uint32_t> start(m, 0);
    start[0] = 1;
    law[start] = 0.0;
    for (unsigned row = 0; row + 1 < c; ++row) {
      if (static_cast<double>(law.size()) * static_cast<double>(comps.size() * m * m) >
          static_cast<double>(kMaxOccupancyWork))
        throw SizeError("too many occupancy vectors");
      std::map<std::vector<std::uint32_t>, double> next;
      std::vector<std::uint32_t> conv(m);
      for (const auto& [mult, lp] : law) {
        for (std::size_t ci = 0; ci < comps.size(); ++ci) {
          std::fill(conv.begin(), conv.end(), 0);
          for (std::size_t a = 0; a < m; ++a) {
            if (!mult[a]) continue;
            for (std::size_t b = 0; b < m; ++b) conv[a ^ b] += mult[a] * comps[ci][b];
          }
          auto [it, inserted] = next.try_emplace(conv, lp + comp_logp[ci]);
          if (!inserted) it->second = lse(it->second, lp + comp_logp[ci]);
        }
      }
      law = std::move(next);
    }
  }
  // The last row only sees the multiset of occupancies.
  std::map<std::vector<std::uint32_t>, double> canon;
  for (const auto& [mult, lp] : law) {
    auto key = mult;
    std::sort(key.begin(), key.end());
    auto [it, inserted] = canon.try_emplace(key, lp);
    if (!inserted) it->second = lse(it->second, lp);
  }

  const std::uint64_t sigma = params.alphabet_size();
  double support = static_cast<double>(sigma);
  for (unsigned i = 0; i + 1 < c; ++i) support *= static_cast<double>(side);
  const double mean = support / static_cast<double>(m);
  std::vector<double> acc(ps.size(), kNegInf);
  for (const auto& [mult, lp] : canon) {
    // Each last-row character lands in bin J uniform and adds mult[J] keys to bin 0.
    const std::uint32_t top = *std::max_element(mult.begin(), mult.end());
    std::vector<double> draw(top + 1, 0.0);
    for (auto x : mult) draw[x] += 1.0 / static_cast<double>(m);
    std::vector<double> pmf{1.0};
    for (std::uint64_t s = 0; s < sigma; ++s) {
      std::vector<double> nxt(pmf.size() + top, 0.0);
      for (std::size_t y = 0; y < pmf.size(); ++y) {
        if (pmf[y] == 0.0) continue;
        for (std::size_t d = 0; d < draw.size(); ++d) nxt[y + d] += pmf[y] * draw[d];
      }
      pmf = std::move(nxt);
    }
    for (std::size_t y = 0; y < pmf.size(); ++y) {
      const double dev = std::abs(static_cast<double>(y) - mean);
      if (pmf[y] <= 0.0 || dev == 0.0) continue;
      const double base = lp + std::log(pmf[y]);
      for (std::size_t i = 0; i < ps.size(); ++i) acc[i] = lse(acc[i], base + ps[i] * std::log(dev));
    }
  }
  std::vector<double> out(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) out[i] = acc[i] == kNegInf ? 0.0 : std::exp(acc[i] / ps[i]);
  return out;
}

namespace {

// side when v is w([j = t] - 1/m) on exactly [side]^{c-1} x Sigma.
std::optional<std::uint64_t> cube_side(const MomentRequest& req, const ValueFunction& v) {
  const auto& params = req.scheme.params;
  if (req.scheme.kind != SchemeKind::simple || req.sign_mode != SignMode::none) return std::nullopt;
  if (v.kind() != ValueKind::single_bin || v.size() == 0) return std::nullopt;
  const unsigned c = params.num_chars;
  std::uint64_t side = 1;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v.weight(i) != v.weight(0)) return std::nullopt;
    for (unsigned pos = 0; pos + 1 < c; ++pos) side = std::max(side, params.character(v.keys()[i], pos) + 1);
  }
  double expected = static_cast<double>(params.alphabet_size());
  for (unsigned pos = 0; pos + 1 < c; ++pos) expected *= static_cast<double>(side);
  if (expected != static_cast<double>(v.size())) return std::nullopt;
  auto keys = v.keys();
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) return std::nullopt;
  return side;
}

}  // namespace

MomentReport exact_moments(const MomentRequest& req, const ValueFunction& v) {
  req.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<TableFillingEnumerator> maybe_en;
  try {
    maybe_en.emplace(exact_enumerator(req, v.size()));
  } catch (const SizeError&) {
    const auto side = cube_side(req, v);
    if (!side) throw;
    const auto norms = cube_single_bin_pnorms(req.scheme.params, *side, req.ps);
    auto r = base_report(req);
    r.samples = 0;
    r.stats = v.stats();
    for (std::size_t i = 0; i < req.ps.size(); ++i) {
      MomentEstimate e;
      e.p = req.ps[i];
      e.estimate = std::abs(v.weight(0)) * norms[i];
      fill_bound(e, req, r.stats);
      r.estimates.push_back(e);
    }
    r.wall_seconds = seconds_since(t0);
    return r;
  }
  const auto& en = *maybe_en;
  const auto hist = enumerate_histogram(en, req.threads, [&](const std::vector<TabulationTable>& t, auto& out) {
    out.push_back({with_filling(req.scheme, req.sign_mode, t, [&](const auto& h, const auto& s) {
      return signed_sum(v, h, s);
    })});
  });
  auto r = base_report(req);
  r.samples = en.count();
  r.stats = v.stats();
  const auto xs = channel(hist, 0);
  r.mean = weighted_mean(xs);
  for (double p : req.ps) r.estimates.push_back(exact_estimate(req, xs, p, r.mean, r.stats));
  r.wall_seconds = seconds_since(t0);
  return r;
}

MomentReport monte_carlo_moments(const MomentRequest& req, const ValueFunction& v) {
  req.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto obs = sample_observations(req, [&](std::uint64_t seed) {
    return Observation{with_seed(req.scheme, req.sign_mode, seed, [&](const auto& h, const auto& s) {
      return signed_sum(v, h, s);
    })};
  });
  std::vector<double> xs(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) xs[i] = obs[i].value;
  auto r = base_report(req);
  r.samples = req.samples;
  r.stats = v.stats();
  for (double p : req.ps) r.estimates.push_back(sampled_estimate(req, xs, p, r.stats));
  r.wall_seconds = seconds_since(t0);
  return r;
}

MomentReport estimate_moments(const MomentRequest& req, const ValueFunction& v) {
  return req.mode == MomentMode::exact ? exact_moments(req, v) : monte_carlo_moments(req, v);
}

MomentReport exact_query_moments(const MomentRequest& req, const QueryValueFunction& v) {
  req.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto en = exact_enumerator(req, v.size() + 1);
  const auto hist = enumerate_histogram(en, req.threads, [&](const std::vector<TabulationTable>& t, auto& out) {
    out.push_back(with_filling(req.scheme, req.sign_mode, t, [&](const auto& h, const auto& s) {
      return signed_query_sum(v, h, s);
    }));
  });
  auto r = base_report(req);
  r.samples = en.count();
  r.stats = v.stats_at(0);
  const auto all = channel(hist, 0);
  r.mean = weighted_mean(all);
  std::vector<std::uint64_t> bins;
  for (const auto& [k, n] : hist)
    if (bins.empty() || bins.back() != std::get<1>(k)) bins.push_back(std::get<1>(k));
  for (auto bin : bins) {
    BucketMoments b;
    b.query_bin = bin;
    b.stats = v.stats_at(bin);
    const auto xs = channel(hist, 0, bin);
    for (const auto& x : xs) b.count += x.count;
    const double mean = weighted_mean(xs);
    for (double p : req.ps) b.estimates.push_back(exact_estimate(req, xs, p, mean, b.stats));
    r.buckets.push_back(std::move(b));
  }
  for (double p : req.ps) {
    MomentEstimate e;
    e.p = p;
    e.estimate = weighted_pnorm(all, p, r.mean);
    r.estimates.push_back(e);
  }
  aggregate_bounds(r);
  r.wall_seconds = seconds_since(t0);
  return r;
}

MomentReport monte_carlo_query_moments(const MomentRequest& req, const QueryValueFunction& v) {
  req.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto obs = sample_observations(req, [&](std::uint64_t seed) {
    return with_seed(req.scheme, req.sign_mode, seed, [&](const auto& h, const auto& s) {
      return signed_query_sum(v, h, s);
    });
  });
  auto r = base_report(req);
  r.samples = req.samples;
  r.stats = v.stats_at(0);
  std::map<std::uint64_t, std::vector<double>> by_bin;
  std::vector<double> all(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    all[i] = obs[i].value;
    by_bin[obs[i].bucket].push_back(obs[i].value);
  }
  for (const auto& [bin, xs] : by_bin) {
    BucketMoments b;
    b.query_bin = bin;
    b.count = xs.size();
    b.stats = v.stats_at(bin);
    for (double p : req.ps) b.estimates.push_back(sampled_estimate(req, xs, p, b.stats));
    r.buckets.push_back(std::move(b));
  }
  for (double p : req.ps) {
    MomentEstimate e;
    e.p = p;
    const auto jk = jackknife_pnorm(all, p, 0.0);
    e.estimate = jk.estimate;
    e.std_error = jk.std_error;
    r.estimates.push_back(e);
  }
  aggregate_bounds(r);
  r.wall_seconds = seconds_since(t0);
  return r;
}

MomentReport estimate_query_moments(const MomentRequest& req, const QueryValueFunction& v) {
  return req.mode == MomentMode::exact ? exact_query_moments(req, v) : monte_carlo_query_moments(req, v);
}

double sum_of_squares_statistic(const ValueFunction& v, const SimpleTabHash& h, const SignFunction& eps) {
  const std::uint64_t m = v.range();
  if (static_cast<std::uint64_t>(v.size()) * m > kSumOfSquaresCells)
    throw SizeError("sum-of-squares statistic needs at most 2^26 (key, bin) cells");
  std::vector<double> acc(m, 0.0);
  const auto& keys = v.keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::uint64_t hx = h(keys[i]);
    const double e = eps(keys[i]);
    for (std::uint64_t j = 0; j < m; ++j) acc[j] += e * v(i, hx ^ j);
  }
  CompensatedSum s;
  for (double a : acc) s.add(a * a);
  return s.value();
}

double sum_of_squares_shape(double p, const ValueStats& stats, const SchemeParams& params) {
  if (stats.total_l2_sq == 0.0) return 0.0;
  const double m = static_cast<double>(params.range_size());
  const double denom = 2.0 * std::log(std::numbers::e * std::numbers::e * m * stats.total_l2_sq / stats.total_l1_sq);
  const double factor = std::max(1.0, std::pow(p / denom, static_cast<double>(params.num_chars)));
  return factor * stats.total_l2_sq;
}

std::vector<SumOfSquaresReport> sum_of_squares_moments(const MomentRequest& req, const ValueFunction& v) {
  req.validate();
  if (req.scheme.kind != SchemeKind::simple) throw DomainError("the sum-of-squares statistic uses simple tabulation");
  const auto& params = req.scheme.params;
  std::vector<double> xs(req.samples);
  parallel_for(req.samples, req.threads, [&](std::uint64_t i) {
    const std::uint64_t seed = sample_seed(req.base_seed, i);
    xs[i] = sum_of_squares_statistic(v, SimpleTabHash(params, seed), SignFunction(params, sign_seed(seed)));
  });
  const auto stats = v.stats();
  std::vector<SumOfSquaresReport> out;
  for (double p : req.ps) {
    SumOfSquaresReport r;
    r.p = p;
    const auto jk = jackknife_pnorm(xs, p / 2.0, 0.0);
    r.norm = jk.estimate;
    r.std_error = jk.std_error;
    r.shape = sum_of_squares_shape(p, stats, params);
    r.ratio = r.shape > 0.0 ? r.norm / r.shape : 0.0;
    out.push_back(r);
  }
  return out;
}

bool SymmetrizationReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const SymmetrizationRow& r) { return r.pass; });
}

SymmetrizationReport symmetrization_check(const ValueFunction& v, const SchemeParams& params,
                                          const std::vector<double>& ps, unsigned threads) {
  if (v.size() > kMaxExactSupport) throw SizeError("exact mode supports at most 256 keys");
  const SchemeDescriptor scheme{SchemeKind::simple, params};
  const TableFillingEnumerator en(enumeration_shapes(scheme, SignMode::simple_sign));
  const auto hist = enumerate_histogram(en, threads, [&](const std::vector<TabulationTable>& t, auto& out) {
    SimpleTabHash h(params, t[0]);
    SignFunction eps(params, t[1]);
    out.push_back({signed_sum(v, h, NoSign{})});
    out.push_back({signed_sum(v, h, eps)});
  });
  const auto plain = channel(hist, 0);
  const auto sgn = channel(hist, 1);
  const double factor = std::ldexp(1.0, static_cast<int>(params.num_chars));
  SymmetrizationReport report;
  for (double p : ps) {
    SymmetrizationRow row;
    row.p = p;
    row.plain = weighted_pnorm(plain, p, 0.0);
    row.signed_norm = weighted_pnorm(sgn, p, 0.0);
    row.lower = row.signed_norm / factor;
    row.upper = row.signed_norm * factor;
    const double tol = 1e-12 * std::max(row.plain, row.upper);
    row.pass = row.lower <= row.plain + tol && row.plain <= row.upper + tol;
    report.rows.push_back(row);
  }
  return report;
}

KhintchineReport khintchine_check(const std::vector<WeightedKey>& weights, const SchemeParams& params,
                                  const std::vector<double>& ps, std::uint64_t trials, std::uint64_t base_seed,
                                  unsigned threads) {
  params.validate();
  if (params.derived_chars < 1) throw RangeError("mixed sign functions need d >= 1");
  for (double p : ps)
    if (!(p >= 2.0)) throw DomainError("moment orders must be >= 2");
  const SchemeParams p3 = sign3_params(params);
  const unsigned k = params.char_bits, c = params.num_chars, d = params.derived_chars;

  auto sign_sum = [&](const auto& eps) {
    CompensatedSum s;
    for (const auto& w : weights) s.add(w.weight * eps(w.key));
    return s.value();
  };

  KhintchineReport report;
  std::vector<Weighted> exact_values;
  std::vector<double> mixed_values;
  const std::vector<TableShape> shapes{{c, k, 1}, {c, k, d * k}, {d, k, 1}};
  std::uint64_t bits = 0;
  for (const auto& s : shapes) bits += s.total_bits();
  if (trials == 0) {
    if (bits > kDefaultEnumerationBits) throw SizeError("mixed sign function too large to enumerate");
    report.exact = true;
    const TableFillingEnumerator en(shapes);
    const auto t1 = TabulationTable::from_entries(c, k, params.range_bits,
                                                  std::vector<std::uint64_t>(std::uint64_t{c} << k, 0));
    const auto t3 = TabulationTable::from_entries(d, k, params.range_bits,
                                                  std::vector<std::uint64_t>(std::uint64_t{d} << k, 0));
    const auto hist = enumerate_histogram(en, threads, [&](const std::vector<TabulationTable>& t, auto& out) {
      MixedTabHash h(params, t1, t[1], t3);
      MixedSignFunction eps(h, SignFunction(params, t[0]), SignFunction(p3, t[2]));
      out.push_back({sign_sum(eps)});
    });
    exact_values = channel(hist, 0);
    report.samples = en.count();
    trials = 10000;  // for the Rademacher baseline
  } else {
    if (trials < kMinSamples) throw DomainError("Monte Carlo needs at least 100 samples");
    mixed_values.resize(trials);
    parallel_for(trials, threads, [&](std::uint64_t i) {
      const std::uint64_t seed = sample_seed(base_seed, i);
      MixedTabHash h(params, seed);
      mixed_values[i] = sign_sum(MixedSignFunction(h, sign_seed(seed)));
    });
    report.samples = trials;
  }
  std::vector<double> iid(trials);
  parallel_for(trials, threads, [&](std::uint64_t i) {
    iid[i] = sign_sum(FullyRandomSign(derive_seed(sample_seed(base_seed, i), kRademacherStream)));
  });

  CompensatedSum w2;
  for (const auto& w : weights) w2.add(w.weight * w.weight);
  for (double p : ps) {
    KhintchineRow row;
    row.p = p;
    if (report.exact) {
      row.norm = weighted_pnorm(exact_values, p, 0.0);
    } else {
      const auto jk = jackknife_pnorm(mixed_values, p, 0.0);
      row.norm = jk.estimate;
      row.std_error = jk.std_error;
    }
    row.gamma = gamma_p_khintchine(p, params.alphabet_size());
    row.rhs = std::sqrt(p * w2.value()) * std::pow(row.gamma, c / 2.0);
    row.ratio = row.rhs > 0.0 ? row.norm / row.rhs : 0.0;
    const auto rj = jackknife_pnorm(iid, p, 0.0);
    row.rademacher = rj.estimate;
    row.rademacher_std_error = rj.std_error;
    row.khintchine_rhs = std::sqrt(p * std::numbers::e * w2.value());
    row.rademacher_ratio = row.khintchine_rhs > 0.0 ? row.rademacher / row.khintchine_rhs : 0.0;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace tabhash
