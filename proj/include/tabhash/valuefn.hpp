#pragma once

// Value functions v: Sigma^c x [m] -> R over an explicit support of keys,
// hash-based sums X = sum_x v(x, h(x)) and their query-conditioned variant.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "tabhash/tabulation.hpp"

namespace tabhash {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

enum class ValueKind { dense, single_bin, threshold, custom_sparse };

struct WeightedKey {
  Key key;
  double weight = 1.0;
};

struct SparseEntry {
  Key key;
  std::uint64_t bin = 0;
  double value = 0.0;
};

struct ValueStats {
  double max_abs = 0.0;         // M_v
  double sigma2 = 0.0;          // sum_x ||v[x]||_2^2 / m
  double spread = 1.0;          // max_x ||v[x]||_1^2 / ||v[x]||_2^2
  double weight_ratio = 1.0;    // sum_x ||v[x]||_2^2 / max_x ||v[x]||_2^2
  double total_l2_sq = 0.0;     // sum_x ||v[x]||_2^2
  double total_l1_sq = 0.0;     // sum_x ||v[x]||_1^2
};

class ValueFunction {
 public:
  // v(x, j) = w_x ([j = target] - 1/m).
  static ValueFunction single_bin(std::vector<WeightedKey> weights, std::uint64_t target, std::uint64_t m);
  // v(x, j) = w_x ([j < l] - l/m), 0 <= l <= m.
  static ValueFunction threshold(std::vector<WeightedKey> weights, std::uint64_t l, std::uint64_t m);
  // rows[i] holds v(keys[i], j) for j in [m]. Throws DomainError unless every
  // row sums to zero (relative tolerance 1e-9) and all values are finite.
  static ValueFunction dense(std::vector<Key> keys, std::vector<std::vector<double>> rows, std::uint64_t m);
  // Unlisted (key, bin) pairs are 0. Same mean-zero check as dense.
  static ValueFunction custom_sparse(const std::vector<SparseEntry>& entries, std::uint64_t m);
  // a*v1 + b*v2 over the union of supports, as a dense function.
  static ValueFunction linear_combination(double a, const ValueFunction& v1, double b, const ValueFunction& v2);

  ValueKind kind() const { return kind_; }
  std::uint64_t range() const { return m_; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<Key>& keys() const { return keys_; }
  // Weight w_x for single-bin/threshold kinds, 1 otherwise.
  double weight(std::size_t i) const { return weights_.empty() ? 1.0 : weights_[i]; }
  std::uint64_t parameter() const { return param_; }

  // v(keys()[i], bin).
  double operator()(std::size_t i, std::uint64_t bin) const {
    switch (kind_) {
      case ValueKind::single_bin:
        return weights_[i] * ((bin == param_ ? 1.0 : 0.0) - inv_m_);
      case ValueKind::threshold:
        return weights_[i] * ((bin < param_ ? 1.0 : 0.0) - static_cast<double>(param_) * inv_m_);
      case ValueKind::dense:
        return dense_[i * m_ + bin];
      case ValueKind::custom_sparse:
        return sparse_lookup(i, bin);
    }
    return 0.0;
  }

  // Closed forms for single-bin and threshold kinds, exact sums otherwise.
  ValueStats stats() const;
  // Brute force over the full (key, bin) grid; reference for stats().
  ValueStats stats_by_grid() const;

 private:
  ValueFunction() = default;
  double sparse_lookup(std::size_t i, std::uint64_t bin) const;
  void check_mean_zero() const;

  ValueKind kind_ = ValueKind::dense;
  std::uint64_t m_ = 0;
  double inv_m_ = 0.0;
  std::uint64_t param_ = 0;
  std::vector<Key> keys_;
  std::vector<double> weights_;
  std::vector<double> dense_;
  // Per key: sorted (bin, value) pairs.
  std::vector<std::vector<std::pair<std::uint64_t, double>>> sparse_;
};

// All keys of Sigma^c in packed order. Throws SizeError above 2^24 keys.
std::vector<Key> all_keys(const SchemeParams& params);

std::vector<WeightedKey> uniform_weights(const std::vector<Key>& keys, double w = 1.0);

// X = sum_x v(x, h(x)), accumulated with compensated summation.
template <class Hash>
double hash_sum(const ValueFunction& v, const Hash& h) {
  CompensatedSum s;
  const auto& keys = v.keys();
  for (std::size_t i = 0; i < keys.size(); ++i) s.add(v(i, h(keys[i])));
  return s.value();
}

// sum_x eps(x) v(x, h(x)).
template <class Hash, class Sign>
double hash_sum(const ValueFunction& v, const Hash& h, const Sign& eps) {
  CompensatedSum s;
  const auto& keys = v.keys();
  for (std::size_t i = 0; i < keys.size(); ++i) s.add(eps(keys[i]) * v(i, h(keys[i])));
  return s.value();
}

inline double hash_sum(const ValueFunction& v, const HashFunction& h) {
  return std::visit([&](const auto& f) { return hash_sum(v, f); }, h);
}

// v(x, j, k) for keys x != q; k is the bin of the query key.
class QueryValueFunction {
 public:
  using Evaluator = std::function<double(std::size_t key_index, std::uint64_t bin, std::uint64_t query_bin)>;

  // v(x, j, k) = w_x ([j = k] - 1/m): centered weight of keys sharing q's bin.
  static QueryValueFunction collision(std::vector<WeightedKey> weights, Key query, std::uint64_t m);
  // Arbitrary evaluator over `keys` (q is removed if present). The mean-zero
  // condition sum_j v(x, j, k) = 0 is checked when keys * m * m <= 2^24.
  static QueryValueFunction custom(std::vector<Key> keys, Key query, std::uint64_t m, Evaluator eval);

  Key query() const { return query_; }
  std::uint64_t range() const { return m_; }
  const std::vector<Key>& keys() const { return keys_; }
  std::size_t size() const { return keys_.size(); }

  double operator()(std::size_t i, std::uint64_t bin, std::uint64_t query_bin) const {
    if (eval_) return eval_(i, bin, query_bin);
    return weights_[i] * ((bin == query_bin ? 1.0 : 0.0) - 1.0 / static_cast<double>(m_));
  }

  // M_{v,q} and sigma^2_{v,q} (plus the norms entering gamma_p) at query bin k.
  ValueStats stats_at(std::uint64_t query_bin) const;

 private:
  QueryValueFunction() = default;

  Key query_;
  std::uint64_t m_ = 0;
  std::vector<Key> keys_;
  std::vector<double> weights_;
  Evaluator eval_;
};

struct QuerySum {
  double value = 0.0;
  std::uint64_t query_bin = 0;
};

// sum_{x != q} v(x, h(x), h(q)) together with h(q).
template <class Hash>
QuerySum query_hash_sum(const QueryValueFunction& v, const Hash& h) {
  const std::uint64_t hq = h(v.query());
  CompensatedSum s;
  const auto& keys = v.keys();
  for (std::size_t i = 0; i < keys.size(); ++i) s.add(v(i, h(keys[i]), hq));
  return {s.value(), hq};
}

inline QuerySum query_hash_sum(const QueryValueFunction& v, const HashFunction& h) {
  return std::visit([&](const auto& f) { return query_hash_sum(v, f); }, h);
}

}  // namespace tabhash
