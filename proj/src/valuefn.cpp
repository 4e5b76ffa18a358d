#include "tabhash/valuefn.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace tabhash {

namespace {

constexpr std::uint64_t kGridBudget = std::uint64_t{1} << 26;

void require_range(std::uint64_t m) {
  if (m < 1) throw DomainError("value function needs m >= 1");
}

void require_finite(const std::vector<WeightedKey>& weights) {
  for (const auto& w : weights) {
    if (!std::isfinite(w.weight)) throw DomainError("weights must be finite");
  }
}

struct RowNorms {
  double max_abs = 0.0;
  double l1 = 0.0;
  double l2_sq = 0.0;
};

ValueStats summarize(const std::vector<RowNorms>& rows, std::uint64_t m) {
  ValueStats st;
  CompensatedSum l2;
  CompensatedSum l1_sq;
  double max_l2 = 0.0;
  double spread = 0.0;
  for (const auto& r : rows) {
    st.max_abs = std::max(st.max_abs, r.max_abs);
    l2.add(r.l2_sq);
    l1_sq.add(r.l1 * r.l1);
    max_l2 = std::max(max_l2, r.l2_sq);
    if (r.l2_sq > 0.0) spread = std::max(spread, r.l1 * r.l1 / r.l2_sq);
  }
  st.total_l2_sq = l2.value();
  st.total_l1_sq = l1_sq.value();
  st.sigma2 = st.total_l2_sq / static_cast<double>(m);
  st.spread = spread > 0.0 ? spread : 1.0;
  st.weight_ratio = max_l2 > 0.0 ? std::max(1.0, st.total_l2_sq / max_l2) : 1.0;
  return st;
}

}  // namespace

ValueFunction ValueFunction::single_bin(std::vector<WeightedKey> weights, std::uint64_t target, std::uint64_t m) {
  require_range(m);
  require_finite(weights);
  if (target >= m) throw DomainError("target bin must be < m");
  ValueFunction v;
  v.kind_ = ValueKind::single_bin;
  v.m_ = m;
  v.inv_m_ = 1.0 / static_cast<double>(m);
  v.param_ = target;
  for (const auto& w : weights) {
    v.keys_.push_back(w.key);
    v.weights_.push_back(w.weight);
  }
  return v;
}

ValueFunction ValueFunction::threshold(std::vector<WeightedKey> weights, std::uint64_t l, std::uint64_t m) {
  require_range(m);
  require_finite(weights);
  if (l > m) throw DomainError("threshold must satisfy 0 <= l <= m");
  ValueFunction v;
  v.kind_ = ValueKind::threshold;
  v.m_ = m;
  v.inv_m_ = 1.0 / static_cast<double>(m);
  v.param_ = l;
  for (const auto& w : weights) {
    v.keys_.push_back(w.key);
    v.weights_.push_back(w.weight);
  }
  return v;
}

ValueFunction ValueFunction::dense(std::vector<Key> keys, std::vector<std::vector<double>> rows, std::uint64_t m) {
  require_range(m);
  if (keys.size() != rows.size()) throw DomainError("dense value function needs one row per key");
  if (keys.size() * m > kGridBudget) throw SizeError("dense value function exceeds the grid budget");
  ValueFunction v;
  v.kind_ = ValueKind::dense;
  v.m_ = m;
  v.inv_m_ = 1.0 / static_cast<double>(m);
  v.keys_ = std::move(keys);
  v.dense_.reserve(v.keys_.size() * m);
  for (const auto& row : rows) {
    if (row.size() != m) throw DomainError("dense row must have m entries");
    for (double x : row) {
      if (!std::isfinite(x)) throw DomainError("value function entries must be finite");
      v.dense_.push_back(x);
    }
  }
  v.check_mean_zero();
  return v;
}

ValueFunction ValueFunction::custom_sparse(const std::vector<SparseEntry>& entries, std::uint64_t m) {
  require_range(m);
  std::map<Key, std::map<std::uint64_t, double>> grouped;
  for (const auto& e : entries) {
    if (e.bin >= m) throw DomainError("sparse entry bin must be < m");
    if (!std::isfinite(e.value)) throw DomainError("value function entries must be finite");
    auto [it, inserted] = grouped[e.key].emplace(e.bin, e.value);
    if (!inserted) throw DomainError("duplicate (key, bin) entry in sparse value function");
  }
  ValueFunction v;
  v.kind_ = ValueKind::custom_sparse;
  v.m_ = m;
  v.inv_m_ = 1.0 / static_cast<double>(m);
  for (const auto& [key, row] : grouped) {
    v.keys_.push_back(key);
    v.sparse_.emplace_back(row.begin(), row.end());
  }
  v.check_mean_zero();
  return v;
}

ValueFunction ValueFunction::linear_combination(double a, const ValueFunction& v1, double b,
                                                const ValueFunction& v2) {
  if (v1.range() != v2.range()) throw DomainError("value functions have different ranges");
  const std::uint64_t m = v1.range();
  std::map<Key, std::vector<double>> rows;
  auto accumulate = [&](double coef, const ValueFunction& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto& row = rows[v.keys()[i]];
      row.resize(m, 0.0);
      for (std::uint64_t j = 0; j < m; ++j) row[j] += coef * v(i, j);
    }
  };
  accumulate(a, v1);
  accumulate(b, v2);
  std::vector<Key> keys;
  std::vector<std::vector<double>> dense_rows;
  for (auto& [key, row] : rows) {
    keys.push_back(key);
    dense_rows.push_back(std::move(row));
  }
  return dense(std::move(keys), std::move(dense_rows), m);
}

double ValueFunction::sparse_lookup(std::size_t i, std::uint64_t bin) const {
  const auto& row = sparse_[i];
  auto it = std::lower_bound(row.begin(), row.end(), bin,
                             [](const std::pair<std::uint64_t, double>& e, std::uint64_t b) { return e.first < b; });
  return (it != row.end() && it->first == bin) ? it->second : 0.0;
}

void ValueFunction::check_mean_zero() const {
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    CompensatedSum sum;
    double abs_sum = 0.0;
    if (kind_ == ValueKind::custom_sparse) {
      for (const auto& [bin, x] : sparse_[i]) {
        sum.add(x);
        abs_sum += std::abs(x);
      }
    } else {
      for (std::uint64_t j = 0; j < m_; ++j) {
        const double x = (*this)(i, j);
        sum.add(x);
        abs_sum += std::abs(x);
      }
    }
    if (std::abs(sum.value()) > 1e-9 * abs_sum) {
      throw DomainError("value function is not mean-zero for key " + std::to_string(keys_[i].packed));
    }
  }
}

ValueStats ValueFunction::stats() const {
  if (kind_ != ValueKind::single_bin && kind_ != ValueKind::threshold) {
    if (kind_ == ValueKind::dense) return stats_by_grid();
    std::vector<RowNorms> rows(keys_.size());
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      CompensatedSum l1;
      CompensatedSum l2;
      for (const auto& [bin, x] : sparse_[i]) {
        rows[i].max_abs = std::max(rows[i].max_abs, std::abs(x));
        l1.add(std::abs(x));
        l2.add(x * x);
      }
      rows[i].l1 = l1.value();
      rows[i].l2_sq = l2.value();
    }
    return summarize(rows, m_);
  }
  // Row of a single-bin/threshold function: `hi` copies of w(1 - q) and
  // m - hi copies of -w q, where q = hi/m.
  const double hi = kind_ == ValueKind::single_bin ? 1.0 : static_cast<double>(param_);
  const double q = hi * inv_m_;
  const double md = static_cast<double>(m_);
  const double l2_unit = hi * (1.0 - q);            // ||v[x]||_2^2 / w^2
  const double l1_unit = 2.0 * hi * (1.0 - q);      // ||v[x]||_1 / |w|
  double max_unit = 0.0;
  if (hi > 0.0) max_unit = std::max(max_unit, 1.0 - q);
  if (hi < md) max_unit = std::max(max_unit, q);
  if (l2_unit <= 0.0) max_unit = 0.0;
  std::vector<RowNorms> rows(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    const double w = std::abs(weights_[i]);
    rows[i] = {w * max_unit, w * l1_unit, w * w * l2_unit};
  }
  return summarize(rows, m_);
}

ValueStats ValueFunction::stats_by_grid() const {
  if (keys_.size() * m_ > kGridBudget) throw SizeError("value grid too large for brute-force statistics");
  std::vector<RowNorms> rows(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    CompensatedSum l1;
    CompensatedSum l2;
    for (std::uint64_t j = 0; j < m_; ++j) {
      const double x = (*this)(i, j);
      rows[i].max_abs = std::max(rows[i].max_abs, std::abs(x));
      l1.add(std::abs(x));
      l2.add(x * x);
    }
    rows[i].l1 = l1.value();
    rows[i].l2_sq = l2.value();
  }
  return summarize(rows, m_);
}

std::vector<Key> all_keys(const SchemeParams& params) {
  params.validate();
  if (params.key_bits() > 24) throw SizeError("universe too large to list (more than 2^24 keys)");
  const std::uint64_t n = std::uint64_t{1} << params.key_bits();
  std::vector<Key> keys(n);
  for (std::uint64_t i = 0; i < n; ++i) keys[i] = Key{i};
  return keys;
}

std::vector<WeightedKey> uniform_weights(const std::vector<Key>& keys, double w) {
  std::vector<WeightedKey> out;
  out.reserve(keys.size());
  for (auto k : keys) out.push_back({k, w});
  return out;
}

QueryValueFunction QueryValueFunction::collision(std::vector<WeightedKey> weights, Key query, std::uint64_t m) {
  require_range(m);
  require_finite(weights);
  QueryValueFunction v;
  v.query_ = query;
  v.m_ = m;
  for (const auto& w : weights) {
    if (w.key == query) continue;
    v.keys_.push_back(w.key);
    v.weights_.push_back(w.weight);
  }
  return v;
}

QueryValueFunction QueryValueFunction::custom(std::vector<Key> keys, Key query, std::uint64_t m, Evaluator eval) {
  require_range(m);
  if (!eval) throw DomainError("query value function needs an evaluator");
  QueryValueFunction v;
  v.query_ = query;
  v.m_ = m;
  for (auto k : keys) {
    if (k != query) v.keys_.push_back(k);
  }
  v.eval_ = std::move(eval);
  if (v.keys_.size() * m * m <= (std::uint64_t{1} << 24)) {
    for (std::size_t i = 0; i < v.keys_.size(); ++i) {
      for (std::uint64_t k = 0; k < m; ++k) {
        CompensatedSum sum;
        double abs_sum = 0.0;
        for (std::uint64_t j = 0; j < m; ++j) {
          const double x = v.eval_(i, j, k);
          if (!std::isfinite(x)) throw DomainError("query value function entries must be finite");
          sum.add(x);
          abs_sum += std::abs(x);
        }
        if (std::abs(sum.value()) > 1e-9 * abs_sum) throw DomainError("query value function is not mean-zero");
      }
    }
  }
  return v;
}

ValueStats QueryValueFunction::stats_at(std::uint64_t query_bin) const {
  std::vector<RowNorms> rows(keys_.size());
  if (!eval_) {
    const double q = 1.0 / static_cast<double>(m_);
    const double max_unit = m_ > 1 ? std::max(1.0 - q, q) : 0.0;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      const double w = std::abs(weights_[i]);
      rows[i] = {w * max_unit, w * 2.0 * (1.0 - q), w * w * (1.0 - q)};
    }
    return summarize(rows, m_);
  }
  if (keys_.size() * m_ > kGridBudget) throw SizeError("query value grid too large for statistics");
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    CompensatedSum l1;
    CompensatedSum l2;
    for (std::uint64_t j = 0; j < m_; ++j) {
      const double x = eval_(i, j, query_bin);
      rows[i].max_abs = std::max(rows[i].max_abs, std::abs(x));
      l1.add(std::abs(x));
      l2.add(x * x);
    }
    rows[i].l1 = l1.value();
    rows[i].l2_sq = l2.value();
  }
  return summarize(rows, m_);
}

}  // namespace tabhash
