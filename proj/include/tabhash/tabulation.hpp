#pragma once

// Simple and mixed tabulation hashing over keys of c characters from
// Sigma = [2^k], with the matching +-1 sign functions.
//
// A key is packed little-endian by character index: character i occupies
// bits [i*k, (i+1)*k) of one 64-bit word.

#include <compare>
#include <cstdint>
#include <iterator>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tabhash/error.hpp"
#include "tabhash/rng.hpp"

namespace tabhash {

// Tables over alphabets up to 2^16 symbols are stored; larger alphabets are
// evaluated entry by entry from the counter-mode generator.
inline constexpr unsigned kMaxMaterializedCharBits = 16;

constexpr std::uint64_t low_mask(unsigned bits) noexcept {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

struct Key {
  std::uint64_t packed = 0;

  friend constexpr auto operator<=>(const Key&, const Key&) = default;
};

struct SchemeParams {
  unsigned char_bits = 8;    // k, |Sigma| = 2^k
  unsigned num_chars = 4;    // c
  unsigned range_bits = 16;  // l, m = 2^l
  unsigned derived_chars = 0;  // d, 0 for simple schemes

  // Throws RangeError unless k, c, l >= 1, k*c <= 64, l <= 64 and d*k <= 64.
  void validate() const;

  std::uint64_t alphabet_size() const { return std::uint64_t{1} << char_bits; }
  // m; requires l <= 63.
  std::uint64_t range_size() const;
  std::uint64_t char_mask() const { return low_mask(char_bits); }
  std::uint64_t range_mask() const { return low_mask(range_bits); }
  unsigned key_bits() const { return char_bits * num_chars; }

  std::uint64_t character(Key x, unsigned position) const {
    return (x.packed >> (position * char_bits)) & char_mask();
  }
  bool valid_key(Key x) const { return (x.packed & ~low_mask(key_bits())) == 0; }

  // Throws RangeError if a character does not fit in k bits or the count is not c.
  Key pack(std::span<const std::uint64_t> chars) const;
  std::vector<std::uint64_t> unpack(Key x) const;

  friend bool operator==(const SchemeParams&, const SchemeParams&) = default;
};

// A (position, character) pair of [c] x Sigma.
struct PositionChar {
  unsigned position = 0;
  std::uint64_t character = 0;

  friend constexpr auto operator<=>(const PositionChar&, const PositionChar&) = default;
};

// Set of position characters with symmetric difference as the group operation.
// Entries are kept sorted and unique.
class PositionCharSet {
 public:
  PositionCharSet() = default;
  explicit PositionCharSet(std::vector<PositionChar> entries);

  static PositionCharSet from_key(const SchemeParams& params, Key x);

  // Adds the entry if absent, removes it if present.
  void toggle(PositionChar pc);
  bool contains(PositionChar pc) const;

  const std::vector<PositionChar>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Symmetric difference.
  friend PositionCharSet operator^(const PositionCharSet& a, const PositionCharSet& b);
  friend bool operator==(const PositionCharSet&, const PositionCharSet&) = default;

 private:
  std::vector<PositionChar> entries_;
};

// Table T: [rows] x [2^char_bits] -> [2^width]. Either filled from a seed
// (entry(i, a) is a pure function of (seed, i, a)) or given explicitly.
class TabulationTable {
 public:
  static TabulationTable random(unsigned rows, unsigned char_bits, unsigned width, std::uint64_t seed);
  // `entries` is row-major, rows * 2^char_bits values, each < 2^width.
  static TabulationTable from_entries(unsigned rows, unsigned char_bits, unsigned width,
                                      std::vector<std::uint64_t> entries);

  std::uint64_t operator()(unsigned row, std::uint64_t ch) const {
    if (!entries_.empty()) return entries_[(static_cast<std::uint64_t>(row) << char_bits_) | ch];
    return splitmix_at(row_states_[row], ch) & low_mask(width_);
  }

  unsigned rows() const { return rows_; }
  unsigned char_bits() const { return char_bits_; }
  unsigned width() const { return width_; }
  std::uint64_t seed() const { return seed_; }
  bool materialized() const { return !entries_.empty(); }
  const std::vector<std::uint64_t>& entries() const { return entries_; }

 private:
  TabulationTable(unsigned rows, unsigned char_bits, unsigned width, std::uint64_t seed)
      : rows_(rows), char_bits_(char_bits), width_(width), seed_(seed) {}

  unsigned rows_;
  unsigned char_bits_;
  unsigned width_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> entries_;
  std::vector<std::uint64_t> row_states_;
};

// h(a_0, ..., a_{c-1}) = T(0, a_0) xor ... xor T(c-1, a_{c-1}).
class SimpleTabHash {
 public:
  SimpleTabHash(const SchemeParams& params, std::uint64_t seed);
  // Table must have c rows, char width k and value width l.
  SimpleTabHash(const SchemeParams& params, TabulationTable table);

  std::uint64_t operator()(Key x) const {
    std::uint64_t h = 0;
    std::uint64_t rest = x.packed;
    for (unsigned i = 0; i < params_.num_chars; ++i) {
      h ^= table_(i, rest & char_mask_);
      rest = params_.char_bits >= 64 ? 0 : rest >> params_.char_bits;
    }
    return h;
  }

  // Hash extended to sets of position characters: xor of T over the set.
  std::uint64_t extended(const PositionCharSet& s) const;

  const SchemeParams& params() const { return params_; }
  const TabulationTable& table() const { return table_; }

 private:
  SchemeParams params_;
  std::uint64_t char_mask_;
  TabulationTable table_;
};

// eps(a_0, ..., a_{c-1}) = prod_i T(i, a_i) with T(i, a) in {-1, +1}.
// Signs are stored as bits (1 means -1), so eps(x) = (-1)^(xor of bits).
class SignFunction {
 public:
  // Only k and c of `params` are used.
  SignFunction(const SchemeParams& params, std::uint64_t seed);
  // Table with c rows and width 1; entry 1 encodes the sign -1.
  SignFunction(const SchemeParams& params, const TabulationTable& bits);

  int operator()(Key x) const { return (parity(x) != 0) ? -1 : 1; }
  // xor of the sign bits, 1 when eps(x) = -1.
  unsigned parity(Key x) const;

  const SchemeParams& params() const { return params_; }

 private:
  unsigned bit(unsigned row, std::uint64_t ch) const {
    if (!words_.empty()) {
      const std::uint64_t idx = (static_cast<std::uint64_t>(row) << params_.char_bits) | ch;
      return static_cast<unsigned>((words_[idx >> 6] >> (idx & 63)) & 1);
    }
    return static_cast<unsigned>(splitmix_at(row_states_[row], ch) & 1);
  }

  SchemeParams params_;
  std::vector<std::uint64_t> words_;
  std::vector<std::uint64_t> row_states_;
};

// h(x) = h1(x) xor h3(h2(x)) with h2: Sigma^c -> Sigma^d stored as one c-row
// table whose values hold the d derived characters packed little-endian.
class MixedTabHash {
 public:
  // Throws RangeError when d == 0.
  MixedTabHash(const SchemeParams& params, std::uint64_t seed);
  // t1: c rows -> l bits; t2: c rows -> d*k bits; t3: d rows -> l bits.
  MixedTabHash(const SchemeParams& params, TabulationTable t1, TabulationTable t2, TabulationTable t3);

  std::uint64_t operator()(Key x) const {
    std::uint64_t h = 0;
    std::uint64_t derived = 0;
    std::uint64_t rest = x.packed;
    const unsigned c = params_.num_chars;
    if (!fused_.empty()) {
      for (unsigned i = 0; i < c; ++i) {
        const auto& e = fused_[(static_cast<std::uint64_t>(i) << params_.char_bits) | (rest & char_mask_)];
        h ^= e.hash;
        derived ^= e.derived;
        rest >>= params_.char_bits;
      }
    } else {
      h = h1_(x);
      derived = h2_(x);
    }
    return h ^ h3_(Key{derived});
  }

  // h2(x): the d derived characters, packed.
  Key derived(Key x) const { return Key{h2_(x)}; }

  const SchemeParams& params() const { return params_; }
  const SimpleTabHash& h1() const { return h1_; }
  const SimpleTabHash& h2() const { return h2_; }
  const SimpleTabHash& h3() const { return h3_; }

 private:
  struct FusedEntry {
    std::uint64_t hash;
    std::uint64_t derived;
  };

  void fuse();

  SchemeParams params_;
  std::uint64_t char_mask_;
  SimpleTabHash h1_;
  SimpleTabHash h2_;
  SimpleTabHash h3_;
  std::vector<FusedEntry> fused_;
};

// eps(x) = eps1(x) * eps3(h2(x)), sharing h2 with the paired MixedTabHash.
class MixedSignFunction {
 public:
  MixedSignFunction(const MixedTabHash& paired, std::uint64_t seed);
  MixedSignFunction(const MixedTabHash& paired, SignFunction eps1, SignFunction eps3);

  int operator()(Key x) const { return ((eps1_.parity(x) ^ eps3_.parity(Key{h2_(x)})) != 0) ? -1 : 1; }

 private:
  SignFunction eps1_;
  SimpleTabHash h2_;
  SignFunction eps3_;
};

// Idealized baseline: every key gets an independent uniform value derived
// from (seed, key) by the counter-mode generator.
class FullyRandomHash {
 public:
  FullyRandomHash(const SchemeParams& params, std::uint64_t seed) : params_(params), seed_(seed) {
    params_.validate();
  }
  std::uint64_t operator()(Key x) const { return splitmix_at(seed_, x.packed) & params_.range_mask(); }
  const SchemeParams& params() const { return params_; }

 private:
  SchemeParams params_;
  std::uint64_t seed_;
};

class FullyRandomSign {
 public:
  explicit FullyRandomSign(std::uint64_t seed) : seed_(seed) {}
  int operator()(Key x) const { return (splitmix_at(seed_, x.packed) >> 63) != 0 ? -1 : 1; }

 private:
  std::uint64_t seed_;
};

enum class SchemeKind { fully_random, simple, mixed };

std::string to_string(SchemeKind kind);

struct SchemeDescriptor {
  SchemeKind kind = SchemeKind::simple;
  SchemeParams params;

  // "simple:k=8,c=4,l=16", "mixed:k=8,c=4,d=1,l=16", "random:k=8,c=4,l=16".
  std::string to_string() const;
  void validate() const;

  friend bool operator==(const SchemeDescriptor&, const SchemeDescriptor&) = default;
};

using HashFunction = std::variant<FullyRandomHash, SimpleTabHash, MixedTabHash>;

HashFunction make_hash(const SchemeDescriptor& scheme, std::uint64_t seed);

inline std::uint64_t evaluate(const HashFunction& h, Key x) {
  return std::visit([x](const auto& f) { return f(x); }, h);
}

// Shape of one table in an exhaustive enumeration.
struct TableShape {
  unsigned rows = 1;
  unsigned char_bits = 1;
  unsigned width = 1;

  std::uint64_t entry_count() const { return static_cast<std::uint64_t>(rows) << char_bits; }
  std::uint64_t total_bits() const { return entry_count() * width; }
};

inline constexpr unsigned kDefaultEnumerationBits = 24;

// Enumerates every joint filling of a list of tables. Filling `index` assigns
// its bits, least significant first, to table 0 row 0 char 0 (width bits),
// then char 1, ..., then the next row and table.
class TableFillingEnumerator {
 public:
  // Throws SizeError if the total table entropy exceeds `max_bits`.
  explicit TableFillingEnumerator(std::vector<TableShape> shapes, unsigned max_bits = kDefaultEnumerationBits);

  std::uint64_t count() const { return std::uint64_t{1} << total_bits_; }
  unsigned total_bits() const { return total_bits_; }
  const std::vector<TableShape>& shapes() const { return shapes_; }

  std::vector<TabulationTable> filling(std::uint64_t index) const;

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = std::vector<TabulationTable>;
    using difference_type = std::ptrdiff_t;

    iterator(const TableFillingEnumerator* owner, std::uint64_t index) : owner_(owner), index_(index) {}
    value_type operator*() const { return owner_->filling(index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    bool operator==(const iterator& other) const { return index_ == other.index_; }

   private:
    const TableFillingEnumerator* owner_;
    std::uint64_t index_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count()}; }

 private:
  std::vector<TableShape> shapes_;
  unsigned total_bits_ = 0;
};

}  // namespace tabhash
