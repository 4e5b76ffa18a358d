#include "tabhash/tabulation.hpp"

#include <algorithm>
#include <utility>

namespace tabhash {

namespace {

// Seed streams for the components of one scheme.
constexpr std::uint64_t kStreamH1 = 1;
constexpr std::uint64_t kStreamH2 = 2;
constexpr std::uint64_t kStreamH3 = 3;
constexpr std::uint64_t kStreamEps1 = 4;
constexpr std::uint64_t kStreamEps3 = 5;

std::uint64_t row_state(std::uint64_t seed, unsigned row) { return derive_seed(seed, 0x100 + row); }

}  // namespace

void SchemeParams::validate() const {
  if (char_bits < 1 || char_bits > 32) throw RangeError("char_bits must be in [1, 32]");
  if (num_chars < 1) throw RangeError("num_chars must be >= 1");
  if (range_bits < 1 || range_bits > 64) throw RangeError("range_bits must be in [1, 64]");
  if (static_cast<unsigned long>(char_bits) * num_chars > 64) throw RangeError("char_bits * num_chars must be <= 64");
  if (static_cast<unsigned long>(char_bits) * derived_chars > 64)
    throw RangeError("char_bits * derived_chars must be <= 64");
}

std::uint64_t SchemeParams::range_size() const {
  if (range_bits > 63) throw RangeError("range size 2^64 is not representable");
  return std::uint64_t{1} << range_bits;
}

Key SchemeParams::pack(std::span<const std::uint64_t> chars) const {
  if (chars.size() != num_chars) throw RangeError("key must have exactly c characters");
  std::uint64_t packed = 0;
  for (unsigned i = 0; i < num_chars; ++i) {
    if (chars[i] > char_mask()) throw RangeError("character does not fit in char_bits");
    packed |= chars[i] << (i * char_bits);
  }
  return Key{packed};
}

std::vector<std::uint64_t> SchemeParams::unpack(Key x) const {
  std::vector<std::uint64_t> chars(num_chars);
  for (unsigned i = 0; i < num_chars; ++i) chars[i] = character(x, i);
  return chars;
}

PositionCharSet::PositionCharSet(std::vector<PositionChar> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end());
  // Repeated entries cancel in pairs.
  std::vector<PositionChar> reduced;
  for (std::size_t i = 0; i < entries_.size();) {
    std::size_t j = i;
    while (j < entries_.size() && entries_[j] == entries_[i]) ++j;
    if ((j - i) % 2 == 1) reduced.push_back(entries_[i]);
    i = j;
  }
  entries_ = std::move(reduced);
}

PositionCharSet PositionCharSet::from_key(const SchemeParams& params, Key x) {
  std::vector<PositionChar> entries;
  entries.reserve(params.num_chars);
  for (unsigned i = 0; i < params.num_chars; ++i) entries.push_back({i, params.character(x, i)});
  return PositionCharSet(std::move(entries));
}

void PositionCharSet::toggle(PositionChar pc) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), pc);
  if (it != entries_.end() && *it == pc) {
    entries_.erase(it);
  } else {
    entries_.insert(it, pc);
  }
}

bool PositionCharSet::contains(PositionChar pc) const {
  return std::binary_search(entries_.begin(), entries_.end(), pc);
}

PositionCharSet operator^(const PositionCharSet& a, const PositionCharSet& b) {
  PositionCharSet out;
  std::set_symmetric_difference(a.entries_.begin(), a.entries_.end(), b.entries_.begin(), b.entries_.end(),
                                std::back_inserter(out.entries_));
  return out;
}

TabulationTable TabulationTable::random(unsigned rows, unsigned char_bits, unsigned width, std::uint64_t seed) {
  if (width < 1 || width > 64) throw RangeError("table width must be in [1, 64]");
  if (char_bits < 1 || char_bits > 32) throw RangeError("table char_bits must be in [1, 32]");
  TabulationTable t(rows, char_bits, width, seed);
  t.row_states_.resize(rows);
  for (unsigned i = 0; i < rows; ++i) t.row_states_[i] = row_state(seed, i);
  if (char_bits <= kMaxMaterializedCharBits) {
    const std::uint64_t per_row = std::uint64_t{1} << char_bits;
    const std::uint64_t mask = low_mask(width);
    t.entries_.resize(rows * per_row);
    for (unsigned i = 0; i < rows; ++i) {
      for (std::uint64_t a = 0; a < per_row; ++a) t.entries_[i * per_row + a] = splitmix_at(t.row_states_[i], a) & mask;
    }
  }
  return t;
}

TabulationTable TabulationTable::from_entries(unsigned rows, unsigned char_bits, unsigned width,
                                              std::vector<std::uint64_t> entries) {
  if (width < 1 || width > 64) throw RangeError("table width must be in [1, 64]");
  if (char_bits < 1 || char_bits > kMaxMaterializedCharBits)
    throw RangeError("explicit tables need char_bits in [1, 16]");
  if (entries.size() != (static_cast<std::uint64_t>(rows) << char_bits))
    throw RangeError("explicit table has the wrong number of entries");
  const std::uint64_t mask = low_mask(width);
  for (auto e : entries) {
    if ((e & ~mask) != 0) throw RangeError("table entry exceeds its width");
  }
  TabulationTable t(rows, char_bits, width, 0);
  t.entries_ = std::move(entries);
  return t;
}

SimpleTabHash::SimpleTabHash(const SchemeParams& params, std::uint64_t seed)
    : params_(params),
      char_mask_(params.char_mask()),
      table_(TabulationTable::random(params.num_chars, params.char_bits, params.range_bits, seed)) {
  params_.validate();
}

SimpleTabHash::SimpleTabHash(const SchemeParams& params, TabulationTable table)
    : params_(params), char_mask_(params.char_mask()), table_(std::move(table)) {
  params_.validate();
  if (table_.rows() != params_.num_chars || table_.char_bits() != params_.char_bits ||
      table_.width() != params_.range_bits) {
    throw RangeError("table shape does not match scheme parameters");
  }
}

std::uint64_t SimpleTabHash::extended(const PositionCharSet& s) const {
  std::uint64_t h = 0;
  for (const auto& pc : s.entries()) {
    if (pc.position >= params_.num_chars || pc.character > char_mask_)
      throw RangeError("position character outside [c] x Sigma");
    h ^= table_(pc.position, pc.character);
  }
  return h;
}

SignFunction::SignFunction(const SchemeParams& params, std::uint64_t seed) : params_(params) {
  if (params_.char_bits < 1 || params_.char_bits > 32 || params_.num_chars < 1 || params_.key_bits() > 64)
    throw RangeError("invalid sign function parameters");
  row_states_.resize(params_.num_chars);
  for (unsigned i = 0; i < params_.num_chars; ++i) row_states_[i] = row_state(seed, i);
  if (params_.char_bits <= kMaxMaterializedCharBits) {
    const std::uint64_t per_row = params_.alphabet_size();
    const std::uint64_t total = per_row * params_.num_chars;
    words_.assign((total + 63) / 64, 0);
    for (unsigned i = 0; i < params_.num_chars; ++i) {
      for (std::uint64_t a = 0; a < per_row; ++a) {
        const std::uint64_t idx = i * per_row + a;
        words_[idx >> 6] |= (splitmix_at(row_states_[i], a) & 1) << (idx & 63);
      }
    }
  }
}

SignFunction::SignFunction(const SchemeParams& params, const TabulationTable& bits) : params_(params) {
  if (bits.rows() != params_.num_chars || bits.char_bits() != params_.char_bits || bits.width() != 1 ||
      !bits.materialized()) {
    throw RangeError("sign table shape does not match scheme parameters");
  }
  const auto& e = bits.entries();
  words_.assign((e.size() + 63) / 64, 0);
  for (std::size_t idx = 0; idx < e.size(); ++idx) words_[idx >> 6] |= (e[idx] & 1) << (idx & 63);
}

unsigned SignFunction::parity(Key x) const {
  unsigned p = 0;
  std::uint64_t rest = x.packed;
  const std::uint64_t mask = params_.char_mask();
  for (unsigned i = 0; i < params_.num_chars; ++i) {
    p ^= bit(i, rest & mask);
    rest = params_.char_bits >= 64 ? 0 : rest >> params_.char_bits;
  }
  return p;
}

namespace {

SchemeParams h1_params(const SchemeParams& p) { return {p.char_bits, p.num_chars, p.range_bits, 0}; }
SchemeParams h2_params(const SchemeParams& p) { return {p.char_bits, p.num_chars, p.char_bits * p.derived_chars, 0}; }
SchemeParams h3_params(const SchemeParams& p) { return {p.char_bits, p.derived_chars, p.range_bits, 0}; }

const SchemeParams& require_mixed(const SchemeParams& p) {
  p.validate();
  if (p.derived_chars < 1) throw RangeError("mixed tabulation needs at least one derived character (d >= 1)");
  return p;
}

}  // namespace

MixedTabHash::MixedTabHash(const SchemeParams& params, std::uint64_t seed)
    : params_(require_mixed(params)),
      char_mask_(params.char_mask()),
      h1_(h1_params(params), derive_seed(seed, kStreamH1)),
      h2_(h2_params(params), derive_seed(seed, kStreamH2)),
      h3_(h3_params(params), derive_seed(seed, kStreamH3)) {
  fuse();
}

MixedTabHash::MixedTabHash(const SchemeParams& params, TabulationTable t1, TabulationTable t2, TabulationTable t3)
    : params_(require_mixed(params)),
      char_mask_(params.char_mask()),
      h1_(h1_params(params), std::move(t1)),
      h2_(h2_params(params), std::move(t2)),
      h3_(h3_params(params), std::move(t3)) {
  fuse();
}

void MixedTabHash::fuse() {
  if (!h1_.table().materialized() || !h2_.table().materialized()) return;
  const auto& a = h1_.table().entries();
  const auto& b = h2_.table().entries();
  fused_.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) fused_[i] = {a[i], b[i]};
}

MixedSignFunction::MixedSignFunction(const MixedTabHash& paired, std::uint64_t seed)
    : eps1_(paired.params(), derive_seed(seed, kStreamEps1)),
      h2_(paired.h2()),
      eps3_(SchemeParams{paired.params().char_bits, paired.params().derived_chars, 1, 0},
            derive_seed(seed, kStreamEps3)) {}

MixedSignFunction::MixedSignFunction(const MixedTabHash& paired, SignFunction eps1, SignFunction eps3)
    : eps1_(std::move(eps1)), h2_(paired.h2()), eps3_(std::move(eps3)) {
  if (eps1_.params().num_chars != paired.params().num_chars ||
      eps3_.params().num_chars != paired.params().derived_chars) {
    throw RangeError("sign functions do not match the paired mixed hash");
  }
}

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::fully_random:
      return "random";
    case SchemeKind::simple:
      return "simple";
    case SchemeKind::mixed:
      return "mixed";
  }
  return "?";
}

std::string SchemeDescriptor::to_string() const {
  std::string s = tabhash::to_string(kind) + ":k=" + std::to_string(params.char_bits) +
                  ",c=" + std::to_string(params.num_chars);
  if (kind == SchemeKind::mixed) s += ",d=" + std::to_string(params.derived_chars);
  s += ",l=" + std::to_string(params.range_bits);
  return s;
}

void SchemeDescriptor::validate() const {
  params.validate();
  if (kind == SchemeKind::mixed && params.derived_chars < 1) throw RangeError("mixed scheme needs d >= 1");
  if (kind != SchemeKind::mixed && params.derived_chars != 0) throw RangeError("d is only meaningful for mixed");
}

HashFunction make_hash(const SchemeDescriptor& scheme, std::uint64_t seed) {
  switch (scheme.kind) {
    case SchemeKind::fully_random:
      return FullyRandomHash(scheme.params, seed);
    case SchemeKind::simple:
      return SimpleTabHash(scheme.params, seed);
    case SchemeKind::mixed:
      return MixedTabHash(scheme.params, seed);
  }
  throw RangeError("unknown scheme kind");
}

TableFillingEnumerator::TableFillingEnumerator(std::vector<TableShape> shapes, unsigned max_bits)
    : shapes_(std::move(shapes)) {
  std::uint64_t bits = 0;
  for (const auto& s : shapes_) {
    if (s.char_bits > 16 || s.width > 64) throw SizeError("table shape too large to enumerate");
    bits += s.total_bits();
    if (bits > max_bits) {
      throw SizeError("enumeration needs more than " + std::to_string(max_bits) + " bits of table entropy");
    }
  }
  total_bits_ = static_cast<unsigned>(bits);
}

std::vector<TabulationTable> TableFillingEnumerator::filling(std::uint64_t index) const {
  std::vector<TabulationTable> tables;
  tables.reserve(shapes_.size());
  for (const auto& s : shapes_) {
    std::vector<std::uint64_t> entries(s.entry_count());
    const std::uint64_t mask = low_mask(s.width);
    for (auto& e : entries) {
      e = index & mask;
      index = s.width >= 64 ? 0 : index >> s.width;
    }
    tables.push_back(TabulationTable::from_entries(s.rows, s.char_bits, s.width, std::move(entries)));
  }
  return tables;
}

}  // namespace tabhash
