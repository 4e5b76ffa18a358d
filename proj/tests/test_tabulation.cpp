#include <array>
#include <map>

#include "doctest.h"
#include "tabhash/tabulation.hpp"

using namespace tabhash;

namespace {

TabulationTable table(unsigned rows, unsigned k, unsigned w, std::vector<std::uint64_t> e) {
  return TabulationTable::from_entries(rows, k, w, std::move(e));
}

}  // namespace

TEST_CASE("simple hash of an all-zero table is zero") {
  SchemeParams p{2, 3, 5, 0};
  SimpleTabHash h(p, table(3, 2, 5, std::vector<std::uint64_t>(12, 0)));
  for (std::uint64_t x = 0; x < 64; ++x) CHECK(h(Key{x}) == 0);
}

TEST_CASE("simple hash with one character is a single lookup") {
  SchemeParams p{3, 1, 8, 0};
  SimpleTabHash h(p, 42);
  for (std::uint64_t a = 0; a < 8; ++a) CHECK(h(Key{a}) == h.table()(0, a));
}

TEST_CASE("simple hash hand example") {
  SchemeParams p{1, 2, 4, 0};
  SimpleTabHash h(p, table(2, 1, 4, {3, 5, 9, 6}));
  const std::array<std::uint64_t, 2> chars{1, 0};
  CHECK(h(p.pack(chars)) == 12);
  CHECK(h(Key{0}) == (3 ^ 9));
  CHECK(h(Key{3}) == (5 ^ 6));
}

TEST_CASE("key packing round trips") {
  SchemeParams p{5, 4, 8, 0};
  SplitMix64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Key x{rng() & low_mask(p.key_bits())};
    const auto chars = p.unpack(x);
    REQUIRE(chars.size() == 4);
    for (unsigned j = 0; j < 4; ++j) CHECK(chars[j] == p.character(x, j));
    CHECK(p.pack(chars) == x);
  }
  const std::array<std::uint64_t, 4> bad{0, 32, 0, 0};
  CHECK_THROWS_AS(p.pack(bad), RangeError);
}

TEST_CASE("scheme parameter validation") {
  CHECK_THROWS_AS((SchemeParams{0, 2, 4, 0}.validate()), RangeError);
  CHECK_THROWS_AS((SchemeParams{33, 1, 4, 0}.validate()), RangeError);
  CHECK_THROWS_AS((SchemeParams{16, 5, 4, 0}.validate()), RangeError);
  CHECK_THROWS_AS((SchemeParams{8, 2, 0, 0}.validate()), RangeError);
  CHECK_NOTHROW((SchemeParams{16, 4, 64, 0}.validate()));
}

TEST_CASE("position character sets") {
  PositionCharSet a({{0, 1}, {1, 2}, {0, 1}});
  CHECK(a.size() == 1);
  CHECK(a.contains({1, 2}));
  PositionCharSet b({{1, 2}, {2, 3}});
  const auto ab = a ^ b;
  CHECK(ab == PositionCharSet({{2, 3}}));
  CHECK((a ^ a).empty());
  CHECK(((a ^ b) ^ b) == a);
  CHECK((a ^ b) == (b ^ a));
  a.toggle({3, 0});
  CHECK(a.contains({3, 0}));
  a.toggle({3, 0});
  CHECK(!a.contains({3, 0}));
}

TEST_CASE("extended hash") {
  SchemeParams p{4, 3, 16, 0};
  SimpleTabHash h(p, 99);
  CHECK(h.extended(PositionCharSet{}) == 0);

  SplitMix64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Key x{rng() & low_mask(p.key_bits())};
    CHECK(h.extended(PositionCharSet::from_key(p, x)) == h(x));
  }

  auto random_set = [&] {
    std::vector<PositionChar> e;
    const auto n = rng.below(8);
    for (std::uint64_t j = 0; j < n; ++j)
      e.push_back({static_cast<unsigned>(rng.below(3)), rng.below(16)});
    return PositionCharSet(e);
  };
  for (int i = 0; i < 1000; ++i) {
    const auto s1 = random_set();
    const auto s2 = random_set();
    CHECK(h.extended(s1 ^ s2) == (h.extended(s1) ^ h.extended(s2)));
  }
  CHECK_THROWS_AS(h.extended(PositionCharSet({{3, 0}})), RangeError);
}

TEST_CASE("sign function") {
  SchemeParams p{1, 2, 1, 0};
  SignFunction plus(p, table(2, 1, 1, {0, 0, 0, 0}));
  for (std::uint64_t x = 0; x < 4; ++x) CHECK(plus(Key{x}) == 1);

  // T(0, 1) = -1 and T(1, 1) = -1.
  SignFunction two(p, table(2, 1, 1, {0, 1, 0, 1}));
  CHECK(two(Key{3}) == 1);
  CHECK(two(Key{1}) == -1);
  CHECK(two(Key{2}) == -1);

  TableFillingEnumerator en({{2, 1, 1}});
  CHECK(en.count() == 16);
  std::array<int, 4> sums{};
  for (std::uint64_t f = 0; f < en.count(); ++f) {
    const auto t = en.filling(f);
    SignFunction s(p, t[0]);
    for (std::uint64_t x = 0; x < 4; ++x) {
      const int expect = (t[0](0, x & 1) ? -1 : 1) * (t[0](1, x >> 1) ? -1 : 1);
      CHECK(s(Key{x}) == expect);
      sums[x] += s(Key{x});
    }
  }
  for (int s : sums) CHECK(s == 0);
}

TEST_CASE("seeded sign functions output +-1 and are balanced") {
  SchemeParams p{8, 2, 1, 0};
  int total = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    SignFunction s(p, seed);
    const int v = s(Key{0x1234});
    CHECK((v == 1 || v == -1));
    total += v;
  }
  CHECK(std::abs(total) < 200);
}

TEST_CASE("mixed hash with zero h3 equals h1") {
  SchemeParams p{2, 2, 3, 1};
  MixedTabHash h(p, table(2, 2, 3, {1, 2, 3, 4, 5, 6, 7, 0}), table(2, 2, 2, {0, 1, 2, 3, 3, 2, 1, 0}),
                 table(1, 2, 3, {0, 0, 0, 0}));
  for (std::uint64_t x = 0; x < 16; ++x) CHECK(h(Key{x}) == h.h1()(Key{x}));
}

TEST_CASE("mixed hash rejects d = 0") {
  CHECK_THROWS_AS(MixedTabHash(SchemeParams{8, 4, 16, 0}, 1), RangeError);
}

TEST_CASE("mixed hash tiny instance by hand") {
  SchemeParams p{1, 1, 1, 1};
  // h1 = (1, 0), h2 = (1, 0), h3 = (0, 1).
  MixedTabHash h(p, table(1, 1, 1, {1, 0}), table(1, 1, 1, {1, 0}), table(1, 1, 1, {0, 1}));
  CHECK(h(Key{0}) == (1 ^ 1));
  CHECK(h(Key{1}) == (0 ^ 0));
  CHECK(h.derived(Key{0}) == Key{1});
}

TEST_CASE("mixed hash fused path matches the three components") {
  SchemeParams p{8, 4, 20, 2};
  MixedTabHash h(p, 2024);
  SplitMix64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const Key x{rng() & low_mask(32)};
    CHECK(h(x) == (h.h1()(x) ^ h.h3()(Key{h.h2()(x)})));
  }
}

TEST_CASE("mixed sign function") {
  SchemeParams p{1, 1, 1, 1};
  MixedTabHash h(p, table(1, 1, 1, {1, 0}), table(1, 1, 1, {1, 0}), table(1, 1, 1, {0, 1}));
  SchemeParams p3{1, 1, 1, 0};

  SignFunction eps1(p, table(1, 1, 1, {1, 0}));
  MixedSignFunction s1(h, eps1, SignFunction(p3, table(1, 1, 1, {0, 0})));
  for (std::uint64_t x = 0; x < 2; ++x) CHECK(s1(Key{x}) == eps1(Key{x}));

  SignFunction eps3(p3, table(1, 1, 1, {0, 1}));
  MixedSignFunction s2(h, SignFunction(p, table(1, 1, 1, {0, 0})), eps3);
  for (std::uint64_t x = 0; x < 2; ++x) CHECK(s2(Key{x}) == eps3(h.derived(Key{x})));

  // x = 0: eps1 = -1, h2 = 1, eps3(1) = -1, product +1. x = 1: +1 * eps3(0) = +1.
  MixedSignFunction s3(h, eps1, eps3);
  CHECK(s3(Key{0}) == 1);
  CHECK(s3(Key{1}) == 1);
}

TEST_CASE("table filling counts") {
  CHECK(TableFillingEnumerator({{2, 1, 1}}).count() == 16);
  CHECK(TableFillingEnumerator({{1, 1, 2}}).count() == 16);
  CHECK(TableFillingEnumerator({{2, 1, 2}}).count() == 256);
  CHECK_THROWS_AS(TableFillingEnumerator({{4, 8, 16}}), SizeError);

  TableFillingEnumerator en({{2, 1, 2}});
  std::map<std::vector<std::uint64_t>, int> seen;
  for (const auto& f : en) seen[f[0].entries()]++;
  CHECK(seen.size() == 256);
}

TEST_CASE("simple tabulation is 3-wise uniform (k=2, c=2, l=2)") {
  SchemeParams p{2, 2, 2, 0};
  TableFillingEnumerator en({{2, 2, 2}});
  REQUIRE(en.count() == 65536);
  std::vector<std::array<std::uint32_t, 64>> counts;
  std::vector<std::array<unsigned, 3>> triples;
  for (unsigned a = 0; a < 16; ++a)
    for (unsigned b = a + 1; b < 16; ++b)
      for (unsigned c = b + 1; c < 16; ++c) triples.push_back({a, b, c});
  REQUIRE(triples.size() == 560);
  counts.assign(triples.size(), {});
  std::array<std::uint64_t, 16> hv{};
  for (std::uint64_t f = 0; f < en.count(); ++f) {
    SimpleTabHash h(p, en.filling(f)[0]);
    for (unsigned x = 0; x < 16; ++x) hv[x] = h(Key{x});
    for (std::size_t t = 0; t < triples.size(); ++t) {
      const auto& tr = triples[t];
      counts[t][hv[tr[0]] * 16 + hv[tr[1]] * 4 + hv[tr[2]]]++;
    }
  }
  bool uniform = true;
  for (const auto& c : counts)
    for (auto v : c) uniform = uniform && v == 1024;
  CHECK(uniform);
}

TEST_CASE("same seed gives the same hash") {
  for (auto d : {0u, 1u}) {
    SchemeParams p{8, 4, 32, d};
    SchemeDescriptor s{d ? SchemeKind::mixed : SchemeKind::simple, p};
    const auto h1 = make_hash(s, 5);
    const auto h2 = make_hash(s, 5);
    const auto h3 = make_hash(s, 6);
    int differ = 0;
    for (std::uint64_t x = 0; x < 1000; ++x) {
      CHECK(evaluate(h1, Key{x * 7919}) == evaluate(h2, Key{x * 7919}));
      differ += evaluate(h1, Key{x * 7919}) != evaluate(h3, Key{x * 7919});
    }
    CHECK(differ > 990);
  }
}

TEST_CASE("frozen hash values") {
  // Reference values pin the generator, the table layout and key packing.
  SimpleTabHash h(SchemeParams{8, 4, 32, 0}, 1);
  CHECK(h.table()(0, 0) == (splitmix_at(derive_seed(1, 0x100), 0) & low_mask(32)));
  CHECK(h(Key{0}) == (h.table()(0, 0) ^ h.table()(1, 0) ^ h.table()(2, 0) ^ h.table()(3, 0)));
  CHECK(h(Key{0}) == 1160729929u);
  CHECK(h(Key{1}) == 635066008u);
  CHECK(h(Key{0xdeadbeef}) == 4103560288u);

  MixedTabHash m(SchemeParams{8, 4, 32, 1}, 1);
  CHECK(m(Key{0}) == 150540888u);
  CHECK(m(Key{1}) == 1530131914u);
  CHECK(m(Key{0xdeadbeef}) == 220872217u);
}

TEST_CASE("lazy tables for large alphabets") {
  SchemeParams p{20, 2, 32, 0};
  SimpleTabHash h(p, 77);
  CHECK(!h.table().materialized());
  SimpleTabHash again(p, 77);
  for (std::uint64_t x = 0; x < 100; ++x) CHECK(h(Key{x << 17}) == again(Key{x << 17}));
}

TEST_CASE("scheme descriptors print") {
  CHECK(SchemeDescriptor{SchemeKind::simple, {8, 4, 16, 0}}.to_string() == "simple:k=8,c=4,l=16");
  CHECK(SchemeDescriptor{SchemeKind::mixed, {8, 4, 16, 1}}.to_string() == "mixed:k=8,c=4,d=1,l=16");
  CHECK(SchemeDescriptor{SchemeKind::fully_random, {8, 4, 16, 0}}.to_string() == "random:k=8,c=4,l=16");
}
