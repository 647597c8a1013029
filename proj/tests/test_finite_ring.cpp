#include <gtest/gtest.h>

#include <random>

#include "silenzio/finite_ring.hpp"

using namespace silenzio;

namespace {

RnsBase base578() { return RnsBase({5, 7, 8}, 4); }
RnsBase base1514() { return RnsBase({15, 14}, 4); }

Matrix<SignedGadgetValue> row(std::initializer_list<int> v) {
  std::vector<SignedGadgetValue> d;
  for (int x : v) d.emplace_back(x);
  const std::size_t n = d.size();
  return Matrix<SignedGadgetValue>(1, n, std::move(d));
}

/// RNS tensor holding every ring element of `base` once, in order.
RnsTensor all_elements(const RnsBase& base) {
  const auto n = static_cast<std::size_t>(base.cardinality());
  RnsTensor t(base, 1, n);
  for (std::size_t i = 0; i < base.size(); ++i)
    for (std::size_t e = 0; e < n; ++e) t.digit(i, e) = GadgetValue(static_cast<int>(e % base.modulus(i)));
  return t;
}

std::vector<std::uint32_t> mods(const RnsBase& b) { return {b.moduli().begin(), b.moduli().end()}; }

}  // namespace

TEST(RnsBase, Validation) {
  EXPECT_THROW(RnsBase({15}, 4), DomainError);
  EXPECT_THROW(RnsBase({15, 16}, 4), DomainError);
  EXPECT_THROW(RnsBase({9, 15, 14}, 4), DomainError);
  EXPECT_THROW(RnsBase({15, 13}, 4), DomainError);
  EXPECT_EQ(base1514().cardinality(), 210u);
}

TEST(SelectBase, CatalogExamples) {
  EXPECT_EQ(mods(select_rns_base(7.0, 4)), (std::vector<std::uint32_t>{15, 14}));
  EXPECT_EQ(mods(select_rns_base(15.0, 4)), (std::vector<std::uint32_t>{7, 11, 13, 15, 8}));
  EXPECT_THROW(select_rns_base(20.0, 4), CapacityError);
  EXPECT_EQ(mods(select_rns_base(20.0, 5)), (std::vector<std::uint32_t>{25, 27, 29, 31, 28}));
  EXPECT_THROW(select_rns_base(0.0, 4), DomainError);
}

TEST(SelectBase, CatalogIsWellFormed) {
  for (unsigned w : {4u, 5u}) {
    double prev = 0;
    for (const auto& b : rns_catalog(w)) {
      EXPECT_GT(b.max_bitwidth(), prev);
      prev = b.max_bitwidth();
      EXPECT_EQ(b.moduli().back() % 2, 0u);
    }
  }
}

TEST(ToRns, NinetyNineOverFiveSevenEight) {
  Evaluator ev;
  const auto r = to_rns(ev, row({99}), base578());
  EXPECT_EQ(r.digit(0, 0).value(), 4);
  EXPECT_EQ(r.digit(1, 0).value(), 1);
  EXPECT_EQ(r.digit(2, 0).value(), 3);
  EXPECT_EQ(rns_reconstruct(r)(0, 0), 99);
  const auto m = rns2mrns(ev, r);
  EXPECT_EQ(m.digit(0, 0).value(), 4);
  EXPECT_EQ(m.digit(1, 0).value(), 5);
  EXPECT_EQ(m.digit(2, 0).value(), 2);
}

TEST(ToRns, NegativeAndZero) {
  Evaluator ev;
  const auto r = to_rns(ev, row({-1, 0}), base1514());
  EXPECT_EQ(r.digit(0, 0).value(), 14);
  EXPECT_EQ(r.digit(1, 0).value(), 13);
  EXPECT_EQ(r.digit(0, 1).value(), 0);
  EXPECT_EQ(r.digit(1, 1).value(), 0);
  EXPECT_EQ(ev.stats().lookup_count, 4u);
}

TEST(ToRns, RangeCheck) {
  Evaluator ev;
  EXPECT_THROW(to_rns(ev, row({120}), base1514()), RangeError);
  EXPECT_THROW(to_rns(Matrix<std::int64_t>(1, 1, {105}), base1514()), RangeError);
  EXPECT_NO_THROW(to_rns(Matrix<std::int64_t>(1, 1, {-105}), base1514()));
}

TEST(Rns2Mrns, ExhaustiveSmallBases) {
  for (const auto& base : {base578(), base1514(), RnsBase({13, 15, 14}, 4)}) {
    Evaluator ev;
    const auto x = all_elements(base);
    const auto y = rns2mrns(ev, x);
    for (std::size_t e = 0; e < x.elements(); ++e) {
      ASSERT_EQ(mrns_ring_element(y, e), e) << base.to_string();
      for (std::size_t i = 0; i < base.size(); ++i) ASSERT_LT(y.digit(i, e).value(), static_cast<int>(base.modulus(i)));
    }
  }
}

TEST(Rns2Mrns, AllCatalogBasesRandom) {
  std::mt19937_64 rng(7);
  for (unsigned w : {4u, 5u}) {
    for (const auto& base : rns_catalog(w)) {
      Evaluator ev;
      std::uniform_int_distribution<std::uint64_t> dist(0, base.cardinality() - 1);
      RnsTensor x(base, 1, 500);
      std::vector<std::uint64_t> want(500);
      for (std::size_t e = 0; e < 500; ++e) {
        want[e] = dist(rng);
        for (std::size_t i = 0; i < base.size(); ++i)
          x.digit(i, e) = GadgetValue(static_cast<int>(want[e] % base.modulus(i)));
      }
      const auto y = rns2mrns(ev, x);
      for (std::size_t e = 0; e < 500; ++e) ASSERT_EQ(mrns_ring_element(y, e), want[e]);
    }
  }
}

TEST(Sign, ExhaustiveAgainstCrt) {
  for (const auto& base : {base1514(), RnsBase({13, 15, 14}, 4), RnsBase({11, 13, 15, 14}, 4)}) {
    Evaluator ev;
    const auto x = all_elements(base);
    const auto s = sign_rns(ev, x, SignOutputs{-1, 0, 1});
    for (std::size_t e = 0; e < x.elements(); ++e) {
      const auto v = decode_signed(e, base.cardinality());
      ASSERT_EQ(s[e].value(), (v > 0) - (v < 0)) << base.to_string() << " " << e;
    }
  }
}

TEST(Sign, Examples) {
  Evaluator ev;
  const auto x = to_rns(ev, row({-2, 0}), base1514());
  const auto s = sign_rns(ev, x, {});
  EXPECT_EQ(s[0].value(), -1);
  EXPECT_EQ(s[1].value(), 0);
  // Ring element M/2 = 105 is the most negative value.
  RnsTensor half(base1514(), 1, 1);
  half.digit(0, 0) = GadgetValue(105 % 15);
  half.digit(1, 0) = GadgetValue(105 % 14);
  EXPECT_EQ(sign_rns(ev, half, SignOutputs{7, 8, 9})[0].value(), 7);
}

TEST(Abs, Examples) {
  Evaluator ev;
  const auto x = to_rns(ev, row({-5, 0, 5}), base1514());
  const auto a = abs_rns(ev, x);
  const auto m = rns_reconstruct(a.magnitude);
  EXPECT_EQ(m(0, 0), 5);
  EXPECT_EQ(m(0, 1), 0);
  EXPECT_EQ(m(0, 2), 5);
  EXPECT_EQ(a.sign[0].value(), -1);
  EXPECT_EQ(a.sign[1].value(), 1);
  EXPECT_EQ(a.sign[2].value(), 1);
}

TEST(Abs, ExhaustiveExceptMostNegative) {
  const auto base = RnsBase({13, 15, 14}, 4);
  Evaluator ev;
  const auto x = all_elements(base);
  const auto a = abs_rns(ev, x);
  const auto m = rns_reconstruct(a.magnitude);
  for (std::size_t e = 0; e < x.elements(); ++e) {
    const auto v = decode_signed(e, base.cardinality());
    if (v == ring_min(base.cardinality())) continue;  // |v| is not representable
    ASSERT_EQ(m[e], v < 0 ? -v : v);
  }
}
