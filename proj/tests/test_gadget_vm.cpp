#include <gtest/gtest.h>

#include "silenzio/gadget_vm.hpp"

using namespace silenzio;

namespace {
GadgetValue u(int v) { return GadgetValue(v); }
}  // namespace

TEST(GadgetValue, RejectsOutOfRangeConstruction) {
  EXPECT_THROW(GadgetValue(256), GuardViolation);
  EXPECT_THROW(GadgetValue(-1), GuardViolation);
  EXPECT_THROW(SignedGadgetValue(128), GuardViolation);
  EXPECT_EQ(SignedGadgetValue(-128).value(), -128);
}

TEST(Evaluator, AddAtBoundary) {
  Evaluator ev;
  EXPECT_EQ(ev.add(u(100), u(155)).value(), 255);
  EXPECT_THROW(ev.add(u(100), u(156)), GuardViolation);
}

TEST(Evaluator, MulGuard) {
  Evaluator ev;
  EXPECT_EQ(ev.mul(u(14), u(14)).value(), 196);
  try {
    ev.mul(u(30), u(30));
    FAIL() << "expected a guard violation";
  } catch (const GuardViolation& g) {
    EXPECT_EQ(g.value(), 900);
  }
}

TEST(Evaluator, SubNeverWraps) {
  Evaluator ev;
  EXPECT_THROW(ev.sub(u(3), u(4)), GuardViolation);
  EXPECT_EQ(ev.sub(SignedGadgetValue(3), SignedGadgetValue(4)).value(), -1);
}

TEST(Evaluator, Lookup) {
  Evaluator ev;
  const LookupTable<> id(0, 255, [](int x) { return x; });
  const LookupTable<> mod13(0, 255, [](int x) { return x % 13; });
  EXPECT_EQ(ev.lookup(id, u(42)).value(), 42);
  EXPECT_EQ(ev.lookup(mod13, u(27)).value(), 1);
  EXPECT_EQ(ev.stats().lookup_count, 2u);
  EXPECT_EQ(ev.stats().linear_op_count, 0u);
}

TEST(LookupTable, DomainChecks) {
  const LookupTable<> t(0, 15, [](int x) { return x; });
  Evaluator ev;
  EXPECT_THROW(ev.lookup(t, u(16)), DomainError);
  EXPECT_THROW((LookupTable<>(0, 3, [](int x) { return x * 100; })), DomainError);
  EXPECT_THROW((LookupTable<>(-1, 3, [](int x) { return x; })), DomainError);
  EXPECT_EQ(LookupTable<>::over_bits(5, [](int) { return 0; }).input_max(), 31);
}

TEST(Evaluator, ExtractBits) {
  Evaluator ev;
  EXPECT_EQ(ev.extract_bits(u(27), 3, 4).value(), 3);
  EXPECT_EQ(ev.extract_bits(u(27), 0, 2).value(), 3);
  for (unsigned lo = 0; lo < 8; ++lo)
    for (unsigned hi = lo; hi < 8; ++hi) EXPECT_EQ(ev.extract_bits(u(0), lo, hi).value(), 0);
  EXPECT_THROW(ev.extract_bits(u(1), 3, 2), DomainError);
  EXPECT_THROW(ev.extract_bits(u(1), 0, 8), DomainError);
}

TEST(Evaluator, BitDecompositionProperty) {
  Evaluator ev;
  for (int v = 0; v < 32; ++v) {
    EXPECT_EQ(ev.extract_bits(u(v), 3, 4).value() * 8 + ev.extract_bits(u(v), 0, 2).value(), v);
  }
}

TEST(OpStats, Merge) {
  OpStats a, b;
  EXPECT_TRUE(merge_stats(a, b).empty());
  a.lookup_count = 3;
  b.lookup_count = 5;
  EXPECT_EQ(merge_stats(a, b).lookup_count, 8u);
}

TEST(Evaluator, ScopesAttributeCounts) {
  Evaluator ev;
  const LookupTable<> id(0, 255, [](int x) { return x; });
  {
    auto s = ev.scope("outer");
    ev.lookup(id, u(1));
    {
      auto t = ev.scope("inner");
      ev.add(u(1), u(2));
      ev.lookup(id, u(1));
    }
    ev.add(u(200), u(50));
  }
  const auto& st = ev.stats();
  EXPECT_EQ(st.lookup_count, 2u);
  EXPECT_EQ(st.linear_op_count, 2u);
  EXPECT_EQ(st.per_gadget.at("outer").lookups, 1u);
  EXPECT_EQ(st.per_gadget.at("outer").peak, 250);
  EXPECT_EQ(st.per_gadget.at("inner").lookups, 1u);
  EXPECT_EQ(st.per_gadget.count("circuit"), 0u);
}

TEST(Evaluator, GuardNamesGadget) {
  Evaluator ev;
  auto s = ev.scope("matmul_rns");
  try {
    ev.mul(u(16), u(16));
    FAIL();
  } catch (const GuardViolation& g) {
    EXPECT_EQ(g.gadget(), "matmul_rns");
  }
}

TEST(Evaluator, BivariateAndMax) {
  Evaluator ev;
  const BivariateLookupTable<> t(0, 3, 0, 3, [](int a, int b) { return a * 4 + b; });
  EXPECT_EQ(ev.bivariate_lookup(t, u(2), u(3)).value(), 11);
  EXPECT_THROW(ev.bivariate_lookup(t, u(4), u(0)), DomainError);
  EXPECT_EQ(ev.max(u(7), u(9)).value(), 9);
  EXPECT_EQ(ev.stats().lookup_count, 3u);
}
