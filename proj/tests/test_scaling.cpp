#include <gtest/gtest.h>

#include <random>

#include "silenzio/scaling.hpp"

using namespace silenzio;

namespace {

const RnsBase& example_base() {
  static const RnsBase b({13, 15, 14}, 4);
  return b;
}

RnsTensor encode(std::initializer_list<std::int64_t> v, const RnsBase& base) {
  return to_rns(Matrix<std::int64_t>(1, v.size(), std::vector<std::int64_t>(v)), base);
}

}  // namespace

TEST(Shift2MsbsPos, WorkedExample) {
  Evaluator ev;
  const auto x = encode({611, 353, 19}, example_base());
  const auto m = rns2mrns(ev, x);
  // Digits listed most significant first in the worked example.
  EXPECT_EQ(m.digit(2, 0).value(), 3);
  EXPECT_EQ(m.digit(1, 0).value(), 2);
  EXPECT_EQ(m.digit(0, 0).value(), 0);
  EXPECT_EQ(m.digit(2, 1).value(), 1);
  EXPECT_EQ(m.digit(1, 1).value(), 12);
  EXPECT_EQ(m.digit(0, 1).value(), 2);
  EXPECT_EQ(m.digit(1, 2).value(), 1);
  EXPECT_EQ(m.digit(0, 2).value(), 6);

  const auto r = shift2msbs_pos(ev, x, 4, 5);
  EXPECT_EQ(r.values[0].value(), 25);
  EXPECT_EQ(r.values[1].value(), 14);
  EXPECT_EQ(r.values[2].value(), 0);
  EXPECT_EQ(r.shift, 5);
}

TEST(Shift2MsbsPos, NoShiftPassthrough) {
  Evaluator ev;
  const auto r = shift2msbs_pos(ev, encode({5}, example_base()), 4, 5);
  EXPECT_EQ(r.values[0].value(), 5);
  EXPECT_EQ(r.shift, -2);
}

TEST(Shift2MsbsPos, AllZero) {
  for (unsigned g = 1; g <= 7; ++g) {
    Evaluator ev;
    const auto r = shift2msbs_pos(ev, encode({0, 0, 0}, example_base()), 4, g);
    for (auto v : r.values) EXPECT_EQ(v.value(), 0);
  }
}

TEST(Shift2MsbsSigned, SignSymmetry) {
  Evaluator ev;
  const auto r = shift2msbs_signed(ev, encode({-611, -353, -19}, example_base()), 4, 6);
  EXPECT_EQ(to_plain(r.values), Matrix<std::int64_t>(1, 3, {-25, -14, 0}));
  EXPECT_EQ(r.shift, 5);
}

TEST(ExactBlockScale, Examples) {
  const auto r = exact_block_scale(Matrix<std::int64_t>(1, 3, {611, 353, 19}), 5);
  EXPECT_EQ(r.values, Matrix<std::int64_t>(1, 3, {19, 11, 0}));
  EXPECT_EQ(r.shift, 5);
  const auto small = exact_block_scale(Matrix<std::int64_t>(1, 2, {31, -7}), 5);
  EXPECT_EQ(small.values, Matrix<std::int64_t>(1, 2, {31, -7}));
  EXPECT_EQ(small.shift, 0);
  const auto one = exact_block_scale(Matrix<std::int64_t>(1, 1, {32}), 5);
  EXPECT_EQ(one.values(0, 0), 16);
}

TEST(Shift2MsbsSigned, OutputRangeAndGuardOnCatalog) {
  std::mt19937_64 rng(5);
  for (unsigned w : {4u, 5u}) {
    for (const auto& base : rns_catalog(w)) {
      const auto lo = ring_min(base.cardinality()) + 1, hi = ring_max(base.cardinality());
      std::uniform_int_distribution<std::int64_t> d(lo, hi);
      for (unsigned G : {4u, 6u, 7u, 8u}) {
        Matrix<std::int64_t> x(4, 8);
        for (auto& v : x) v = d(rng);
        Evaluator ev;
        const auto r = shift2msbs_signed(ev, to_rns(x, base), w, G);
        for (auto v : r.values) {
          ASSERT_LT(std::abs(v.value()), 1 << (G - 1)) << base.to_string() << " G=" << G;
        }
      }
    }
  }
}

TEST(Shift2MsbsSigned, ErrorIsModestOnRandomBlocks) {
  std::mt19937_64 rng(9);
  const auto& base = rns_catalog(4)[2];
  std::uniform_int_distribution<std::int64_t> d(-5000, 5000);
  ScalingErrorStats stats;
  for (int t = 0; t < 50; ++t) {
    Matrix<std::int64_t> x(8, 8);
    for (auto& v : x) v = d(rng);
    Evaluator ev;
    const auto approx = shift2msbs_signed(ev, to_rns(x, base), 4, 7);
    stats.add(compare_scaling(to_plain(approx.values), exact_block_scale(x, 6).values, "l", 0));
  }
  EXPECT_LT(stats.mean_abs_error(), 32.0);
}
