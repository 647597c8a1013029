#pragma once

// Overflow-free matrix products in RNS. Both variants keep every raw
// intermediate within 8 bits:
//   4-bit moduli: 14 + 15 * 14 = 224 (blocks of 15 summands)
//   5-bit moduli: 30 + 7 * 30  = 240 (blocks of 7, inputs split into 3+2 bits)

#include <algorithm>
#include <cstddef>
#include <string>

#include "silenzio/errors.hpp"
#include "silenzio/finite_ring.hpp"
#include "silenzio/gadget_vm.hpp"
#include "silenzio/matrix.hpp"

namespace silenzio {

struct MatmulPlan {
  RnsBase base;
  std::size_t block_len;
  std::size_t rows;   // a
  std::size_t inner;  // b
  std::size_t cols;   // c

  static MatmulPlan make(const RnsBase& base, std::size_t a, std::size_t b, std::size_t c) {
    if (a == 0 || b == 0 || c == 0) throw ShapeError("matmul dimensions must be non-zero");
    std::size_t cap = 0;
    switch (base.width()) {
      case 4: cap = 15; break;
      case 5: cap = 7; break;
      default: throw DomainError("matmul needs a 4-bit or 5-bit RNS base");
    }
    MatmulPlan plan{base, std::min(cap, b), a, b, c};
    const std::size_t top = base.largest_modulus() - 1;
    if (plan.block_len * top > 255 - top) {
      throw DomainError("block summation would overflow 8 bits for base " + base.to_string());
    }
    return plan;
  }
};

namespace detail {

inline const std::vector<LookupTable<>>& times8_mod_tables(const RnsBase& base) {
  using Tables = std::vector<LookupTable<>>;
  return base.cached<Tables>("times8_mod", [&] {
    Tables t;
    for (auto m : base.moduli()) t.emplace_back(0, 255, [m](int v) { return (8 * v) % m; });
    return t;
  });
}

inline void check_matmul_shapes(const Matrix<SignedGadgetValue>& x,
                                const Matrix<SignedGadgetValue>& w) {
  if (x.cols() != w.rows()) {
    throw ShapeError("matmul inner dimensions differ: " + std::to_string(x.cols()) + " vs " +
                     std::to_string(w.rows()));
  }
}

/// Block-wise modular summation over the inner axis. `partial(t)` yields the
/// reduced partial product for inner index t.
template <class Partial>
GadgetValue block_sum(Evaluator& ev, const LookupTable<>& mod, const MatmulPlan& plan,
                      Partial&& partial) {
  GadgetValue acc;
  for (std::size_t start = 0; start < plan.inner; start += plan.block_len) {
    const std::size_t end = std::min(start + plan.block_len, plan.inner);
    GadgetValue block = partial(start);
    for (std::size_t t = start + 1; t < end; ++t) block = ev.add(block, partial(t));
    acc = start == 0 ? ev.lookup(mod, block) : ev.lookup(mod, ev.add(acc, block));
  }
  return acc;
}

}  // namespace detail

/// X (a x b) times W (b x c) over a 4-bit base. Residues of the exact integer
/// product, provided the base covers its magnitude.
inline RnsTensor matmul_rns(Evaluator& ev, const Matrix<SignedGadgetValue>& x,
                            const Matrix<SignedGadgetValue>& w, const RnsBase& base) {
  detail::check_matmul_shapes(x, w);
  if (base.width() != 4) throw DomainError("matmul_rns expects 4-bit moduli");
  const auto plan = MatmulPlan::make(base, x.rows(), x.cols(), w.cols());
  auto scope = ev.scope("matmul_rns");
  const RnsTensor xr = to_rns(ev, x, base);
  const RnsTensor wr = to_rns(ev, w, base);
  const auto& mod = detail::mod_tables(base);

  RnsTensor y(base, plan.rows, plan.cols);
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (std::size_t r = 0; r < plan.rows; ++r) {
      for (std::size_t c = 0; c < plan.cols; ++c) {
        y.digit(i, r * plan.cols + c) = detail::block_sum(ev, mod[i], plan, [&](std::size_t t) {
          const GadgetValue prod =
              ev.mul(xr.digit(i, r * plan.inner + t), wr.digit(i, t * plan.cols + c));
          return ev.lookup(mod[i], prod);
        });
      }
    }
  }
  return y;
}

/// High-resolution variant over a 5-bit base. Each input residue is split
/// into bits 0..2 and 3..4 so both partial products stay below 256; the
/// high half's *8 and reduction share one lookup.
inline RnsTensor matmul_highres_rns(Evaluator& ev, const Matrix<SignedGadgetValue>& x,
                                    const Matrix<SignedGadgetValue>& w, const RnsBase& base) {
  detail::check_matmul_shapes(x, w);
  if (base.width() != 5) throw DomainError("matmul_highres_rns expects 5-bit moduli");
  const auto plan = MatmulPlan::make(base, x.rows(), x.cols(), w.cols());
  auto scope = ev.scope("matmul_highres_rns");
  const RnsTensor xr = to_rns(ev, x, base);
  const RnsTensor wr = to_rns(ev, w, base);
  const auto& mod = detail::mod_tables(base);
  const auto& times8 = detail::times8_mod_tables(base);

  RnsTensor lo(base, plan.rows, plan.inner), hi(base, plan.rows, plan.inner);
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (std::size_t e = 0; e < xr.elements(); ++e) {
      hi.digit(i, e) = ev.extract_bits(xr.digit(i, e), 3, 4);
      lo.digit(i, e) = ev.extract_bits(xr.digit(i, e), 0, 2);
    }
  }

  RnsTensor y(base, plan.rows, plan.cols);
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (std::size_t r = 0; r < plan.rows; ++r) {
      for (std::size_t c = 0; c < plan.cols; ++c) {
        y.digit(i, r * plan.cols + c) = detail::block_sum(ev, mod[i], plan, [&](std::size_t t) {
          const GadgetValue wv = wr.digit(i, t * plan.cols + c);
          const std::size_t xe = r * plan.inner + t;
          const GadgetValue low = ev.lookup(mod[i], ev.mul(lo.digit(i, xe), wv));
          const GadgetValue high = ev.lookup(times8[i], ev.mul(hi.digit(i, xe), wv));
          return ev.lookup(mod[i], ev.add(low, high));
        });
      }
    }
  }
  return y;
}

/// Dispatches on the base's modulus width.
inline RnsTensor matmul(Evaluator& ev, const Matrix<SignedGadgetValue>& x,
                        const Matrix<SignedGadgetValue>& w, const RnsBase& base) {
  return base.width() == 5 ? matmul_highres_rns(ev, x, w, base) : matmul_rns(ev, x, w, base);
}

}  // namespace silenzio
