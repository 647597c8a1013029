#pragma once

// Block scaling of RNS tensors to their most significant bits.
//
// The approximate gadget reads the MRNS digits as if they were w-bit chunks
// of a binary number: it finds the highest set bit over the whole tensor
// (one shared exponent), shifts every digit accordingly and sums the digits.
// Since the radices are not powers of two the result is approximate; the
// exact oracle below reconstructs the integers and divides.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "silenzio/errors.hpp"
#include "silenzio/finite_ring.hpp"
#include "silenzio/gadget_vm.hpp"
#include "silenzio/matrix.hpp"

namespace silenzio {

template <class V>
struct BasicScaleResult {
  Matrix<V> values;
  /// maxBit - gamma for the gadget; may be negative when nothing was shifted.
  int shift = 0;
};

using PositiveScaleResult = BasicScaleResult<GadgetValue>;
using SignedScaleResult = BasicScaleResult<SignedGadgetValue>;
using ScaleResult = BasicScaleResult<std::int64_t>;

namespace detail {

inline int bit_length(std::uint64_t v) { return static_cast<int>(std::bit_width(v)); }

struct ShiftTables {
  std::vector<LookupTable<>> bit_position;                // per digit i
  std::vector<BivariateLookupTable<>> shift_digit;        // per digit i: (digit, maxBit)
  LookupTable<Unsigned8, Signed8> shift_amount;           // maxBit -> maxBit - gamma
};

/// Shift applied to digit i for a given maxBit, exactly as the gadget's
/// step 3/4 formulas prescribe.
inline std::int64_t shifted_digit(int digit, int max_bit, std::size_t i, unsigned w,
                                  unsigned gamma) {
  const int any_shift = max_bit > static_cast<int>(w) ? 1 : 0;
  const int digit_shift = (static_cast<int>(gamma) - (max_bit - static_cast<int>(w * i))) * any_shift;
  const int lshift = std::min(std::max(digit_shift, 0), static_cast<int>(gamma) - 1);
  const int rshift = std::max(-digit_shift, 0);
  const std::int64_t v = (static_cast<std::int64_t>(digit) << lshift) >> std::min(rshift, 62);
  return v;
}

inline const ShiftTables& shift_tables(const RnsBase& base, unsigned w, unsigned gamma) {
  const std::string key = "shift/" + std::to_string(w) + "/" + std::to_string(gamma);
  return base.cached<ShiftTables>(key, [&] {
    ShiftTables t;
    const std::size_t k = base.size();
    const int max_bit_hi = static_cast<int>(k * w);
    for (std::size_t i = 0; i < k; ++i) {
      const int mi = static_cast<int>(base.modulus(i));
      t.bit_position.emplace_back(0, mi - 1, [=](int d) {
        return d == 0 ? 0 : bit_length(static_cast<std::uint64_t>(d)) + static_cast<int>(i * w);
      });
      // Entries where the digit's own bit position exceeds maxBit cannot be
      // reached (maxBit is a maximum over all digits); they saturate.
      t.shift_digit.emplace_back(0, mi - 1, 0, max_bit_hi, [=](int d, int mb) {
        return std::min<std::int64_t>(shifted_digit(d, mb, i, w, gamma), 255);
      });
    }
    t.shift_amount = LookupTable<Unsigned8, Signed8>(
        0, max_bit_hi, [=](int mb) { return mb - static_cast<int>(gamma); });
    return t;
  });
}

}  // namespace detail

/// Approximately shifts a non-negative RNS tensor to its `gamma` most
/// significant bits. `w` is the modulus bitwidth used to read digits as
/// binary chunks.
inline PositiveScaleResult shift2msbs_pos(Evaluator& ev, const RnsTensor& x, unsigned w,
                                          unsigned gamma) {
  if (gamma < 1 || gamma > 8) throw DomainError("output bitwidth gamma must be in [1, 8]");
  for (auto m : x.moduli()) {
    if (m > (1u << w)) throw DomainError("modulus wider than the digit width w");
  }
  const MrnsTensor y = rns2mrns(ev, x);
  auto scope = ev.scope("shift2msbs");
  PositiveScaleResult out{Matrix<GadgetValue>(x.rows(), x.cols()), 0};
  if (x.elements() == 0) return out;

  const auto& tables = detail::shift_tables(x.base(), w, gamma);
  const std::size_t k = y.planes();

  // Highest set bit over every digit of every element (block exponent).
  GadgetValue max_bit;
  bool first = true;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t e = 0; e < y.elements(); ++e) {
      const GadgetValue u = ev.lookup(tables.bit_position[i], y.digit(i, e));
      max_bit = first ? u : ev.max(max_bit, u);
      first = false;
    }
  }

  for (std::size_t e = 0; e < y.elements(); ++e) {
    GadgetValue acc = ev.bivariate_lookup(tables.shift_digit[0], y.digit(0, e), max_bit);
    for (std::size_t i = 1; i < k; ++i) {
      acc = ev.add(acc, ev.bivariate_lookup(tables.shift_digit[i], y.digit(i, e), max_bit));
    }
    out.values[e] = acc;
  }
  out.shift = ev.lookup(tables.shift_amount, max_bit).value();
  return out;
}

/// Signed variant: strip the sign, scale magnitudes to gamma_signed - 1 bits,
/// reapply the sign.
inline SignedScaleResult shift2msbs_signed(Evaluator& ev, const RnsTensor& x, unsigned w,
                                           unsigned gamma_signed) {
  if (gamma_signed < 2) throw DomainError("signed output bitwidth must be at least 2");
  auto scope = ev.scope("shift2msbs_signed");
  const AbsResult abs = abs_rns(ev, x);
  const PositiveScaleResult scaled = shift2msbs_pos(ev, abs.magnitude, w, gamma_signed - 1);
  SignedScaleResult out{Matrix<SignedGadgetValue>(x.rows(), x.cols()), scaled.shift};
  for (std::size_t e = 0; e < x.elements(); ++e) {
    out.values[e] = ev.mul(abs.sign[e], scaled.values[e]);
  }
  return out;
}

/// Exact block scaling: divide every element by 2^shift (toward zero), where
/// shift = max(bitlen(max |x|) - gamma, 0).
inline ScaleResult exact_block_scale(const Matrix<std::int64_t>& x, unsigned gamma) {
  std::uint64_t max_abs = 0;
  for (auto v : x) max_abs = std::max<std::uint64_t>(max_abs, static_cast<std::uint64_t>(std::llabs(v)));
  const int max_bit = detail::bit_length(max_abs);
  const int shift = std::max(max_bit - static_cast<int>(gamma), 0);
  ScaleResult out{x.map([shift](std::int64_t v) {
                    const std::int64_t mag = std::llabs(v) >> shift;
                    return v < 0 ? -mag : mag;
                  }),
                  shift};
  return out;
}

inline ScaleResult exact_block_scale(const RnsTensor& x, unsigned gamma) {
  return exact_block_scale(rns_reconstruct(x), gamma);
}

/// One comparison of the approximate gadget against the exact oracle.
struct ScalingErrorRecord {
  std::string layer;
  std::size_t batch = 0;
  double mean_abs_error = 0;
  std::int64_t max_abs_error = 0;
  std::size_t elements = 0;
  double error_sum = 0;
};

using ScalingErrorSink = std::function<void(const ScalingErrorRecord&)>;

inline ScalingErrorRecord compare_scaling(const Matrix<std::int64_t>& approx,
                                          const Matrix<std::int64_t>& exact, std::string layer,
                                          std::size_t batch) {
  if (approx.rows() != exact.rows() || approx.cols() != exact.cols()) {
    throw ShapeError("scaling comparison needs equal shapes");
  }
  ScalingErrorRecord rec{std::move(layer), batch, 0.0, 0, approx.size(), 0.0};
  for (std::size_t e = 0; e < approx.size(); ++e) {
    const std::int64_t err = std::llabs(approx[e] - exact[e]);
    rec.error_sum += static_cast<double>(err);
    rec.max_abs_error = std::max(rec.max_abs_error, err);
  }
  rec.mean_abs_error = rec.elements ? rec.error_sum / static_cast<double>(rec.elements) : 0.0;
  return rec;
}

/// Running aggregate of error records for one layer.
struct ScalingErrorStats {
  double error_sum = 0;
  std::size_t elements = 0;
  std::size_t calls = 0;
  std::int64_t max_abs_error = 0;

  void add(const ScalingErrorRecord& r) {
    error_sum += r.error_sum;
    elements += r.elements;
    ++calls;
    max_abs_error = std::max(max_abs_error, r.max_abs_error);
  }
  double mean_abs_error() const {
    return elements ? error_sum / static_cast<double>(elements) : 0.0;
  }
};

}  // namespace silenzio
