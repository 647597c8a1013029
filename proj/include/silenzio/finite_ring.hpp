#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "silenzio/errors.hpp"
#include "silenzio/gadget_vm.hpp"
#include "silenzio/matrix.hpp"

namespace silenzio {

// ---------------------------------------------------------------------------
// Signed ring encoding: non-negative values occupy the lower half of Z_M,
// negative values the upper half. For odd M the positive side gets the extra
// element, e.g. M = 5 maps (0, 1, 2, -2, -1) to (0, 1, 2, 3, 4).
// ---------------------------------------------------------------------------

inline std::int64_t ring_min(std::uint64_t cardinality) {
  return -static_cast<std::int64_t>(cardinality / 2);
}
inline std::int64_t ring_max(std::uint64_t cardinality) {
  return static_cast<std::int64_t>((cardinality + 1) / 2) - 1;
}

inline std::uint64_t encode_signed(std::int64_t v, std::uint64_t cardinality) {
  if (v < ring_min(cardinality) || v > ring_max(cardinality)) {
    throw RangeError(std::to_string(v) + " is not representable in Z_" +
                     std::to_string(cardinality));
  }
  return v >= 0 ? static_cast<std::uint64_t>(v)
                : cardinality - static_cast<std::uint64_t>(-v);
}

inline std::int64_t decode_signed(std::uint64_t r, std::uint64_t cardinality) {
  return r < (cardinality + 1) / 2 ? static_cast<std::int64_t>(r)
                                   : static_cast<std::int64_t>(r) -
                                         static_cast<std::int64_t>(cardinality);
}

namespace detail {

inline std::int64_t mod_floor(std::int64_t a, std::int64_t m) {
  const std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

/// Modular inverse by extended Euclid. Requires gcd(a, m) == 1.
inline std::uint32_t mod_inverse(std::uint32_t a, std::uint32_t m) {
  std::int64_t old_r = a % m, r = m, old_s = 1, s = 0;
  while (r != 0) {
    const std::int64_t q = old_r / r;
    std::tie(old_r, r) = std::make_tuple(r, old_r - q * r);
    std::tie(old_s, s) = std::make_tuple(s, old_s - q * s);
  }
  if (old_r != 1) throw DomainError("moduli are not coprime");
  return static_cast<std::uint32_t>(mod_floor(old_s, m));
}

/// Type-erased, thread-safe memo for lookup tables derived from one base.
class TableCache {
 public:
  template <class T, class Build>
  const T& get(const std::string& key, Build&& build) {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      it = entries_.emplace(key, std::make_shared<const T>(build())).first;
    }
    return *static_cast<const T*>(it->second.get());
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const void>> entries_;
};

}  // namespace detail

/// Pairwise-coprime moduli m_1..m_k of width w bits, least significant radix
/// first. The last modulus must be even so the sign test on the top MRNS digit
/// is exact.
class RnsBase {
 public:
  RnsBase(std::vector<std::uint32_t> moduli, unsigned width)
      : moduli_(std::move(moduli)), width_(width), cache_(std::make_shared<detail::TableCache>()) {
    if (moduli_.size() < 2) throw DomainError("an RNS base needs at least two moduli");
    if (width_ < 2 || width_ > 5) throw DomainError("modulus width must be in [2, 5] bits");
    cardinality_ = 1;
    for (std::size_t i = 0; i < moduli_.size(); ++i) {
      const auto m = moduli_[i];
      if (m < 2 || m >= (1u << width_)) {
        throw DomainError("modulus " + std::to_string(m) + " does not fit " +
                          std::to_string(width_) + " bits");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (std::gcd(m, moduli_[j]) != 1) {
          throw DomainError("moduli " + std::to_string(moduli_[j]) + " and " +
                            std::to_string(m) + " are not coprime");
        }
      }
      cardinality_ *= m;
    }
    if (moduli_.back() % 2 != 0) throw DomainError("the most significant modulus must be even");
    const std::size_t k = moduli_.size();
    inverses_.assign(k * k, 0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        inverses_[i * k + j] = detail::mod_inverse(moduli_[i], moduli_[j]);
  }

  std::span<const std::uint32_t> moduli() const noexcept { return moduli_; }
  std::uint32_t modulus(std::size_t i) const { return moduli_[i]; }
  std::size_t size() const noexcept { return moduli_.size(); }
  unsigned width() const noexcept { return width_; }
  std::uint64_t cardinality() const noexcept { return cardinality_; }
  double max_bitwidth() const { return std::log2(static_cast<double>(cardinality_)); }
  std::uint32_t largest_modulus() const {
    std::uint32_t m = 0;
    for (auto v : moduli_) m = std::max(m, v);
    return m;
  }

  /// m_i^{-1} mod m_j for i < j.
  std::uint32_t inverse(std::size_t i, std::size_t j) const {
    if (i >= j || j >= moduli_.size()) throw DomainError("inverse(i, j) needs i < j < k");
    return inverses_[i * moduli_.size() + j];
  }

  /// Memoized table derived from this base; shared between copies.
  template <class T, class Build>
  const T& cached(const std::string& key, Build&& build) const {
    return cache_->get<T>(key, std::forward<Build>(build));
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < moduli_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(moduli_[i]);
    }
    return s + "}";
  }

  friend bool operator==(const RnsBase& a, const RnsBase& b) {
    return a.width_ == b.width_ && a.moduli_ == b.moduli_;
  }

 private:
  std::vector<std::uint32_t> moduli_;
  unsigned width_;
  std::uint64_t cardinality_ = 1;
  std::vector<std::uint32_t> inverses_;
  std::shared_ptr<detail::TableCache> cache_;
};

/// The run-time catalog of bases for 4-bit or 5-bit moduli, ordered by k.
inline std::span<const RnsBase> rns_catalog(unsigned width) {
  static const std::vector<RnsBase> four = {
      RnsBase({15, 14}, 4),
      RnsBase({13, 15, 14}, 4),
      RnsBase({11, 13, 15, 14}, 4),
      RnsBase({7, 11, 13, 15, 8}, 4),
      RnsBase({5, 7, 9, 11, 13, 8}, 4),
  };
  static const std::vector<RnsBase> five = {
      RnsBase({31, 30}, 5),
      RnsBase({29, 31, 30}, 5),
      RnsBase({27, 29, 31, 28}, 5),
      RnsBase({25, 27, 29, 31, 28}, 5),
      RnsBase({23, 25, 27, 29, 31, 28}, 5),
  };
  if (width == 4) return four;
  if (width == 5) return five;
  throw DomainError("no RNS catalog for " + std::to_string(width) + "-bit moduli");
}

/// Smallest catalog base whose log2(M) covers `required_bits`.
inline const RnsBase& select_rns_base(double required_bits, unsigned width) {
  if (!(required_bits > 0)) throw DomainError("required bitwidth must be positive");
  const auto catalog = rns_catalog(width);
  for (const auto& base : catalog) {
    if (base.max_bitwidth() >= required_bits) return base;
  }
  throw CapacityError("no " + std::to_string(width) + "-bit RNS base holds " +
                      std::to_string(required_bits) + " bits (largest: " +
                      std::to_string(catalog.back().max_bitwidth()) + ")");
}

// ---------------------------------------------------------------------------
// Digit tensors. Layout is residue-axis first: plane i holds digit i of every
// element of a rows x cols matrix.
// ---------------------------------------------------------------------------

template <class Tag>
class DigitTensor {
 public:
  DigitTensor(RnsBase base, std::size_t rows, std::size_t cols)
      : base_(std::move(base)), rows_(rows), cols_(cols), digits_(base_.size() * rows * cols) {}

  /// Builds from raw digits (plane-major); every digit must be reduced.
  DigitTensor(RnsBase base, std::size_t rows, std::size_t cols, const std::vector<int>& digits)
      : DigitTensor(std::move(base), rows, cols) {
    if (digits.size() != digits_.size()) throw ShapeError("digit count does not match shape");
    for (std::size_t i = 0; i < base_.size(); ++i) {
      for (std::size_t e = 0; e < elements(); ++e) {
        const int d = digits[i * elements() + e];
        if (d < 0 || static_cast<std::uint32_t>(d) >= base_.modulus(i)) {
          throw DomainError("digit " + std::to_string(d) + " is not reduced modulo " +
                            std::to_string(base_.modulus(i)));
        }
        digits_[i * elements() + e] = GadgetValue(d);
      }
    }
  }

  const RnsBase& base() const noexcept { return base_; }
  /// For MRNS tensors these are the radices.
  std::span<const std::uint32_t> moduli() const noexcept { return base_.moduli(); }
  std::size_t planes() const noexcept { return base_.size(); }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t elements() const noexcept { return rows_ * cols_; }

  std::span<GadgetValue> plane(std::size_t i) {
    return {digits_.data() + i * elements(), elements()};
  }
  std::span<const GadgetValue> plane(std::size_t i) const {
    return {digits_.data() + i * elements(), elements()};
  }
  GadgetValue& digit(std::size_t i, std::size_t e) { return digits_[i * elements() + e]; }
  GadgetValue digit(std::size_t i, std::size_t e) const { return digits_[i * elements() + e]; }

  friend bool operator==(const DigitTensor& a, const DigitTensor& b) {
    return a.base_ == b.base_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           a.digits_ == b.digits_;
  }

 private:
  RnsBase base_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<GadgetValue> digits_;
};

struct RnsTag {};
struct MrnsTag {};
using RnsTensor = DigitTensor<RnsTag>;
using MrnsTensor = DigitTensor<MrnsTag>;

namespace detail {

inline const std::vector<LookupTable<Signed8, Unsigned8>>& to_rns_tables(const RnsBase& base) {
  using Tables = std::vector<LookupTable<Signed8, Unsigned8>>;
  return base.cached<Tables>("to_rns", [&] {
    Tables t;
    for (auto m : base.moduli()) {
      t.emplace_back(-128, 127, [m](int x) { return mod_floor(x, m); });
    }
    return t;
  });
}

/// v mod m_i over the whole unsigned 8-bit range.
inline const std::vector<LookupTable<>>& mod_tables(const RnsBase& base) {
  using Tables = std::vector<LookupTable<>>;
  return base.cached<Tables>("mod", [&] {
    Tables t;
    for (auto m : base.moduli()) t.emplace_back(0, 255, [m](int v) { return v % m; });
    return t;
  });
}

/// Offsets that keep y_j - y_i non-negative: the smallest multiple of m_j
/// that is >= m_i - 1.
inline std::int64_t conversion_offset(const RnsBase& base, std::size_t i, std::size_t j) {
  const std::int64_t mi = base.modulus(i), mj = base.modulus(j);
  return mj * ((mi - 1 + mj - 1) / mj);
}

/// Constant-multiply-mod tables v -> (v * m_i^{-1}) mod m_j, indexed [i * k + j].
inline const std::vector<LookupTable<>>& conversion_tables(const RnsBase& base) {
  using Tables = std::vector<LookupTable<>>;
  return base.cached<Tables>("rns2mrns", [&] {
    const std::size_t k = base.size();
    Tables t(k * k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        const std::int64_t inv = base.inverse(i, j), mj = base.modulus(j);
        t[i * k + j] = LookupTable<>(0, 255, [=](int v) { return (v % mj) * inv % mj; });
      }
    }
    return t;
  });
}

inline std::int64_t digit_sum_bound(const RnsBase& base) {
  std::int64_t s = 0;
  for (auto m : base.moduli()) s += m - 1;
  return s;
}

}  // namespace detail

/// Plaintext encoding of arbitrary representable integers (client side, not
/// counted).
inline RnsTensor to_rns(const Matrix<std::int64_t>& x, const RnsBase& base) {
  RnsTensor out(base, x.rows(), x.cols());
  for (std::size_t e = 0; e < x.size(); ++e) {
    const std::uint64_t r = encode_signed(x[e], base.cardinality());
    for (std::size_t i = 0; i < base.size(); ++i) {
      out.digit(i, e) = GadgetValue(static_cast<std::int64_t>(r % base.modulus(i)));
    }
  }
  return out;
}

/// In-circuit conversion of 8-bit signed values: one lookup per element per
/// modulus.
inline RnsTensor to_rns(Evaluator& ev, const Matrix<SignedGadgetValue>& x, const RnsBase& base) {
  auto scope = ev.scope("to_rns");
  const auto& tables = detail::to_rns_tables(base);
  RnsTensor out(base, x.rows(), x.cols());
  const auto lo = ring_min(base.cardinality()), hi = ring_max(base.cardinality());
  for (std::size_t e = 0; e < x.size(); ++e) {
    const int v = x[e].value();
    if (v < lo || v > hi) {
      throw RangeError(std::to_string(v) + " is not representable in base " + base.to_string());
    }
    for (std::size_t i = 0; i < base.size(); ++i) out.digit(i, e) = ev.lookup(tables[i], x[e]);
  }
  return out;
}

/// Ring element in [0, M) of one element via the Chinese remainder theorem.
inline std::uint64_t crt_ring_element(const RnsTensor& x, std::size_t e) {
  const auto& base = x.base();
  const std::uint64_t big_m = base.cardinality();
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const std::uint64_t mi = base.modulus(i);
    const std::uint64_t partial = big_m / mi;
    const std::uint64_t inv = detail::mod_inverse(static_cast<std::uint32_t>(partial % mi),
                                                  static_cast<std::uint32_t>(mi));
    const std::uint64_t term = static_cast<std::uint64_t>(x.digit(i, e).value()) * inv % mi;
    acc = (acc + term * partial) % big_m;
  }
  return acc;
}

/// Exact CRT reconstruction followed by signed decoding. Oracle only; never
/// part of a guarded circuit.
inline Matrix<std::int64_t> rns_reconstruct(const RnsTensor& x) {
  Matrix<std::int64_t> out(x.rows(), x.cols());
  for (std::size_t e = 0; e < x.elements(); ++e) {
    out[e] = decode_signed(crt_ring_element(x, e), x.base().cardinality());
  }
  return out;
}

/// Positional value x_1 + sum_i x_i * prod_{j<i} r_j of one element.
inline std::uint64_t mrns_ring_element(const MrnsTensor& x, std::size_t e) {
  std::uint64_t value = 0, weight = 1;
  for (std::size_t i = 0; i < x.planes(); ++i) {
    value += static_cast<std::uint64_t>(x.digit(i, e).value()) * weight;
    weight *= x.moduli()[i];
  }
  return value;
}

/// Digit-by-digit RNS to mixed-radix conversion. For each position i the
/// lower digit is subtracted from the remaining planes (offset by a public
/// multiple of m_j so the difference stays non-negative) and the result is
/// multiplied by m_{i-1}^{-1} mod m_j through one lookup.
inline MrnsTensor rns2mrns(Evaluator& ev, const RnsTensor& x) {
  auto scope = ev.scope("rns2mrns");
  const auto& base = x.base();
  const std::size_t k = base.size();
  const auto& tables = detail::conversion_tables(base);
  MrnsTensor y(base, x.rows(), x.cols());
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t e = 0; e < x.elements(); ++e) y.digit(i, e) = x.digit(i, e);

  for (std::size_t i = 1; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      const std::int64_t offset = detail::conversion_offset(base, i - 1, j);
      const auto& table = tables[(i - 1) * k + j];
      for (std::size_t e = 0; e < x.elements(); ++e) {
        const GadgetValue shifted = ev.add_const(y.digit(j, e), offset);
        const GadgetValue diff = ev.sub(shifted, y.digit(i - 1, e));
        y.digit(j, e) = ev.lookup(table, diff);
      }
    }
  }
  return y;
}

/// Outputs of a sign gadget for negative, zero and positive inputs.
struct SignOutputs {
  int negative = -1;
  int zero = 0;
  int positive = 1;
};

namespace detail {

/// (top MRNS digit, digit sum) -> n / z / p.
inline const BivariateLookupTable<Unsigned8, Unsigned8, Signed8>& sign_table(
    const RnsBase& base, SignOutputs out) {
  const std::string key = "sign/" + std::to_string(out.negative) + "," +
                          std::to_string(out.zero) + "," + std::to_string(out.positive);
  return base.cached<BivariateLookupTable<Unsigned8, Unsigned8, Signed8>>(key, [&] {
    const int top = static_cast<int>(base.moduli().back());
    return BivariateLookupTable<Unsigned8, Unsigned8, Signed8>(
        0, top - 1, 0, static_cast<int>(digit_sum_bound(base)), [=](int digit, int sum) {
          if (sum == 0) return out.zero;
          return digit >= top / 2 ? out.negative : out.positive;
        });
  });
}

inline Matrix<SignedGadgetValue> sign_from_mrns(Evaluator& ev, const MrnsTensor& y,
                                                SignOutputs out) {
  const auto& table = sign_table(y.base(), out);
  const std::size_t k = y.planes();
  Matrix<SignedGadgetValue> result(y.rows(), y.cols());
  for (std::size_t e = 0; e < y.elements(); ++e) {
    GadgetValue sum = y.digit(0, e);
    for (std::size_t i = 1; i < k; ++i) sum = ev.add(sum, y.digit(i, e));
    result[e] = ev.bivariate_lookup(table, y.digit(k - 1, e), sum);
  }
  return result;
}

}  // namespace detail

/// Element-wise n / z / p by sign. Negativity is the top MRNS digit being at
/// least r_k / 2; zero is the digit sum being zero (at most 6 * 30 < 256).
inline Matrix<SignedGadgetValue> sign_rns(Evaluator& ev, const RnsTensor& x, SignOutputs out) {
  auto scope = ev.scope("sign_rns");
  for (int v : {out.negative, out.zero, out.positive}) {
    if (!Signed8::contains(v)) throw DomainError("sign outputs must fit signed 8 bits");
  }
  const MrnsTensor y = rns2mrns(ev, x);
  return detail::sign_from_mrns(ev, y, out);
}

struct AbsResult {
  RnsTensor magnitude;
  Matrix<SignedGadgetValue> sign;
};

/// |x| in RNS plus the Sign_(-1,1,1) tensor; negation is m_i - digit, folded
/// into one (sign, digit) lookup per residue.
inline AbsResult abs_rns(Evaluator& ev, const RnsTensor& x) {
  auto sign = sign_rns(ev, x, SignOutputs{-1, 1, 1});
  auto scope = ev.scope("abs_rns");
  const auto& base = x.base();
  using Table = std::vector<BivariateLookupTable<Signed8, Unsigned8, Unsigned8>>;
  const auto& tables = base.cached<Table>("abs", [&] {
    Table t;
    for (auto m : base.moduli()) {
      const int mi = static_cast<int>(m);
      t.emplace_back(-1, 1, 0, mi - 1,
                     [mi](int s, int d) { return detail::mod_floor(s * d, mi); });
    }
    return t;
  });
  RnsTensor magnitude(base, x.rows(), x.cols());
  for (std::size_t i = 0; i < base.size(); ++i)
    for (std::size_t e = 0; e < x.elements(); ++e)
      magnitude.digit(i, e) = ev.bivariate_lookup(tables[i], sign[e], x.digit(i, e));
  return {std::move(magnitude), std::move(sign)};
}

}  // namespace silenzio
