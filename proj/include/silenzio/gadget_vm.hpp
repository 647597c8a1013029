#pragma once

// Constrained evaluation layer. Every value that would be a ciphertext under
// TFHE flows through an Evaluator: linear operations are exact but may never
// leave the 8-bit range of their value kind, and every non-linear step is a
// counted table lookup (the PBS proxy).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "silenzio/errors.hpp"
#include "silenzio/matrix.hpp"

namespace silenzio {

template <int Lo, int Hi>
struct ValueRange {
  static constexpr int min = Lo;
  static constexpr int max = Hi;
  static constexpr bool contains(std::int64_t v) noexcept { return v >= Lo && v <= Hi; }
};

using Unsigned8 = ValueRange<0, 255>;
using Signed8 = ValueRange<-128, 127>;

/// An 8-bit guarded scalar. The range parameter selects unsigned [0, 255] or
/// signed [-128, 127] semantics; both are 8-bit quantities for the backend.
template <class Range>
class BasicGadgetValue {
 public:
  using range = Range;
  using storage_type = std::conditional_t<(Range::min < 0), std::int8_t, std::uint8_t>;

  constexpr BasicGadgetValue() = default;

  /// Encrypt-side constructor. Throws GuardViolation for out-of-range inputs.
  explicit BasicGadgetValue(std::int64_t v) {
    if (!Range::contains(v)) throw GuardViolation("input", v);
    value_ = static_cast<storage_type>(v);
  }

  constexpr int value() const noexcept { return value_; }

  friend constexpr bool operator==(BasicGadgetValue, BasicGadgetValue) = default;
  friend constexpr auto operator<=>(BasicGadgetValue a, BasicGadgetValue b) {
    return a.value() <=> b.value();
  }

 private:
  storage_type value_ = 0;
};

using GadgetValue = BasicGadgetValue<Unsigned8>;
using SignedGadgetValue = BasicGadgetValue<Signed8>;

struct OpCounts {
  std::uint64_t lookups = 0;
  std::uint64_t linear = 0;
  // Largest raw magnitude produced by a linear operation; 0 when none ran.
  std::int64_t peak = 0;

  OpCounts& operator+=(const OpCounts& o) noexcept {
    lookups += o.lookups;
    linear += o.linear;
    peak = std::max(peak, o.peak);
    return *this;
  }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Operation counters for one evaluation, broken down per gadget.
struct OpStats {
  std::uint64_t lookup_count = 0;
  std::uint64_t linear_op_count = 0;
  std::map<std::string, OpCounts, std::less<>> per_gadget;

  bool empty() const noexcept { return lookup_count == 0 && linear_op_count == 0; }

  OpStats& merge(const OpStats& o) {
    lookup_count += o.lookup_count;
    linear_op_count += o.linear_op_count;
    for (const auto& [name, counts] : o.per_gadget) per_gadget[name] += counts;
    return *this;
  }

  friend bool operator==(const OpStats&, const OpStats&) = default;
};

inline OpStats merge_stats(OpStats a, const OpStats& b) { return a.merge(b); }

/// Univariate table over a contiguous input interval.
template <class In = Unsigned8, class Out = Unsigned8>
class LookupTable {
 public:
  using input_type = BasicGadgetValue<In>;
  using output_type = BasicGadgetValue<Out>;

  LookupTable() = default;

  template <class F>
  LookupTable(int lo, int hi, F&& f) : lo_(lo), hi_(hi) {
    if (lo > hi || !In::contains(lo) || !In::contains(hi)) {
      throw DomainError("lookup table domain [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "] is not an 8-bit interval");
    }
    entries_.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (int x = lo; x <= hi; ++x) {
      const std::int64_t y = f(x);
      if (!Out::contains(y)) {
        throw DomainError("lookup table output " + std::to_string(y) + " at input " +
                          std::to_string(x) + " does not fit 8 bits");
      }
      entries_.emplace_back(y);
    }
  }

  /// Table over the full unsigned b-bit domain [0, 2^b - 1].
  template <class F>
  static LookupTable over_bits(unsigned bits, F&& f) {
    static_assert(In::min == 0, "bit-width domains are unsigned");
    if (bits == 0 || bits > 8) throw DomainError("lookup input bitwidth must be in [1, 8]");
    return LookupTable(0, (1 << bits) - 1, std::forward<F>(f));
  }

  int input_min() const noexcept { return lo_; }
  int input_max() const noexcept { return hi_; }
  bool contains(int v) const noexcept { return v >= lo_ && v <= hi_; }

  /// Bits needed to address the domain.
  unsigned input_bitwidth() const noexcept {
    unsigned bits = 1;
    while ((1 << bits) < hi_ - lo_ + 1) ++bits;
    return bits;
  }

  output_type at(input_type a) const {
    if (!contains(a.value())) {
      throw DomainError("lookup input " + std::to_string(a.value()) + " outside [" +
                        std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
    }
    return entries_[static_cast<std::size_t>(a.value() - lo_)];
  }

 private:
  int lo_ = 0;
  int hi_ = -1;
  std::vector<output_type> entries_;
};

/// Table of a function of two encrypted inputs.
template <class U = Unsigned8, class V = Unsigned8, class Out = Unsigned8>
class BivariateLookupTable {
 public:
  using first_type = BasicGadgetValue<U>;
  using second_type = BasicGadgetValue<V>;
  using output_type = BasicGadgetValue<Out>;

  BivariateLookupTable() = default;

  template <class F>
  BivariateLookupTable(int u_lo, int u_hi, int v_lo, int v_hi, F&& f)
      : u_lo_(u_lo), u_hi_(u_hi), v_lo_(v_lo), v_hi_(v_hi) {
    if (u_lo > u_hi || v_lo > v_hi || !U::contains(u_lo) || !U::contains(u_hi) ||
        !V::contains(v_lo) || !V::contains(v_hi)) {
      throw DomainError("bivariate table domain is not a pair of 8-bit intervals");
    }
    const auto width = static_cast<std::size_t>(v_hi - v_lo + 1);
    entries_.reserve(static_cast<std::size_t>(u_hi - u_lo + 1) * width);
    for (int u = u_lo; u <= u_hi; ++u) {
      for (int v = v_lo; v <= v_hi; ++v) {
        const std::int64_t y = f(u, v);
        if (!Out::contains(y)) {
          throw DomainError("bivariate table output " + std::to_string(y) + " at (" +
                            std::to_string(u) + ", " + std::to_string(v) +
                            ") does not fit 8 bits");
        }
        entries_.emplace_back(y);
      }
    }
  }

  bool contains(int u, int v) const noexcept {
    return u >= u_lo_ && u <= u_hi_ && v >= v_lo_ && v <= v_hi_;
  }

  output_type at(first_type u, second_type v) const {
    if (!contains(u.value(), v.value())) {
      throw DomainError("bivariate lookup input (" + std::to_string(u.value()) + ", " +
                        std::to_string(v.value()) + ") outside table domain");
    }
    const auto width = static_cast<std::size_t>(v_hi_ - v_lo_ + 1);
    return entries_[static_cast<std::size_t>(u.value() - u_lo_) * width +
                    static_cast<std::size_t>(v.value() - v_lo_)];
  }

 private:
  int u_lo_ = 0, u_hi_ = -1, v_lo_ = 0, v_hi_ = -1;
  std::vector<output_type> entries_;
};

/// Executes guarded operations and counts them. Not thread-safe; use one
/// evaluator per worker and merge the stats.
class Evaluator {
 public:
  Evaluator() { enter("circuit"); }

  Evaluator(const Evaluator&) = delete;
  Evaluator& operator=(const Evaluator&) = delete;

  /// Attributes operations to `gadget` until the returned scope is destroyed.
  class [[nodiscard]] Scope {
   public:
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    ~Scope() { ev_->enter(prev_name_); }

   private:
    friend class Evaluator;
    Scope(Evaluator* ev, std::string prev_name) : ev_(ev), prev_name_(std::move(prev_name)) {}
    Evaluator* ev_;
    std::string prev_name_;
  };

  Scope scope(std::string_view gadget) {
    std::string prev = active_name_;
    enter(gadget);
    return Scope(this, std::move(prev));
  }

  const std::string& active_gadget() const noexcept { return active_name_; }

  template <class R>
  BasicGadgetValue<R> add(BasicGadgetValue<R> a, BasicGadgetValue<R> b) {
    return linear<R>(std::int64_t{a.value()} + b.value());
  }
  template <class R>
  BasicGadgetValue<R> sub(BasicGadgetValue<R> a, BasicGadgetValue<R> b) {
    return linear<R>(std::int64_t{a.value()} - b.value());
  }
  template <class R>
  BasicGadgetValue<R> mul(BasicGadgetValue<R> a, BasicGadgetValue<R> b) {
    return linear<R>(std::int64_t{a.value()} * b.value());
  }
  /// Signed-by-unsigned product, e.g. reapplying a sign to a magnitude.
  SignedGadgetValue mul(SignedGadgetValue a, GadgetValue b) {
    return linear<Signed8>(std::int64_t{a.value()} * b.value());
  }
  /// Addition of a public constant.
  template <class R>
  BasicGadgetValue<R> add_const(BasicGadgetValue<R> a, std::int64_t c) {
    return linear<R>(a.value() + c);
  }

  template <class In, class Out>
  BasicGadgetValue<Out> lookup(const LookupTable<In, Out>& t, BasicGadgetValue<In> a) {
    count_lookup();
    return t.at(a);
  }

  template <class U, class V, class Out>
  BasicGadgetValue<Out> bivariate_lookup(const BivariateLookupTable<U, V, Out>& t,
                                         BasicGadgetValue<U> a, BasicGadgetValue<V> b) {
    count_lookup();
    return t.at(a, b);
  }

  /// Bits lo..hi (inclusive) of `a`, right-aligned. One lookup.
  GadgetValue extract_bits(GadgetValue a, unsigned lo, unsigned hi) {
    if (lo > hi || hi > 7) throw DomainError("extract_bits needs 0 <= lo <= hi <= 7");
    count_lookup();
    const unsigned width = hi - lo + 1;
    return GadgetValue((a.value() >> lo) & ((1 << width) - 1));
  }

  /// Encrypted maximum; realized by the backend with a bootstrap.
  template <class R>
  BasicGadgetValue<R> max(BasicGadgetValue<R> a, BasicGadgetValue<R> b) {
    count_lookup();
    return a.value() >= b.value() ? a : b;
  }

  const OpStats& stats() const noexcept { return stats_; }

  /// Returns the accumulated stats and starts from zero again.
  OpStats release_stats() {
    OpStats out = std::move(stats_);
    stats_ = OpStats{};
    active_ = nullptr;
    return out;
  }

 private:
  void enter(std::string_view gadget) {
    active_name_ = std::string(gadget);
    active_ = nullptr;
  }

  // Entries are created on first use so idle gadgets leave no trace.
  OpCounts& active() {
    if (active_ == nullptr) active_ = &stats_.per_gadget[active_name_];
    return *active_;
  }

  void count_lookup() {
    ++stats_.lookup_count;
    ++active().lookups;
  }

  template <class R>
  BasicGadgetValue<R> linear(std::int64_t raw) {
    ++stats_.linear_op_count;
    OpCounts& counts = active();
    ++counts.linear;
    const std::int64_t mag = raw < 0 ? -raw : raw;
    if (mag > counts.peak) counts.peak = mag;
    if (!R::contains(raw)) throw GuardViolation(active_name_, raw);
    return BasicGadgetValue<R>(raw);
  }

  OpStats stats_;
  std::string active_name_;
  OpCounts* active_ = nullptr;
};

/// Lifts plaintext integers into guarded values (the client-side "encrypt").
template <class R = Signed8>
Matrix<BasicGadgetValue<R>> to_gadget(const Matrix<std::int64_t>& m) {
  return m.map([](std::int64_t v) { return BasicGadgetValue<R>(v); });
}

template <class R>
Matrix<std::int64_t> to_plain(const Matrix<BasicGadgetValue<R>>& m) {
  return m.map([](BasicGadgetValue<R> v) { return std::int64_t{v.value()}; });
}

}  // namespace silenzio
