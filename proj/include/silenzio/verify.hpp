#pragma once

// Oracle and invariant suites behind `silenzio verify`. Each check is counted
// as passed, oracle mismatch, guard violation or anchor mismatch.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "silenzio/finite_ring.hpp"
#include "silenzio/linalg_rns.hpp"
#include "silenzio/nn.hpp"
#include "silenzio/random.hpp"
#include "silenzio/scaling.hpp"

namespace silenzio {

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t oracle_mismatches = 0;
  std::size_t guard_violations = 0;
  std::size_t anchor_mismatches = 0;
  std::vector<std::string> lines;  // one per sub-check

  bool passed() const noexcept { return !oracle_mismatches && !guard_violations && !anchor_mismatches; }

  void merge(const SuiteResult& o) {
    checks += o.checks;
    oracle_mismatches += o.oracle_mismatches;
    guard_violations += o.guard_violations;
    anchor_mismatches += o.anchor_mismatches;
    lines.insert(lines.end(), o.lines.begin(), o.lines.end());
  }
};

namespace detail {

enum class CheckKind { oracle, anchor };

/// Runs `n` cases of `body` (returns true on a match), catching guard
/// violations, and appends a summary line.
inline void run_cases(SuiteResult& s, const std::string& what, std::size_t n, CheckKind kind,
                      const std::function<bool(std::size_t)>& body) {
  std::size_t ok = 0, guard = 0;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      ok += body(i) ? 1 : 0;
    } catch (const GuardViolation&) {
      ++guard;
    }
  }
  s.checks += n;
  s.guard_violations += guard;
  const std::size_t bad = n - ok - guard;
  (kind == CheckKind::anchor ? s.anchor_mismatches : s.oracle_mismatches) += bad;
  std::ostringstream line;
  line << what << ": " << ok << "/" << n << " match";
  if (guard) line << ", " << guard << " guard violations";
  s.lines.push_back(line.str());
}

/// One row holding every ring element of `base` in order.
inline RnsTensor ring_elements(const RnsBase& base) {
  const auto n = static_cast<std::size_t>(base.cardinality());
  RnsTensor t(base, 1, n);
  for (std::size_t i = 0; i < base.size(); ++i)
    for (std::size_t e = 0; e < n; ++e) t.digit(i, e) = GadgetValue(static_cast<int>(e % base.modulus(i)));
  return t;
}

inline Matrix<std::int64_t> oracle_matmul(const Matrix<std::int64_t>& x, const Matrix<std::int64_t>& w) {
  Matrix<std::int64_t> y(x.rows(), w.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c)
      for (std::size_t t = 0; t < x.cols(); ++t) y(r, c) += x(r, t) * w(t, c);
  return y;
}

inline SuiteResult named(const char* name) {
  SuiteResult s;
  s.name = name;
  return s;
}

}  // namespace detail

/// rns2mrns against positional reconstruction on every element of two small rings.
inline SuiteResult verify_rns2mrns_exhaustive() {
  using detail::CheckKind;
  auto s = detail::named("rns2mrns exhaustive");
  for (const auto& base : {RnsBase({5, 7, 8}, 4), RnsBase({15, 14}, 4)}) {
    Evaluator ev;
    const auto x = detail::ring_elements(base);
    std::optional<MrnsTensor> y;
    try {
      y = rns2mrns(ev, x);
    } catch (const GuardViolation&) {
    }
    detail::run_cases(s, "rns2mrns exhaustive " + base.to_string(), x.elements(), CheckKind::oracle,
                      [&](std::size_t e) {
                        if (!y) throw GuardViolation("rns2mrns", 0);
                        return mrns_ring_element(*y, e) == e;
                      });
  }
  return s;
}

inline SuiteResult verify_mrns_anchor() {
  auto s = detail::named("mixed-radix anchor");
  detail::run_cases(s, "mixed-radix anchor: 99 over {5, 7, 8}", 1, detail::CheckKind::anchor, [](std::size_t) {
    Evaluator ev;
    const RnsBase base({5, 7, 8}, 4);
    const auto r = to_rns(ev, Matrix<SignedGadgetValue>(1, 1, {SignedGadgetValue(99)}), base);
    const auto m = rns2mrns(ev, r);
    return r.digit(0, 0).value() == 4 && r.digit(1, 0).value() == 1 && r.digit(2, 0).value() == 3 &&
           m.digit(0, 0).value() == 4 && m.digit(1, 0).value() == 5 && m.digit(2, 0).value() == 2 &&
           rns_reconstruct(r)(0, 0) == 99;
  });
  return s;
}

/// Random round trips and MRNS conversions on every catalog base.
inline SuiteResult verify_round_trips(std::size_t round_trips = 100000) {
  using detail::CheckKind;
  auto s = detail::named("round trips");
  Rng rng(2024);
  for (unsigned w : {4u, 5u}) {
    for (const auto& base : rns_catalog(w)) {
      const auto lo = ring_min(base.cardinality()), hi = ring_max(base.cardinality());
      Matrix<std::int64_t> x(1, round_trips);
      for (auto& v : x) v = rng.uniform_int(lo, hi);
      const auto back = rns_reconstruct(to_rns(x, base));
      detail::run_cases(s, "round trip " + base.to_string(), round_trips, CheckKind::oracle,
                        [&](std::size_t e) { return back[e] == x[e]; });
      // Random MRNS conversions on the same values.
      Evaluator ev;
      const auto r = to_rns(x, base);
      const auto m = rns2mrns(ev, r);
      detail::run_cases(s, "rns2mrns random " + base.to_string(), round_trips, CheckKind::oracle,
                        [&](std::size_t e) { return mrns_ring_element(m, e) == crt_ring_element(r, e); });
    }
  }
  return s;
}

/// sign_rns and abs_rns on every ring element of three bases.
inline SuiteResult verify_sign_exhaustive() {
  using detail::CheckKind;
  auto s = detail::named("sign exhaustive");
  for (const auto& base : {RnsBase({15, 14}, 4), RnsBase({13, 15, 14}, 4), RnsBase({11, 13, 15, 14}, 4)}) {
    Evaluator ev;
    const auto x = detail::ring_elements(base);
    const auto sg = sign_rns(ev, x, SignOutputs{-1, 0, 1});
    detail::run_cases(s, "sign exhaustive " + base.to_string(), x.elements(), CheckKind::oracle,
                      [&](std::size_t e) {
                        const auto v = decode_signed(e, base.cardinality());
                        return sg[e].value() == (v > 0) - (v < 0);
                      });
    const auto ab = abs_rns(ev, x);
    const auto mag = rns_reconstruct(ab.magnitude);
    detail::run_cases(s, "abs exhaustive " + base.to_string(), x.elements() - 1, CheckKind::oracle,
                      [&](std::size_t e) {
                        const auto idx = e + (e >= base.cardinality() / 2 ? 1 : 0);  // skip -M/2
                        const auto v = decode_signed(idx, base.cardinality());
                        return mag[idx] == (v < 0 ? -v : v) && ab.sign[idx].value() == (v < 0 ? -1 : 1);
                      });
  }
  return s;
}

inline SuiteResult verify_conversions(std::size_t round_trips = 100000) {
  SuiteResult s = verify_rns2mrns_exhaustive();
  s.name = "conversions";
  s.merge(verify_mrns_anchor());
  s.merge(verify_round_trips(round_trips));
  s.merge(verify_sign_exhaustive());
  return s;
}

inline SuiteResult verify_matmul(std::size_t trials = 1000) {
  SuiteResult s;
  s.name = "matmul";
  Rng rng(77);
  for (unsigned w : {4u, 5u}) {
    for (const auto& base : rns_catalog(w)) {
      detail::run_cases(s, std::string(w == 4 ? "matmul_rns " : "matmul_highres_rns ") + base.to_string(), trials,
                        detail::CheckKind::oracle, [&](std::size_t) {
                          const auto a = static_cast<std::size_t>(rng.uniform_int(1, 8));
                          const auto b = static_cast<std::size_t>(rng.uniform_int(1, 32));
                          const auto c = static_cast<std::size_t>(rng.uniform_int(1, 8));
                          // Widest signed inputs (<= 8 bits) with b * 2^(2p-2) <= M/2 - 1.
                          int p = 8;
                          while (p > 1 && static_cast<double>(b) * std::ldexp(1.0, 2 * p - 2) >
                                              static_cast<double>(ring_max(base.cardinality())))
                            --p;
                          const std::int64_t lo = -(std::int64_t{1} << (p - 1)), hi = -lo - 1;
                          Matrix<std::int64_t> x(a, b), wm(b, c);
                          for (auto& v : x) v = rng.uniform_int(lo, hi);
                          for (auto& v : wm) v = rng.uniform_int(lo, hi);
                          Evaluator ev;
                          const auto y = matmul(ev, to_gadget(x), to_gadget(wm), base);
                          return rns_reconstruct(y) == detail::oracle_matmul(x, wm);
                        });
    }
  }
  return s;
}

namespace detail {

inline RnsTensor encode_row(std::vector<std::int64_t> v, const RnsBase& b) {
  const std::size_t n = v.size();
  return to_rns(Matrix<std::int64_t>(1, n, std::move(v)), b);
}

}  // namespace detail

inline SuiteResult verify_shift2msbs_anchor() {
  auto s = detail::named("Shift2MSBs+ anchor");
  detail::run_cases(s, "Shift2MSBs+ worked example (25, 14, 0), shift 5", 1, detail::CheckKind::anchor,
                    [](std::size_t) {
                      Evaluator ev;
                      const auto r = shift2msbs_pos(ev, detail::encode_row({611, 353, 19}, RnsBase({13, 15, 14}, 4)), 4, 5);
                      return r.values[0].value() == 25 && r.values[1].value() == 14 && r.values[2].value() == 0 &&
                             r.shift == 5;
                    });
  return s;
}

inline SuiteResult verify_scaling(std::size_t trials = 2000) {
  using detail::CheckKind;
  SuiteResult s = verify_shift2msbs_anchor();
  s.name = "scaling";
  const RnsBase example({13, 15, 14}, 4);
  const auto& encode = detail::encode_row;
  detail::run_cases(s, "signed example (-25, -14, 0)", 1, CheckKind::oracle, [&](std::size_t) {
    Evaluator ev;
    const auto r = shift2msbs_signed(ev, encode({-611, -353, -19}, example), 4, 6);
    return to_plain(r.values) == Matrix<std::int64_t>(1, 3, {-25, -14, 0}) && r.shift == 5;
  });
  // Values held by the lowest digit alone are never shifted.
  detail::run_cases(s, "no-shift passthrough 0..12", 13, CheckKind::oracle, [&](std::size_t v) {
    Evaluator ev;
    const auto r = shift2msbs_pos(ev, encode({static_cast<std::int64_t>(v)}, example), 4, 5);
    return r.values[0].value() == static_cast<int>(v);
  });
  detail::run_cases(s, "exact oracle (611, 353, 19) -> (19, 11, 0)", 1, CheckKind::oracle, [](std::size_t) {
    const auto r = exact_block_scale(Matrix<std::int64_t>(1, 3, {611, 353, 19}), 5);
    return r.values == Matrix<std::int64_t>(1, 3, {19, 11, 0}) && r.shift == 5;
  });

  // Property: outputs stay within the signed Gamma-bit range and keep the
  // input's sign, on every catalog base.
  Rng rng(31);
  for (unsigned w : {4u, 5u}) {
    for (const auto& base : rns_catalog(w)) {
      const auto lo = ring_min(base.cardinality()) + 1, hi = ring_max(base.cardinality());
      detail::run_cases(s, "range and sign " + base.to_string(), trials / 10, CheckKind::oracle, [&](std::size_t) {
        Matrix<std::int64_t> x(2, 8);
        const auto mag = rng.uniform_int(1, hi);
        for (auto& v : x) v = std::clamp(rng.uniform_int(-mag, mag), lo, hi);
        Evaluator ev;
        const auto r = shift2msbs_signed(ev, to_rns(x, base), w, 7);
        for (std::size_t e = 0; e < x.size(); ++e) {
          const int v = r.values[e].value();
          if (v <= -64 || v >= 64) return false;
          if ((x[e] < 0 && v > 0) || (x[e] > 0 && v < 0)) return false;
        }
        return true;
      });
    }
  }
  return s;
}

inline SuiteResult verify_loss() {
  using detail::CheckKind;
  SuiteResult s;
  s.name = "loss";
  for (unsigned kappa : {2u, 4u, 6u}) {
    detail::run_cases(s, "exp endpoints kappa=" + std::to_string(kappa), 2, CheckKind::anchor, [&](std::size_t i) {
      const auto& t = detail::loss_tables(7, kappa, 2);
      const int v = i == 0 ? 0 : 63;
      const std::int64_t want = i == 0 ? static_cast<std::int64_t>(std::nearbyint(std::exp(-63.0) * (1 << kappa)))
                                       : (std::int64_t{1} << kappa);
      return t.exp.at(SignedGadgetValue(v)).value() == want;
    });
  }
  // Uniform logits, every level and class count: label position in {-1, 0},
  // others in {0, 1}.
  std::vector<std::pair<int, std::size_t>> grid;
  for (std::size_t o = 2; o <= 15; ++o)
    for (int level = 0; level <= 63; ++level) grid.emplace_back(level, o);
  detail::run_cases(s, "uniform logits, o = 2..15, levels 0..63", grid.size(), CheckKind::oracle, [&](std::size_t i) {
    const auto [level, o] = grid[i];
    Matrix<SignedGadgetValue> logits(1, o, SignedGadgetValue(level));
    Matrix<GadgetValue> y(1, o, GadgetValue(0));
    const std::size_t label = i % o;
    y(0, label) = GadgetValue(1);
    Evaluator ev;
    const auto e = int_ce_loss_deriv(ev, logits, y, 7, 4);
    for (std::size_t c = 0; c < o; ++c) {
      const int v = e(0, c).value();
      if (c == label ? (v != -1 && v != 0) : (v != 0 && v != 1)) return false;
    }
    return true;
  });
  // Random logits: ternary output, label never +1, not all +1.
  Rng rng(5);
  detail::run_cases(s, "random logits sign properties", 20000, CheckKind::oracle, [&](std::size_t) {
    const auto o = static_cast<std::size_t>(rng.uniform_int(2, 15));
    Matrix<SignedGadgetValue> logits(4, o);
    for (auto& v : logits) v = SignedGadgetValue(rng.uniform_int(-63, 63));
    Matrix<GadgetValue> y(4, o, GadgetValue(0));
    std::vector<std::size_t> labels(4);
    for (std::size_t r = 0; r < 4; ++r) {
      labels[r] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(o) - 1));
      y(r, labels[r]) = GadgetValue(1);
    }
    Evaluator ev;
    const auto e = int_ce_loss_deriv(ev, logits, y, 7, 4);
    for (std::size_t r = 0; r < 4; ++r) {
      bool all_plus = true;
      for (std::size_t c = 0; c < o; ++c) {
        const int v = e(r, c).value();
        if (v < -1 || v > 1) return false;
        all_plus = all_plus && v == 1;
      }
      if (e(r, labels[r]).value() == 1 || all_plus) return false;
    }
    return true;
  });
  return s;
}

/// Suites for a scope name: all, conversions, matmul, scaling, loss.
inline std::vector<SuiteResult> run_verification(const std::string& scope) {
  std::vector<SuiteResult> out;
  const bool all = scope == "all";
  if (!all && scope != "conversions" && scope != "matmul" && scope != "scaling" && scope != "loss") {
    throw ConfigError("unknown verify scope '" + scope + "'");
  }
  if (all || scope == "conversions") out.push_back(verify_conversions());
  if (all || scope == "matmul") out.push_back(verify_matmul());
  if (all || scope == "scaling") out.push_back(verify_scaling());
  if (all || scope == "loss") out.push_back(verify_loss());
  return out;
}

}  // namespace silenzio
