#pragma once

// Integer MLP training on the gadget VM. Every tensor entering a matmul is an
// 8-bit signed gadget value; every matmul runs in RNS over a base picked from
// the catalog by the worst-case accumulator magnitude of that layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "silenzio/dataset.hpp"
#include "silenzio/errors.hpp"
#include "silenzio/finite_ring.hpp"
#include "silenzio/gadget_vm.hpp"
#include "silenzio/linalg_rns.hpp"
#include "silenzio/matrix.hpp"
#include "silenzio/random.hpp"
#include "silenzio/scaling.hpp"

namespace silenzio {

/// Range weights are clipped to by the update.
enum class WeightClip {
  int8,   // [-128, 127]
  alpha,  // signed alpha-bit range [-2^(alpha-1), 2^(alpha-1) - 1]
};

inline const char* to_string(WeightClip c) { return c == WeightClip::int8 ? "int8" : "alpha"; }

inline WeightClip parse_weight_clip(const std::string& s) {
  if (s == "int8") return WeightClip::int8;
  if (s == "alpha") return WeightClip::alpha;
  throw ConfigError("weight_clip must be 'int8' or 'alpha', got '" + s + "'");
}

struct Hyperparams {
  unsigned alpha = 8;       // weight bitwidth
  unsigned beta = 4;        // input bitwidth
  unsigned gamma = 7;       // signed activation bitwidth
  unsigned relu_cap = 14;   // x
  unsigned kappa = 4;       // loss approximation level
  unsigned moduli_width = 4;
  WeightClip weight_clip = WeightClip::alpha;

  std::int64_t weight_min() const {
    return weight_clip == WeightClip::int8 ? -128 : -(std::int64_t{1} << (alpha - 1));
  }
  std::int64_t weight_max() const {
    return weight_clip == WeightClip::int8 ? 127 : (std::int64_t{1} << (alpha - 1)) - 1;
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Throws ConfigError unless the hyperparameters and layer dims satisfy the
/// circuit's preconditions.
inline void validate(const Hyperparams& hp, const std::vector<std::size_t>& dims) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (hp.alpha < 1 || hp.alpha > 8) fail("alpha must be in [1, 8]");
  if (hp.beta < 1 || hp.beta > 8) fail("beta must be in [1, 8]");
  if (hp.gamma < 2 || hp.gamma > 8) fail("gamma must be in [2, 8]");
  if (hp.relu_cap >= (1u << (hp.gamma - 1))) {
    fail("relu_cap must be below 2^(gamma-1) = " + std::to_string(1u << (hp.gamma - 1)));
  }
  if (hp.kappa > 7) fail("kappa must be in [0, 7]");
  if (hp.moduli_width != 4 && hp.moduli_width != 5) fail("moduli_width must be 4 or 5");
  if (dims.size() < 2) fail("architecture needs at least an input and an output layer");
  for (auto d : dims) {
    if (d == 0) fail("layer widths must be positive");
  }
  const std::size_t o = dims.back();
  if (o < 2) fail("need at least 2 output classes");
  if (o > 16) fail("at most 16 output classes are supported, got " + std::to_string(o));
  if (o * (std::size_t{1} << hp.kappa) > 255) {
    fail(std::to_string(o) + " output classes exceed 255 / 2^kappa = " +
         std::to_string(255 >> hp.kappa));
  }
}

class MlpModel {
 public:
  MlpModel() = default;

  /// Zero weights; W_l has shape dims[l] x dims[l-1].
  MlpModel(std::vector<std::size_t> dims, Hyperparams hp) : dims_(std::move(dims)), hp_(hp) {
    validate(hp_, dims_);
    for (std::size_t l = 1; l < dims_.size(); ++l) {
      weights_.emplace_back(dims_[l], dims_[l - 1], SignedGadgetValue(0));
    }
  }

  /// I.i.d. uniform integers in [-2^(alpha-1)+1, 2^(alpha-1)-1].
  static MlpModel initialize(std::vector<std::size_t> dims, Hyperparams hp, std::uint64_t seed) {
    MlpModel m(std::move(dims), hp);
    Rng rng(seed);
    const std::int64_t bound = (std::int64_t{1} << (hp.alpha - 1)) - 1;
    for (auto& w : m.weights_)
      for (auto& v : w) v = SignedGadgetValue(rng.uniform_int(-bound, bound));
    return m;
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const Hyperparams& hyper() const noexcept { return hp_; }
  std::size_t layers() const noexcept { return weights_.size(); }
  std::size_t inputs() const { return dims_.front(); }
  std::size_t classes() const { return dims_.back(); }

  /// 1-based layer index.
  Matrix<SignedGadgetValue>& weights(std::size_t l) { return weights_.at(l - 1); }
  const Matrix<SignedGadgetValue>& weights(std::size_t l) const { return weights_.at(l - 1); }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  std::vector<std::size_t> dims_;
  Hyperparams hp_;
  std::vector<Matrix<SignedGadgetValue>> weights_;
};

/// Bases of one layer for a given batch size.
struct LayerBases {
  RnsBase forward;
  RnsBase gradient;
  std::vector<RnsBase> error;  // empty for layer 1
};

/// Required ring bitwidths, layer l (1-based), batch size a.
inline double forward_bits(const MlpModel& m, std::size_t l) {
  const auto& hp = m.hyper();
  const double b = static_cast<double>(m.dims()[l - 1]);
  const double in = l == 1 ? std::ldexp(1.0, static_cast<int>(hp.beta)) : hp.relu_cap;
  return std::log2(b * in * std::ldexp(1.0, static_cast<int>(hp.alpha)) + 1);
}
inline double gradient_bits(const MlpModel& m, std::size_t l, std::size_t a) {
  const auto& hp = m.hyper();
  const double in = l == 1 ? std::ldexp(1.0, static_cast<int>(hp.beta)) : 2.0 * hp.relu_cap;
  return std::log2(static_cast<double>(a) * in + 1);
}
inline double error_bits(const MlpModel& m, std::size_t l) {
  return std::log2(static_cast<double>(m.dims()[l]) *
                       std::ldexp(1.0, static_cast<int>(m.hyper().alpha)) +
                   1);
}

/// Selects every base a training step needs; CapacityError if any layer does
/// not fit the catalog.
inline std::vector<LayerBases> plan_bases(const MlpModel& m, std::size_t batch) {
  const unsigned w = m.hyper().moduli_width;
  std::vector<LayerBases> out;
  for (std::size_t l = 1; l <= m.layers(); ++l) {
    LayerBases lb{select_rns_base(forward_bits(m, l), w), select_rns_base(gradient_bits(m, l, batch), w), {}};
    if (l > 1) lb.error.push_back(select_rns_base(error_bits(m, l), w));
    out.push_back(std::move(lb));
  }
  return out;
}

enum class ScalingMode { approximate, exact };

inline const char* to_string(ScalingMode s) {
  return s == ScalingMode::approximate ? "approximate" : "exact";
}

struct CircuitStats {
  std::string name;
  OpStats stats;
};

/// Worst accumulator magnitude of one matmul against the base's capacity.
struct MatmulRecord {
  std::string circuit;
  std::int64_t max_abs = 0;
  std::int64_t capacity = 0;  // largest representable magnitude
  bool sound() const noexcept { return max_abs <= capacity; }
};

struct BatchTrace {
  /// A_0 .. A_L; hidden entries after ReLU_x, A_L the logits.
  std::vector<Matrix<SignedGadgetValue>> activations;
  /// Error sign tensor entering layer l at index l - 1.
  std::vector<Matrix<SignedGadgetValue>> errors;
  /// Gradient sign of W_l at index l - 1.
  std::vector<Matrix<SignedGadgetValue>> gradient_signs;
  std::vector<CircuitStats> circuits;
  std::vector<ScalingErrorRecord> scaling_errors;
  std::vector<MatmulRecord> matmuls;

  const Matrix<SignedGadgetValue>& logits() const { return activations.back(); }
};

struct PassOptions {
  ScalingMode scaling = ScalingMode::approximate;
  /// Compare every approximate scaling step with the exact oracle.
  bool record_scaling_error = true;
  /// Recompute every matmul natively and record its magnitude.
  bool record_matmuls = true;
  std::size_t batch_index = 0;
};

namespace detail {

inline TableCache& nn_tables() {
  static TableCache cache;
  return cache;
}

inline const LookupTable<Signed8, Signed8>& relu_table(unsigned cap) {
  return nn_tables().get<LookupTable<Signed8, Signed8>>("relu/" + std::to_string(cap), [cap] {
    return LookupTable<Signed8, Signed8>(-128, 127, [cap](int v) {
      return std::min(std::max(v, 0), static_cast<int>(cap));
    });
  });
}

inline std::string circuit_name(const char* kind, std::size_t l) {
  return std::string(kind) + "[" + std::to_string(l) + "]";
}

inline Matrix<std::int64_t> native_matmul(const Matrix<std::int64_t>& x,
                                          const Matrix<std::int64_t>& w) {
  Matrix<std::int64_t> y(x.rows(), w.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 0; t < x.cols(); ++t) {
      const std::int64_t xv = x(r, t);
      if (xv == 0) continue;
      for (std::size_t c = 0; c < w.cols(); ++c) y(r, c) += xv * w(t, c);
    }
  return y;
}

inline RnsTensor traced_matmul(Evaluator& ev, const Matrix<SignedGadgetValue>& x,
                               const Matrix<SignedGadgetValue>& w, const RnsBase& base,
                               const std::string& circuit, BatchTrace& trace, bool record) {
  RnsTensor y = matmul(ev, x, w, base);
  if (record) {
    const auto exact = native_matmul(to_plain(x), to_plain(w));
    std::int64_t mx = 0;
    for (auto v : exact) mx = std::max<std::int64_t>(mx, std::llabs(v));
    trace.matmuls.push_back({circuit, mx, ring_max(base.cardinality())});
  }
  return y;
}

}  // namespace detail

/// min(max(a, 0), x), one lookup per element.
inline Matrix<SignedGadgetValue> relu_cap(Evaluator& ev, const Matrix<SignedGadgetValue>& a,
                                          unsigned cap) {
  if (cap > 127) throw DomainError("ReLU cap must fit signed 8 bits");
  auto scope = ev.scope("relu");
  const auto& t = detail::relu_table(cap);
  return a.map([&](SignedGadgetValue v) { return ev.lookup(t, v); });
}

/// Forward pass over one batch (rows of `a0` are samples).
inline BatchTrace forward_pass(const MlpModel& model, const Matrix<SignedGadgetValue>& a0,
                               const PassOptions& opt = {}) {
  const auto& hp = model.hyper();
  if (a0.cols() != model.inputs()) {
    throw ShapeError("batch has " + std::to_string(a0.cols()) + " features, model expects " +
                     std::to_string(model.inputs()));
  }
  const std::int64_t in_lo = -(std::int64_t{1} << (hp.beta - 1)), in_hi = -in_lo - 1;
  for (auto v : a0) {
    if (v.value() < in_lo || v.value() > in_hi) {
      throw RangeError("input " + std::to_string(v.value()) + " outside the signed " +
                       std::to_string(hp.beta) + "-bit range");
    }
  }
  BatchTrace trace;
  trace.activations.push_back(a0);
  for (std::size_t l = 1; l <= model.layers(); ++l) {
    const auto& base = select_rns_base(forward_bits(model, l), hp.moduli_width);
    const std::string name = detail::circuit_name("forward", l);
    Matrix<SignedGadgetValue> scaled;
    {
      Evaluator ev;
      const RnsTensor y = detail::traced_matmul(ev, trace.activations.back(),
                                                model.weights(l).transposed(), base, name, trace,
                                                opt.record_matmuls);
      if (opt.scaling == ScalingMode::approximate) {
        scaled = shift2msbs_signed(ev, y, hp.moduli_width, hp.gamma).values;
        if (opt.record_scaling_error) {
          trace.scaling_errors.push_back(compare_scaling(
              to_plain(scaled), exact_block_scale(y, hp.gamma - 1).values, name, opt.batch_index));
        }
      } else {
        // The oracle needs the integers, which the circuit does not have;
        // only the matmul is counted.
        scaled = to_gadget(exact_block_scale(y, hp.gamma - 1).values);
      }
      trace.circuits.push_back({name, ev.release_stats()});
    }
    if (l < model.layers()) {
      Evaluator ev;
      scaled = relu_cap(ev, scaled, hp.relu_cap);
      trace.circuits.push_back({detail::circuit_name("activation", l), ev.release_stats()});
    }
    trace.activations.push_back(std::move(scaled));
  }
  return trace;
}

namespace detail {

/// round-half-to-even of num / den for non-negative integers.
inline std::int64_t div_round_even(std::int64_t num, std::int64_t den) {
  const std::int64_t q = num / den, r = num % den;
  if (2 * r > den || (2 * r == den && (q & 1))) return q + 1;
  return q;
}

/// round(e^(v - (2^gamma - 1)) * 2^kappa), half to even.
inline std::int64_t exp_entry(int v, unsigned gamma, unsigned kappa) {
  const double top = std::ldexp(1.0, static_cast<int>(gamma)) - 1;
  return static_cast<std::int64_t>(
      std::nearbyint(std::exp(static_cast<double>(v) - top) * std::ldexp(1.0, static_cast<int>(kappa))));
}

struct LossTables {
  LookupTable<Signed8, Signed8> relu;
  LookupTable<Signed8, Unsigned8> exp;
  BivariateLookupTable<> normalize;   // (E, S)
  BivariateLookupTable<Unsigned8, Unsigned8, Signed8> sign_diff;  // (E_hat, T)
};

inline const LossTables& loss_tables(unsigned gamma_signed, unsigned kappa, std::size_t classes) {
  const unsigned gamma = gamma_signed - 1;
  const std::string key = "loss/" + std::to_string(gamma_signed) + "/" + std::to_string(kappa) +
                          "/" + std::to_string(classes);
  return nn_tables().get<LossTables>(key, [=] {
    const int top = (1 << gamma) - 1;
    const int e_max = 1 << kappa;
    const int s_max = static_cast<int>(classes) * e_max;
    LossTables t;
    t.relu = LookupTable<Signed8, Signed8>(-128, 127, [](int v) { return std::max(v, 0); });
    t.exp = LookupTable<Signed8, Unsigned8>(0, top, [=](int v) { return exp_entry(v, gamma, kappa); });
    // Pairs with S < E cannot occur (S sums E over the row); they saturate.
    t.normalize = BivariateLookupTable<>(0, e_max, 0, s_max, [=](int e, int s) {
      return std::min<std::int64_t>(div_round_even(std::int64_t{e} * e_max + 1, s + 1), 255);
    });
    t.sign_diff = BivariateLookupTable<Unsigned8, Unsigned8, Signed8>(
        0, 255, 0, 255, [](int e, int tv) { return (e > tv) - (e < tv); });
    return t;
  });
}

}  // namespace detail

/// Sign of the approximate cross-entropy derivative softmax(logits) - Y.
/// Logits are Gamma-bit signed; labels one-hot.
inline Matrix<SignedGadgetValue> int_ce_loss_deriv(Evaluator& ev,
                                                   const Matrix<SignedGadgetValue>& logits,
                                                   const Matrix<GadgetValue>& labels,
                                                   unsigned gamma_signed, unsigned kappa) {
  const std::size_t a = logits.rows(), o = logits.cols();
  if (labels.rows() != a || labels.cols() != o) throw ShapeError("labels and logits differ in shape");
  for (std::size_t r = 0; r < a; ++r) {
    int ones = 0;
    for (auto v : labels.row(r)) {
      if (v.value() > 1) throw ShapeError("label matrix is not one-hot");
      ones += v.value();
    }
    if (ones != 1) throw ShapeError("label row " + std::to_string(r) + " is not one-hot");
  }
  if (o > 16 || o * (std::size_t{1} << kappa) > 255) {
    throw DomainError("too many classes for kappa = " + std::to_string(kappa));
  }
  if (gamma_signed < 2 || gamma_signed > 8) throw DomainError("gamma must be in [2, 8]");
  auto scope = ev.scope("loss");
  const auto& t = detail::loss_tables(gamma_signed, kappa, o);

  Matrix<SignedGadgetValue> out(a, o);
  std::vector<GadgetValue> e(o), e_hat(o);
  for (std::size_t r = 0; r < a; ++r) {
    GadgetValue s;
    for (std::size_t c = 0; c < o; ++c) {
      e[c] = ev.lookup(t.exp, ev.lookup(t.relu, logits(r, c)));
      s = c == 0 ? e[c] : ev.add(s, e[c]);
    }
    GadgetValue total;
    for (std::size_t c = 0; c < o; ++c) {
      e_hat[c] = ev.bivariate_lookup(t.normalize, e[c], s);
      total = c == 0 ? e_hat[c] : ev.add(total, e_hat[c]);
    }
    // sign(E_hat - Y * rowsum(E_hat)) as one bivariate lookup, so the
    // difference never materializes as an unsigned value.
    for (std::size_t c = 0; c < o; ++c) {
      const GadgetValue target = ev.mul(labels(r, c), total);
      out(r, c) = ev.bivariate_lookup(t.sign_diff, e_hat[c], target);
    }
  }
  return out;
}

namespace detail {

inline const BivariateLookupTable<Signed8, Signed8, Signed8>& mask_table(unsigned cap) {
  return nn_tables().get<BivariateLookupTable<Signed8, Signed8, Signed8>>(
      "mask/" + std::to_string(cap), [cap] {
        return BivariateLookupTable<Signed8, Signed8, Signed8>(
            -1, 1, 0, static_cast<int>(cap), [](int e, int act) { return act > 0 ? e : 0; });
      });
}

inline const BivariateLookupTable<Signed8, Signed8, Signed8>& update_table(std::int64_t lo,
                                                                           std::int64_t hi) {
  return nn_tables().get<BivariateLookupTable<Signed8, Signed8, Signed8>>(
      "update/" + std::to_string(lo) + "/" + std::to_string(hi), [=] {
        return BivariateLookupTable<Signed8, Signed8, Signed8>(-128, 127, -1, 1, [=](int w, int g) {
          return std::clamp<std::int64_t>(std::int64_t{w} - g, lo, hi);
        });
      });
}

}  // namespace detail

/// Backward pass and sign-SGD update for the batch in `trace`. `error` is the
/// loss derivative sign tensor (a x o). Uses the weights of the forward pass
/// for error propagation.
inline void backward_and_update(MlpModel& model, BatchTrace& trace,
                                const Matrix<SignedGadgetValue>& error,
                                const PassOptions& opt = {}) {
  const auto& hp = model.hyper();
  const std::size_t L = model.layers();
  if (trace.activations.size() != L + 1) throw ShapeError("trace does not match the model");
  const std::size_t a = trace.activations.front().rows();
  if (error.rows() != a || error.cols() != model.classes()) throw ShapeError("error tensor shape");

  trace.errors.assign(L, {});
  trace.gradient_signs.assign(L, {});
  trace.errors[L - 1] = error;
  const SignOutputs ternary{-1, 0, 1};
  std::vector<Matrix<SignedGadgetValue>> new_weights(L);

  for (std::size_t l = L; l >= 1; --l) {
    const auto& e = trace.errors[l - 1];
    const auto& prev = trace.activations[l - 1];
    {
      const std::string name = detail::circuit_name("gradient", l);
      Evaluator ev;
      const auto& base = select_rns_base(gradient_bits(model, l, a), hp.moduli_width);
      const RnsTensor g =
          detail::traced_matmul(ev, e.transposed(), prev, base, name, trace, opt.record_matmuls);
      trace.gradient_signs[l - 1] = sign_rns(ev, g, ternary);
      trace.circuits.push_back({name, ev.release_stats()});
    }
    if (l > 1) {
      const std::string name = detail::circuit_name("error", l);
      Evaluator ev;
      const auto& base = select_rns_base(error_bits(model, l), hp.moduli_width);
      const RnsTensor p =
          detail::traced_matmul(ev, e, model.weights(l), base, name, trace, opt.record_matmuls);
      const auto s = sign_rns(ev, p, ternary);
      auto scope = ev.scope("relu_mask");
      const auto& mask = detail::mask_table(hp.relu_cap);
      Matrix<SignedGadgetValue> masked(s.rows(), s.cols());
      for (std::size_t i = 0; i < s.size(); ++i) masked[i] = ev.bivariate_lookup(mask, s[i], prev[i]);
      trace.errors[l - 2] = std::move(masked);
      trace.circuits.push_back({name, ev.release_stats()});
    }
    {
      Evaluator ev;
      auto scope = ev.scope("update");
      const auto& upd = detail::update_table(hp.weight_min(), hp.weight_max());
      const auto& w = model.weights(l);
      const auto& g = trace.gradient_signs[l - 1];
      Matrix<SignedGadgetValue> nw(w.rows(), w.cols());
      for (std::size_t i = 0; i < w.size(); ++i) nw[i] = ev.bivariate_lookup(upd, w[i], g[i]);
      new_weights[l - 1] = std::move(nw);
      trace.circuits.push_back({detail::circuit_name("update", l), ev.release_stats()});
    }
  }
  for (std::size_t l = 1; l <= L; ++l) model.weights(l) = std::move(new_weights[l - 1]);
}

/// One full training step: forward, loss derivative, backward, update.
inline BatchTrace train_step(MlpModel& model, const Matrix<SignedGadgetValue>& x,
                             const Matrix<GadgetValue>& y, const PassOptions& opt = {}) {
  BatchTrace trace = forward_pass(model, x, opt);
  Matrix<SignedGadgetValue> err;
  {
    Evaluator ev;
    err = int_ce_loss_deriv(ev, trace.logits(), y, model.hyper().gamma, model.hyper().kappa);
    trace.circuits.push_back({"loss", ev.release_stats()});
  }
  backward_and_update(model, trace, err, opt);
  return trace;
}

/// Index of the largest entry per row; ties go to the lowest index.
template <class T>
std::vector<int> argmax_rows(const Matrix<T>& m) {
  std::vector<int> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[static_cast<std::size_t>(out[r])]) out[r] = static_cast<int>(c);
    }
  }
  return out;
}

/// Logits of every sample, computed in consecutive chunks of `batch_size`
/// (block scaling depends on the batch, so the chunking is part of the
/// result). The last chunk may be smaller.
inline Matrix<std::int64_t> predict_logits(const MlpModel& model, const Matrix<std::int64_t>& x,
                                           std::size_t batch_size,
                                           ScalingMode scaling = ScalingMode::approximate) {
  if (x.rows() == 0) throw ShapeError("cannot evaluate an empty dataset");
  if (batch_size == 0) throw ShapeError("batch size must be positive");
  Matrix<std::int64_t> out(x.rows(), model.classes());
  PassOptions opt;
  opt.scaling = scaling;
  opt.record_scaling_error = false;
  opt.record_matmuls = false;
  for (std::size_t start = 0; start < x.rows(); start += batch_size) {
    const std::size_t n = std::min(batch_size, x.rows() - start);
    Matrix<SignedGadgetValue> chunk(n, x.cols());
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) chunk(r, c) = SignedGadgetValue(x(start + r, c));
    const auto trace = forward_pass(model, chunk, opt);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < model.classes(); ++c)
        out(start + r, c) = trace.logits()(r, c).value();
  }
  return out;
}

inline std::vector<int> predict(const MlpModel& model, const Matrix<std::int64_t>& x,
                                std::size_t batch_size,
                                ScalingMode scaling = ScalingMode::approximate) {
  return argmax_rows(predict_logits(model, x, batch_size, scaling));
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (labels.empty()) throw ShapeError("cannot score an empty dataset");
  if (predicted.size() != labels.size()) throw ShapeError("prediction count differs from labels");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline double evaluate(const MlpModel& model, const EncodedSplit& data, std::size_t batch_size,
                       ScalingMode scaling = ScalingMode::approximate) {
  return accuracy(predict(model, data.features, batch_size, scaling), data.labels);
}

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  ScalingMode scaling = ScalingMode::approximate;
  /// Stop after this many batches in total (0: no limit).
  std::size_t max_batches = 0;
  bool record_scaling_error = true;
  bool record_matmuls = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;  // epoch 0 is the initial model
  double best_test_accuracy = 0;
  std::size_t best_epoch = 0;
  std::size_t batches = 0;
  /// Circuits of a single training batch, in execution order.
  std::vector<CircuitStats> batch_circuits;
  OpStats total;
  std::map<std::string, ScalingErrorStats> scaling_errors;
  std::size_t matmuls = 0;
  std::vector<MatmulRecord> unsound_matmuls;
};

inline Matrix<SignedGadgetValue> batch_features(const EncodedSplit& d,
                                                const std::vector<std::size_t>& idx) {
  Matrix<SignedGadgetValue> x(idx.size(), d.feature_count());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < d.feature_count(); ++c) x(r, c) = SignedGadgetValue(d.features(idx[r], c));
  return x;
}

inline Matrix<GadgetValue> batch_labels(const EncodedSplit& d, const std::vector<std::size_t>& idx,
                                        std::size_t classes) {
  Matrix<GadgetValue> y(idx.size(), classes);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int label = d.labels[idx[r]];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) throw ShapeError("label out of range");
    y(r, static_cast<std::size_t>(label)) = GadgetValue(1);
  }
  return y;
}

/// Trains in place. Batches are reshuffled every epoch; the trailing partial
/// batch is dropped. Accuracies are measured after every epoch.
inline TrainResult train(MlpModel& model, const EncodedSplit& train_set, const EncodedSplit& test_set,
                         const TrainOptions& opt) {
  if (train_set.feature_count() != model.inputs() || test_set.feature_count() != model.inputs()) {
    throw ShapeError("dataset feature count does not match the model");
  }
  if (train_set.classes > model.classes()) throw ShapeError("dataset has more classes than the model");
  plan_bases(model, opt.batch_size);  // capacity errors before any step

  TrainResult res;
  auto record_epoch = [&](std::size_t epoch) {
    EpochRecord rec{epoch, evaluate(model, train_set, opt.batch_size, opt.scaling),
                    evaluate(model, test_set, opt.batch_size, opt.scaling)};
    res.epochs.push_back(rec);
    if (epoch == 0 || rec.test_accuracy > res.best_test_accuracy || res.epochs.size() == 2) {
      res.best_test_accuracy = rec.test_accuracy;
      res.best_epoch = epoch;
    }
  };
  record_epoch(0);

  PassOptions pass;
  pass.scaling = opt.scaling;
  pass.record_scaling_error = opt.record_scaling_error && opt.scaling == ScalingMode::approximate;
  pass.record_matmuls = opt.record_matmuls;
  bool stop = false;
  for (std::size_t epoch = 1; epoch <= opt.epochs && !stop; ++epoch) {
    for (const auto& idx : epoch_batches(train_set.size(), opt.batch_size, opt.seed, epoch - 1)) {
      pass.batch_index = res.batches;
      BatchTrace trace = train_step(model, batch_features(train_set, idx),
                                    batch_labels(train_set, idx, model.classes()), pass);
      if (res.batches == 0) res.batch_circuits = trace.circuits;
      for (const auto& c : trace.circuits) res.total.merge(c.stats);
      for (const auto& s : trace.scaling_errors) res.scaling_errors[s.layer].add(s);
      res.matmuls += trace.matmuls.size();
      for (const auto& m : trace.matmuls)
        if (!m.sound()) res.unsound_matmuls.push_back(m);
      ++res.batches;
      if (opt.max_batches && res.batches >= opt.max_batches) {
        stop = true;
        break;
      }
    }
    record_epoch(epoch);
  }
  return res;
}

// Text model format:
//   silenzio-model 1
//   hyper alpha beta gamma relu_cap kappa moduli_width weight_clip
//   dims d0 d1 ... dL
//   layer l rows cols   followed by `rows` lines of `cols` integers
//   end

inline void save_model(std::ostream& os, const MlpModel& m) {
  const auto& hp = m.hyper();
  os << "silenzio-model 1\n";
  os << "hyper " << hp.alpha << ' ' << hp.beta << ' ' << hp.gamma << ' ' << hp.relu_cap << ' '
     << hp.kappa << ' ' << hp.moduli_width << ' ' << to_string(hp.weight_clip) << '\n';
  os << "dims";
  for (auto d : m.dims()) os << ' ' << d;
  os << '\n';
  for (std::size_t l = 1; l <= m.layers(); ++l) {
    const auto& w = m.weights(l);
    os << "layer " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) os << (c ? " " : "") << w(r, c).value();
      os << '\n';
    }
  }
  os << "end\n";
}

inline std::string model_to_string(const MlpModel& m) {
  std::ostringstream os;
  save_model(os, m);
  return os.str();
}

inline MlpModel load_model(std::istream& is) {
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError(std::string("model file ends before ") + what);
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const std::string& m) -> void {
    throw ParseError("model line " + std::to_string(line_no) + ": " + m);
  };

  auto header = next_line("the header");
  std::string magic;
  int version = 0;
  if (!(header >> magic >> version) || magic != "silenzio-model") fail("not a model file");
  if (version != 1) fail("unsupported model version " + std::to_string(version));

  auto hl = next_line("hyperparameters");
  std::string tag, clip;
  Hyperparams hp;
  if (!(hl >> tag >> hp.alpha >> hp.beta >> hp.gamma >> hp.relu_cap >> hp.kappa >> hp.moduli_width >> clip) ||
      tag != "hyper") {
    fail("malformed hyper line");
  }
  try {
    hp.weight_clip = parse_weight_clip(clip);
  } catch (const ConfigError& e) {
    fail(e.what());
  }

  auto dl = next_line("dims");
  std::vector<std::size_t> dims;
  if (!(dl >> tag) || tag != "dims") fail("expected dims");
  for (long long d; dl >> d;) {
    if (d <= 0) fail("layer widths must be positive");
    dims.push_back(static_cast<std::size_t>(d));
  }
  MlpModel m;
  try {
    m = MlpModel(dims, hp);
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  for (std::size_t l = 1; l <= m.layers(); ++l) {
    auto ll = next_line("a layer");
    std::size_t idx = 0, rows = 0, cols = 0;
    if (!(ll >> tag >> idx >> rows >> cols) || tag != "layer") fail("expected layer header");
    auto& w = m.weights(l);
    if (idx != l || rows != w.rows() || cols != w.cols()) fail("layer shape does not match dims");
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = next_line("a weight row");
      for (std::size_t c = 0; c < cols; ++c) {
        long long v;
        if (!(row >> v)) fail("too few weights in row");
        if (v < hp.weight_min() || v > hp.weight_max()) {
          fail("weight " + std::to_string(v) + " outside the clip range [" + std::to_string(hp.weight_min()) +
               ", " + std::to_string(hp.weight_max()) + "]");
        }
        w(r, c) = SignedGadgetValue(v);
      }
      std::string extra;
      if (row >> extra) fail("too many weights in row");
    }
  }
  auto el = next_line("end");
  if (!(el >> tag) || tag != "end") fail("expected end");
  return m;
}

inline MlpModel model_from_string(const std::string& s) {
  std::istringstream is(s);
  return load_model(is);
}

}  // namespace silenzio
