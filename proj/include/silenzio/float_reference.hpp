#pragma once

// float32 baseline: bias-free ReLU MLP, softmax cross-entropy, Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "silenzio/dataset.hpp"
#include "silenzio/errors.hpp"
#include "silenzio/matrix.hpp"
#include "silenzio/random.hpp"

namespace silenzio {

struct AdamParams {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class FloatMlp {
 public:
  FloatMlp(std::vector<std::size_t> dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ConfigError("architecture needs at least two layers");
    Rng rng(seed);
    for (std::size_t l = 1; l < dims_.size(); ++l) {
      const float bound = 1.0f / std::sqrt(static_cast<float>(dims_[l - 1]));
      Matrix<float> w(dims_[l], dims_[l - 1]);
      for (auto& v : w) v = static_cast<float>((2 * rng.uniform_real() - 1) * bound);
      weights_.push_back(std::move(w));
      m_.emplace_back(dims_[l], dims_[l - 1], 0.0f);
      v_.emplace_back(dims_[l], dims_[l - 1], 0.0f);
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const Matrix<float>& weights(std::size_t l) const { return weights_.at(l - 1); }

  /// Activations per layer for a batch; the last entry holds the logits.
  std::vector<Matrix<float>> forward(const Matrix<float>& x) const {
    std::vector<Matrix<float>> acts{x};
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto& in = acts.back();
      const auto& w = weights_[l];
      Matrix<float> out(in.rows(), w.rows());
      for (std::size_t r = 0; r < in.rows(); ++r)
        for (std::size_t o = 0; o < w.rows(); ++o) {
          float s = 0;
          for (std::size_t i = 0; i < w.cols(); ++i) s += in(r, i) * w(o, i);
          out(r, o) = (l + 1 < weights_.size()) ? std::max(s, 0.0f) : s;
        }
      acts.push_back(std::move(out));
    }
    return acts;
  }

  /// One Adam step on the mean cross-entropy of the batch.
  void step(const Matrix<float>& x, const std::vector<int>& labels, const AdamParams& p) {
    const auto acts = forward(x);
    const std::size_t a = x.rows();
    // dL/dlogits = softmax - onehot, averaged over the batch.
    Matrix<float> delta = acts.back();
    for (std::size_t r = 0; r < a; ++r) {
      auto row = delta.row(r);
      const float mx = *std::max_element(row.begin(), row.end());
      float z = 0;
      for (auto& v : row) z += (v = std::exp(v - mx));
      for (auto& v : row) v /= z;
      row[static_cast<std::size_t>(labels[r])] -= 1.0f;
      for (auto& v : row) v /= static_cast<float>(a);
    }
    ++t_;
    for (std::size_t l = weights_.size(); l >= 1; --l) {
      auto& w = weights_[l - 1];
      const auto& in = acts[l - 1];
      Matrix<float> grad(w.rows(), w.cols(), 0.0f);
      for (std::size_t r = 0; r < a; ++r)
        for (std::size_t o = 0; o < w.rows(); ++o) {
          const float d = delta(r, o);
          if (d == 0) continue;
          for (std::size_t i = 0; i < w.cols(); ++i) grad(o, i) += d * in(r, i);
        }
      if (l > 1) {
        Matrix<float> prev(a, w.cols(), 0.0f);
        for (std::size_t r = 0; r < a; ++r)
          for (std::size_t i = 0; i < w.cols(); ++i) {
            if (in(r, i) <= 0) continue;
            float s = 0;
            for (std::size_t o = 0; o < w.rows(); ++o) s += delta(r, o) * w(o, i);
            prev(r, i) = s;
          }
        delta = std::move(prev);
      }
      auto& m = m_[l - 1];
      auto& v = v_[l - 1];
      const float c1 = 1 - std::pow(p.beta1, static_cast<float>(t_));
      const float c2 = 1 - std::pow(p.beta2, static_cast<float>(t_));
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = p.beta1 * m[k] + (1 - p.beta1) * grad[k];
        v[k] = p.beta2 * v[k] + (1 - p.beta2) * grad[k] * grad[k];
        w[k] -= p.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + p.eps);
      }
    }
  }

  std::vector<int> predict(const Matrix<float>& x) const {
    const auto logits = forward(x).back();
    std::vector<int> out(x.rows(), 0);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits(r, c) > logits(r, static_cast<std::size_t>(out[r]))) out[r] = static_cast<int>(c);
    return out;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Matrix<float>> weights_, m_, v_;
  std::int64_t t_ = 0;
};

struct FloatEpoch {
  std::size_t epoch = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
};

struct FloatResult {
  std::vector<FloatEpoch> epochs;  // epoch 0 is the initial model
  double best_test_accuracy = 0;
  std::size_t best_epoch = 0;
};

inline double float_accuracy(const FloatMlp& m, const EncodedSplit& s) {
  if (s.size() == 0) throw ShapeError("cannot evaluate an empty dataset");
  const auto pred = m.predict(s.real_features);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == s.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Same batching as the integer trainer: per-epoch reshuffle, partial batch
/// dropped.
inline FloatResult float_reference_train(FloatMlp& model, const EncodedSplit& train_set,
                                         const EncodedSplit& test_set, std::size_t epochs,
                                         std::size_t batch_size, std::uint64_t seed,
                                         const AdamParams& p = {}) {
  if (train_set.real_features.cols() != model.dims().front()) {
    throw ShapeError("dataset feature count does not match the model");
  }
  FloatResult res;
  auto record = [&](std::size_t e) {
    FloatEpoch rec{e, float_accuracy(model, train_set), float_accuracy(model, test_set)};
    res.epochs.push_back(rec);
    if (e == 0 || res.epochs.size() == 2 || rec.test_accuracy > res.best_test_accuracy) {
      res.best_test_accuracy = rec.test_accuracy;
      res.best_epoch = e;
    }
  };
  record(0);
  for (std::size_t e = 1; e <= epochs; ++e) {
    for (const auto& idx : epoch_batches(train_set.size(), batch_size, seed, e - 1)) {
      const auto b = train_set.select(idx);
      model.step(b.real_features, b.labels, p);
    }
    record(e);
  }
  return res;
}

}  // namespace silenzio
