#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "silenzio/errors.hpp"
#include "silenzio/matrix.hpp"
#include "silenzio/random.hpp"

namespace silenzio {

/// One split after preprocessing: signed beta-bit features, the same features
/// before quantization (for the float baseline), and class indices.
struct EncodedSplit {
  Matrix<std::int64_t> features;
  Matrix<float> real_features;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_count() const noexcept { return features.cols(); }

  /// Rows `idx` as a new split.
  EncodedSplit select(const std::vector<std::size_t>& idx) const {
    EncodedSplit out;
    out.classes = classes;
    out.features = Matrix<std::int64_t>(idx.size(), features.cols());
    out.real_features = Matrix<float>(idx.size(), real_features.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < features.cols(); ++c) out.features(r, c) = features(idx[r], c);
      for (std::size_t c = 0; c < real_features.cols(); ++c)
        out.real_features(r, c) = real_features(idx[r], c);
      out.labels.push_back(labels[idx[r]]);
    }
    return out;
  }
};

/// a x o one-hot matrix of class indices.
inline Matrix<std::int64_t> one_hot(const std::vector<int>& labels, std::size_t classes) {
  Matrix<std::int64_t> y(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ShapeError("label " + std::to_string(labels[r]) + " outside " + std::to_string(classes) +
                       " classes");
    }
    y(r, static_cast<std::size_t>(labels[r])) = 1;
  }
  return y;
}

/// Batches of one epoch: a fresh permutation of [0, n) cut into full batches;
/// the trailing partial batch is dropped. Epoch e's permutation depends only
/// on (seed, e).
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ShapeError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + batch_size));
  }
  return out;
}

}  // namespace silenzio
