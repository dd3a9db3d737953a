#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sugvoxel/error.hpp"

namespace sugvoxel {

// Row-major float matrix.
struct Matrix {
  std::int32_t rows = 0;
  std::int32_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::int32_t r, std::int32_t c, float value = 0.0f)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), value) {}

  static Matrix identity(std::int32_t n) {
    Matrix m(n, n);
    for (std::int32_t i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
  }

  float& operator()(std::int32_t r, std::int32_t c) {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }
  float operator()(std::int32_t r, std::int32_t c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }

  std::span<const float> row(std::int32_t r) const {
    return {data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols),
            static_cast<std::size_t>(cols)};
  }
  std::span<float> row(std::int32_t r) {
    return {data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols),
            static_cast<std::size_t>(cols)};
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// acc[j] += sum_i in[i] * m(i, j)
inline void accumulate_row_times(std::span<const float> in, const Matrix& m, std::span<double> acc) {
  for (std::int32_t i = 0; i < m.rows; ++i) {
    const double v = in[static_cast<std::size_t>(i)];
    if (v == 0.0) continue;
    const float* w = m.data.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m.cols);
    for (std::int32_t j = 0; j < m.cols; ++j) acc[static_cast<std::size_t>(j)] += v * w[j];
  }
}

inline std::vector<float> row_times(std::span<const float> in, const Matrix& m) {
  require(in.size() == static_cast<std::size_t>(m.rows), ErrorCode::channel_mismatch,
          "vector length does not match matrix rows");
  std::vector<double> acc(static_cast<std::size_t>(m.cols), 0.0);
  accumulate_row_times(in, m, acc);
  return {acc.begin(), acc.end()};
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, ErrorCode::channel_mismatch, "matmul inner dimension mismatch");
  Matrix out(a.rows, b.cols);
  std::vector<double> acc(static_cast<std::size_t>(b.cols));
  for (std::int32_t r = 0; r < a.rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    accumulate_row_times(a.row(r), b, acc);
    for (std::int32_t c = 0; c < b.cols; ++c) out(r, c) = static_cast<float>(acc[static_cast<std::size_t>(c)]);
  }
  return out;
}

// Numerically stable softmax computed in double.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline std::vector<float> softmax(std::span<const float> logits) {
  std::vector<double> d(logits.begin(), logits.end());
  const auto s = softmax(std::span<const double>(d));
  return {s.begin(), s.end()};
}

inline float leaky_relu(float v, float slope = 0.01f) { return v > 0.0f ? v : slope * v; }

inline float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

}  // namespace sugvoxel
