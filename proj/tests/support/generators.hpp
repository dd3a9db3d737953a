#pragma once

// Seeded random inputs shared by the property tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "sugvoxel/kernels.hpp"
#include "sugvoxel/linalg.hpp"
#include "sugvoxel/rng.hpp"
#include "sugvoxel/tensor.hpp"

namespace testgen {

using namespace sugvoxel;

inline VoxelGridSpec grid(std::int32_t x, std::int32_t y, std::int32_t z, std::int32_t stride = 1) {
  VoxelGridSpec g{{x * stride, y * stride, z * stride}, 0.5f, {-1.0f, 2.0f, 0.25f}, stride};
  g.validate();
  return g;
}

inline std::vector<float> random_floats(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

inline SparseVoxelTensor random_sparse(Rng& rng, const VoxelGridSpec& g, std::int32_t channels, double density) {
  const auto d = g.dims();
  std::vector<Coord3> coords;
  std::vector<float> feats;
  for (std::int32_t x = 0; x < d[0]; ++x)
    for (std::int32_t y = 0; y < d[1]; ++y)
      for (std::int32_t z = 0; z < d[2]; ++z)
        if (rng.uniform() < density) {
          coords.push_back({x, y, z});
          for (std::int32_t c = 0; c < channels; ++c) feats.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
        }
  return SparseVoxelTensor::from_entries(g, channels, std::move(coords), std::move(feats));
}

inline Matrix random_matrix(Rng& rng, std::int32_t rows, std::int32_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.uniform(-scale, scale));
  return m;
}

inline ConvParams random_conv(Rng& rng, KernelSpec k, std::int32_t cin, std::int32_t cout) {
  ConvParams p = ConvParams::zeros(std::move(k), cin, cout);
  for (auto& w : p.weights) w = random_matrix(rng, cin, cout);
  p.bias = random_floats(rng, static_cast<std::size_t>(cout));
  return p;
}

// Rows of `n` non-negative entries summing to one.
inline std::vector<float> random_distribution(Rng& rng, std::size_t n, double zero_prob = 0.0) {
  std::vector<double> raw(n);
  double s = 0.0;
  for (auto& r : raw) {
    r = rng.uniform() < zero_prob ? 0.0 : rng.uniform(0.01, 1.0);
    s += r;
  }
  if (s == 0.0) {
    raw[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1))] = 1.0;
    s = 1.0;
  }
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(raw[i] / s);
  return out;
}

inline KernelSpec random_kernel(Rng& rng) {
  switch (rng.integer(0, 3)) {
    case 0: return KernelSpec::make(KernelShape::cubic, 3);
    case 1: return KernelSpec::make(KernelShape::cubic, 2);
    case 2: return KernelSpec::make(KernelShape::hyper_cross, 3);
    default: return KernelSpec::make(KernelShape::hyper_cross, 2);
  }
}

}  // namespace testgen
