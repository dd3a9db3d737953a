#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sugvoxel/error.hpp"
#include "sugvoxel/kernels.hpp"
#include "sugvoxel/linalg.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

namespace conv_detail {

inline void check_channels(const SparseVoxelTensor& t, const ConvParams& p) {
  p.validate();
  require(p.in_channels == t.channels(), ErrorCode::channel_mismatch,
          "conv expects " + std::to_string(p.in_channels) + " input channels, tensor has " +
              std::to_string(t.channels()));
}

inline void begin_stats(GatherStats* stats, std::size_t outputs) {
  if (stats && stats->per_output_enabled) stats->per_output.assign(outputs, 0);
}

inline bool divisible(const Coord3& c, std::int32_t s) {
  return c.x % s == 0 && c.y % s == 0 && c.z % s == 0;
}

inline Coord3 divide(const Coord3& c, std::int32_t s) { return {c.x / s, c.y / s, c.z / s}; }

// out = bias + sum over offsets of in[source(o)] * W_o for an output support
// fixed up front. `source` returns the input coord feeding offset o.
template <typename Source>
SparseVoxelTensor gather_conv(const SparseVoxelTensor& in, const ConvParams& p, VoxelGridSpec out_grid,
                              std::vector<Coord3> out_coords, Source&& source, GatherStats* stats) {
  const auto cout = static_cast<std::size_t>(p.out_channels);
  std::vector<float> features(out_coords.size() * cout);
  std::vector<double> acc(cout);
  begin_stats(stats, out_coords.size());
  for (std::size_t i = 0; i < out_coords.size(); ++i) {
    for (std::size_t j = 0; j < cout; ++j) acc[j] = p.bias[j];
    std::uint32_t hits = 0;
    for (std::size_t k = 0; k < p.kernel.offsets.size(); ++k) {
      Coord3 src;
      if (!source(out_coords[i], p.kernel.offsets[k], src)) continue;
      if (!in.grid().contains(src)) continue;
      if (stats) ++stats->lookups;
      const std::size_t idx = in.find(src);
      if (idx == CoordIndex::kNotFound) continue;
      ++hits;
      accumulate_row_times(in.feature(idx), p.weights[k], acc);
    }
    if (stats) {
      stats->gathers += hits;
      if (stats->per_output_enabled) stats->per_output[i] = hits;
    }
    for (std::size_t j = 0; j < cout; ++j) features[i * cout + j] = static_cast<float>(acc[j]);
  }
  return SparseVoxelTensor::from_entries(out_grid, p.out_channels, std::move(out_coords), std::move(features));
}

}  // namespace conv_detail

// Output support equals input support; inactive neighbours contribute nothing.
inline SparseVoxelTensor submanifold_conv(const SparseVoxelTensor& t, const ConvParams& p,
                                          GatherStats* stats = nullptr) {
  conv_detail::check_channels(t, p);
  std::vector<Coord3> coords(t.coords().begin(), t.coords().end());
  return conv_detail::gather_conv(
      t, p, t.grid(), std::move(coords),
      [](const Coord3& c, const Coord3& o, Coord3& src) {
        src = c + o;
        return true;
      },
      stats);
}

// Output voxel c' reads input voxels stride*c' + o. It is active iff at least
// one of those is active.
inline SparseVoxelTensor strided_conv_down(const SparseVoxelTensor& t, const ConvParams& p,
                                           std::int32_t stride = 2, GatherStats* stats = nullptr) {
  conv_detail::check_channels(t, p);
  require(stride >= 2, ErrorCode::invalid_argument, "downsampling stride must be >= 2");
  const VoxelGridSpec out_grid = t.grid().at_stride(t.grid().stride * stride);
  std::vector<Coord3> out_coords;
  CoordIndex seen(t.size());
  for (const Coord3& c : t.coords()) {
    for (const Coord3& o : p.kernel.offsets) {
      const Coord3 shifted = c - o;
      if (shifted.x < 0 || shifted.y < 0 || shifted.z < 0) continue;
      if (!conv_detail::divisible(shifted, stride)) continue;
      const Coord3 parent = conv_detail::divide(shifted, stride);
      if (!out_grid.contains(parent)) continue;
      if (seen.insert(parent, out_coords.size()) == out_coords.size()) out_coords.push_back(parent);
    }
  }
  std::sort(out_coords.begin(), out_coords.end());
  return conv_detail::gather_conv(
      t, p, out_grid, std::move(out_coords),
      [stride](const Coord3& c, const Coord3& o, Coord3& src) {
        src = c * stride + o;
        return true;
      },
      stats);
}

// Generative upsampling: every active parent activates its whole
// stride^3 child block. Child c receives in[(c - o) / stride] * W_o for every
// offset o that divides evenly onto an active parent; children whose block
// position is outside the kernel support get the bias only.
inline SparseVoxelTensor generative_transpose_conv(const SparseVoxelTensor& t, const ConvParams& p,
                                                   std::int32_t stride = 2, GatherStats* stats = nullptr) {
  conv_detail::check_channels(t, p);
  require(stride >= 2, ErrorCode::invalid_argument, "upsampling stride must be >= 2");
  require(t.grid().stride >= stride, ErrorCode::stride_mismatch,
          "input already at the finest stride; cannot upsample");
  const VoxelGridSpec out_grid = t.grid().at_stride(t.grid().stride / stride);
  std::vector<Coord3> out_coords;
  out_coords.reserve(t.size() * static_cast<std::size_t>(stride * stride * stride));
  CoordIndex seen(t.size() * static_cast<std::size_t>(stride * stride * stride));
  for (const Coord3& c : t.coords()) {
    for (std::int32_t dx = 0; dx < stride; ++dx)
      for (std::int32_t dy = 0; dy < stride; ++dy)
        for (std::int32_t dz = 0; dz < stride; ++dz) {
          const Coord3 child = c * stride + Coord3{dx, dy, dz};
          if (!out_grid.contains(child)) continue;
          if (seen.insert(child, out_coords.size()) == out_coords.size()) out_coords.push_back(child);
        }
  }
  std::sort(out_coords.begin(), out_coords.end());
  return conv_detail::gather_conv(
      t, p, out_grid, std::move(out_coords),
      [stride](const Coord3& c, const Coord3& o, Coord3& src) {
        const Coord3 shifted = c - o;
        if (shifted.x < 0 || shifted.y < 0 || shifted.z < 0) return false;
        if (!conv_detail::divisible(shifted, stride)) return false;
        src = conv_detail::divide(shifted, stride);
        return true;
      },
      stats);
}

// Per-voxel S-class distribution defined on exactly the active set of the
// tensor it was predicted from. Class 0 is free space.
struct ProxyOccMap {
  SparseVoxelTensor probs;

  std::int32_t classes() const { return probs.channels(); }
  std::size_t size() const { return probs.size(); }

  // Probability mass on classes 1..S-1, summed directly rather than as 1 - p0.
  float nonempty(std::size_t i) const {
    const auto row = probs.feature(i);
    double s = 0.0;
    for (std::size_t c = 1; c < row.size(); ++c) s += row[c];
    return static_cast<float>(s);
  }
};

inline std::vector<std::uint8_t> prune_mask(const ProxyOccMap& occ, float tau_p) {
  std::vector<std::uint8_t> keep(occ.size());
  for (std::size_t i = 0; i < occ.size(); ++i) keep[i] = occ.nonempty(i) > tau_p ? 1 : 0;
  return keep;
}

// Keeps voxels whose non-empty probability strictly exceeds tau_p.
inline SparseVoxelTensor soft_prune(const SparseVoxelTensor& t, const ProxyOccMap& occ, float tau_p) {
  require(occ.probs.same_support(t), ErrorCode::occ_domain_mismatch,
          "occupancy map is not defined on the tensor's active set");
  return select(t, prune_mask(occ, tau_p));
}

inline SparseVoxelTensor map_leaky_relu(const SparseVoxelTensor& t, float slope = 0.01f) {
  std::vector<float> f(t.features().begin(), t.features().end());
  for (auto& v : f) v = leaky_relu(v, slope);
  return with_features(t, t.channels(), std::move(f));
}

struct ResidualBlockParams {
  std::array<ConvParams, 3> layers;

  friend bool operator==(const ResidualBlockParams&, const ResidualBlockParams&) = default;
};

// out = t + L3(act(L2(act(L1(t))))) with all three layers submanifold.
inline SparseVoxelTensor residual_block(const SparseVoxelTensor& t, const ResidualBlockParams& params,
                                        GatherStats* stats = nullptr) {
  require(params.layers[2].out_channels == t.channels(), ErrorCode::channel_mismatch,
          "residual block output channels must equal input channels");
  auto h = map_leaky_relu(submanifold_conv(t, params.layers[0], stats));
  h = map_leaky_relu(submanifold_conv(h, params.layers[1], stats));
  h = submanifold_conv(h, params.layers[2], stats);
  std::vector<float> f(t.features().begin(), t.features().end());
  const auto hf = h.features();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += hf[i];
  return with_features(t, t.channels(), std::move(f));
}

inline bool is_hypercross_stack(const ResidualBlockParams& params) {
  static constexpr std::array<std::int32_t, 3> kSizes{3, 2, 2};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& k = params.layers[i].kernel;
    if (k.shape != KernelShape::hyper_cross || k.size != kSizes[i]) return false;
  }
  return true;
}

// Three-layer 3+2+2 hyper-cross residual block.
inline SparseVoxelTensor hypercross_residual_block(const SparseVoxelTensor& t, const ResidualBlockParams& params,
                                                   GatherStats* stats = nullptr) {
  require(is_hypercross_stack(params), ErrorCode::invalid_argument,
          "hyper-cross residual block needs hyper_cross kernels of sizes 3, 2, 2");
  return residual_block(t, params, stats);
}

}  // namespace sugvoxel
