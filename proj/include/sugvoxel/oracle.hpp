#pragma once

// Brute-force dense reference convolution used to check the sparse kernels.
// Deliberately naive: plain index loops over every cell, no hashing.

#include <cstdint>
#include <string>
#include <vector>

#include "sugvoxel/error.hpp"
#include "sugvoxel/kernels.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

enum class DenseConvMode { submanifold_mask, full, stride2, transpose2 };

struct DenseConvResult {
  DenseVoxelTensor values;
  std::vector<std::uint8_t> support;  // one flag per output cell
};

// `active` flags the input cells that are part of the sparse support (one
// entry per cell). Out-of-grid neighbours contribute nothing.
inline DenseConvResult dense_conv3d(const DenseVoxelTensor& t, const std::vector<std::uint8_t>& active,
                                    const ConvParams& p, DenseConvMode mode) {
  p.validate();
  require(p.in_channels == t.channels(), ErrorCode::channel_mismatch, "dense oracle channel mismatch");
  require(active.size() == static_cast<std::size_t>(t.grid().cell_count()), ErrorCode::dim_mismatch,
          "activity mask must have one entry per cell");

  const VoxelGridSpec& in_grid = t.grid();
  VoxelGridSpec out_grid = in_grid;
  if (mode == DenseConvMode::stride2) out_grid = in_grid.at_stride(in_grid.stride * 2);
  if (mode == DenseConvMode::transpose2) {
    require(in_grid.stride >= 2, ErrorCode::stride_mismatch, "transpose oracle needs stride >= 2 input");
    out_grid = in_grid.at_stride(in_grid.stride / 2);
  }
  const auto in_d = in_grid.dims();
  const auto out_d = out_grid.dims();
  const std::int32_t cin = p.in_channels;
  const std::int32_t cout = p.out_channels;

  std::vector<double> acc(static_cast<std::size_t>(out_grid.cell_count()) * static_cast<std::size_t>(cout), 0.0);
  std::vector<std::uint8_t> support(static_cast<std::size_t>(out_grid.cell_count()), 0);
  auto in_value = [&](std::int32_t x, std::int32_t y, std::int32_t z, std::int32_t c) -> double {
    const std::size_t idx = ((static_cast<std::size_t>(x) * in_d[1] + y) * in_d[2] + z);
    return t.values()[idx * static_cast<std::size_t>(cin) + static_cast<std::size_t>(c)];
  };
  auto in_active = [&](std::int32_t x, std::int32_t y, std::int32_t z) {
    return active[(static_cast<std::size_t>(x) * in_d[1] + y) * in_d[2] + z] != 0;
  };
  auto out_cell = [&](std::int32_t x, std::int32_t y, std::int32_t z) {
    return (static_cast<std::size_t>(x) * out_d[1] + y) * out_d[2] + z;
  };

  if (mode == DenseConvMode::transpose2) {
    // Scatter form: every input cell p pushes in[p] * W_o to 2p + o.
    for (std::int32_t px = 0; px < in_d[0]; ++px)
      for (std::int32_t py = 0; py < in_d[1]; ++py)
        for (std::int32_t pz = 0; pz < in_d[2]; ++pz) {
          if (in_active(px, py, pz)) {
            for (std::int32_t dx = 0; dx < 2; ++dx)
              for (std::int32_t dy = 0; dy < 2; ++dy)
                for (std::int32_t dz = 0; dz < 2; ++dz) {
                  const std::int32_t cx = 2 * px + dx, cy = 2 * py + dy, cz = 2 * pz + dz;
                  if (cx < out_d[0] && cy < out_d[1] && cz < out_d[2]) support[out_cell(cx, cy, cz)] = 1;
                }
          }
          for (std::size_t k = 0; k < p.kernel.offsets.size(); ++k) {
            const Coord3 o = p.kernel.offsets[k];
            const std::int32_t cx = 2 * px + o.x, cy = 2 * py + o.y, cz = 2 * pz + o.z;
            if (cx < 0 || cy < 0 || cz < 0 || cx >= out_d[0] || cy >= out_d[1] || cz >= out_d[2]) continue;
            const std::size_t oc = out_cell(cx, cy, cz);
            for (std::int32_t i = 0; i < cin; ++i) {
              const double v = in_value(px, py, pz, i);
              for (std::int32_t j = 0; j < cout; ++j)
                acc[oc * static_cast<std::size_t>(cout) + static_cast<std::size_t>(j)] += v * p.weights[k](i, j);
            }
          }
        }
  } else {
    const std::int32_t step = mode == DenseConvMode::stride2 ? 2 : 1;
    for (std::int32_t x = 0; x < out_d[0]; ++x)
      for (std::int32_t y = 0; y < out_d[1]; ++y)
        for (std::int32_t z = 0; z < out_d[2]; ++z) {
          const std::size_t oc = out_cell(x, y, z);
          for (std::size_t k = 0; k < p.kernel.offsets.size(); ++k) {
            const Coord3 o = p.kernel.offsets[k];
            const std::int32_t sx = step * x + o.x, sy = step * y + o.y, sz = step * z + o.z;
            if (sx < 0 || sy < 0 || sz < 0 || sx >= in_d[0] || sy >= in_d[1] || sz >= in_d[2]) continue;
            if (mode == DenseConvMode::stride2 && in_active(sx, sy, sz)) support[oc] = 1;
            for (std::int32_t i = 0; i < cin; ++i) {
              const double v = in_value(sx, sy, sz, i);
              for (std::int32_t j = 0; j < cout; ++j)
                acc[oc * static_cast<std::size_t>(cout) + static_cast<std::size_t>(j)] += v * p.weights[k](i, j);
            }
          }
          if (mode == DenseConvMode::full) support[oc] = 1;
          if (mode == DenseConvMode::submanifold_mask) support[oc] = in_active(x, y, z) ? 1 : 0;
        }
  }

  DenseVoxelTensor out(out_grid, cout);
  auto values = out.values();
  for (std::size_t cell = 0; cell < support.size(); ++cell) {
    const bool keep = mode == DenseConvMode::full || support[cell];
    for (std::int32_t j = 0; j < cout; ++j) {
      const std::size_t idx = cell * static_cast<std::size_t>(cout) + static_cast<std::size_t>(j);
      values[idx] = keep ? static_cast<float>(acc[idx] + p.bias[static_cast<std::size_t>(j)]) : 0.0f;
    }
  }
  return {std::move(out), std::move(support)};
}

}  // namespace sugvoxel
