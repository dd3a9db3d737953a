#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sugvoxel/coord_map.hpp"
#include "sugvoxel/error.hpp"
#include "sugvoxel/linalg.hpp"

namespace sugvoxel {

enum class KernelShape { cubic, hyper_cross };

inline std::string to_string(KernelShape s) { return s == KernelShape::cubic ? "cubic" : "hyper_cross"; }

inline KernelShape parse_kernel_shape(const std::string& s) {
  if (s == "cubic") return KernelShape::cubic;
  if (s == "hyper_cross" || s == "hypercross") return KernelShape::hyper_cross;
  throw Error(ErrorCode::invalid_argument, "unknown kernel shape '" + s + "'");
}

// Offsets of a size-k window start at -(k-1)/2, so odd sizes are centred
// and size 2 covers {0, +1}.
inline std::vector<Coord3> kernel_offsets(KernelShape shape, std::int32_t size) {
  std::vector<Coord3> out;
  if (shape == KernelShape::cubic) {
    require(size >= 1, ErrorCode::unsupported_kernel_size, "cubic kernel size must be >= 1");
    const std::int32_t lo = -(size - 1) / 2;
    for (std::int32_t x = lo; x < lo + size; ++x)
      for (std::int32_t y = lo; y < lo + size; ++y)
        for (std::int32_t z = lo; z < lo + size; ++z) out.push_back({x, y, z});
    return out;
  }
  require(size == 2 || size == 3, ErrorCode::unsupported_kernel_size,
          "hyper_cross kernel size must be 2 or 3 (got " + std::to_string(size) + ")");
  out.push_back({0, 0, 0});
  if (size == 3) {
    out.insert(out.end(), {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}});
  } else {
    out.insert(out.end(), {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct KernelSpec {
  KernelShape shape = KernelShape::cubic;
  std::int32_t size = 1;
  std::vector<Coord3> offsets;

  static KernelSpec make(KernelShape shape, std::int32_t size) {
    return {shape, size, kernel_offsets(shape, size)};
  }

  std::size_t volume() const { return offsets.size(); }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

// Minkowski sum of the offset sets, deduplicated and sorted.
inline std::vector<Coord3> receptive_field(std::span<const KernelSpec> kernels) {
  require(!kernels.empty(), ErrorCode::invalid_argument, "receptive_field needs at least one kernel");
  std::set<Coord3> field(kernels[0].offsets.begin(), kernels[0].offsets.end());
  for (std::size_t k = 1; k < kernels.size(); ++k) {
    std::set<Coord3> next;
    for (const auto& a : field)
      for (const auto& b : kernels[k].offsets) next.insert(a + b);
    field = std::move(next);
  }
  return {field.begin(), field.end()};
}

// Learned weights of one convolution: weights[i] is the C_in x C_out matrix
// applied at kernel.offsets[i].
struct ConvParams {
  KernelSpec kernel;
  std::int32_t in_channels = 0;
  std::int32_t out_channels = 0;
  std::vector<Matrix> weights;
  std::vector<float> bias;

  static ConvParams zeros(KernelSpec kernel, std::int32_t cin, std::int32_t cout) {
    ConvParams p;
    p.weights.assign(kernel.offsets.size(), Matrix(cin, cout));
    p.kernel = std::move(kernel);
    p.in_channels = cin;
    p.out_channels = cout;
    p.bias.assign(static_cast<std::size_t>(cout), 0.0f);
    return p;
  }

  // Centre tap = I, everything else 0.
  static ConvParams identity(KernelSpec kernel, std::int32_t channels) {
    ConvParams p = zeros(std::move(kernel), channels, channels);
    const auto it = std::find(p.kernel.offsets.begin(), p.kernel.offsets.end(), Coord3{0, 0, 0});
    require(it != p.kernel.offsets.end(), ErrorCode::invalid_argument, "kernel has no centre tap");
    p.weights[static_cast<std::size_t>(it - p.kernel.offsets.begin())] = Matrix::identity(channels);
    return p;
  }

  void validate() const {
    require(weights.size() == kernel.offsets.size(), ErrorCode::invalid_argument,
            "one weight matrix per kernel offset required");
    for (const auto& w : weights)
      require(w.rows == in_channels && w.cols == out_channels, ErrorCode::channel_mismatch,
              "weight matrix shape does not match channel counts");
    require(bias.size() == static_cast<std::size_t>(out_channels), ErrorCode::channel_mismatch,
            "bias length does not match out_channels");
  }

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

// Counter hook filled by the sparse kernels. `lookups` counts in-grid hash
// probes; `gathers` counts probes that found an active neighbour.
struct GatherStats {
  std::uint64_t lookups = 0;
  std::uint64_t gathers = 0;
  bool per_output_enabled = false;
  std::vector<std::uint32_t> per_output;

  void merge(const GatherStats& o) {
    lookups += o.lookups;
    gathers += o.gathers;
  }
};

}  // namespace sugvoxel
