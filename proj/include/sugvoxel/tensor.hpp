#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sugvoxel/coord_map.hpp"
#include "sugvoxel/error.hpp"

namespace sugvoxel {

inline bool is_valid_stride(std::int32_t s) {
  return s == 1 || s == 2 || s == 4 || s == 8 || s == 16 || s == 32;
}

// Grid geometry. `full_dims` is the stride-1 extent; the extent at `stride`
// is ceil(full_dims / stride) per axis.
struct VoxelGridSpec {
  std::array<std::int32_t, 3> full_dims{1, 1, 1};
  float voxel_size = 1.0f;
  std::array<float, 3> origin{0.0f, 0.0f, 0.0f};
  std::int32_t stride = 1;

  static constexpr std::int32_t kMaxAxis = (1 << 21) - 1;

  std::array<std::int32_t, 3> dims() const {
    return {(full_dims[0] + stride - 1) / stride, (full_dims[1] + stride - 1) / stride,
            (full_dims[2] + stride - 1) / stride};
  }

  std::int64_t cell_count() const {
    const auto d = dims();
    return static_cast<std::int64_t>(d[0]) * d[1] * d[2];
  }

  float cell_size() const { return voxel_size * static_cast<float>(stride); }

  bool contains(const Coord3& c) const {
    const auto d = dims();
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < d[0] && c.y < d[1] && c.z < d[2];
  }

  std::int64_t linear_index(const Coord3& c) const {
    const auto d = dims();
    return (static_cast<std::int64_t>(c.x) * d[1] + c.y) * d[2] + c.z;
  }

  Coord3 coord_of(std::int64_t index) const {
    const auto d = dims();
    const auto z = static_cast<std::int32_t>(index % d[2]);
    index /= d[2];
    const auto y = static_cast<std::int32_t>(index % d[1]);
    const auto x = static_cast<std::int32_t>(index / d[1]);
    return {x, y, z};
  }

  VoxelGridSpec at_stride(std::int32_t s) const {
    VoxelGridSpec g = *this;
    g.stride = s;
    g.validate();
    return g;
  }

  void validate() const {
    require(is_valid_stride(stride), ErrorCode::invalid_argument,
            "stride must be one of 1,2,4,8,16,32 (got " + std::to_string(stride) + ")");
    for (auto d : full_dims) {
      require(d > 0, ErrorCode::invalid_argument, "grid dims must be positive");
      require(d <= kMaxAxis, ErrorCode::dimension_overflow, "grid axis exceeds 2^21-1");
    }
    require(voxel_size > 0.0f, ErrorCode::invalid_argument, "voxel_size must be positive");
  }

  friend bool operator==(const VoxelGridSpec&, const VoxelGridSpec&) = default;
};

// Set of active voxels with one C-channel feature row each, held in
// canonical lexicographic (x, y, z) order. Immutable once built.
class SparseVoxelTensor {
 public:
  SparseVoxelTensor() = default;

  SparseVoxelTensor(VoxelGridSpec grid, std::int32_t channels) : grid_(grid), channels_(channels) {
    grid_.validate();
    require(channels > 0, ErrorCode::invalid_argument, "channel count must be positive");
  }

  // Sorts into canonical order; rejects duplicates and out-of-grid coords.
  static SparseVoxelTensor from_entries(VoxelGridSpec grid, std::int32_t channels,
                                        std::vector<Coord3> coords, std::vector<float> features) {
    SparseVoxelTensor t(grid, channels);
    require(features.size() == coords.size() * static_cast<std::size_t>(channels),
            ErrorCode::dim_mismatch, "feature buffer does not match coords x channels");
    for (const auto& c : coords) {
      require(grid.contains(c), ErrorCode::out_of_grid,
              "coord (" + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                  std::to_string(c.z) + ") outside grid");
    }
    std::vector<std::size_t> order(coords.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (!std::is_sorted(coords.begin(), coords.end())) {
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return coords[a] < coords[b]; });
    }
    t.coords_.reserve(coords.size());
    t.features_.resize(features.size());
    const auto C = static_cast<std::size_t>(channels);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Coord3& c = coords[order[i]];
      require(t.coords_.empty() || t.coords_.back() != c, ErrorCode::duplicate_coord,
              "duplicate coord in sparse tensor");
      t.coords_.push_back(c);
      std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(order[i] * C), C,
                  t.features_.begin() + static_cast<std::ptrdiff_t>(i * C));
    }
    t.rebuild_index();
    return t;
  }

  const VoxelGridSpec& grid() const { return grid_; }
  std::int32_t channels() const { return channels_; }
  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }

  std::span<const Coord3> coords() const { return coords_; }
  std::span<const float> features() const { return features_; }

  std::span<const float> feature(std::size_t i) const {
    return {features_.data() + i * static_cast<std::size_t>(channels_),
            static_cast<std::size_t>(channels_)};
  }

  // Index of `c` in canonical order, or CoordIndex::kNotFound. Out-of-grid
  // coords are simply absent.
  std::size_t find(const Coord3& c) const {
    if (!grid_.contains(c)) return CoordIndex::kNotFound;
    return index_.find(c);
  }

  bool same_support(const SparseVoxelTensor& o) const {
    return grid_ == o.grid_ && coords_ == o.coords_;
  }

  friend bool operator==(const SparseVoxelTensor& a, const SparseVoxelTensor& b) {
    return a.grid_ == b.grid_ && a.channels_ == b.channels_ && a.coords_ == b.coords_ &&
           a.features_ == b.features_;
  }

 private:
  void rebuild_index() {
    index_ = CoordIndex(coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) index_.insert(coords_[i], i);
  }

  VoxelGridSpec grid_{};
  std::int32_t channels_ = 1;
  std::vector<Coord3> coords_;
  std::vector<float> features_;
  CoordIndex index_;
};

// Row-major (x, y, z, channel) array covering every cell of the grid.
class DenseVoxelTensor {
 public:
  DenseVoxelTensor() = default;

  DenseVoxelTensor(VoxelGridSpec grid, std::int32_t channels, float value = 0.0f)
      : grid_(grid), channels_(channels) {
    grid_.validate();
    require(channels > 0, ErrorCode::invalid_argument, "channel count must be positive");
    values_.assign(static_cast<std::size_t>(grid_.cell_count()) * static_cast<std::size_t>(channels),
                   value);
  }

  DenseVoxelTensor(VoxelGridSpec grid, std::int32_t channels, std::vector<float> values)
      : grid_(grid), channels_(channels), values_(std::move(values)) {
    grid_.validate();
    require(channels > 0, ErrorCode::invalid_argument, "channel count must be positive");
    require(values_.size() ==
                static_cast<std::size_t>(grid_.cell_count()) * static_cast<std::size_t>(channels),
            ErrorCode::dim_mismatch, "dense value array does not match grid x channels");
  }

  const VoxelGridSpec& grid() const { return grid_; }
  std::int32_t channels() const { return channels_; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  std::span<const float> at(const Coord3& c) const {
    const auto C = static_cast<std::size_t>(channels_);
    return {values_.data() + static_cast<std::size_t>(grid_.linear_index(c)) * C, C};
  }
  std::span<float> at(const Coord3& c) {
    const auto C = static_cast<std::size_t>(channels_);
    return {values_.data() + static_cast<std::size_t>(grid_.linear_index(c)) * C, C};
  }

  friend bool operator==(const DenseVoxelTensor&, const DenseVoxelTensor&) = default;

 private:
  VoxelGridSpec grid_{};
  std::int32_t channels_ = 1;
  std::vector<float> values_;
};

inline DenseVoxelTensor densify(const SparseVoxelTensor& sparse, std::span<const float> fill) {
  require(fill.size() == static_cast<std::size_t>(sparse.channels()), ErrorCode::channel_mismatch,
          "fill vector length must equal channel count");
  DenseVoxelTensor dense(sparse.grid(), sparse.channels());
  auto values = dense.values();
  const std::size_t C = fill.size();
  for (std::size_t cell = 0; cell < static_cast<std::size_t>(sparse.grid().cell_count()); ++cell)
    std::copy(fill.begin(), fill.end(), values.begin() + static_cast<std::ptrdiff_t>(cell * C));
  for (std::size_t i = 0; i < sparse.size(); ++i) {
    auto f = sparse.feature(i);
    std::copy(f.begin(), f.end(), dense.at(sparse.coords()[i]).begin());
  }
  return dense;
}

inline DenseVoxelTensor densify(const SparseVoxelTensor& sparse, float fill = 0.0f) {
  std::vector<float> f(static_cast<std::size_t>(sparse.channels()), fill);
  return densify(sparse, f);
}

template <typename Keep>
SparseVoxelTensor sparsify(const DenseVoxelTensor& dense, Keep&& keep) {
  std::vector<Coord3> coords;
  std::vector<float> features;
  const auto n = dense.grid().cell_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const Coord3 c = dense.grid().coord_of(i);
    auto row = dense.at(c);
    if (!keep(row)) continue;
    coords.push_back(c);
    features.insert(features.end(), row.begin(), row.end());
  }
  return SparseVoxelTensor::from_entries(dense.grid(), dense.channels(), std::move(coords),
                                         std::move(features));
}

inline bool any_nonzero(std::span<const float> row) {
  return std::any_of(row.begin(), row.end(), [](float v) { return v != 0.0f; });
}

// Subset of `t` where keep[i] is set; order is preserved so the result stays canonical.
inline SparseVoxelTensor select(const SparseVoxelTensor& t, const std::vector<std::uint8_t>& keep) {
  require(keep.size() == t.size(), ErrorCode::dim_mismatch, "keep mask length mismatch");
  std::vector<Coord3> coords;
  std::vector<float> features;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!keep[i]) continue;
    coords.push_back(t.coords()[i]);
    auto f = t.feature(i);
    features.insert(features.end(), f.begin(), f.end());
  }
  return SparseVoxelTensor::from_entries(t.grid(), t.channels(), std::move(coords), std::move(features));
}

// Same support, new features (e.g. after a pointwise map).
inline SparseVoxelTensor with_features(const SparseVoxelTensor& t, std::int32_t channels,
                                       std::vector<float> features) {
  return SparseVoxelTensor::from_entries(t.grid(), channels,
                                         std::vector<Coord3>(t.coords().begin(), t.coords().end()),
                                         std::move(features));
}

// One flag per grid cell, set where `t` is active.
inline std::vector<std::uint8_t> activity_mask(const SparseVoxelTensor& t) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(t.grid().cell_count()), 0);
  for (const auto& c : t.coords()) m[static_cast<std::size_t>(t.grid().linear_index(c))] = 1;
  return m;
}

// Integer class label per cell at stride 1.
struct LabelGrid {
  VoxelGridSpec grid{};
  std::vector<std::uint8_t> labels;

  LabelGrid() = default;
  explicit LabelGrid(VoxelGridSpec g, std::uint8_t value = 0)
      : grid(g), labels(static_cast<std::size_t>(g.cell_count()), value) {}

  std::uint8_t at(const Coord3& c) const { return labels[static_cast<std::size_t>(grid.linear_index(c))]; }
  std::uint8_t& at(const Coord3& c) { return labels[static_cast<std::size_t>(grid.linear_index(c))]; }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

}  // namespace sugvoxel
