#pragma once

// OVT binary tensor format:
//   "OVT1" | kind u8 (0 dense, 1 sparse) | u32 dims_x dims_y dims_z stride C active_count
//   | f32 voxel_size | f32 origin[3] | payload
// Sparse payload: active_count x (u32 x, u32 y, u32 z, C x f32).
// Dense payload: dims_x*dims_y*dims_z*C f32 in (x, y, z, c) row-major order.
// Everything little-endian. dims are the extents at `stride`.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sugvoxel/error.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

using AnyTensor = std::variant<DenseVoxelTensor, SparseVoxelTensor>;

namespace ovt_detail {

inline constexpr char kMagic[4] = {'O', 'V', 'T', '1'};
inline constexpr std::size_t kHeaderBytes = 4 + 1 + 6 * 4 + 4 + 3 * 4;
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  void need(std::size_t n) const {
    require(pos_ + n <= bytes_.size(), ErrorCode::truncated_payload,
            "payload ends at byte " + std::to_string(bytes_.size()) + ", needed " +
                std::to_string(pos_ + n));
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void put_header(std::vector<std::uint8_t>& out, std::uint8_t kind, const VoxelGridSpec& g,
                       std::int32_t channels, std::uint64_t active) {
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kind);
  const auto d = g.dims();
  for (auto v : d) put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(g.stride));
  put_u32(out, static_cast<std::uint32_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(active));
  put_f32(out, g.voxel_size);
  for (auto o : g.origin) put_f32(out, o);
}

}  // namespace ovt_detail

inline std::vector<std::uint8_t> encode_tensor(const DenseVoxelTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(ovt_detail::kHeaderBytes + t.values().size() * 4);
  ovt_detail::put_header(out, 0, t.grid(), t.channels(), static_cast<std::uint64_t>(t.grid().cell_count()));
  for (float v : t.values()) ovt_detail::put_f32(out, v);
  return out;
}

inline std::vector<std::uint8_t> encode_tensor(const SparseVoxelTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(ovt_detail::kHeaderBytes + t.size() * (12 + 4 * static_cast<std::size_t>(t.channels())));
  ovt_detail::put_header(out, 1, t.grid(), t.channels(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Coord3& c = t.coords()[i];
    ovt_detail::put_u32(out, static_cast<std::uint32_t>(c.x));
    ovt_detail::put_u32(out, static_cast<std::uint32_t>(c.y));
    ovt_detail::put_u32(out, static_cast<std::uint32_t>(c.z));
    for (float v : t.feature(i)) ovt_detail::put_f32(out, v);
  }
  return out;
}

inline AnyTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  ovt_detail::Reader in(bytes);
  in.need(4);
  require(std::memcmp(bytes.data(), ovt_detail::kMagic, 4) == 0, ErrorCode::magic_mismatch,
          "missing OVT1 magic");
  for (int i = 0; i < 4; ++i) in.u8();
  const std::uint8_t kind = in.u8();
  require(kind == 0 || kind == 1, ErrorCode::magic_mismatch,
          "unknown OVT kind byte " + std::to_string(kind));
  std::array<std::uint32_t, 3> dims{in.u32(), in.u32(), in.u32()};
  const std::uint32_t stride = in.u32();
  const std::uint32_t channels = in.u32();
  const std::uint32_t active = in.u32();
  VoxelGridSpec grid;
  grid.voxel_size = in.f32();
  for (auto& o : grid.origin) o = in.f32();

  require(is_valid_stride(static_cast<std::int32_t>(stride)), ErrorCode::dimension_overflow,
          "invalid stride " + std::to_string(stride));
  std::uint64_t cells = 1;
  for (int a = 0; a < 3; ++a) {
    require(dims[a] > 0 && static_cast<std::uint64_t>(dims[a]) * stride <= VoxelGridSpec::kMaxAxis,
            ErrorCode::dimension_overflow, "grid axis out of range");
    cells *= dims[a];
    grid.full_dims[a] = static_cast<std::int32_t>(dims[a] * stride);
  }
  grid.stride = static_cast<std::int32_t>(stride);
  require(channels > 0 && channels <= (1u << 16), ErrorCode::dimension_overflow,
          "channel count out of range");
  require(cells * channels < ovt_detail::kMaxElements, ErrorCode::dimension_overflow,
          "tensor element count overflows");

  const auto C = static_cast<std::int32_t>(channels);
  if (kind == 0) {
    require(active == cells, ErrorCode::dimension_overflow,
            "dense active_count must equal the dims product");
    in.need(cells * channels * 4);
    std::vector<float> values(cells * channels);
    for (auto& v : values) v = in.f32();
    return DenseVoxelTensor(grid, C, std::move(values));
  }
  require(active <= cells, ErrorCode::dimension_overflow, "active_count exceeds grid cells");
  in.need(static_cast<std::size_t>(active) * (12 + 4 * static_cast<std::size_t>(channels)));
  std::vector<Coord3> coords(active);
  std::vector<float> features(static_cast<std::size_t>(active) * channels);
  for (std::uint32_t i = 0; i < active; ++i) {
    std::uint32_t x = in.u32(), y = in.u32(), z = in.u32();
    require(x <= VoxelGridSpec::kMaxAxis && y <= VoxelGridSpec::kMaxAxis && z <= VoxelGridSpec::kMaxAxis,
            ErrorCode::out_of_grid, "sparse coord out of range");
    coords[i] = {static_cast<std::int32_t>(x), static_cast<std::int32_t>(y), static_cast<std::int32_t>(z)};
    for (std::uint32_t c = 0; c < channels; ++c) features[static_cast<std::size_t>(i) * channels + c] = in.f32();
  }
  return SparseVoxelTensor::from_entries(grid, C, std::move(coords), std::move(features));
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::io_failure, "write failed for " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_failure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename Tensor>
void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_bytes(path, encode_tensor(t));
}

inline AnyTensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return decode_tensor(bytes);
}

inline DenseVoxelTensor read_dense(const std::filesystem::path& path) {
  auto t = read_tensor(path);
  require(std::holds_alternative<DenseVoxelTensor>(t), ErrorCode::invalid_argument,
          path.string() + " does not hold a dense tensor");
  return std::get<DenseVoxelTensor>(std::move(t));
}

inline SparseVoxelTensor read_sparse(const std::filesystem::path& path) {
  auto t = read_tensor(path);
  require(std::holds_alternative<SparseVoxelTensor>(t), ErrorCode::invalid_argument,
          path.string() + " does not hold a sparse tensor");
  return std::get<SparseVoxelTensor>(std::move(t));
}

}  // namespace sugvoxel
