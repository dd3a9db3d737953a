#pragma once

// Weight bundles for the completion network and the mask decoder: seeded
// initialisation, a flat binary format ("OVW1"), content hashing and
// parameter EMA.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sugvoxel/completion.hpp"
#include "sugvoxel/error.hpp"
#include "sugvoxel/kernels.hpp"
#include "sugvoxel/linalg.hpp"
#include "sugvoxel/ocr_decoder.hpp"
#include "sugvoxel/ovt_io.hpp"
#include "sugvoxel/rng.hpp"

namespace sugvoxel {

struct ArchitectureDims {
  std::int32_t channels = 16;
  std::int32_t classes = 5;
  std::int32_t queries = 8;
  std::int32_t heads = 2;
  std::int32_t msca_dw_size = 3;
  std::vector<std::int32_t> msca_strips{3, 5};
  KernelSpec down_kernel = KernelSpec::make(KernelShape::cubic, 2);
  KernelSpec up_kernel = KernelSpec::make(KernelShape::cubic, 2);
  KernelSpec fusion_kernel = KernelSpec::make(KernelShape::hyper_cross, 3);

  void validate() const {
    require(channels > 0 && classes >= 2 && queries >= 1 && heads >= 1, ErrorCode::invalid_argument,
            "architecture dims must be positive (classes >= 2)");
    require(channels % heads == 0, ErrorCode::invalid_argument, "channels must divide evenly into heads");
    require(msca_dw_size >= 1, ErrorCode::invalid_argument, "MSCA depth-wise size must be positive");
    for (auto s : msca_strips) require(s >= 1, ErrorCode::invalid_argument, "MSCA strip length must be positive");
  }

  friend bool operator==(const ArchitectureDims&, const ArchitectureDims&) = default;
};

struct WeightsBundle {
  ArchitectureDims dims;
  CompletionParams completion;
  QuerySet decoder;
  std::vector<float> empty_embedding;  // fill for inactive cells before mask composition

  friend bool operator==(const WeightsBundle&, const WeightsBundle&) = default;
};

namespace weights_detail {

inline ResidualBlockParams hypercross_block(std::int32_t C) {
  return {{ConvParams::zeros(KernelSpec::make(KernelShape::hyper_cross, 3), C, C),
           ConvParams::zeros(KernelSpec::make(KernelShape::hyper_cross, 2), C, C),
           ConvParams::zeros(KernelSpec::make(KernelShape::hyper_cross, 2), C, C)}};
}

inline AttentionParams zero_attention(std::int32_t C, std::int32_t heads) {
  return {Matrix(C, C), Matrix(C, C), Matrix(C, C), Matrix(C, C), heads};
}

// A float array paired with its fan-in; fan_in == 0 marks biases.
struct ParamRef {
  std::span<float> values;
  std::int32_t fan_in = 0;
};

inline void add_conv(std::vector<ParamRef>& out, ConvParams& p) {
  const auto fan = static_cast<std::int32_t>(p.kernel.offsets.size()) * p.in_channels;
  for (auto& w : p.weights) out.push_back({w.data, fan});
  out.push_back({p.bias, 0});
}

inline void add_depthwise(std::vector<ParamRef>& out, DepthwiseParams& p) {
  const auto fan = static_cast<std::int32_t>(p.offsets.size());
  for (auto& w : p.weights) out.push_back({w, fan});
  out.push_back({p.bias, 0});
}

inline void add_block(std::vector<ParamRef>& out, ResidualBlockParams& b) {
  for (auto& l : b.layers) add_conv(out, l);
}

inline void add_attention(std::vector<ParamRef>& out, AttentionParams& a) {
  for (Matrix* m : {&a.wq, &a.wk, &a.wv, &a.wo}) out.push_back({m->data, m->rows});
}

}  // namespace weights_detail

// Zero-valued bundle with every array sized from `dims`.
inline WeightsBundle make_bundle(const ArchitectureDims& dims) {
  dims.validate();
  const std::int32_t C = dims.channels;
  const std::int32_t S = dims.classes;
  WeightsBundle b;
  b.dims = dims;
  auto& cp = b.completion;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) cp.encoder[i].down = ConvParams::zeros(dims.down_kernel, C, C);
    for (auto& blk : cp.encoder[i].blocks) blk = weights_detail::hypercross_block(C);
  }
  cp.msca.dw = DepthwiseParams::zeros(kernel_offsets(KernelShape::cubic, dims.msca_dw_size), C);
  for (auto len : dims.msca_strips)
    cp.msca.branches.push_back({DepthwiseParams::zeros(strip_offsets(len, 0), C),
                                DepthwiseParams::zeros(strip_offsets(len, 1), C),
                                DepthwiseParams::zeros(strip_offsets(len, 2), C)});
  cp.msca.pointwise = Matrix(C, C);
  cp.bottleneck_head = Matrix(C, S);
  for (auto& d : cp.decoder) {
    d.up = ConvParams::zeros(dims.up_kernel, C, C);
    d.fusion = ConvParams::zeros(dims.fusion_kernel, C, C);
    for (auto& blk : d.blocks) blk = weights_detail::hypercross_block(C);
    d.head = Matrix(C, S);
  }
  b.decoder.queries = Matrix(dims.queries, C);
  b.decoder.cross = weights_detail::zero_attention(C, dims.heads);
  b.decoder.self = weights_detail::zero_attention(C, dims.heads);
  b.decoder.class_head = Matrix(C, S);
  b.decoder.mask_head = Matrix(C, C);
  b.empty_embedding.assign(static_cast<std::size_t>(C), 0.0f);
  return b;
}

// Every parameter array in a fixed traversal order.
inline std::vector<weights_detail::ParamRef> parameter_arrays(WeightsBundle& b) {
  using namespace weights_detail;
  std::vector<ParamRef> out;
  auto& cp = b.completion;
  for (auto& e : cp.encoder) {
    if (e.down) add_conv(out, *e.down);
    for (auto& blk : e.blocks) add_block(out, blk);
  }
  add_depthwise(out, cp.msca.dw);
  for (auto& br : cp.msca.branches)
    for (auto& s : br) add_depthwise(out, s);
  out.push_back({cp.msca.pointwise.data, cp.msca.pointwise.rows});
  out.push_back({cp.bottleneck_head.data, cp.bottleneck_head.rows});
  for (auto& d : cp.decoder) {
    add_conv(out, d.up);
    add_conv(out, d.fusion);
    for (auto& blk : d.blocks) add_block(out, blk);
    out.push_back({d.head.data, d.head.rows});
  }
  // Queries and the empty embedding are embeddings rather than projections;
  // they are drawn at unit-fan scale.
  out.push_back({b.decoder.queries.data, 1});
  add_attention(out, b.decoder.cross);
  add_attention(out, b.decoder.self);
  out.push_back({b.decoder.class_head.data, b.decoder.class_head.rows});
  out.push_back({b.decoder.mask_head.data, b.decoder.mask_head.rows});
  out.push_back({b.empty_embedding, 1});
  return out;
}

// Weights uniform in +-sqrt(3 / fan_in) (variance 1 / fan_in), biases zero.
inline WeightsBundle init_weights(std::uint64_t seed, const ArchitectureDims& dims) {
  WeightsBundle b = make_bundle(dims);
  Rng rng(seed);
  for (auto& ref : parameter_arrays(b)) {
    if (ref.fan_in == 0) continue;
    const double bound = std::sqrt(3.0 / ref.fan_in);
    for (auto& v : ref.values) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return b;
}

// theta_ema' = beta * theta_ema + (1 - beta) * theta, over every array.
inline WeightsBundle ema_update(const WeightsBundle& ema, const WeightsBundle& current, double beta) {
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::invalid_argument, "EMA momentum must lie in [0, 1]");
  require(ema.dims == current.dims, ErrorCode::dim_mismatch, "EMA bundles have different architectures");
  WeightsBundle out = ema;
  WeightsBundle cur = current;
  auto dst = parameter_arrays(out);
  auto src = parameter_arrays(cur);
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = 0; j < dst[i].values.size(); ++j)
      dst[i].values[j] =
          static_cast<float>(beta * dst[i].values[j] + (1.0 - beta) * static_cast<double>(src[i].values[j]));
  return out;
}

inline constexpr char kWeightsMagic[4] = {'O', 'V', 'W', '1'};

// Layout (little-endian): magic, u32 C, S, K, heads, msca_dw_size,
// u32 strip count + strips, then for down/up/fusion kernels u32 shape and
// size, then u32 array count and per array u32 length + f32 values.
inline std::vector<std::uint8_t> serialize(const WeightsBundle& bundle) {
  using ovt_detail::put_f32;
  using ovt_detail::put_u32;
  WeightsBundle b = bundle;
  std::vector<std::uint8_t> out(kWeightsMagic, kWeightsMagic + 4);
  const auto& d = b.dims;
  for (auto v : {d.channels, d.classes, d.queries, d.heads, d.msca_dw_size}) put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(d.msca_strips.size()));
  for (auto s : d.msca_strips) put_u32(out, static_cast<std::uint32_t>(s));
  for (const KernelSpec* k : {&d.down_kernel, &d.up_kernel, &d.fusion_kernel}) {
    put_u32(out, k->shape == KernelShape::cubic ? 0u : 1u);
    put_u32(out, static_cast<std::uint32_t>(k->size));
  }
  const auto arrays = parameter_arrays(b);
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(out, static_cast<std::uint32_t>(a.values.size()));
    for (float v : a.values) put_f32(out, v);
  }
  return out;
}

inline WeightsBundle deserialize(std::span<const std::uint8_t> bytes) {
  ovt_detail::Reader r(bytes);
  r.need(4);
  require(std::memcmp(bytes.data(), kWeightsMagic, 4) == 0, ErrorCode::magic_mismatch, "not an OVW1 weights file");
  r.skip(4);
  ArchitectureDims d;
  d.channels = static_cast<std::int32_t>(r.u32());
  d.classes = static_cast<std::int32_t>(r.u32());
  d.queries = static_cast<std::int32_t>(r.u32());
  d.heads = static_cast<std::int32_t>(r.u32());
  d.msca_dw_size = static_cast<std::int32_t>(r.u32());
  const auto strips = r.u32();
  require(strips <= 64, ErrorCode::dimension_overflow, "implausible MSCA strip count");
  d.msca_strips.clear();
  for (std::uint32_t i = 0; i < strips; ++i) d.msca_strips.push_back(static_cast<std::int32_t>(r.u32()));
  for (KernelSpec* k : {&d.down_kernel, &d.up_kernel, &d.fusion_kernel}) {
    const auto shape = r.u32();
    const auto size = static_cast<std::int32_t>(r.u32());
    require(shape <= 1, ErrorCode::magic_mismatch, "unknown kernel shape tag");
    *k = KernelSpec::make(shape == 0 ? KernelShape::cubic : KernelShape::hyper_cross, size);
  }
  require(d.channels <= 4096 && d.classes <= 256 && d.queries <= 4096, ErrorCode::dimension_overflow,
          "architecture dims out of range");
  WeightsBundle b = make_bundle(d);
  auto arrays = parameter_arrays(b);
  require(r.u32() == arrays.size(), ErrorCode::dim_mismatch, "array count does not match the architecture");
  for (auto& a : arrays) {
    require(r.u32() == a.values.size(), ErrorCode::dim_mismatch, "array length does not match the architecture");
    for (auto& v : a.values) v = std::bit_cast<float>(r.u32());
  }
  return b;
}

// FNV-1a over the serialized bytes.
inline std::uint64_t bundle_hash(const WeightsBundle& b) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t byte : serialize(b)) {
    h ^= byte;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline void write_weights(const std::filesystem::path& path, const WeightsBundle& b) {
  write_bytes(path, serialize(b));
}

inline WeightsBundle read_weights(const std::filesystem::path& path) { return deserialize(read_bytes(path)); }

}  // namespace sugvoxel
