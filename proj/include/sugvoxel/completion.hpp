#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sugvoxel/error.hpp"
#include "sugvoxel/kernels.hpp"
#include "sugvoxel/linalg.hpp"
#include "sugvoxel/sparse_conv.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

// Per-channel (depth-wise) convolution over an explicit offset set:
// out[c][ch] = bias[ch] + sum_o weights[o][ch] * in[c + o][ch].
struct DepthwiseParams {
  std::vector<Coord3> offsets;
  std::vector<std::vector<float>> weights;  // one C-vector per offset
  std::vector<float> bias;

  std::int32_t channels() const { return static_cast<std::int32_t>(bias.size()); }

  static DepthwiseParams zeros(std::vector<Coord3> offsets, std::int32_t channels) {
    DepthwiseParams p;
    p.weights.assign(offsets.size(), std::vector<float>(static_cast<std::size_t>(channels), 0.0f));
    p.offsets = std::move(offsets);
    p.bias.assign(static_cast<std::size_t>(channels), 0.0f);
    return p;
  }

  // Centre tap 1, others 0.
  static DepthwiseParams identity(std::vector<Coord3> offsets, std::int32_t channels) {
    DepthwiseParams p = zeros(std::move(offsets), channels);
    for (std::size_t k = 0; k < p.offsets.size(); ++k)
      if (p.offsets[k] == Coord3{0, 0, 0}) std::fill(p.weights[k].begin(), p.weights[k].end(), 1.0f);
    return p;
  }

  friend bool operator==(const DepthwiseParams&, const DepthwiseParams&) = default;
};

// Centred strip of length k along one axis (0 = x, 1 = y, 2 = z).
inline std::vector<Coord3> strip_offsets(std::int32_t length, int axis) {
  std::vector<Coord3> out;
  const std::int32_t lo = -(length - 1) / 2;
  for (std::int32_t i = lo; i < lo + length; ++i) {
    Coord3 c{};
    (axis == 0 ? c.x : axis == 1 ? c.y : c.z) = i;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct MscaParams {
  DepthwiseParams dw;
  // Each branch is a sequence of x-, y- and z-strips of the same length.
  std::vector<std::array<DepthwiseParams, 3>> branches;
  Matrix pointwise;

  friend bool operator==(const MscaParams&, const MscaParams&) = default;
};

inline DenseVoxelTensor depthwise_conv_dense(const DenseVoxelTensor& in, const DepthwiseParams& p) {
  require(p.channels() == in.channels(), ErrorCode::channel_mismatch, "depth-wise conv channel mismatch");
  DenseVoxelTensor out(in.grid(), in.channels());
  const auto C = static_cast<std::size_t>(in.channels());
  const auto n = in.grid().cell_count();
  std::vector<double> acc(C);
  for (std::int64_t i = 0; i < n; ++i) {
    const Coord3 c = in.grid().coord_of(i);
    for (std::size_t ch = 0; ch < C; ++ch) acc[ch] = p.bias[ch];
    for (std::size_t k = 0; k < p.offsets.size(); ++k) {
      const Coord3 src = c + p.offsets[k];
      if (!in.grid().contains(src)) continue;
      const auto row = in.at(src);
      for (std::size_t ch = 0; ch < C; ++ch) acc[ch] += static_cast<double>(p.weights[k][ch]) * row[ch];
    }
    auto dst = out.at(c);
    for (std::size_t ch = 0; ch < C; ++ch) dst[ch] = static_cast<float>(acc[ch]);
  }
  return out;
}

// Multi-scale convolutional attention on the bottleneck: the tensor is
// densified over its whole grid, attn = pointwise(a + sum_b branch_b(a)) with
// a = dw(dense), and the output is dense * attn read back on the original
// active set only.
inline SparseVoxelTensor msca_bottleneck(const SparseVoxelTensor& v3, const MscaParams& p) {
  require(p.pointwise.rows == v3.channels() && p.pointwise.cols == v3.channels(), ErrorCode::channel_mismatch,
          "MSCA pointwise matrix must be C x C");
  if (v3.empty()) return v3;
  const DenseVoxelTensor dense = densify(v3, 0.0f);
  const DenseVoxelTensor a = depthwise_conv_dense(dense, p.dw);
  std::vector<float> summed(a.values().begin(), a.values().end());
  for (const auto& branch : p.branches) {
    DenseVoxelTensor b = a;
    for (const auto& strip : branch) b = depthwise_conv_dense(b, strip);
    const auto bv = b.values();
    for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += bv[i];
  }
  const auto C = static_cast<std::size_t>(v3.channels());
  std::vector<float> features(v3.size() * C);
  for (std::size_t i = 0; i < v3.size(); ++i) {
    const Coord3 c = v3.coords()[i];
    const std::size_t cell = static_cast<std::size_t>(v3.grid().linear_index(c));
    const std::span<const float> s(summed.data() + cell * C, C);
    const auto attn = row_times(s, p.pointwise);
    const auto in = v3.feature(i);
    for (std::size_t ch = 0; ch < C; ++ch) features[i * C + ch] = in[ch] * attn[ch];
  }
  return with_features(v3, v3.channels(), std::move(features));
}

// probs[x] = softmax(v[x] * head).
inline ProxyOccMap proxy_occupancy(const SparseVoxelTensor& v, const Matrix& head) {
  require(head.rows == v.channels() && head.cols >= 1, ErrorCode::channel_mismatch,
          "proxy head must be C x S");
  const auto S = static_cast<std::size_t>(head.cols);
  std::vector<float> probs(v.size() * S);
  std::vector<double> logits(S);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::fill(logits.begin(), logits.end(), 0.0);
    accumulate_row_times(v.feature(i), head, logits);
    const auto p = softmax(std::span<const double>(logits));
    for (std::size_t s = 0; s < S; ++s) probs[i * S + s] = static_cast<float>(p[s]);
  }
  return {with_features(v, head.cols, std::move(probs))};
}

struct EncoderStageParams {
  std::optional<ConvParams> down;  // absent for stage 0
  std::array<ResidualBlockParams, 2> blocks;

  friend bool operator==(const EncoderStageParams&, const EncoderStageParams&) = default;
};

struct DecoderStageParams {
  ConvParams up;
  ConvParams fusion;
  std::array<ResidualBlockParams, 2> blocks;
  Matrix head;

  friend bool operator==(const DecoderStageParams&, const DecoderStageParams&) = default;
};

struct CompletionParams {
  std::array<EncoderStageParams, 4> encoder;
  MscaParams msca;
  Matrix bottleneck_head;
  std::array<DecoderStageParams, 3> decoder;

  friend bool operator==(const CompletionParams&, const CompletionParams&) = default;
};

struct CompletionConfig {
  float tau_p = 0.1f;
  bool prune_enabled = true;
};

struct StageStats {
  std::string name;
  std::int32_t stride = 0;
  std::uint64_t active_in = 0;
  std::uint64_t active_before_prune = 0;
  std::uint64_t active_after_prune = 0;
  std::uint64_t lookups = 0;
  std::uint64_t gathers = 0;
  double wall_ms = 0.0;
};

namespace completion_detail {

class StageTimer {
 public:
  explicit StageTimer(StageStats& s) : stats_(s), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    stats_.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  StageStats& stats_;
  std::chrono::steady_clock::time_point start_;
};

inline void record(StageStats& s, const GatherStats& g) {
  s.lookups += g.lookups;
  s.gathers += g.gathers;
}

}  // namespace completion_detail

// V_i at stride 2^(i+1) relative to full resolution when v0 is at stride 2.
inline std::array<SparseVoxelTensor, 4> encode(const SparseVoxelTensor& v0, const CompletionParams& p,
                                               std::vector<StageStats>* stats = nullptr) {
  std::array<SparseVoxelTensor, 4> out;
  SparseVoxelTensor cur = v0;
  for (std::size_t i = 0; i < 4; ++i) {
    StageStats st;
    st.name = "encoder" + std::to_string(i);
    GatherStats g;
    {
      completion_detail::StageTimer timer(st);
      st.active_in = cur.size();
      if (i > 0) {
        require(p.encoder[i].down.has_value(), ErrorCode::invalid_argument,
                "encoder stage " + std::to_string(i) + " lacks a downsampling conv");
        cur = strided_conv_down(cur, *p.encoder[i].down, 2, &g);
      }
      for (const auto& block : p.encoder[i].blocks) cur = hypercross_residual_block(cur, block, &g);
      st.stride = cur.grid().stride;
      st.active_before_prune = st.active_after_prune = cur.size();
    }
    completion_detail::record(st, g);
    if (stats) stats->push_back(st);
    out[i] = cur;
  }
  return out;
}

// Union of the two supports, rows summed where both exist.
inline SparseVoxelTensor fuse_sum(const SparseVoxelTensor& a, const SparseVoxelTensor& b) {
  require(a.grid() == b.grid(), ErrorCode::stride_mismatch, "fusion inputs live on different grids");
  require(a.channels() == b.channels(), ErrorCode::channel_mismatch, "fusion inputs differ in channels");
  const auto C = static_cast<std::size_t>(a.channels());
  std::vector<Coord3> coords;
  std::vector<float> features;
  coords.reserve(a.size() + b.size());
  features.reserve((a.size() + b.size()) * C);
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a.coords()[i] < b.coords()[j])) {
      coords.push_back(a.coords()[i]);
      auto f = a.feature(i++);
      features.insert(features.end(), f.begin(), f.end());
    } else if (i == a.size() || b.coords()[j] < a.coords()[i]) {
      coords.push_back(b.coords()[j]);
      auto f = b.feature(j++);
      features.insert(features.end(), f.begin(), f.end());
    } else {
      coords.push_back(a.coords()[i]);
      auto fa = a.feature(i++);
      auto fb = b.feature(j++);
      for (std::size_t c = 0; c < C; ++c) features.push_back(fa[c] + fb[c]);
    }
  }
  return SparseVoxelTensor::from_entries(a.grid(), a.channels(), std::move(coords), std::move(features));
}

struct DecodeStageResult {
  SparseVoxelTensor tensor;
  ProxyOccMap proxy;
};

// upsample -> fuse with skip -> fusion conv -> residual blocks -> proxy head
// -> soft prune. The returned proxy map is restricted to the survivors.
inline DecodeStageResult decode_stage(const SparseVoxelTensor& coarse, const SparseVoxelTensor& skip,
                                      const DecoderStageParams& p, const CompletionConfig& cfg,
                                      StageStats* stats = nullptr) {
  require(coarse.grid().stride == 2 * skip.grid().stride, ErrorCode::stride_mismatch,
          "coarse input must be at twice the skip stride");
  GatherStats g;
  const SparseVoxelTensor up = generative_transpose_conv(coarse, p.up, 2, &g);
  SparseVoxelTensor fused = submanifold_conv(fuse_sum(up, skip), p.fusion, &g);
  for (const auto& block : p.blocks) fused = hypercross_residual_block(fused, block, &g);
  ProxyOccMap proxy = proxy_occupancy(fused, p.head);
  if (stats) {
    stats->active_in = coarse.size();
    stats->active_before_prune = fused.size();
    stats->stride = fused.grid().stride;
    completion_detail::record(*stats, g);
  }
  if (!cfg.prune_enabled) {
    if (stats) stats->active_after_prune = fused.size();
    return {std::move(fused), std::move(proxy)};
  }
  const auto keep = prune_mask(proxy, cfg.tau_p);
  DecodeStageResult out{select(fused, keep), {select(proxy.probs, keep)}};
  if (stats) stats->active_after_prune = out.tensor.size();
  return out;
}

struct CompletionResult {
  SparseVoxelTensor final;
  std::array<ProxyOccMap, 4> proxies;  // coarsest (bottleneck) to finest
  std::vector<StageStats> stats;
};

inline CompletionResult complete(const SparseVoxelTensor& v0, const CompletionParams& p, const CompletionConfig& cfg) {
  CompletionResult result;
  auto enc = encode(v0, p, &result.stats);

  StageStats bott;
  bott.name = "bottleneck";
  SparseVoxelTensor cur;
  {
    completion_detail::StageTimer timer(bott);
    cur = msca_bottleneck(enc[3], p.msca);
    result.proxies[0] = proxy_occupancy(cur, p.bottleneck_head);
    bott.stride = cur.grid().stride;
    bott.active_in = enc[3].size();
    bott.active_before_prune = bott.active_after_prune = cur.size();
  }
  result.stats.push_back(bott);

  for (std::size_t s = 0; s < 3; ++s) {
    StageStats st;
    st.name = "decoder" + std::to_string(s);
    DecodeStageResult r;
    {
      completion_detail::StageTimer timer(st);
      r = decode_stage(cur, enc[2 - s], p.decoder[s], cfg, &st);
    }
    result.stats.push_back(st);
    cur = std::move(r.tensor);
    result.proxies[s + 1] = std::move(r.proxy);
  }
  result.final = std::move(cur);
  return result;
}

}  // namespace sugvoxel
