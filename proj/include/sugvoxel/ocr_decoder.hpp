#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sugvoxel/error.hpp"
#include "sugvoxel/linalg.hpp"
#include "sugvoxel/sparse_conv.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

// Current object-contextual representation R (S x C), its running average
// R_global and the momentum used to update it.
struct OcrState {
  Matrix R;
  Matrix R_global;
  float alpha = 0.9f;

  static OcrState zeros(std::int32_t classes, std::int32_t channels, float alpha) {
    require(alpha > 0.0f && alpha < 1.0f, ErrorCode::invalid_argument, "OCR momentum must lie in (0, 1)");
    return {Matrix(classes, channels), Matrix(classes, channels), alpha};
  }
};

// R[s] = sum_x softmax_x(proxy[x][s]) * v[x]; the softmax runs over the
// active voxels, so every row is a convex combination of voxel features.
inline Matrix compute_ocr(const SparseVoxelTensor& v, const ProxyOccMap& proxy) {
  require(!v.empty(), ErrorCode::empty_active_set, "cannot aggregate context over an empty active set");
  require(proxy.probs.same_support(v), ErrorCode::occ_domain_mismatch, "proxy map must cover the active set");
  const std::int32_t S = proxy.classes();
  const std::int32_t C = v.channels();
  Matrix R(S, C);
  std::vector<double> scores(v.size());
  std::vector<double> acc(static_cast<std::size_t>(C));
  for (std::int32_t s = 0; s < S; ++s) {
    for (std::size_t x = 0; x < v.size(); ++x) scores[x] = proxy.probs.feature(x)[static_cast<std::size_t>(s)];
    const auto w = softmax(std::span<const double>(scores));
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t x = 0; x < v.size(); ++x) {
      const auto f = v.feature(x);
      for (std::int32_t c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += w[x] * f[static_cast<std::size_t>(c)];
    }
    for (std::int32_t c = 0; c < C; ++c) R(s, c) = static_cast<float>(acc[static_cast<std::size_t>(c)]);
  }
  return R;
}

// R_global' = alpha * R_global + (1 - alpha) * R_new; R becomes R_new.
inline OcrState update_global_ocr(const OcrState& state, const Matrix& R_new) {
  require(R_new.rows == state.R_global.rows && R_new.cols == state.R_global.cols, ErrorCode::dim_mismatch,
          "OCR shape mismatch");
  OcrState next = state;
  next.R = R_new;
  const double a = state.alpha;
  for (std::size_t i = 0; i < R_new.data.size(); ++i)
    next.R_global.data[i] = static_cast<float>(a * state.R_global.data[i] + (1.0 - a) * R_new.data[i]);
  return next;
}

struct AttentionParams {
  Matrix wq, wk, wv, wo;
  std::int32_t heads = 1;

  static AttentionParams identity(std::int32_t channels, std::int32_t heads) {
    const Matrix I = Matrix::identity(channels);
    return {I, I, I, I, heads};
  }

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

// Softmax weights of every head, each queries x keys.
struct AttentionTrace {
  std::vector<Matrix> prior;
  std::vector<Matrix> cross;
  std::vector<Matrix> self;
};

// Standard multi-head scaled dot-product attention with per-head slices of
// the projected queries, keys and values.
inline Matrix multi_head_attention(const Matrix& queries, const Matrix& keys, const Matrix& values,
                                   const AttentionParams& p, std::vector<Matrix>* trace = nullptr) {
  const std::int32_t C = queries.cols;
  require(p.heads >= 1 && C % p.heads == 0, ErrorCode::invalid_argument, "channels must divide evenly into heads");
  require(keys.rows == values.rows, ErrorCode::dim_mismatch, "keys and values differ in count");
  const Matrix q = matmul(queries, p.wq);
  const Matrix k = matmul(keys, p.wk);
  const Matrix v = matmul(values, p.wv);
  const std::int32_t dh = C / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix concat(queries.rows, C);
  std::vector<double> logits(static_cast<std::size_t>(keys.rows));
  for (std::int32_t h = 0; h < p.heads; ++h) {
    Matrix weights(queries.rows, keys.rows);
    for (std::int32_t i = 0; i < queries.rows; ++i) {
      for (std::int32_t j = 0; j < keys.rows; ++j) {
        double dot = 0.0;
        for (std::int32_t c = h * dh; c < (h + 1) * dh; ++c) dot += static_cast<double>(q(i, c)) * k(j, c);
        logits[static_cast<std::size_t>(j)] = dot * scale;
      }
      const auto a = softmax(std::span<const double>(logits));
      for (std::int32_t j = 0; j < keys.rows; ++j) weights(i, j) = static_cast<float>(a[static_cast<std::size_t>(j)]);
      for (std::int32_t c = h * dh; c < (h + 1) * dh; ++c) {
        double acc = 0.0;
        for (std::int32_t j = 0; j < keys.rows; ++j) acc += a[static_cast<std::size_t>(j)] * v(j, c);
        concat(i, c) = static_cast<float>(acc);
      }
    }
    if (trace) trace->push_back(std::move(weights));
  }
  return matmul(concat, p.wo);
}

struct QuerySet {
  Matrix queries;  // K x C
  AttentionParams cross;
  AttentionParams self;
  Matrix class_head;  // C x S
  Matrix mask_head;   // C x C

  std::int32_t count() const { return queries.rows; }

  friend bool operator==(const QuerySet&, const QuerySet&) = default;
};

// Pools a per-query prior from R_global (attention over its S rows), adds it
// to the queries, cross-attends to R, then runs one self-attention layer.
// Both attention layers are residual.
inline Matrix query_context_attention(const QuerySet& q, const OcrState& state, AttentionTrace* trace = nullptr) {
  const std::int32_t K = q.queries.rows;
  const std::int32_t C = q.queries.cols;
  require(K >= 1, ErrorCode::invalid_argument, "need at least one query");
  require(state.R.cols == C && state.R_global.cols == C, ErrorCode::channel_mismatch,
          "OCR channels do not match the queries");

  Matrix prior_weights(K, state.R_global.rows);
  Matrix q_tilde = q.queries;
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));
  std::vector<double> logits(static_cast<std::size_t>(state.R_global.rows));
  for (std::int32_t k = 0; k < K; ++k) {
    for (std::int32_t s = 0; s < state.R_global.rows; ++s) {
      double dot = 0.0;
      for (std::int32_t c = 0; c < C; ++c) dot += static_cast<double>(q.queries(k, c)) * state.R_global(s, c);
      logits[static_cast<std::size_t>(s)] = dot * scale;
    }
    const auto w = softmax(std::span<const double>(logits));
    for (std::int32_t c = 0; c < C; ++c) {
      double prior = 0.0;
      for (std::int32_t s = 0; s < state.R_global.rows; ++s) prior += w[static_cast<std::size_t>(s)] * state.R_global(s, c);
      q_tilde(k, c) = static_cast<float>(q.queries(k, c) + prior);
    }
    for (std::int32_t s = 0; s < state.R_global.rows; ++s) prior_weights(k, s) = static_cast<float>(w[static_cast<std::size_t>(s)]);
  }
  if (trace) trace->prior.push_back(prior_weights);

  const Matrix cross = multi_head_attention(q_tilde, state.R, state.R, q.cross, trace ? &trace->cross : nullptr);
  Matrix q1 = q_tilde;
  for (std::size_t i = 0; i < q1.data.size(); ++i) q1.data[i] += cross.data[i];
  const Matrix self = multi_head_attention(q1, q1, q1, q.self, trace ? &trace->self : nullptr);
  Matrix q2 = q1;
  for (std::size_t i = 0; i < q2.data.size(); ++i) q2.data[i] += self.data[i];
  return q2;
}

struct HeadOutputs {
  Matrix P;  // K x S class distributions
  Matrix E;  // K x C mask embeddings
};

inline HeadOutputs predict_heads(const Matrix& refined, const QuerySet& q) {
  require(q.class_head.rows == refined.cols && q.mask_head.rows == refined.cols, ErrorCode::channel_mismatch,
          "head matrices do not match query channels");
  HeadOutputs out{Matrix(refined.rows, q.class_head.cols), matmul(refined, q.mask_head)};
  const Matrix logits = matmul(refined, q.class_head);
  for (std::int32_t k = 0; k < refined.rows; ++k) {
    const auto p = softmax(logits.row(k));
    std::copy(p.begin(), p.end(), out.P.row(k).begin());
  }
  return out;
}

enum class UpsampleMode { nearest, trilinear };

struct ComposeOptions {
  // Cells outside the sparse support are labelled free space.
  bool gate_inactive = false;
  UpsampleMode upsample = UpsampleMode::nearest;
};

struct OccupancyPrediction {
  DenseVoxelTensor half_scores;  // S channels at the half-resolution grid
  LabelGrid full_labels;         // stride 1, exactly twice the half dims
};

// Lowest index wins ties, so all-zero rows map to class 0.
inline std::uint8_t argmax_label(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t s = 1; s < row.size(); ++s)
    if (row[s] > row[best]) best = s;
  return static_cast<std::uint8_t>(best);
}

inline VoxelGridSpec doubled_label_grid(const VoxelGridSpec& half) {
  VoxelGridSpec g = half;
  const auto d = half.dims();
  g.full_dims = {2 * d[0], 2 * d[1], 2 * d[2]};
  g.voxel_size = half.cell_size() / 2.0f;
  g.stride = 1;
  return g;
}

inline LabelGrid upsample_labels(const DenseVoxelTensor& half_scores, const std::vector<std::uint8_t>* support,
                                 UpsampleMode mode) {
  const VoxelGridSpec& hg = half_scores.grid();
  LabelGrid out(doubled_label_grid(hg));
  const auto fd = out.grid.dims();
  const auto hd = hg.dims();
  const auto S = static_cast<std::size_t>(half_scores.channels());
  std::vector<float> interp(S);
  for (std::int32_t x = 0; x < fd[0]; ++x)
    for (std::int32_t y = 0; y < fd[1]; ++y)
      for (std::int32_t z = 0; z < fd[2]; ++z) {
        const Coord3 parent{x / 2, y / 2, z / 2};
        if (support && !(*support)[static_cast<std::size_t>(hg.linear_index(parent))]) {
          out.at({x, y, z}) = 0;
          continue;
        }
        if (mode == UpsampleMode::nearest) {
          out.at({x, y, z}) = argmax_label(half_scores.at(parent));
          continue;
        }
        // Trilinear on scores: full-res cell centre expressed in half-res cell units.
        const std::array<double, 3> pos{(x + 0.5) / 2.0 - 0.5, (y + 0.5) / 2.0 - 0.5, (z + 0.5) / 2.0 - 0.5};
        std::array<std::int32_t, 3> lo{};
        std::array<double, 3> frac{};
        for (int a = 0; a < 3; ++a) {
          const double p = std::clamp(pos[a], 0.0, static_cast<double>(hd[a] - 1));
          lo[a] = std::min(static_cast<std::int32_t>(std::floor(p)), hd[a] - 1);
          frac[a] = p - lo[a];
        }
        std::fill(interp.begin(), interp.end(), 0.0f);
        for (int corner = 0; corner < 8; ++corner) {
          double w = 1.0;
          Coord3 c{};
          for (int a = 0; a < 3; ++a) {
            const bool hi = (corner >> a) & 1;
            const std::int32_t idx = std::min(lo[a] + (hi ? 1 : 0), hd[a] - 1);
            (a == 0 ? c.x : a == 1 ? c.y : c.z) = idx;
            w *= hi ? frac[a] : 1.0 - frac[a];
          }
          if (w == 0.0) continue;
          const auto row = half_scores.at(c);
          for (std::size_t s = 0; s < S; ++s) interp[s] += static_cast<float>(w * row[s]);
        }
        out.at({x, y, z}) = argmax_label(interp);
      }
  return out;
}

// half_scores[c] = sum_k P[k] * sigmoid(E[k] . feat[c]) with feat the
// densified volume (fill at inactive cells); labels are the upsampled argmax.
inline OccupancyPrediction compose_occupancy(const Matrix& P, const Matrix& E, const SparseVoxelTensor& v,
                                             std::span<const float> fill, const ComposeOptions& opts = {}) {
  require(P.rows == E.rows, ErrorCode::dim_mismatch, "score and mask embedding counts differ");
  require(E.cols == v.channels(), ErrorCode::channel_mismatch, "mask embeddings do not match feature channels");
  const DenseVoxelTensor feats = densify(v, fill);
  const std::int32_t K = P.rows;
  const std::int32_t S = P.cols;
  const auto C = static_cast<std::size_t>(v.channels());
  DenseVoxelTensor scores(v.grid(), S);
  const auto cells = v.grid().cell_count();
  std::vector<double> acc(static_cast<std::size_t>(S));
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const Coord3 c = v.grid().coord_of(cell);
    const auto f = feats.at(c);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int32_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (std::size_t ch = 0; ch < C; ++ch) dot += static_cast<double>(E(k, static_cast<std::int32_t>(ch))) * f[ch];
      const double m = static_cast<double>(sigmoid(static_cast<float>(dot)));
      if (m == 0.0) continue;
      for (std::int32_t s = 0; s < S; ++s) acc[static_cast<std::size_t>(s)] += P(k, s) * m;
    }
    auto dst = scores.at(c);
    for (std::int32_t s = 0; s < S; ++s) dst[static_cast<std::size_t>(s)] = static_cast<float>(acc[static_cast<std::size_t>(s)]);
  }
  std::vector<std::uint8_t> support;
  if (opts.gate_inactive) support = activity_mask(v);
  LabelGrid labels = upsample_labels(scores, opts.gate_inactive ? &support : nullptr, opts.upsample);
  return {std::move(scores), std::move(labels)};
}

}  // namespace sugvoxel
