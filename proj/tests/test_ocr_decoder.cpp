#include <gtest/gtest.h>

#include <cmath>

#include "sugvoxel/ocr_decoder.hpp"
#include "support/generators.hpp"

using namespace sugvoxel;

namespace {

ProxyOccMap random_proxy(Rng& rng, const SparseVoxelTensor& v, std::int32_t S) {
  std::vector<float> f;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto row = testgen::random_distribution(rng, static_cast<std::size_t>(S));
    f.insert(f.end(), row.begin(), row.end());
  }
  return {with_features(v, S, std::move(f))};
}

Matrix constant(std::int32_t r, std::int32_t c, float v) { return Matrix(r, c, v); }

// Reference attention: every head slice spelled out with plain vectors.
Matrix attention_oracle(const Matrix& Q, const Matrix& K, const Matrix& V, const AttentionParams& p) {
  const auto project = [](const Matrix& X, const Matrix& W) {
    Matrix out(X.rows, W.cols);
    for (std::int32_t i = 0; i < X.rows; ++i)
      for (std::int32_t j = 0; j < W.cols; ++j) {
        double s = 0.0;
        for (std::int32_t k = 0; k < X.cols; ++k) s += static_cast<double>(X(i, k)) * W(k, j);
        out(i, j) = static_cast<float>(s);
      }
    return out;
  };
  const Matrix q = project(Q, p.wq), k = project(K, p.wk), v = project(V, p.wv);
  const std::int32_t C = Q.cols, dh = C / p.heads;
  Matrix heads_out(Q.rows, C);
  for (std::int32_t h = 0; h < p.heads; ++h)
    for (std::int32_t i = 0; i < Q.rows; ++i) {
      std::vector<double> e(static_cast<std::size_t>(K.rows));
      double z = 0.0, mx = -1e300;
      for (std::int32_t j = 0; j < K.rows; ++j) {
        double dot = 0.0;
        for (std::int32_t c = 0; c < dh; ++c) dot += static_cast<double>(q(i, h * dh + c)) * k(j, h * dh + c);
        e[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, e[static_cast<std::size_t>(j)]);
      }
      for (auto& x : e) z += (x = std::exp(x - mx));
      for (std::int32_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::int32_t j = 0; j < K.rows; ++j) acc += e[static_cast<std::size_t>(j)] / z * v(j, h * dh + c);
        heads_out(i, h * dh + c) = static_cast<float>(acc);
      }
    }
  return project(heads_out, p.wo);
}

QuerySet random_queries(Rng& rng, std::int32_t K, std::int32_t C, std::int32_t S, std::int32_t heads) {
  QuerySet q;
  q.queries = testgen::random_matrix(rng, K, C);
  for (AttentionParams* a : {&q.cross, &q.self}) {
    a->wq = testgen::random_matrix(rng, C, C, 0.5);
    a->wk = testgen::random_matrix(rng, C, C, 0.5);
    a->wv = testgen::random_matrix(rng, C, C, 0.5);
    a->wo = testgen::random_matrix(rng, C, C, 0.5);
    a->heads = heads;
  }
  q.class_head = testgen::random_matrix(rng, C, S);
  q.mask_head = testgen::random_matrix(rng, C, C);
  return q;
}

}  // namespace

TEST(ComputeOcr, SingleVoxelGivesItsFeatureInEveryRow) {
  const auto v = SparseVoxelTensor::from_entries(testgen::grid(2, 2, 2), 3, {{1, 0, 1}}, {0.5f, -1.0f, 2.0f});
  const ProxyOccMap p{with_features(v, 4, {0.1f, 0.2f, 0.3f, 0.4f})};
  const Matrix R = compute_ocr(v, p);
  for (std::int32_t s = 0; s < 4; ++s)
    for (std::int32_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(R(s, c), v.feature(0)[static_cast<std::size_t>(c)]);
}

TEST(ComputeOcr, EqualScoresAverage) {
  const auto v =
      SparseVoxelTensor::from_entries(testgen::grid(2, 2, 2), 2, {{0, 0, 0}, {1, 1, 1}}, {1.0f, 4.0f, 3.0f, -2.0f});
  const ProxyOccMap p{with_features(v, 2, {0.5f, 0.5f, 0.5f, 0.5f})};
  const Matrix R = compute_ocr(v, p);
  EXPECT_FLOAT_EQ(R(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(R(0, 1), 1.0f);
  EXPECT_FLOAT_EQ(R(1, 0), 2.0f);
}

TEST(ComputeOcr, MatchesWeightedSumOracleAndIsConvex) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<Coord3> coords;
    for (std::int32_t i = 0; i < 20; ++i) coords.push_back({i % 5, i / 5, 0});
    const auto v = SparseVoxelTensor::from_entries(testgen::grid(5, 4, 1), 6, coords, testgen::random_floats(rng, 120));
    const auto p = random_proxy(rng, v, 5);
    const Matrix R = compute_ocr(v, p);
    for (std::int32_t s = 0; s < 5; ++s) {
      double z = 0.0;
      for (std::size_t x = 0; x < 20; ++x) z += std::exp(static_cast<double>(p.probs.feature(x)[s]));
      for (std::int32_t c = 0; c < 6; ++c) {
        double want = 0.0, lo = 1e9, hi = -1e9;
        for (std::size_t x = 0; x < 20; ++x) {
          const double f = v.feature(x)[static_cast<std::size_t>(c)];
          want += std::exp(static_cast<double>(p.probs.feature(x)[s])) / z * f;
          lo = std::min(lo, f);
          hi = std::max(hi, f);
        }
        EXPECT_NEAR(R(s, c), want, 1e-6);
        EXPECT_GE(R(s, c), lo - 1e-6);
        EXPECT_LE(R(s, c), hi + 1e-6);
      }
    }
  }
}

TEST(ComputeOcr, Errors) {
  const auto g = testgen::grid(2, 2, 2);
  const SparseVoxelTensor empty(g, 2);
  try {
    (void)compute_ocr(empty, ProxyOccMap{SparseVoxelTensor(g, 3)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_active_set);
  }
  const auto v = SparseVoxelTensor::from_entries(g, 1, {{0, 0, 0}}, {1.0f});
  const auto other = SparseVoxelTensor::from_entries(g, 2, {{1, 0, 0}}, {0.5f, 0.5f});
  try {
    (void)compute_ocr(v, ProxyOccMap{other});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::occ_domain_mismatch);
  }
}

TEST(GlobalOcr, OneStepAndFixedPoint) {
  auto st = OcrState::zeros(3, 2, 0.9f);
  st = update_global_ocr(st, constant(3, 2, 1.0f));
  for (float v : st.R_global.data) EXPECT_NEAR(v, 0.1f, 1e-7);
  for (float v : st.R.data) EXPECT_EQ(v, 1.0f);
  const Matrix same = st.R_global;
  st = update_global_ocr(st, same);
  EXPECT_EQ(st.R_global, same);
}

TEST(GlobalOcr, GeometricDecayMatchesClosedForm) {
  Rng rng(4);
  for (float alpha : {0.5f, 0.9f, 0.99f}) {
    auto st = OcrState::zeros(4, 3, alpha);
    st.R_global = testgen::random_matrix(rng, 4, 3, 2.0);
    const Matrix target = testgen::random_matrix(rng, 4, 3, 2.0);
    double initial = 0.0;
    for (std::size_t i = 0; i < target.data.size(); ++i)
      initial = std::max(initial, static_cast<double>(std::abs(st.R_global.data[i] - target.data[i])));
    for (int n = 1; n <= 30; ++n) {
      st = update_global_ocr(st, target);
      double gap = 0.0;
      for (std::size_t i = 0; i < target.data.size(); ++i)
        gap = std::max(gap, static_cast<double>(std::abs(st.R_global.data[i] - target.data[i])));
      EXPECT_NEAR(gap, std::pow(static_cast<double>(alpha), n) * initial, 1e-6) << "alpha " << alpha << " n " << n;
    }
  }
}

TEST(GlobalOcr, MomentumMustBeOpenUnitInterval) {
  EXPECT_THROW((void)OcrState::zeros(2, 2, 0.0f), Error);
  EXPECT_THROW((void)OcrState::zeros(2, 2, 1.0f), Error);
}

TEST(Attention, SingleQuerySingleRowClosedForm) {
  QuerySet q;
  q.queries = Matrix(1, 2);
  q.queries(0, 0) = 0.5f;
  q.queries(0, 1) = -1.0f;
  q.cross = AttentionParams::identity(2, 1);
  q.self = AttentionParams::identity(2, 1);
  auto st = OcrState::zeros(1, 2, 0.9f);
  st.R(0, 0) = 2.0f;
  st.R(0, 1) = 3.0f;
  st.R_global(0, 0) = 0.25f;
  st.R_global(0, 1) = 1.0f;
  // prior = R_global row; cross = R row; self over one query returns it.
  const Matrix out = query_context_attention(q, st);
  EXPECT_FLOAT_EQ(out(0, 0), 2.0f * (0.5f + 0.25f + 2.0f));
  EXPECT_FLOAT_EQ(out(0, 1), 2.0f * (-1.0f + 1.0f + 3.0f));
}

TEST(Attention, ZeroGlobalContextLeavesQueriesUnshifted) {
  Rng rng(7);
  auto q = random_queries(rng, 3, 4, 5, 2);
  auto st = OcrState::zeros(5, 4, 0.9f);
  st.R = testgen::random_matrix(rng, 5, 4);
  AttentionTrace trace;
  const Matrix out = query_context_attention(q, st, &trace);
  const Matrix cross = attention_oracle(q.queries, st.R, st.R, q.cross);
  Matrix q1 = q.queries;
  for (std::size_t i = 0; i < q1.data.size(); ++i) q1.data[i] += cross.data[i];
  const Matrix self = attention_oracle(q1, q1, q1, q.self);
  for (std::size_t i = 0; i < out.data.size(); ++i) EXPECT_NEAR(out.data[i], q1.data[i] + self.data[i], 1e-5);
  ASSERT_EQ(trace.prior.size(), 1u);
  for (float w : trace.prior[0].data) EXPECT_NEAR(w, 0.2f, 1e-7);
}

TEST(Attention, MultiHeadMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::int32_t heads = static_cast<std::int32_t>(rng.integer(1, 3));
    const std::int32_t C = heads * static_cast<std::int32_t>(rng.integer(1, 4));
    const auto q = random_queries(rng, static_cast<std::int32_t>(rng.integer(1, 6)), C, 4, heads);
    const Matrix keys = testgen::random_matrix(rng, static_cast<std::int32_t>(rng.integer(1, 7)), C);
    std::vector<Matrix> trace;
    const Matrix got = multi_head_attention(q.queries, keys, keys, q.cross, &trace);
    const Matrix want = attention_oracle(q.queries, keys, keys, q.cross);
    for (std::size_t i = 0; i < got.data.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-5);
    ASSERT_EQ(trace.size(), static_cast<std::size_t>(heads));
    for (const auto& w : trace)
      for (std::int32_t r = 0; r < w.rows; ++r) {
        double s = 0.0;
        for (float x : w.row(r)) s += x;
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

TEST(Attention, AllWeightRowsSumToOne) {
  Rng rng(12);
  const auto q = random_queries(rng, 6, 8, 5, 2);
  auto st = OcrState::zeros(5, 8, 0.9f);
  st.R = testgen::random_matrix(rng, 5, 8);
  st.R_global = testgen::random_matrix(rng, 5, 8);
  AttentionTrace trace;
  (void)query_context_attention(q, st, &trace);
  for (const auto* group : {&trace.prior, &trace.cross, &trace.self})
    for (const auto& w : *group)
      for (std::int32_t r = 0; r < w.rows; ++r) {
        double s = 0.0;
        for (float x : w.row(r)) s += x;
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  EXPECT_EQ(trace.cross.size(), 2u);
  EXPECT_EQ(trace.self.size(), 2u);
}

TEST(Attention, HeadsMustDivideChannels) {
  Rng rng(1);
  auto q = random_queries(rng, 2, 3, 2, 1);
  q.cross.heads = 2;
  const auto st = OcrState::zeros(2, 3, 0.9f);
  EXPECT_THROW((void)query_context_attention(q, st), Error);
}

TEST(Heads, ZeroClassHeadIsUniform) {
  Rng rng(2);
  auto q = random_queries(rng, 3, 4, 5, 1);
  q.class_head = Matrix(4, 5);
  const auto h = predict_heads(testgen::random_matrix(rng, 3, 4), q);
  for (float p : h.P.data) EXPECT_FLOAT_EQ(p, 0.2f);
}

TEST(Heads, MatchMatrixProductOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto q = random_queries(rng, 4, 6, 5, 2);
    const Matrix refined = testgen::random_matrix(rng, 4, 6, 2.0);
    const auto h = predict_heads(refined, q);
    for (std::int32_t k = 0; k < 4; ++k) {
      std::vector<double> logits(5, 0.0);
      for (std::int32_t s = 0; s < 5; ++s)
        for (std::int32_t c = 0; c < 6; ++c) logits[static_cast<std::size_t>(s)] += refined(k, c) * q.class_head(c, s);
      double z = 0.0, row_sum = 0.0;
      for (double l : logits) z += std::exp(l);
      for (std::int32_t s = 0; s < 5; ++s) {
        EXPECT_NEAR(h.P(k, s), std::exp(logits[static_cast<std::size_t>(s)]) / z, 1e-6);
        row_sum += h.P(k, s);
      }
      EXPECT_NEAR(row_sum, 1.0, 1e-5);
      for (std::int32_t j = 0; j < 6; ++j) {
        double e = 0.0;
        for (std::int32_t c = 0; c < 6; ++c) e += refined(k, c) * q.mask_head(c, j);
        EXPECT_NEAR(h.E(k, j), e, 1e-5);
      }
    }
  }
}

TEST(Compose, ConstantMaskLabelsEverything) {
  const auto g = testgen::grid(3, 2, 2, 2);
  const auto v = SparseVoxelTensor::from_entries(g, 2, {{1, 1, 1}}, {0.0f, 0.0f});
  Matrix P(1, 4);
  P(0, 3) = 1.0f;
  Matrix E(1, 2);  // E . anything = 0 for the active voxel; the fill drives the rest
  E(0, 0) = 100.0f;
  const std::vector<float> fill{1.0f, 0.0f};
  const auto pred = compose_occupancy(P, E, v, fill);
  EXPECT_EQ(pred.full_labels.grid.dims(), (std::array<std::int32_t, 3>{6, 4, 4}));
  // Active voxel: sigmoid(0) = 0.5 on class 3; fill: sigmoid(100) ~ 1.
  for (auto l : pred.full_labels.labels) EXPECT_EQ(l, 3);
}

TEST(Compose, StronglyNegativeFillFallsBackToFree) {
  const auto g = testgen::grid(2, 2, 2, 2);
  const auto v = SparseVoxelTensor::from_entries(g, 1, {{0, 0, 0}}, {1.0f});
  Matrix P(2, 3);
  P(0, 2) = 1.0f;
  P(1, 1) = 1.0f;
  Matrix E(2, 1, 200.0f);
  const std::vector<float> fill{-1.0f};
  const auto pred = compose_occupancy(P, E, v, fill);
  for (std::int32_t x = 0; x < 4; ++x)
    for (std::int32_t y = 0; y < 4; ++y)
      for (std::int32_t z = 0; z < 4; ++z) {
        const bool inside = x < 2 && y < 2 && z < 2;
        // Tie between classes 1 and 2 at the active voxel resolves to 1.
        EXPECT_EQ(pred.full_labels.at({x, y, z}), inside ? 1 : 0);
      }
  EXPECT_EQ(pred.half_scores.at({1, 1, 1})[0], 0.0f);
}

TEST(Compose, MatchesThreeLoopOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::int32_t K = 4, S = 5, C = 3;
    const auto v = testgen::random_sparse(rng, testgen::grid(3, 4, 2, 2), C, 0.4);
    Matrix P(K, S);
    for (std::int32_t k = 0; k < K; ++k) {
      const auto row = testgen::random_distribution(rng, S);
      std::copy(row.begin(), row.end(), P.row(k).begin());
    }
    const Matrix E = testgen::random_matrix(rng, K, C, 3.0);
    const auto fill = testgen::random_floats(rng, C);
    const auto pred = compose_occupancy(P, E, v, fill);
    const auto& g = v.grid();
    for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
      const Coord3 c = g.coord_of(cell);
      const std::size_t idx = v.find(c);
      std::vector<double> f(C);
      for (std::int32_t j = 0; j < C; ++j)
        f[static_cast<std::size_t>(j)] = idx == CoordIndex::kNotFound ? fill[static_cast<std::size_t>(j)]
                                                                       : v.feature(idx)[static_cast<std::size_t>(j)];
      double mask_total = 0.0, score_total = 0.0;
      for (std::int32_t s = 0; s < S; ++s) {
        double want = 0.0;
        for (std::int32_t k = 0; k < K; ++k) {
          double dot = 0.0;
          for (std::int32_t j = 0; j < C; ++j) dot += E(k, j) * f[static_cast<std::size_t>(j)];
          const double m = 1.0 / (1.0 + std::exp(-dot));
          want += P(k, s) * m;
          if (s == 0) mask_total += m;
        }
        EXPECT_NEAR(pred.half_scores.at(c)[static_cast<std::size_t>(s)], want, 1e-5);
        score_total += pred.half_scores.at(c)[static_cast<std::size_t>(s)];
      }
      EXPECT_NEAR(score_total, mask_total, 1e-5);
    }
  }
}

TEST(Compose, NearestNeighbourContractAndRescaleInvariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 100);
    const auto v = testgen::random_sparse(rng, testgen::grid(3, 3, 2, 2), 2, 0.5);
    Matrix P(3, 4);
    for (std::int32_t k = 0; k < 3; ++k) {
      const auto row = testgen::random_distribution(rng, 4);
      std::copy(row.begin(), row.end(), P.row(k).begin());
    }
    const auto pred = compose_occupancy(P, testgen::random_matrix(rng, 3, 2, 2.0), v, testgen::random_floats(rng, 2));
    const auto& fg = pred.full_labels.grid;
    for (std::int64_t i = 0; i < fg.cell_count(); ++i) {
      const Coord3 c = fg.coord_of(i);
      const Coord3 parent{c.x / 2, c.y / 2, c.z / 2};
      EXPECT_EQ(pred.full_labels.at(c), argmax_label(pred.half_scores.at(parent)));
      EXPECT_LT(pred.full_labels.at(c), 4);
    }
    for (float k : {0.001f, 0.5f, 3.0f, 1000.0f}) {
      DenseVoxelTensor scaled = pred.half_scores;
      for (auto& x : scaled.values()) x *= k;
      EXPECT_EQ(upsample_labels(scaled, nullptr, UpsampleMode::nearest).labels, pred.full_labels.labels);
    }
  }
}

TEST(Compose, GateInactiveMarksFree) {
  const auto g = testgen::grid(2, 2, 2, 2);
  const auto v = SparseVoxelTensor::from_entries(g, 1, {{1, 0, 1}}, {1.0f});
  Matrix P(1, 3);
  P(0, 2) = 1.0f;
  const Matrix E(1, 1, 1.0f);
  const std::vector<float> fill{1.0f};
  ComposeOptions opts;
  opts.gate_inactive = true;
  const auto pred = compose_occupancy(P, E, v, fill, opts);
  for (std::int64_t i = 0; i < pred.full_labels.grid.cell_count(); ++i) {
    const Coord3 c = pred.full_labels.grid.coord_of(i);
    const bool active = c.x / 2 == 1 && c.y / 2 == 0 && c.z / 2 == 1;
    EXPECT_EQ(pred.full_labels.at(c), active ? 2 : 0);
  }
}

TEST(Upsample, TrilinearOnConstantFieldAndInterpolation) {
  const auto g = testgen::grid(2, 1, 1, 2);
  DenseVoxelTensor scores(g, 2);
  // Class 1 wins at x=0, class 0 wins at x=1 by a wide margin.
  scores.at({0, 0, 0})[1] = 1.0f;
  scores.at({1, 0, 0})[0] = 3.0f;
  const auto lab = upsample_labels(scores, nullptr, UpsampleMode::trilinear);
  ASSERT_EQ(lab.grid.dims(), (std::array<std::int32_t, 3>{4, 2, 2}));
  // Full cell centres map to half positions -0.25, 0.25, 0.75, 1.25.
  EXPECT_EQ(lab.at({0, 0, 0}), 1);
  EXPECT_EQ(lab.at({1, 0, 0}), 0);  // 0.75*[0,1] + 0.25*[3,0] = [0.75, 0.75] tie -> 0
  EXPECT_EQ(lab.at({2, 0, 0}), 0);
  EXPECT_EQ(lab.at({3, 1, 1}), 0);
  const auto near = upsample_labels(scores, nullptr, UpsampleMode::nearest);
  EXPECT_EQ(near.at({1, 0, 0}), 1);
}

TEST(Upsample, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax_label(std::vector<float>{0, 0, 0}), 0);
  EXPECT_EQ(argmax_label(std::vector<float>{0.1f, 0.5f, 0.5f}), 1);
}
