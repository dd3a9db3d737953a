#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sugvoxel/error.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

struct LossMetrics {
  double ce = 0.0;
  double bce = 0.0;
  double dice = 0.0;
};

struct MetricsReport {
  double geometric_iou = 0.0;
  std::vector<std::optional<double>> per_class_iou;  // nullopt where the union is empty
  double mean_iou = 0.0;
  LossMetrics losses;
};

inline constexpr double kLogFloor = 1e-12;

// Geometric IoU over the occupied (label != 0) masks, per-class IoU, and the
// mean over non-free classes whose union is non-empty.
inline MetricsReport iou_report(const LabelGrid& pred, const LabelGrid& gt, std::int32_t classes) {
  require(pred.grid.dims() == gt.grid.dims(), ErrorCode::dim_mismatch, "prediction and ground truth differ in dims");
  require(classes >= 1, ErrorCode::invalid_argument, "need at least one class");
  std::uint64_t geo_inter = 0, geo_union = 0;
  std::vector<std::uint64_t> inter(static_cast<std::size_t>(classes), 0), uni(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const std::uint8_t p = pred.labels[i];
    const std::uint8_t g = gt.labels[i];
    require(p < classes && g < classes, ErrorCode::invalid_argument, "label outside class range");
    const bool po = p != 0, go = g != 0;
    geo_inter += (po && go) ? 1 : 0;
    geo_union += (po || go) ? 1 : 0;
    if (p == g) {
      ++inter[p];
      ++uni[p];
    } else {
      ++uni[p];
      ++uni[g];
    }
  }
  MetricsReport r;
  r.geometric_iou = geo_union ? static_cast<double>(geo_inter) / static_cast<double>(geo_union) : 0.0;
  r.per_class_iou.resize(static_cast<std::size_t>(classes));
  double sum = 0.0;
  int defined = 0;
  for (std::int32_t s = 0; s < classes; ++s) {
    if (uni[static_cast<std::size_t>(s)] == 0) continue;
    const double iou = static_cast<double>(inter[static_cast<std::size_t>(s)]) / static_cast<double>(uni[static_cast<std::size_t>(s)]);
    r.per_class_iou[static_cast<std::size_t>(s)] = iou;
    if (s != 0) {
      sum += iou;
      ++defined;
    }
  }
  r.mean_iou = defined ? sum / defined : 0.0;
  return r;
}

// pred_scores rows are S-class distributions over the same cells as gt.
// ce: mean -log p(gt); bce: mean BCE of p(occupied) = 1 - p(free) against the
// occupied mask; dice: 1 - 2|A.B| / (|A| + |B|) on the soft occupied masks.
inline LossMetrics loss_metrics(const DenseVoxelTensor& pred_scores, const LabelGrid& gt) {
  require(pred_scores.grid().dims() == gt.grid.dims(), ErrorCode::dim_mismatch, "scores and labels differ in dims");
  const auto S = static_cast<std::size_t>(pred_scores.channels());
  const auto vals = pred_scores.values();
  const std::size_t n = gt.labels.size();
  double ce = 0.0, bce = 0.0, inter = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t g = gt.labels[i];
    require(g < S, ErrorCode::invalid_argument, "label outside class range");
    const float* row = vals.data() + i * S;
    ce -= std::log(std::max(static_cast<double>(row[g]), kLogFloor));
    const double occ = std::clamp(1.0 - static_cast<double>(row[0]), 0.0, 1.0);
    const double target = g != 0 ? 1.0 : 0.0;
    bce -= target * std::log(std::max(occ, kLogFloor)) + (1.0 - target) * std::log(std::max(1.0 - occ, kLogFloor));
    inter += occ * target;
    sum_a += occ;
    sum_b += target;
  }
  LossMetrics m;
  if (n == 0) return m;
  m.ce = ce / static_cast<double>(n);
  m.bce = bce / static_cast<double>(n);
  m.dice = (sum_a + sum_b) > 0.0 ? 1.0 - 2.0 * inter / (sum_a + sum_b) : 0.0;
  return m;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : r.per_class_iou) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"geometric_iou", r.geometric_iou},
          {"per_class_iou", per_class},
          {"mean_iou", r.mean_iou},
          {"ce", r.losses.ce},
          {"bce", r.losses.bce},
          {"dice", r.losses.dice}};
}

}  // namespace sugvoxel
