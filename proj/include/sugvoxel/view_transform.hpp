#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sugvoxel/error.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

// H x W x C image-plane array, (h, w, c) row-major.
struct ImageTensor {
  std::int32_t height = 0;
  std::int32_t width = 0;
  std::int32_t channels = 0;
  std::vector<float> values;

  ImageTensor() = default;
  ImageTensor(std::int32_t h, std::int32_t w, std::int32_t c, float v = 0.0f)
      : height(h), width(w), channels(c),
        values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), v) {}

  std::size_t pixel_index(std::int32_t h, std::int32_t w) const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(width) + static_cast<std::size_t>(w);
  }
  std::span<const float> at(std::int32_t h, std::int32_t w) const {
    return {values.data() + pixel_index(h, w) * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)};
  }
  std::span<float> at(std::int32_t h, std::int32_t w) {
    return {values.data() + pixel_index(h, w) * static_cast<std::size_t>(channels), static_cast<std::size_t>(channels)};
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Per-pixel semantic (S classes, class 0 = free space) and depth (D bins)
// distributions.
struct PixelProbMaps {
  ImageTensor sem;
  ImageTensor depth;

  std::int32_t height() const { return sem.height; }
  std::int32_t width() const { return sem.width; }
  std::int32_t classes() const { return sem.channels; }
  std::int32_t bins() const { return depth.channels; }

  void validate(double tol = 1e-5) const {
    require(sem.height == depth.height && sem.width == depth.width, ErrorCode::dim_mismatch,
            "semantic and depth maps differ in size");
    require(sem.channels >= 1 && depth.channels >= 2, ErrorCode::invalid_argument,
            "need at least one class and two depth bins");
    for (const ImageTensor* m : {&sem, &depth}) {
      for (std::int32_t h = 0; h < m->height; ++h)
        for (std::int32_t w = 0; w < m->width; ++w) {
          double s = 0.0;
          for (float v : m->at(h, w)) {
            require(v >= 0.0f, ErrorCode::invalid_argument, "negative probability");
            s += v;
          }
          require(std::abs(s - 1.0) <= tol, ErrorCode::invalid_argument,
                  "probability row does not sum to 1 at pixel (" + std::to_string(h) + "," + std::to_string(w) + ")");
        }
    }
  }
};

// Pinhole camera. K maps camera coords to pixels, T maps camera to world.
// Camera frame: x right, y down, z forward; depth is the camera z coordinate.
class CameraModel {
 public:
  CameraModel() = default;

  static CameraModel make(const Eigen::Matrix3d& K, const Eigen::Matrix4d& T, double depth_min, double depth_max,
                          std::int32_t bins, std::int32_t image_height, std::int32_t image_width) {
    require(std::abs(K(2, 2) - 1.0) < 1e-12 && K(2, 0) == 0.0 && K(2, 1) == 0.0 && K(1, 0) == 0.0,
            ErrorCode::degenerate_camera, "intrinsics must be upper triangular with K[2][2] == 1");
    require(K(0, 0) > 0.0 && K(1, 1) > 0.0, ErrorCode::degenerate_camera, "focal lengths must be positive");
    const Eigen::Matrix3d R = T.block<3, 3>(0, 0);
    require((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-5 &&
                std::abs(R.determinant() - 1.0) <= 1e-5,
            ErrorCode::degenerate_camera, "extrinsic rotation must be orthonormal with det +1");
    require(T(3, 0) == 0.0 && T(3, 1) == 0.0 && T(3, 2) == 0.0 && T(3, 3) == 1.0, ErrorCode::degenerate_camera,
            "extrinsic bottom row must be [0 0 0 1]");
    require(depth_min < depth_max && depth_min >= 0.0, ErrorCode::invalid_argument, "need 0 <= depth_min < depth_max");
    require(bins >= 2, ErrorCode::invalid_argument, "need at least two depth bins");
    require(image_height > 0 && image_width > 0, ErrorCode::invalid_argument, "image size must be positive");
    CameraModel cam;
    cam.K_ = K;
    cam.K_inv_ = K.inverse();
    cam.T_ = T;
    cam.depth_min_ = depth_min;
    cam.depth_max_ = depth_max;
    cam.bins_ = bins;
    cam.height_ = image_height;
    cam.width_ = image_width;
    return cam;
  }

  const Eigen::Matrix3d& intrinsics() const { return K_; }
  const Eigen::Matrix4d& extrinsics() const { return T_; }
  double depth_min() const { return depth_min_; }
  double depth_max() const { return depth_max_; }
  std::int32_t bins() const { return bins_; }
  std::int32_t image_height() const { return height_; }
  std::int32_t image_width() const { return width_; }

  double bin_width() const { return (depth_max_ - depth_min_) / bins_; }

  // Metric depth of bin centre i.
  double bin_depth(std::int32_t i) const { return depth_min_ + (i + 0.5) * bin_width(); }

  // Bin containing metric depth z, or -1 outside [depth_min, depth_max).
  std::int32_t bin_of(double z) const {
    if (z < depth_min_ || z >= depth_max_) return -1;
    const auto b = static_cast<std::int32_t>(std::floor((z - depth_min_) / bin_width()));
    return b < bins_ ? b : bins_ - 1;
  }

  Eigen::Vector3d center() const { return T_.block<3, 1>(0, 3); }

  // World-space direction through the centre of pixel (h, w), scaled so its
  // camera-frame z component is 1.
  Eigen::Vector3d pixel_ray(std::int32_t h, std::int32_t w) const {
    const Eigen::Vector3d cam = K_inv_ * Eigen::Vector3d(w + 0.5, h + 0.5, 1.0);
    return T_.block<3, 3>(0, 0) * cam;
  }

  Eigen::Vector3d unproject(std::int32_t h, std::int32_t w, double depth) const {
    return center() + depth * pixel_ray(h, w);
  }

 private:
  Eigen::Matrix3d K_ = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d K_inv_ = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d T_ = Eigen::Matrix4d::Identity();
  double depth_min_ = 0.0;
  double depth_max_ = 1.0;
  std::int32_t bins_ = 2;
  std::int32_t height_ = 1;
  std::int32_t width_ = 1;
};

enum class PoolMode { sum, mean };

struct LiftConfig {
  float tau_s = 0.0f;
  float tau_d = 0.0f;
  float temperature = 10000.0f;
  std::int32_t channels = 16;
  PoolMode pooling = PoolMode::sum;

  void validate() const {
    require(tau_s >= 0.0f && tau_s <= 1.0f && tau_d >= 0.0f && tau_d <= 1.0f, ErrorCode::invalid_argument,
            "lift thresholds must lie in [0, 1]");
    require(temperature > 0.0f, ErrorCode::invalid_argument, "temperature must be positive");
    require(channels > 0 && channels % 2 == 0, ErrorCode::invalid_argument, "channel count must be positive and even");
  }
};

// 1 - P(free) per pixel.
inline ImageTensor nonempty_prob(const PixelProbMaps& maps) {
  ImageTensor out(maps.height(), maps.width(), 1);
  for (std::int32_t h = 0; h < maps.height(); ++h)
    for (std::int32_t w = 0; w < maps.width(); ++w) out.at(h, w)[0] = 1.0f - maps.sem.at(h, w)[0];
  return out;
}

// Prefix sums of the depth distribution along the bin axis.
inline ImageTensor cumulative_depth(const PixelProbMaps& maps) {
  ImageTensor out(maps.height(), maps.width(), maps.bins());
  for (std::int32_t h = 0; h < maps.height(); ++h)
    for (std::int32_t w = 0; w < maps.width(); ++w) {
      const auto row = maps.depth.at(h, w);
      auto dst = out.at(h, w);
      double s = 0.0;
      for (std::size_t d = 0; d < row.size(); ++d) {
        s += row[d];
        dst[d] = static_cast<float>(s);
      }
    }
  return out;
}

// mask[(h*W + w)*D + d] = p_ne > tau_s && p_cum[d] > tau_d (strict).
inline std::vector<std::uint8_t> lift_mask(const ImageTensor& p_ne, const ImageTensor& p_cum, const LiftConfig& cfg) {
  require(p_ne.height == p_cum.height && p_ne.width == p_cum.width && p_ne.channels == 1, ErrorCode::dim_mismatch,
          "lift_mask inputs are not shape-consistent");
  const auto D = static_cast<std::size_t>(p_cum.channels);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(p_ne.height) * static_cast<std::size_t>(p_ne.width) * D, 0);
  for (std::int32_t h = 0; h < p_ne.height; ++h)
    for (std::int32_t w = 0; w < p_ne.width; ++w) {
      if (!(p_ne.at(h, w)[0] > cfg.tau_s)) continue;
      const auto cum = p_cum.at(h, w);
      const std::size_t base = p_ne.pixel_index(h, w) * D;
      for (std::size_t d = 0; d < D; ++d) mask[base + d] = cum[d] > cfg.tau_d ? 1 : 0;
    }
  return mask;
}

// Expected depth in bin-index units: sum_i i * P(i) over i = 0..D-1.
inline ImageTensor expected_depth(const PixelProbMaps& maps) {
  ImageTensor out(maps.height(), maps.width(), 1);
  for (std::int32_t h = 0; h < maps.height(); ++h)
    for (std::int32_t w = 0; w < maps.width(); ++w) {
      const auto row = maps.depth.at(h, w);
      double e = 0.0;
      for (std::size_t i = 0; i < row.size(); ++i) e += static_cast<double>(i) * row[i];
      out.at(h, w)[0] = static_cast<float>(e);
    }
  return out;
}

// Sinusoidal encoding of a scalar distance into `out.size()` channels:
// out[2i] = sin(delta / T^(2i/C)), out[2i+1] = cos(delta / T^(2i/C)).
inline void positional_encoding(double delta, double temperature, std::span<float> out) {
  const auto C = static_cast<double>(out.size());
  for (std::size_t i = 0; 2 * i + 1 < out.size(); ++i) {
    const double freq_div = std::pow(temperature, (2.0 * static_cast<double>(i)) / C);
    const double arg = delta / freq_div;
    out[2 * i] = static_cast<float>(std::sin(arg));
    out[2 * i + 1] = static_cast<float>(std::cos(arg));
  }
}

// Encodings of |d - E[depth]| for every pixel and bin; channels = D * C with
// layout (h, w, d, c).
inline ImageTensor distance_encoding(const PixelProbMaps& maps, const LiftConfig& cfg) {
  cfg.validate();
  const ImageTensor expected = expected_depth(maps);
  const std::int32_t D = maps.bins();
  ImageTensor out(maps.height(), maps.width(), D * cfg.channels);
  for (std::int32_t h = 0; h < maps.height(); ++h)
    for (std::int32_t w = 0; w < maps.width(); ++w) {
      auto dst = out.at(h, w);
      const double e = expected.at(h, w)[0];
      for (std::int32_t d = 0; d < D; ++d) {
        const double delta = std::abs(static_cast<double>(d) - e);
        positional_encoding(delta, cfg.temperature,
                            dst.subspan(static_cast<std::size_t>(d) * static_cast<std::size_t>(cfg.channels),
                                        static_cast<std::size_t>(cfg.channels)));
      }
    }
  return out;
}

struct LiftStats {
  std::uint64_t frustum_points = 0;
  std::uint64_t masked_points = 0;
  std::uint64_t in_grid_points = 0;
};

inline Coord3 world_to_voxel(const VoxelGridSpec& grid, const Eigen::Vector3d& p) {
  const double cell = static_cast<double>(grid.voxel_size) * grid.stride;
  return {static_cast<std::int32_t>(std::floor((p.x() - grid.origin[0]) / cell)),
          static_cast<std::int32_t>(std::floor((p.y() - grid.origin[1]) / cell)),
          static_cast<std::int32_t>(std::floor((p.z() - grid.origin[2]) / cell))};
}

struct CameraView {
  const ImageTensor* features = nullptr;
  const PixelProbMaps* maps = nullptr;
  const CameraModel* camera = nullptr;
};

// Lifts masked frustum points of every camera into `grid` and pools them
// per voxel. Points falling outside the grid are dropped.
inline SparseVoxelTensor lift_multi(std::span<const CameraView> views, const VoxelGridSpec& grid,
                                    const LiftConfig& cfg, LiftStats* stats = nullptr) {
  cfg.validate();
  grid.validate();
  const auto C = static_cast<std::size_t>(cfg.channels);
  // Pool into a coord-keyed accumulator with a parallel hit counter.
  CoordIndex index;
  std::vector<Coord3> coords;
  std::vector<double> sums;
  std::vector<std::uint32_t> counts;
  std::vector<float> pe(C);

  for (const CameraView& view : views) {
    const ImageTensor& features = *view.features;
    const PixelProbMaps& maps = *view.maps;
    const CameraModel& cam = *view.camera;
    maps.validate();
    require(features.height == maps.height() && features.width == maps.width(), ErrorCode::dim_mismatch,
            "feature map size does not match probability maps");
    require(features.channels == cfg.channels, ErrorCode::channel_mismatch,
            "feature map channels do not match lift config");
    require(cam.bins() == maps.bins(), ErrorCode::dim_mismatch, "camera bin count does not match depth maps");

    const ImageTensor p_ne = nonempty_prob(maps);
    const ImageTensor p_cum = cumulative_depth(maps);
    const auto mask = lift_mask(p_ne, p_cum, cfg);
    const ImageTensor expected = expected_depth(maps);
    const std::int32_t D = maps.bins();
    const Eigen::Vector3d origin = cam.center();

    for (std::int32_t h = 0; h < maps.height(); ++h)
      for (std::int32_t w = 0; w < maps.width(); ++w) {
        const auto f = features.at(h, w);
        const std::size_t base = maps.sem.pixel_index(h, w) * static_cast<std::size_t>(D);
        const Eigen::Vector3d ray = cam.pixel_ray(h, w);
        const double e = expected.at(h, w)[0];
        for (std::int32_t d = 0; d < D; ++d) {
          if (stats) ++stats->frustum_points;
          if (!mask[base + static_cast<std::size_t>(d)]) continue;
          if (stats) ++stats->masked_points;
          const Coord3 v = world_to_voxel(grid, origin + cam.bin_depth(d) * ray);
          if (!grid.contains(v)) continue;
          if (stats) ++stats->in_grid_points;
          positional_encoding(std::abs(static_cast<double>(d) - e), cfg.temperature, pe);
          const std::size_t slot = index.insert(v, coords.size());
          if (slot == coords.size()) {
            coords.push_back(v);
            sums.resize(sums.size() + C, 0.0);
            counts.push_back(0);
          }
          double* dst = sums.data() + slot * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += static_cast<double>(f[c]) + static_cast<double>(pe[c]);
          ++counts[slot];
        }
      }
  }

  std::vector<float> features(sums.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double scale = cfg.pooling == PoolMode::mean ? 1.0 / counts[i] : 1.0;
    for (std::size_t c = 0; c < C; ++c) features[i * C + c] = static_cast<float>(sums[i * C + c] * scale);
  }
  return SparseVoxelTensor::from_entries(grid, cfg.channels, std::move(coords), std::move(features));
}

// Single-camera lift: F'(h,w,d) = F(h,w) + PE(h,w,d) for every kept
// (pixel, bin), unprojected at the bin-centre depth and pooled per voxel.
inline SparseVoxelTensor lift(const ImageTensor& features, const PixelProbMaps& maps, const CameraModel& cam,
                              const VoxelGridSpec& grid, const LiftConfig& cfg, LiftStats* stats = nullptr) {
  const CameraView view{&features, &maps, &cam};
  return lift_multi(std::span<const CameraView>(&view, 1), grid, cfg, stats);
}

}  // namespace sugvoxel
