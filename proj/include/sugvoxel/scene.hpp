#pragma once

// Synthetic scenes: a primitive grammar rasterised into a label grid, then
// ray-cast through a pinhole camera to produce per-pixel semantic and depth
// distributions plus a deterministic feature map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sugvoxel/error.hpp"
#include "sugvoxel/rng.hpp"
#include "sugvoxel/tensor.hpp"
#include "sugvoxel/view_transform.hpp"

namespace sugvoxel {

// Half-open voxel box [lo, hi).
struct BoxPrimitive {
  Coord3 lo;
  Coord3 hi;
  std::uint8_t label = 2;
};

// One-voxel-wide column standing on the ground plane.
struct PolePrimitive {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t height = 1;
  std::uint8_t label = 4;
};

struct SceneGrammar {
  std::int32_t ground_height = 0;  // voxels of ground from z = 0
  std::uint8_t ground_label = 1;
  std::vector<BoxPrimitive> boxes;
  std::vector<PolePrimitive> poles;
  // Extra primitives drawn from the seed.
  std::int32_t random_boxes = 0;
  std::int32_t random_poles = 0;
  std::uint8_t random_box_labels[2] = {2, 3};
  std::uint8_t random_pole_label = 4;
  std::int32_t min_x = 8;  // keep random primitives clear of the camera
};

struct SceneSpec {
  VoxelGridSpec grid;  // stride 1
  CameraModel camera;
  SceneGrammar grammar;
  double sigma = 0.0;
  std::int32_t classes = 5;
  std::int32_t channels = 16;
};

struct SceneSample {
  LabelGrid gt;
  CameraModel camera;
  PixelProbMaps maps;
  ImageTensor features;

  friend bool operator==(const SceneSample& a, const SceneSample& b) {
    return a.gt == b.gt && a.maps.sem == b.maps.sem && a.maps.depth == b.maps.depth && a.features == b.features;
  }
};

// Appends the seeded random primitives to the explicit ones.
inline SceneGrammar expand_grammar(const SceneGrammar& g, std::uint64_t seed, const VoxelGridSpec& grid) {
  SceneGrammar out = g;
  out.random_boxes = 0;
  out.random_poles = 0;
  const auto d = grid.dims();
  const std::int32_t base = std::min(g.ground_height, d[2] - 1);
  const std::int32_t x_lo = std::min(g.min_x, d[0] - 1);
  Rng rng(seed);
  for (std::int32_t i = 0; i < g.random_boxes; ++i) {
    const auto sx = static_cast<std::int32_t>(rng.integer(2, 6));
    const auto sy = static_cast<std::int32_t>(rng.integer(2, 8));
    const auto sz = static_cast<std::int32_t>(rng.integer(1, std::max(1, d[2] - base)));
    const auto x0 = static_cast<std::int32_t>(rng.integer(x_lo, std::max(x_lo, d[0] - sx)));
    const auto y0 = static_cast<std::int32_t>(rng.integer(0, std::max(0, d[1] - sy)));
    const std::uint8_t label = g.random_box_labels[rng.integer(0, 1)];
    out.boxes.push_back({{x0, y0, base},
                         {std::min(x0 + sx, d[0]), std::min(y0 + sy, d[1]), std::min(base + sz, d[2])},
                         label});
  }
  for (std::int32_t i = 0; i < g.random_poles; ++i) {
    const auto x = static_cast<std::int32_t>(rng.integer(x_lo, d[0] - 1));
    const auto y = static_cast<std::int32_t>(rng.integer(0, d[1] - 1));
    const auto h = static_cast<std::int32_t>(rng.integer(1, std::max(1, d[2] - base)));
    out.poles.push_back({x, y, h, g.random_pole_label});
  }
  return out;
}

// Later primitives overwrite earlier ones: ground, then boxes, then poles.
inline LabelGrid rasterize(const SceneGrammar& g, const VoxelGridSpec& grid, std::int32_t classes) {
  require(grid.stride == 1, ErrorCode::stride_mismatch, "scenes are rasterised at stride 1");
  const auto d = grid.dims();
  LabelGrid out(grid, 0);
  auto check_label = [&](std::uint8_t label) {
    require(label > 0 && label < classes, ErrorCode::invalid_argument,
            "primitive label " + std::to_string(label) + " outside 1.." + std::to_string(classes - 1));
  };
  require(g.ground_height >= 0 && g.ground_height <= d[2], ErrorCode::primitive_out_of_grid,
          "ground height exceeds grid");
  if (g.ground_height > 0) check_label(g.ground_label);
  for (std::int32_t x = 0; x < d[0]; ++x)
    for (std::int32_t y = 0; y < d[1]; ++y)
      for (std::int32_t z = 0; z < g.ground_height; ++z) out.at({x, y, z}) = g.ground_label;
  for (const auto& b : g.boxes) {
    check_label(b.label);
    require(b.lo.x >= 0 && b.lo.y >= 0 && b.lo.z >= 0 && b.hi.x <= d[0] && b.hi.y <= d[1] && b.hi.z <= d[2] &&
                b.lo.x < b.hi.x && b.lo.y < b.hi.y && b.lo.z < b.hi.z,
            ErrorCode::primitive_out_of_grid, "box primitive is empty or leaves the grid");
    for (std::int32_t x = b.lo.x; x < b.hi.x; ++x)
      for (std::int32_t y = b.lo.y; y < b.hi.y; ++y)
        for (std::int32_t z = b.lo.z; z < b.hi.z; ++z) out.at({x, y, z}) = b.label;
  }
  for (const auto& p : g.poles) {
    check_label(p.label);
    require(grid.contains({p.x, p.y, 0}) && p.height > 0 && g.ground_height + p.height <= d[2],
            ErrorCode::primitive_out_of_grid, "pole primitive leaves the grid");
    for (std::int32_t z = g.ground_height; z < g.ground_height + p.height; ++z) out.at({p.x, p.y, z}) = p.label;
  }
  return out;
}

struct RayHit {
  bool hit = false;
  double depth = 0.0;  // camera-z depth at which the ray enters the voxel
  Coord3 voxel{};
  std::uint8_t label = 0;
};

// First occupied voxel along the pixel's centre ray with depth in
// [depth_min, depth_max). Amanatides-Woo traversal.
inline RayHit cast_ray(const LabelGrid& gt, const CameraModel& cam, std::int32_t h, std::int32_t w) {
  const VoxelGridSpec& grid = gt.grid;
  const auto d = grid.dims();
  const double vs = grid.cell_size();
  const Eigen::Vector3d o = cam.center();
  const Eigen::Vector3d r = cam.pixel_ray(h, w);
  double t0 = cam.depth_min();
  double t1 = cam.depth_max();
  for (int a = 0; a < 3; ++a) {
    const double lo = grid.origin[static_cast<std::size_t>(a)];
    const double hi = lo + vs * d[static_cast<std::size_t>(a)];
    if (r[a] == 0.0) {
      if (o[a] < lo || o[a] >= hi) return {};
      continue;
    }
    double ta = (lo - o[a]) / r[a];
    double tb = (hi - o[a]) / r[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 >= t1) return {};

  const Eigen::Vector3d p = o + t0 * r;
  std::array<std::int32_t, 3> v{};
  std::array<std::int32_t, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const double local = (p[a] - grid.origin[ua]) / vs;
    v[ua] = std::clamp(static_cast<std::int32_t>(std::floor(local)), 0, d[ua] - 1);
    if (r[a] > 0.0) {
      step[ua] = 1;
      t_max[ua] = (grid.origin[ua] + (v[ua] + 1) * vs - o[a]) / r[a];
      t_delta[ua] = vs / r[a];
    } else if (r[a] < 0.0) {
      step[ua] = -1;
      t_max[ua] = (grid.origin[ua] + v[ua] * vs - o[a]) / r[a];
      t_delta[ua] = -vs / r[a];
    } else {
      step[ua] = 0;
      t_max[ua] = std::numeric_limits<double>::infinity();
      t_delta[ua] = std::numeric_limits<double>::infinity();
    }
  }
  double t_entry = t0;
  while (t_entry < t1) {
    const Coord3 c{v[0], v[1], v[2]};
    if (const std::uint8_t label = gt.at(c); label != 0) return {true, t_entry, c, label};
    const auto a = static_cast<std::size_t>(t_max[0] < t_max[1] ? (t_max[0] < t_max[2] ? 0 : 2)
                                                                 : (t_max[1] < t_max[2] ? 1 : 2));
    t_entry = t_max[a];
    v[a] += step[a];
    if (v[a] < 0 || v[a] >= d[a]) break;
    t_max[a] += t_delta[a];
  }
  return {};
}

// Discrete Gaussian over bins centred on k, normalised.
inline std::vector<double> depth_blur(std::int32_t k, std::int32_t bins, double width = 1.5) {
  std::vector<double> g(static_cast<std::size_t>(bins));
  double s = 0.0;
  for (std::int32_t i = 0; i < bins; ++i) {
    const double z = (i - k) / width;
    g[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z);
    s += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Feature value for channel c of a pixel seeing `label`.
inline float synthetic_feature(std::uint8_t label, std::int32_t h, std::int32_t w, std::int32_t c) {
  const double a = 0.7 * (label + 1) * (c + 1) + 0.05 * h;
  const double b = 0.3 * label + 0.02 * w * ((c % 3) + 1);
  return static_cast<float>(0.5 * std::sin(a) + 0.5 * std::cos(b));
}

// sigma = 0: semantic rows one-hot at the hit label and depth rows one-hot
// at the hit bin; rays that hit nothing see free space with a uniform depth
// row. sigma > 0 mixes semantics toward uniform and blurs depth.
inline SceneSample render_scene(const LabelGrid& gt, const CameraModel& cam, double sigma, std::int32_t classes,
                                std::int32_t channels) {
  require(sigma >= 0.0 && sigma <= 1.0, ErrorCode::invalid_argument, "noise level must lie in [0, 1]");
  require(classes >= 2 && classes <= 256, ErrorCode::invalid_argument, "need 2..256 classes");
  const std::int32_t H = cam.image_height();
  const std::int32_t W = cam.image_width();
  const std::int32_t D = cam.bins();
  SceneSample s;
  s.gt = gt;
  s.camera = cam;
  s.maps.sem = ImageTensor(H, W, classes);
  s.maps.depth = ImageTensor(H, W, D);
  s.features = ImageTensor(H, W, channels);
  for (std::int32_t h = 0; h < H; ++h)
    for (std::int32_t w = 0; w < W; ++w) {
      const RayHit hit = cast_ray(gt, cam, h, w);
      const std::int32_t bin = hit.hit ? cam.bin_of(hit.depth) : -1;
      const std::uint8_t label = bin >= 0 ? hit.label : 0;

      auto sem = s.maps.sem.at(h, w);
      for (std::int32_t c = 0; c < classes; ++c)
        sem[static_cast<std::size_t>(c)] =
            static_cast<float>((1.0 - sigma) * (c == label ? 1.0 : 0.0) + sigma / classes);

      auto depth = s.maps.depth.at(h, w);
      if (bin < 0) {
        std::fill(depth.begin(), depth.end(), 1.0f / static_cast<float>(D));
      } else {
        const auto blur = depth_blur(bin, D);
        for (std::int32_t i = 0; i < D; ++i) {
          const auto ui = static_cast<std::size_t>(i);
          depth[ui] = static_cast<float>((1.0 - sigma) * (i == bin ? 1.0 : 0.0) +
                                         sigma * (0.8 * blur[ui] + 0.2 / D));
        }
      }

      auto f = s.features.at(h, w);
      for (std::int32_t c = 0; c < channels; ++c) f[static_cast<std::size_t>(c)] = synthetic_feature(label, h, w, c);
    }
  return s;
}

inline SceneSample gen_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.grid.validate();
  const SceneGrammar g = expand_grammar(spec.grammar, seed, spec.grid);
  return render_scene(rasterize(g, spec.grid, spec.classes), spec.camera, spec.sigma, spec.classes, spec.channels);
}

}  // namespace sugvoxel
