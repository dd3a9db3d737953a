#pragma once

// End-to-end runs: config -> synthetic scene -> lift -> completion -> mask
// decoder -> metrics, plus threshold sweeps and gather-count benchmarks.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sugvoxel/completion.hpp"
#include "sugvoxel/config.hpp"
#include "sugvoxel/error.hpp"
#include "sugvoxel/kernels.hpp"
#include "sugvoxel/label_io.hpp"
#include "sugvoxel/metrics.hpp"
#include "sugvoxel/ocr_decoder.hpp"
#include "sugvoxel/ovt_io.hpp"
#include "sugvoxel/rng.hpp"
#include "sugvoxel/scene.hpp"
#include "sugvoxel/sparse_conv.hpp"
#include "sugvoxel/view_transform.hpp"
#include "sugvoxel/weights.hpp"

namespace sugvoxel {

struct CameraConfig {
  std::int32_t height = 24;
  std::int32_t width = 80;
  double fx = 40.0, fy = 40.0, cx = 40.0, cy = 12.0;
  std::array<double, 3> position{0.0, 0.1, 0.1};
  double yaw_deg = 0.0;  // rotation about world +z; 0 looks along world +x
  double depth_min = 0.1;
  double depth_max = 12.9;
  std::int32_t bins = 32;

  // World frame is z-up. Camera x (right) = (sin y, -cos y, 0), camera y
  // (down) = -z, camera z (forward) = (cos y, sin y, 0).
  CameraModel build() const {
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    K(0, 0) = fx;
    K(1, 1) = fy;
    K(0, 2) = cx;
    K(1, 2) = cy;
    const double yaw = yaw_deg * std::numbers::pi / 180.0;
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.block<3, 1>(0, 0) = Eigen::Vector3d(std::sin(yaw), -std::cos(yaw), 0.0);
    T.block<3, 1>(0, 1) = Eigen::Vector3d(0.0, 0.0, -1.0);
    T.block<3, 1>(0, 2) = Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.0);
    T.block<3, 1>(0, 3) = Eigen::Vector3d(position[0], position[1], position[2]);
    return CameraModel::make(K, T, depth_min, depth_max, bins, height, width);
  }
};

struct SweepConfig {
  std::vector<double> tau_s{0.0, 0.1, 0.3};
  std::vector<double> tau_d{0.0, 0.1, 0.3};
  std::vector<double> tau_p{0.0, 0.1, 0.3};
};

struct BenchConfig {
  std::vector<std::int32_t> sizes{8, 16};
  std::vector<double> densities{0.1, 0.5, 1.0};
  std::vector<KernelShape> shapes{KernelShape::cubic, KernelShape::hyper_cross};
  std::int32_t kernel_size = 3;
  std::int32_t trials = 3;
  std::int32_t channels = 8;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  VoxelGridSpec grid{{64, 64, 8}, 0.2f, {0.0f, -6.4f, -0.8f}, 1};
  CameraConfig camera;
  SceneGrammar grammar{2, 1, {}, {}, 6, 4};
  double sigma = 0.2;
  std::vector<std::string> class_names{"free", "ground", "object", "structure", "pole"};
  LiftConfig lift{0.1f, 0.1f, 10000.0f, 16, PoolMode::sum};
  CompletionConfig completion;
  ArchitectureDims arch;
  float alpha = 0.9f;
  ComposeOptions compose{true, UpsampleMode::nearest};
  std::optional<std::uint64_t> weights_seed;
  std::string weights_file;
  SweepConfig sweep;
  BenchConfig bench;
  std::vector<KernelSpec> rf_kernels{KernelSpec::make(KernelShape::hyper_cross, 3),
                                     KernelSpec::make(KernelShape::hyper_cross, 3),
                                     KernelSpec::make(KernelShape::hyper_cross, 3)};

  std::int32_t classes() const { return arch.classes; }
  std::uint64_t effective_weights_seed() const { return weights_seed.value_or(seed); }

  SceneSpec scene_spec() const {
    return {grid, camera.build(), grammar, sigma, arch.classes, lift.channels};
  }

  void validate() const {
    grid.validate();
    require(grid.stride == 1, ErrorCode::config_error, "grid must be given at stride 1");
    for (auto d : grid.full_dims)
      require(d % 2 == 0, ErrorCode::config_error, "grid dims must be even");
    lift.validate();
    arch.validate();
    require(lift.channels == arch.channels, ErrorCode::config_error, "lift channels must equal model channels");
    require(static_cast<std::int32_t>(class_names.size()) == arch.classes, ErrorCode::config_error,
            "need one class name per class");
    require(completion.tau_p >= 0.0f && completion.tau_p <= 1.0f, ErrorCode::config_error,
            "tau_p must lie in [0, 1]");
    require(alpha > 0.0f && alpha < 1.0f, ErrorCode::config_error, "decoder alpha must lie in (0, 1)");
  }
};

namespace pipeline_detail {

inline KernelSpec parse_kernel(const std::string& key, const std::string& s) {
  const auto colon = s.find(':');
  require(colon != std::string::npos, ErrorCode::config_error, key + ": expected shape:size, got `" + s + "`");
  KernelShape shape;
  try {
    shape = parse_kernel_shape(s.substr(0, colon));
  } catch (const Error& e) {
    throw Error(ErrorCode::config_error, key + ": " + e.message());
  }
  return KernelSpec::make(shape, static_cast<std::int32_t>(Config::to_int(key, s.substr(colon + 1))));
}

inline std::vector<std::int32_t> ints(const Config& c, const std::string& key, std::size_t n, std::vector<std::int32_t> fallback) {
  std::vector<double> fb(fallback.begin(), fallback.end());
  const auto v = c.get_doubles(key, fb);
  require(n == 0 || v.size() == n, ErrorCode::config_error, key + ": expected " + std::to_string(n) + " values");
  std::vector<std::int32_t> out;
  for (double d : v) {
    require(d == std::floor(d), ErrorCode::config_error, key + ": expected integers");
    out.push_back(static_cast<std::int32_t>(d));
  }
  return out;
}

inline std::vector<double> doubles(const Config& c, const std::string& key, std::size_t n, std::vector<double> fallback) {
  auto v = c.get_doubles(key, std::move(fallback));
  require(n == 0 || v.size() == n, ErrorCode::config_error, key + ": expected " + std::to_string(n) + " values");
  return v;
}

inline std::uint8_t label_value(const std::string& key, double v) {
  require(v >= 1 && v <= 255 && v == std::floor(v), ErrorCode::config_error, key + ": bad label");
  return static_cast<std::uint8_t>(v);
}

}  // namespace pipeline_detail

inline PipelineConfig parse_pipeline_config(const Config& c) {
  using namespace pipeline_detail;
  PipelineConfig p;
  p.seed = static_cast<std::uint64_t>(c.get_int("seed", 1));

  const auto dims = ints(c, "grid.dims", 3, {64, 64, 8});
  p.grid.full_dims = {dims[0], dims[1], dims[2]};
  p.grid.voxel_size = static_cast<float>(c.get_double("grid.voxel_size", 0.2));
  const auto origin = doubles(c, "grid.origin", 3, {0.0, -6.4, -0.8});
  p.grid.origin = {static_cast<float>(origin[0]), static_cast<float>(origin[1]), static_cast<float>(origin[2])};

  const auto image = ints(c, "camera.image", 2, {24, 80});
  p.camera.height = image[0];
  p.camera.width = image[1];
  const auto k = doubles(c, "camera.intrinsics", 4, {40.0, 40.0, 40.0, 12.0});
  p.camera.fx = k[0];
  p.camera.fy = k[1];
  p.camera.cx = k[2];
  p.camera.cy = k[3];
  const auto pos = doubles(c, "camera.position", 3, {0.0, 0.1, 0.1});
  p.camera.position = {pos[0], pos[1], pos[2]};
  p.camera.yaw_deg = c.get_double("camera.yaw_deg", 0.0);
  const auto range = doubles(c, "camera.depth_range", 2, {0.1, 12.9});
  p.camera.depth_min = range[0];
  p.camera.depth_max = range[1];
  p.camera.bins = static_cast<std::int32_t>(c.get_int("camera.bins", 32));

  p.sigma = c.get_double("scene.sigma", 0.2);
  p.arch.classes = static_cast<std::int32_t>(c.get_int("scene.classes", 5));
  if (c.has("scene.class_names")) {
    p.class_names = Config::split(c.get_string("scene.class_names", ""));
  } else {
    p.class_names.resize(static_cast<std::size_t>(p.arch.classes));
    for (std::size_t i = 5; i < p.class_names.size(); ++i) p.class_names[i] = "class" + std::to_string(i);
  }
  p.grammar.ground_height = static_cast<std::int32_t>(c.get_int("scene.ground_height", 2));
  p.grammar.ground_label = label_value("scene.ground_label", static_cast<double>(c.get_int("scene.ground_label", 1)));
  p.grammar.random_boxes = static_cast<std::int32_t>(c.get_int("scene.random_boxes", 6));
  p.grammar.random_poles = static_cast<std::int32_t>(c.get_int("scene.random_poles", 4));
  for (const auto& v : c.all("scene.box")) {
    const auto f = Config::split(v);
    require(f.size() == 7, ErrorCode::config_error, "scene.box: expected `x0 y0 z0 x1 y1 z1 label`");
    std::vector<std::int32_t> n;
    for (const auto& t : f) n.push_back(static_cast<std::int32_t>(Config::to_int("scene.box", t)));
    p.grammar.boxes.push_back({{n[0], n[1], n[2]}, {n[3], n[4], n[5]}, label_value("scene.box", n[6])});
  }
  for (const auto& v : c.all("scene.pole")) {
    const auto f = Config::split(v);
    require(f.size() == 4, ErrorCode::config_error, "scene.pole: expected `x y height label`");
    std::vector<std::int32_t> n;
    for (const auto& t : f) n.push_back(static_cast<std::int32_t>(Config::to_int("scene.pole", t)));
    p.grammar.poles.push_back({n[0], n[1], n[2], label_value("scene.pole", n[3])});
  }

  p.lift.tau_s = static_cast<float>(c.get_double("lift.tau_s", 0.1));
  p.lift.tau_d = static_cast<float>(c.get_double("lift.tau_d", 0.1));
  p.lift.temperature = static_cast<float>(c.get_double("lift.temperature", 10000.0));
  p.lift.channels = static_cast<std::int32_t>(c.get_int("lift.channels", 16));
  const auto pooling = c.get_string("lift.pooling", "sum");
  require(pooling == "sum" || pooling == "mean", ErrorCode::config_error, "lift.pooling: expected sum or mean");
  p.lift.pooling = pooling == "sum" ? PoolMode::sum : PoolMode::mean;

  p.completion.tau_p = static_cast<float>(c.get_double("completion.tau_p", 0.1));
  p.completion.prune_enabled = c.get_bool("completion.prune", true);

  p.arch.channels = p.lift.channels;
  p.arch.queries = static_cast<std::int32_t>(c.get_int("model.queries", 8));
  p.arch.heads = static_cast<std::int32_t>(c.get_int("model.heads", 2));
  p.arch.msca_dw_size = static_cast<std::int32_t>(c.get_int("model.msca_dw_size", 3));
  p.arch.msca_strips = ints(c, "model.msca_strips", 0, {3, 5});
  p.arch.down_kernel = parse_kernel("model.down_kernel", c.get_string("model.down_kernel", "cubic:2"));
  p.arch.up_kernel = parse_kernel("model.up_kernel", c.get_string("model.up_kernel", "cubic:2"));
  p.arch.fusion_kernel = parse_kernel("model.fusion_kernel", c.get_string("model.fusion_kernel", "hyper_cross:3"));

  p.alpha = static_cast<float>(c.get_double("decoder.alpha", 0.9));
  const auto up = c.get_string("decoder.upsample", "nearest");
  require(up == "nearest" || up == "trilinear", ErrorCode::config_error, "decoder.upsample: expected nearest or trilinear");
  p.compose.upsample = up == "nearest" ? UpsampleMode::nearest : UpsampleMode::trilinear;
  p.compose.gate_inactive = c.get_bool("decoder.gate_inactive", true);

  if (c.has("weights.seed")) p.weights_seed = static_cast<std::uint64_t>(c.get_int("weights.seed", 0));
  p.weights_file = c.get_string("weights.file", "");

  p.sweep.tau_s = doubles(c, "sweep.tau_s", 0, p.sweep.tau_s);
  p.sweep.tau_d = doubles(c, "sweep.tau_d", 0, p.sweep.tau_d);
  p.sweep.tau_p = doubles(c, "sweep.tau_p", 0, p.sweep.tau_p);

  p.bench.sizes = ints(c, "bench.sizes", 0, p.bench.sizes);
  p.bench.densities = doubles(c, "bench.densities", 0, p.bench.densities);
  if (c.has("bench.shapes")) {
    p.bench.shapes.clear();
    for (const auto& s : Config::split(c.get_string("bench.shapes", ""))) p.bench.shapes.push_back(parse_kernel_shape(s));
  }
  p.bench.kernel_size = static_cast<std::int32_t>(c.get_int("bench.kernel_size", 3));
  p.bench.trials = static_cast<std::int32_t>(c.get_int("bench.trials", 3));
  p.bench.channels = static_cast<std::int32_t>(c.get_int("bench.channels", 8));

  if (c.has("rf.kernels")) {
    p.rf_kernels.clear();
    for (const auto& s : Config::split(c.get_string("rf.kernels", ""))) p.rf_kernels.push_back(parse_kernel("rf.kernels", s));
  }

  const auto unused = c.unused_keys();
  require(unused.empty(), ErrorCode::config_error, unused.empty() ? "" : "unknown config key `" + unused.front() + "`");
  p.validate();
  return p;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(Config::load(path));
}

struct StatsRecord {
  float tau_s = 0.0f, tau_d = 0.0f, tau_p = 0.0f;
  bool prune_enabled = true;
  LiftStats lift;
  std::uint64_t lift_active = 0;
  double lift_ms = 0.0;
  std::vector<StageStats> stages;
  std::uint64_t final_active = 0;
  bool context_from_global = false;  // the final tensor was empty
  double decode_ms = 0.0;
  double total_ms = 0.0;
};

inline nlohmann::json to_json(const StatsRecord& s, bool timing) {
  nlohmann::json stages = nlohmann::json::array();
  std::uint64_t lookups = 0, gathers = 0;
  for (const auto& st : s.stages) {
    nlohmann::json j{{"name", st.name},
                     {"stride", st.stride},
                     {"active_in", st.active_in},
                     {"active_before_prune", st.active_before_prune},
                     {"active_after_prune", st.active_after_prune},
                     {"lookups", st.lookups},
                     {"gathers", st.gathers}};
    if (timing) j["wall_ms"] = st.wall_ms;
    stages.push_back(std::move(j));
    lookups += st.lookups;
    gathers += st.gathers;
  }
  nlohmann::json lift{{"frustum_points", s.lift.frustum_points},
                      {"masked_points", s.lift.masked_points},
                      {"in_grid_points", s.lift.in_grid_points},
                      {"active_voxels", s.lift_active}};
  if (timing) lift["wall_ms"] = s.lift_ms;
  nlohmann::json decoder{{"final_active", s.final_active}, {"context_from_global", s.context_from_global}};
  if (timing) decoder["wall_ms"] = s.decode_ms;
  nlohmann::json out{{"thresholds", {{"tau_s", s.tau_s}, {"tau_d", s.tau_d}, {"tau_p", s.tau_p}}},
                     {"prune_enabled", s.prune_enabled},
                     {"lift", lift},
                     {"stages", stages},
                     {"decoder", decoder},
                     {"total_lookups", lookups},
                     {"total_gathers", gathers}};
  if (timing) out["total_ms"] = s.total_ms;
  return out;
}

struct PipelineInputs {
  SceneSample scene;
  WeightsBundle weights;
};

struct DecoderOutputs {
  OcrState ocr;
  HeadOutputs heads;
  OccupancyPrediction prediction;
  bool context_from_global = false;
};

struct PipelineResult {
  SparseVoxelTensor v0;
  CompletionResult completion;
  DecoderOutputs decoder;
  MetricsReport metrics;
  StatsRecord stats;
};

namespace pipeline_detail {

// Re-throws module errors with the failing stage prefixed.
template <typename F>
auto staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(stage) + ": " + e.message());
  }
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace pipeline_detail

inline WeightsBundle load_or_init_weights(const PipelineConfig& cfg) {
  if (cfg.weights_file.empty()) return init_weights(cfg.effective_weights_seed(), cfg.arch);
  WeightsBundle b = read_weights(cfg.weights_file);
  require(b.dims == cfg.arch, ErrorCode::config_error, "weights file architecture does not match the config");
  return b;
}

inline PipelineInputs prepare_inputs(const PipelineConfig& cfg) {
  return pipeline_detail::staged("scene", [&] {
    return PipelineInputs{gen_scene(cfg.seed, cfg.scene_spec()), load_or_init_weights(cfg)};
  });
}

// Context from the finest proxy map, one EMA step on R_global (R := R_global
// when nothing survived), query attention, heads and composition.
inline DecoderOutputs decode_occupancy(const SparseVoxelTensor& final_tensor, const ProxyOccMap& proxy,
                                       const WeightsBundle& w, float alpha, const ComposeOptions& opts,
                                       const OcrState* prior_state = nullptr) {
  DecoderOutputs out;
  OcrState state = prior_state ? *prior_state : OcrState::zeros(w.dims.classes, w.dims.channels, alpha);
  Matrix R = state.R_global;
  if (!final_tensor.empty()) {
    R = compute_ocr(final_tensor, proxy);
  } else {
    out.context_from_global = true;
  }
  out.ocr = update_global_ocr(state, R);
  const Matrix refined = query_context_attention(w.decoder, out.ocr);
  out.heads = predict_heads(refined, w.decoder);
  out.prediction = compose_occupancy(out.heads.P, out.heads.E, final_tensor, w.empty_embedding, opts);
  return out;
}

// Per-cell class distribution at full resolution for the loss metrics:
// half_scores normalised per parent cell (uniform where they sum to zero),
// one-hot free space on gated cells.
inline DenseVoxelTensor full_resolution_distribution(const OccupancyPrediction& pred, const SparseVoxelTensor& support,
                                                     bool gated) {
  const VoxelGridSpec& full = pred.full_labels.grid;
  const std::int32_t S = pred.half_scores.channels();
  DenseVoxelTensor out(full, S);
  const auto mask = gated ? activity_mask(support) : std::vector<std::uint8_t>{};
  const auto n = full.cell_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const Coord3 c = full.coord_of(i);
    const Coord3 parent{c.x / 2, c.y / 2, c.z / 2};
    auto dst = out.at(c);
    if (gated && !mask[static_cast<std::size_t>(pred.half_scores.grid().linear_index(parent))]) {
      dst[0] = 1.0f;
      continue;
    }
    const auto row = pred.half_scores.at(parent);
    double sum = 0.0;
    for (float v : row) sum += v;
    for (std::int32_t s = 0; s < S; ++s)
      dst[static_cast<std::size_t>(s)] =
          sum > 0.0 ? static_cast<float>(row[static_cast<std::size_t>(s)] / sum) : 1.0f / static_cast<float>(S);
  }
  return out;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineInputs& in) {
  using pipeline_detail::ms_since;
  using pipeline_detail::staged;
  const auto t_start = std::chrono::steady_clock::now();
  PipelineResult r;
  r.stats.tau_s = cfg.lift.tau_s;
  r.stats.tau_d = cfg.lift.tau_d;
  r.stats.tau_p = cfg.completion.tau_p;
  r.stats.prune_enabled = cfg.completion.prune_enabled;

  auto t = std::chrono::steady_clock::now();
  r.v0 = staged("lift", [&] {
    return lift(in.scene.features, in.scene.maps, in.scene.camera, cfg.grid.at_stride(2), cfg.lift, &r.stats.lift);
  });
  r.stats.lift_active = r.v0.size();
  r.stats.lift_ms = ms_since(t);

  r.completion = staged("complete", [&] { return complete(r.v0, in.weights.completion, cfg.completion); });
  r.stats.stages = r.completion.stats;
  r.stats.final_active = r.completion.final.size();

  t = std::chrono::steady_clock::now();
  r.decoder = staged("decode", [&] {
    return decode_occupancy(r.completion.final, r.completion.proxies[3], in.weights, cfg.alpha, cfg.compose);
  });
  r.stats.context_from_global = r.decoder.context_from_global;
  r.stats.decode_ms = ms_since(t);

  r.metrics = staged("metrics", [&] {
    MetricsReport m = iou_report(r.decoder.prediction.full_labels, in.scene.gt, cfg.classes());
    m.losses = loss_metrics(
        full_resolution_distribution(r.decoder.prediction, r.completion.final, cfg.compose.gate_inactive),
        in.scene.gt);
    return m;
  });
  r.stats.total_ms = ms_since(t_start);
  return r;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) { return run_pipeline(cfg, prepare_inputs(cfg)); }

// Image-plane maps as dense OVT tensors: an H x W x 1 grid with unit cells.
inline DenseVoxelTensor image_to_dense(const ImageTensor& img) {
  VoxelGridSpec g{{img.height, img.width, 1}, 1.0f, {0.0f, 0.0f, 0.0f}, 1};
  DenseVoxelTensor t(g, img.channels);
  std::copy(img.values.begin(), img.values.end(), t.values().begin());
  return t;
}

inline ImageTensor dense_to_image(const DenseVoxelTensor& t) {
  const auto d = t.grid().dims();
  require(d[2] == 1, ErrorCode::dim_mismatch, "image tensors must have a z extent of 1");
  ImageTensor img(d[0], d[1], t.channels());
  std::copy(t.values().begin(), t.values().end(), img.values.begin());
  return img;
}

inline void write_scene(const std::filesystem::path& dir, const PipelineConfig& cfg, const SceneSample& s) {
  std::filesystem::create_directories(dir);
  write_labels(dir, "gt_labels", s.gt, cfg.class_names);
  write_tensor(image_to_dense(s.maps.sem), dir / "sem.ovt");
  write_tensor(image_to_dense(s.maps.depth), dir / "depth.ovt");
  write_tensor(image_to_dense(s.features), dir / "features.ovt");
}

inline void write_proxies(const std::filesystem::path& dir, const std::array<ProxyOccMap, 4>& proxies) {
  for (std::size_t i = 0; i < proxies.size(); ++i)
    write_tensor(proxies[i].probs, dir / ("proxy" + std::to_string(i) + ".ovt"));
}

// Every file of a pipeline run. Wall times only appear when `timing` is set,
// so default outputs are identical across runs.
inline void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineConfig& cfg,
                                   const PipelineInputs& in, const PipelineResult& r, bool timing) {
  std::filesystem::create_directories(dir);
  write_labels(dir, "gt_labels", in.scene.gt, cfg.class_names);
  write_tensor(r.v0, dir / "v0.ovt");
  write_tensor(r.completion.final, dir / "final.ovt");
  write_proxies(dir, r.completion.proxies);
  write_tensor(r.decoder.prediction.half_scores, dir / "half_scores.ovt");
  write_labels(dir, "labels", r.decoder.prediction.full_labels, cfg.class_names);
  write_json(dir / "metrics.json", to_json(r.metrics));
  write_json(dir / "stats.json", to_json(r.stats, timing));
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct SweepRow {
  double tau_s = 0.0, tau_d = 0.0, tau_p = 0.0;
  std::uint64_t active_voxels = 0;  // lift output count
  std::uint64_t final_active = 0;
  double geometric_iou = 0.0;
  double mean_iou = 0.0;
  double wall_ms = 0.0;
};

// One run per threshold triple on the same scene and weights, ordered with
// tau_s outermost and tau_p innermost.
inline std::vector<SweepRow> sweep(const PipelineConfig& cfg, const PipelineInputs& in) {
  require(!cfg.sweep.tau_s.empty() && !cfg.sweep.tau_d.empty() && !cfg.sweep.tau_p.empty(),
          ErrorCode::config_error, "sweep grid must be non-empty on every axis");
  std::vector<SweepRow> rows;
  for (double ts : cfg.sweep.tau_s)
    for (double td : cfg.sweep.tau_d)
      for (double tp : cfg.sweep.tau_p) {
        PipelineConfig c = cfg;
        c.lift.tau_s = static_cast<float>(ts);
        c.lift.tau_d = static_cast<float>(td);
        c.completion.tau_p = static_cast<float>(tp);
        c.validate();
        const auto r = run_pipeline(c, in);
        rows.push_back({ts, td, tp, r.stats.lift_active, r.stats.final_active, r.metrics.geometric_iou,
                        r.metrics.mean_iou, r.stats.total_ms});
      }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "tau_s,tau_d,tau_p,active_voxels,final_active,geometric_iou,mean_iou,wall_time_ms\n";
  for (const auto& r : rows)
    out += format_double(r.tau_s) + ',' + format_double(r.tau_d) + ',' + format_double(r.tau_p) + ',' +
           std::to_string(r.active_voxels) + ',' + std::to_string(r.final_active) + ',' +
           format_double(r.geometric_iou) + ',' + format_double(r.mean_iou) + ',' + format_double(r.wall_ms) + '\n';
  return out;
}

struct BenchRow {
  std::int32_t size = 0;
  double density = 0.0;
  std::int32_t trial = 0;
  KernelShape shape = KernelShape::cubic;
  std::int32_t kernel_size = 3;
  std::uint64_t active = 0;
  std::uint64_t lookups = 0;
  std::uint64_t gathers = 0;
  double interior_gathers_per_voxel = 0.0;  // NaN when no interior voxel is active
  double cubic_over_shape = 0.0;            // cubic gathers / this row's gathers
  double wall_ms = 0.0;
};

// Random active set of an n^3 grid: each cell kept with probability
// `density`, features uniform in [-1, 1].
inline SparseVoxelTensor random_sparse_tensor(Rng& rng, std::int32_t n, double density, std::int32_t channels) {
  VoxelGridSpec g{{n, n, n}, 1.0f, {0.0f, 0.0f, 0.0f}, 1};
  std::vector<Coord3> coords;
  std::vector<float> feats;
  for (std::int32_t x = 0; x < n; ++x)
    for (std::int32_t y = 0; y < n; ++y)
      for (std::int32_t z = 0; z < n; ++z) {
        if (!(rng.uniform() < density)) continue;
        coords.push_back({x, y, z});
        for (std::int32_t c = 0; c < channels; ++c) feats.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
      }
  return SparseVoxelTensor::from_entries(g, channels, std::move(coords), std::move(feats));
}

inline ConvParams random_conv(Rng& rng, KernelSpec kernel, std::int32_t cin, std::int32_t cout) {
  ConvParams p = ConvParams::zeros(std::move(kernel), cin, cout);
  for (auto& m : p.weights)
    for (auto& v : m.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& b : p.bias) b = static_cast<float>(rng.uniform(-1.0, 1.0));
  return p;
}

inline std::vector<BenchRow> bench_kernels(const BenchConfig& cfg, std::uint64_t seed) {
  std::vector<BenchRow> rows;
  Rng rng(seed);
  for (std::int32_t n : cfg.sizes)
    for (double density : cfg.densities)
      for (std::int32_t trial = 0; trial < cfg.trials; ++trial) {
        const SparseVoxelTensor t = random_sparse_tensor(rng, n, density, cfg.channels);
        const std::size_t first = rows.size();
        std::optional<std::uint64_t> cubic_gathers;
        for (KernelShape shape : cfg.shapes) {
          const ConvParams p = random_conv(rng, KernelSpec::make(shape, cfg.kernel_size), cfg.channels, cfg.channels);
          GatherStats g;
          g.per_output_enabled = true;
          const auto t0 = std::chrono::steady_clock::now();
          (void)submanifold_conv(t, p, &g);
          BenchRow row;
          row.wall_ms = pipeline_detail::ms_since(t0);
          row.size = n;
          row.density = density;
          row.trial = trial;
          row.shape = shape;
          row.kernel_size = cfg.kernel_size;
          row.active = t.size();
          row.lookups = g.lookups;
          row.gathers = g.gathers;
          std::uint64_t interior = 0, interior_gathers = 0;
          for (std::size_t i = 0; i < t.size(); ++i) {
            const Coord3 c = t.coords()[i];
            if (c.x < 1 || c.y < 1 || c.z < 1 || c.x > n - 2 || c.y > n - 2 || c.z > n - 2) continue;
            ++interior;
            interior_gathers += g.per_output[i];
          }
          row.interior_gathers_per_voxel =
              interior ? static_cast<double>(interior_gathers) / static_cast<double>(interior) : std::nan("");
          if (shape == KernelShape::cubic) cubic_gathers = g.gathers;
          rows.push_back(row);
        }
        for (std::size_t i = first; i < rows.size(); ++i)
          rows[i].cubic_over_shape = cubic_gathers && rows[i].gathers
                                         ? static_cast<double>(*cubic_gathers) / static_cast<double>(rows[i].gathers)
                                         : std::nan("");
      }
  return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out =
      "size,density,trial,shape,kernel_size,active,lookups,gathers,interior_gathers_per_voxel,cubic_over_shape,"
      "wall_time_ms\n";
  for (const auto& r : rows)
    out += std::to_string(r.size) + ',' + format_double(r.density) + ',' + std::to_string(r.trial) + ',' +
           to_string(r.shape) + ',' + std::to_string(r.kernel_size) + ',' + std::to_string(r.active) + ',' +
           std::to_string(r.lookups) + ',' + std::to_string(r.gathers) + ',' +
           format_double(r.interior_gathers_per_voxel) + ',' + format_double(r.cubic_over_shape) + ',' +
           format_double(r.wall_ms) + '\n';
  return out;
}

}  // namespace sugvoxel
