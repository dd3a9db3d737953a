// sugvoxel <subcommand> --config <path> [--seed N] [--out <dir>]

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sugvoxel/kernels.hpp"
#include "sugvoxel/label_io.hpp"
#include "sugvoxel/ovt_io.hpp"
#include "sugvoxel/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sugvoxel;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string in;
  bool timing = false;
};

PipelineConfig load(const CommonArgs& a) {
  PipelineConfig cfg = load_pipeline_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  return cfg;
}

void add_common(CLI::App* sub, CommonArgs& a, bool with_in, bool with_timing) {
  sub->add_option("--config", a.config, "Config file (key = value)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "Scene seed (overrides `seed`)");
  sub->add_option("--out", a.out, "Output directory")->capture_default_str();
  if (with_in) sub->add_option("--in", a.in, "Read the upstream stage's outputs from this directory");
  if (with_timing) sub->add_flag("--timing", a.timing, "Include wall times in stats.json");
}

SceneSample scene_from(const CommonArgs& a, const PipelineConfig& cfg) {
  if (a.in.empty()) return gen_scene(cfg.seed, cfg.scene_spec());
  const fs::path dir = a.in;
  SceneSample s;
  s.camera = cfg.camera.build();
  s.maps.sem = dense_to_image(read_dense(dir / "sem.ovt"));
  s.maps.depth = dense_to_image(read_dense(dir / "depth.ovt"));
  s.features = dense_to_image(read_dense(dir / "features.ovt"));
  return s;
}

SparseVoxelTensor lift_stage(const PipelineConfig& cfg, const SceneSample& s, LiftStats* stats) {
  return lift(s.features, s.maps, s.camera, cfg.grid.at_stride(2), cfg.lift, stats);
}

nlohmann::json stages_json(const std::vector<StageStats>& stages) {
  StatsRecord rec;
  rec.stages = stages;
  return to_json(rec, false)["stages"];
}

int cmd_gen(const CommonArgs& a) {
  const auto cfg = load(a);
  const auto scene = gen_scene(cfg.seed, cfg.scene_spec());
  write_scene(a.out, cfg, scene);
  std::size_t occupied = 0;
  for (auto l : scene.gt.labels) occupied += l != 0;
  std::cout << "scene seed " << cfg.seed << ": " << occupied << " occupied voxels -> " << a.out << "\n";
  return 0;
}

int cmd_lift(const CommonArgs& a) {
  const auto cfg = load(a);
  const auto scene = scene_from(a, cfg);
  LiftStats stats;
  const auto v0 = lift_stage(cfg, scene, &stats);
  fs::create_directories(a.out);
  write_tensor(v0, fs::path(a.out) / "v0.ovt");
  StatsRecord rec;
  rec.lift = stats;
  rec.lift_active = v0.size();
  write_json(fs::path(a.out) / "lift_stats.json", to_json(rec, false)["lift"]);
  std::cout << "lift: " << v0.size() << " active voxels (" << stats.masked_points << " of " << stats.frustum_points
            << " frustum points kept)\n";
  return 0;
}

int cmd_complete(const CommonArgs& a) {
  const auto cfg = load(a);
  SparseVoxelTensor v0;
  if (!a.in.empty()) {
    v0 = read_sparse(fs::path(a.in) / "v0.ovt");
  } else {
    v0 = lift_stage(cfg, gen_scene(cfg.seed, cfg.scene_spec()), nullptr);
  }
  const auto weights = load_or_init_weights(cfg);
  const auto r = complete(v0, weights.completion, cfg.completion);
  fs::create_directories(a.out);
  write_tensor(r.final, fs::path(a.out) / "final.ovt");
  write_proxies(a.out, r.proxies);
  write_json(fs::path(a.out) / "completion_stats.json", stages_json(r.stats));
  std::cout << "complete: " << v0.size() << " -> " << r.final.size() << " active voxels\n";
  return 0;
}

int cmd_decode(const CommonArgs& a) {
  const auto cfg = load(a);
  const auto weights = load_or_init_weights(cfg);
  SparseVoxelTensor final_tensor;
  ProxyOccMap proxy;
  if (!a.in.empty()) {
    final_tensor = read_sparse(fs::path(a.in) / "final.ovt");
    proxy.probs = read_sparse(fs::path(a.in) / "proxy3.ovt");
  } else {
    const auto v0 = lift_stage(cfg, gen_scene(cfg.seed, cfg.scene_spec()), nullptr);
    auto r = complete(v0, weights.completion, cfg.completion);
    final_tensor = std::move(r.final);
    proxy = std::move(r.proxies[3]);
  }
  const auto d = decode_occupancy(final_tensor, proxy, weights, cfg.alpha, cfg.compose);
  fs::create_directories(a.out);
  write_tensor(d.prediction.half_scores, fs::path(a.out) / "half_scores.ovt");
  write_labels(a.out, "labels", d.prediction.full_labels, cfg.class_names);
  std::size_t occupied = 0;
  for (auto l : d.prediction.full_labels.labels) occupied += l != 0;
  std::cout << "decode: " << occupied << " occupied voxels at full resolution\n";
  return 0;
}

int cmd_pipeline(const CommonArgs& a) {
  const auto cfg = load(a);
  const auto in = prepare_inputs(cfg);
  const auto r = run_pipeline(cfg, in);
  write_pipeline_outputs(a.out, cfg, in, r, a.timing);
  std::cout << "pipeline: lift " << r.stats.lift_active << ", final " << r.stats.final_active
            << " active voxels; IoU " << format_double(r.metrics.geometric_iou) << ", mIoU "
            << format_double(r.metrics.mean_iou) << " (" << format_double(r.stats.total_ms) << " ms)\n";
  return 0;
}

int cmd_sweep(const CommonArgs& a) {
  const auto cfg = load(a);
  const auto rows = sweep(cfg, prepare_inputs(cfg));
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "sweep.csv", sweep_csv(rows));
  std::cout << "sweep: " << rows.size() << " rows -> " << (fs::path(a.out) / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& a) {
  const auto cfg = load(a);
  const auto rows = bench_kernels(cfg.bench, cfg.seed);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "bench.csv", bench_csv(rows));
  std::cout << "bench: " << rows.size() << " rows -> " << (fs::path(a.out) / "bench.csv").string() << "\n";
  return 0;
}

int cmd_rf(const CommonArgs& a, bool out_given) {
  const auto cfg = load(a);
  nlohmann::json j;
  j["kernels"] = nlohmann::json::array();
  for (std::size_t n = 1; n <= cfg.rf_kernels.size(); ++n) {
    const auto rf = receptive_field(std::span<const KernelSpec>(cfg.rf_kernels.data(), n));
    std::cout << "after " << n << " layer(s) (" << to_string(cfg.rf_kernels[n - 1].shape) << " "
              << cfg.rf_kernels[n - 1].size << "): " << rf.size() << " offsets\n";
    nlohmann::json layer{{"shape", to_string(cfg.rf_kernels[n - 1].shape)},
                         {"size", cfg.rf_kernels[n - 1].size},
                         {"offsets", nlohmann::json::array()}};
    for (const auto& o : rf) layer["offsets"].push_back({o.x, o.y, o.z});
    if (n == cfg.rf_kernels.size()) {
      for (const auto& o : rf) std::cout << "  " << o.x << " " << o.y << " " << o.z << "\n";
    }
    j["kernels"].push_back(std::move(layer));
  }
  if (out_given) {
    fs::create_directories(a.out);
    write_json(fs::path(a.out) / "rf.json", j);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse semantic-occupancy engine: synthetic scenes, lifting, completion, decoding"};
  app.require_subcommand(1);
  CommonArgs args;
  struct Sub {
    const char* name;
    const char* help;
    bool with_in;
    bool with_timing;
  };
  const Sub subs[] = {{"gen", "Generate a synthetic scene and its pixel maps", false, false},
                      {"lift", "Lift pixel maps into the half-resolution sparse volume", true, false},
                      {"complete", "Run the sparse completion network", true, false},
                      {"decode", "Run the mask decoder and write voxel labels", true, false},
                      {"pipeline", "Run every stage and write all outputs and metrics", false, true},
                      {"sweep", "Sweep the three thresholds and write sweep.csv", false, false},
                      {"bench", "Count kernel gathers and write bench.csv", false, false},
                      {"rf", "Print receptive-field offset sets of a kernel stack", false, false}};
  for (const auto& s : subs) add_common(app.add_subcommand(s.name, s.help), args, s.with_in, s.with_timing);

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "gen") return cmd_gen(args);
    if (name == "lift") return cmd_lift(args);
    if (name == "complete") return cmd_complete(args);
    if (name == "decode") return cmd_decode(args);
    if (name == "pipeline") return cmd_pipeline(args);
    if (name == "sweep") return cmd_sweep(args);
    if (name == "bench") return cmd_bench(args);
    return cmd_rf(args, app.get_subcommands().front()->count("--out") > 0);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
