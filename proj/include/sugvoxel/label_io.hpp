#pragma once

// Voxel-label text files ("x y z label" per non-free voxel, LF-terminated)
// and their JSON sidecar.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sugvoxel/error.hpp"
#include "sugvoxel/tensor.hpp"

namespace sugvoxel {

inline std::string labels_to_text(const LabelGrid& g) {
  std::string out;
  const auto n = g.grid.cell_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t label = g.labels[static_cast<std::size_t>(i)];
    if (label == 0) continue;
    const Coord3 c = g.grid.coord_of(i);
    out += std::to_string(c.x) + ' ' + std::to_string(c.y) + ' ' + std::to_string(c.z) + ' ' +
           std::to_string(label) + '\n';
  }
  return out;
}

inline LabelGrid labels_from_text(const std::string& text, const VoxelGridSpec& grid) {
  LabelGrid g(grid, 0);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Coord3 c;
    int label = -1;
    std::string extra;
    ls >> c.x >> c.y >> c.z >> label;
    require(ls && !(ls >> extra) && label > 0 && label < 256, ErrorCode::invalid_argument,
            "malformed label line " + std::to_string(line_no));
    require(grid.contains(c), ErrorCode::out_of_grid, "label line " + std::to_string(line_no) + " is outside the grid");
    g.at(c) = static_cast<std::uint8_t>(label);
  }
  return g;
}

inline nlohmann::json grid_to_json(const VoxelGridSpec& g) {
  return {{"dims", g.dims()},
          {"full_dims", g.full_dims},
          {"voxel_size", g.voxel_size},
          {"origin", g.origin},
          {"stride", g.stride}};
}

inline VoxelGridSpec grid_from_json(const nlohmann::json& j) {
  VoxelGridSpec g;
  try {
    g.full_dims = j.at("full_dims").get<std::array<std::int32_t, 3>>();
    g.voxel_size = j.at("voxel_size").get<float>();
    g.origin = j.at("origin").get<std::array<float, 3>>();
    g.stride = j.at("stride").get<std::int32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("bad grid sidecar: ") + e.what());
  }
  g.validate();
  return g;
}

inline nlohmann::json labels_sidecar(const LabelGrid& g, const std::vector<std::string>& class_names) {
  std::size_t occupied = 0;
  for (auto l : g.labels) occupied += l != 0 ? 1 : 0;
  return {{"grid", grid_to_json(g.grid)},
          {"classes", class_names},
          {"format", "x y z label"},
          {"occupied_voxels", occupied}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorCode::io_failure, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io_failure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

// Writes <stem>.txt and <stem>.json into `dir`.
inline void write_labels(const std::filesystem::path& dir, const std::string& stem, const LabelGrid& g,
                         const std::vector<std::string>& class_names) {
  write_text(dir / (stem + ".txt"), labels_to_text(g));
  write_json(dir / (stem + ".json"), labels_sidecar(g, class_names));
}

inline LabelGrid read_labels(const std::filesystem::path& dir, const std::string& stem) {
  nlohmann::json grid_json;
  try {
    grid_json = nlohmann::json::parse(read_text(dir / (stem + ".json"))).at("grid");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("bad label sidecar: ") + e.what());
  }
  const VoxelGridSpec grid = grid_from_json(grid_json);
  return labels_from_text(read_text(dir / (stem + ".txt")), grid);
}

}  // namespace sugvoxel
