#pragma once

#include <string>
#include <vector>

#include "fovea/cellgrid.hpp"
#include "fovea/common.hpp"
#include "fovea/detector.hpp"
#include "json.hpp"

namespace fovea {

using nlohmann::json;

inline constexpr int schema_version = 1;

inline const char* to_string(GridKind k) { return k == GridKind::uniform ? "uniform" : "foveated"; }

inline GridKind grid_kind_from_string(const std::string& s) {
  if (s == "uniform") return GridKind::uniform;
  if (s == "foveated") return GridKind::foveated;
  throw InvalidArgument("unknown grid kind '" + s + "'");
}

inline json fovea_to_json(const FoveaDescriptor& f) {
  return json{{"center", {f.center.x, f.center.y}}, {"half_extent", f.half_extent}, {"cell_size", f.cell_size}};
}

inline FoveaDescriptor fovea_from_json(const json& j) {
  FoveaDescriptor f;
  const auto& c = j.at("center");
  f.center = {c.at(0).get<int>(), c.at(1).get<int>()};
  f.half_extent = j.at("half_extent").get<int>();
  f.cell_size = j.at("cell_size").get<int>();
  return f;
}

/// Grid JSON: dimensions, row-major assignment, fovea descriptors, periphery
/// parameters and seed. Enough to rebuild the partition bit-for-bit.
inline json grid_to_json(const CellGrid& g) {
  json fov = json::array();
  for (const auto& f : g.fovea()) fov.push_back(fovea_to_json(f));
  return json{{"schema", schema_version},
              {"kind", to_string(g.kind())},
              {"width", g.width()},
              {"height", g.height()},
              {"cell_count", g.cell_count()},
              {"fovea_cell_count", g.fovea_cell_count()},
              {"uniform_cells", {g.uniform_cells_x(), g.uniform_cells_y()}},
              {"fovea", fov},
              {"shift_index", g.shift_index()},
              {"azimuth_offset", g.periphery().azimuth_offset},
              {"polar_center_jitter", {g.periphery().center_jitter.x, g.periphery().center_jitter.y}},
              {"seed", g.seed()},
              {"fingerprint", g.fingerprint()},
              {"assignment", std::vector<std::int32_t>(g.assignment().begin(), g.assignment().end())}};
}

inline CellGrid grid_from_json(const json& j) {
  try {
    std::vector<FoveaDescriptor> fov;
    for (const auto& f : j.at("fovea")) fov.push_back(fovea_from_json(f));
    const auto& jit = j.at("polar_center_jitter");
    PeripheryLayout layout{j.at("azimuth_offset").get<double>(), {jit.at(0).get<int>(), jit.at(1).get<int>()}};
    const auto& uc = j.at("uniform_cells");
    CellGrid g = CellGrid::from_assignment(
        j.at("width").get<int>(), j.at("height").get<int>(), j.at("assignment").get<std::vector<std::int32_t>>(),
        grid_kind_from_string(j.at("kind").get<std::string>()), j.at("fovea_cell_count").get<std::size_t>(),
        std::move(fov), j.at("shift_index").get<int>(), layout, j.at("seed").get<std::uint64_t>(), uc.at(0).get<int>(),
        uc.at(1).get<int>());
    require(g.cell_count() == j.at("cell_count").get<std::size_t>(), "grid JSON cell_count disagrees with assignment");
    return g;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed grid JSON: ") + e.what());
  }
}

inline json record_to_json(const MeasurementRecord& r) {
  return json{{"schema", schema_version},
              {"t_start", r.t_start},
              {"t_end", r.t_end},
              {"pattern_count", r.pattern_count},
              {"mask_rate", r.mask_rate},
              {"dead_time", r.dead_time},
              {"coefficients", r.coefficients},
              {"grid", grid_to_json(*r.grid)}};
}

inline MeasurementRecord record_from_json(const json& j) {
  try {
    MeasurementRecord r;
    r.grid = share(grid_from_json(j.at("grid")));
    r.coefficients = j.at("coefficients").get<std::vector<double>>();
    r.t_start = j.at("t_start").get<double>();
    r.t_end = j.at("t_end").get<double>();
    r.pattern_count = j.at("pattern_count").get<std::size_t>();
    r.mask_rate = j.at("mask_rate").get<double>();
    r.dead_time = j.at("dead_time").get<double>();
    require(r.coefficients.size() == r.grid->cell_count(), "record coefficient count disagrees with its grid");
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed record JSON: ") + e.what());
  }
}

}  // namespace fovea
