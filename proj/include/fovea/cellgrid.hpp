#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fovea/common.hpp"

namespace fovea {

/// Square fovea: hr-pixel rectangle [center - half_extent, center + half_extent)
/// on both axes, tiled by cell_size x cell_size cells.
struct FoveaDescriptor {
  Pixel center;
  int half_extent = 16;
  int cell_size = 2;

  int x0() const noexcept { return center.x - half_extent; }
  int y0() const noexcept { return center.y - half_extent; }
  int x1() const noexcept { return center.x + half_extent; }
  int y1() const noexcept { return center.y + half_extent; }
  bool contains(int x, int y) const noexcept { return x >= x0() && x < x1() && y >= y0() && y < y1(); }

  friend bool operator==(const FoveaDescriptor&, const FoveaDescriptor&) = default;
};

/// Random parameters of the polar periphery.
struct PeripheryLayout {
  double azimuth_offset = 0.0;  ///< radians
  Pixel center_jitter{0, 0};    ///< hr-pixels

  friend bool operator==(const PeripheryLayout&, const PeripheryLayout&) = default;
};

enum class GridKind { uniform, foveated };

/// Partition of a width x height hr-pixel field into N cells.
///
/// Fovea cells are numbered first (row-major per fovea, fovea in
/// declaration order), then periphery cells. Immutable once built.
class CellGrid {
 public:
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return assignment_.size(); }
  std::size_t cell_count() const noexcept { return area_.size(); }
  std::size_t fovea_cell_count() const noexcept { return fovea_cells_; }
  GridKind kind() const noexcept { return kind_; }

  std::span<const std::int32_t> assignment() const noexcept { return assignment_; }
  std::span<const std::int32_t> cell_area() const noexcept { return area_; }
  std::int32_t cell_at(int x, int y) const { return assignment_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<FoveaDescriptor>& fovea() const noexcept { return fovea_; }
  int shift_index() const noexcept { return shift_index_; }
  const PeripheryLayout& periphery() const noexcept { return periphery_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Cells per side for uniform grids (0 for foveated grids).
  int uniform_cells_x() const noexcept { return cells_x_; }
  int uniform_cells_y() const noexcept { return cells_y_; }

  /// FNV-1a hash of the dimensions and assignment; identifies the partition.
  std::uint64_t fingerprint() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto eat = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    };
    eat(static_cast<std::uint64_t>(width_));
    eat(static_cast<std::uint64_t>(height_));
    for (auto a : assignment_) eat(static_cast<std::uint64_t>(a));
    return h;
  }

  /// Builds a grid from a raw assignment; validates the partition invariant.
  static CellGrid from_assignment(int width, int height, std::vector<std::int32_t> assignment, GridKind kind,
                                  std::size_t fovea_cells = 0, std::vector<FoveaDescriptor> fovea = {},
                                  int shift_index = 0, PeripheryLayout periphery = {}, std::uint64_t seed = 0,
                                  int cells_x = 0, int cells_y = 0) {
    require(width > 0 && height > 0, "grid dimensions must be positive");
    require(assignment.size() == static_cast<std::size_t>(width) * height, "assignment size must equal width*height");
    std::int32_t max_cell = -1;
    for (auto a : assignment) {
      require(a >= 0, "assignment contains a negative cell index");
      max_cell = std::max(max_cell, a);
    }
    std::vector<std::int32_t> area(static_cast<std::size_t>(max_cell) + 1, 0);
    for (auto a : assignment) ++area[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < area.size(); ++c)
      require(area[c] > 0, "cell " + std::to_string(c) + " is empty; cells must partition the field");
    CellGrid g;
    g.width_ = width;
    g.height_ = height;
    g.assignment_ = std::move(assignment);
    g.area_ = std::move(area);
    g.kind_ = kind;
    g.fovea_cells_ = fovea_cells;
    g.fovea_ = std::move(fovea);
    g.shift_index_ = shift_index;
    g.periphery_ = periphery;
    g.seed_ = seed;
    g.cells_x_ = cells_x;
    g.cells_y_ = cells_y;
    return g;
  }

 private:
  CellGrid() = default;

  int width_ = 0;
  int height_ = 0;
  std::vector<std::int32_t> assignment_;
  std::vector<std::int32_t> area_;
  GridKind kind_ = GridKind::uniform;
  std::size_t fovea_cells_ = 0;
  std::vector<FoveaDescriptor> fovea_;
  int shift_index_ = 0;
  PeripheryLayout periphery_;
  std::uint64_t seed_ = 0;
  int cells_x_ = 0;
  int cells_y_ = 0;
};

using GridPtr = std::shared_ptr<const CellGrid>;

inline GridPtr share(CellGrid g) { return std::make_shared<const CellGrid>(std::move(g)); }

inline CellGrid make_uniform_grid(int width, int height, int cells_per_side) {
  require(cells_per_side > 0, "cells_per_side must be positive");
  require(width > 0 && height > 0, "grid dimensions must be positive");
  require(width % cells_per_side == 0 && height % cells_per_side == 0,
          "field " + std::to_string(width) + "x" + std::to_string(height) + " is not divisible by " +
              std::to_string(cells_per_side) + " cells per side");
  const auto n = static_cast<std::size_t>(cells_per_side) * cells_per_side;
  require(is_power_of_two(n), "uniform grid cell count " + std::to_string(n) + " is not a power of two");
  const int cw = width / cells_per_side;
  const int ch = height / cells_per_side;
  std::vector<std::int32_t> assignment(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      assignment[static_cast<std::size_t>(y) * width + x] = (y / ch) * cells_per_side + (x / cw);
  return CellGrid::from_assignment(width, height, std::move(assignment), GridKind::uniform, 0, {}, 0, {}, 0,
                                   cells_per_side, cells_per_side);
}

namespace detail {

constexpr int floor_div(int a, int b) noexcept { return (a >= 0) ? a / b : -((-a + b - 1) / b); }

inline Pixel shift_offset(int shift_index, int cell_size) {
  const int half = cell_size / 2;
  switch (shift_index) {
    case 0: return {0, 0};
    case 1: return {half, 0};
    case 2: return {0, half};
    case 3: return {half, half};
    default: throw InvalidArgument("shift_index must be in 0..3, got " + std::to_string(shift_index));
  }
}

inline void validate_fovea(int width, int height, const std::vector<FoveaDescriptor>& fovea) {
  for (std::size_t i = 0; i < fovea.size(); ++i) {
    const auto& f = fovea[i];
    require(f.half_extent > 0 && f.cell_size > 0, "fovea half_extent and cell_size must be positive");
    require(f.x0() >= 0 && f.y0() >= 0 && f.x1() <= width && f.y1() <= height,
            "fovea " + std::to_string(i) + " lies outside the field");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& g = fovea[j];
      const bool disjoint = f.x1() <= g.x0() || g.x1() <= f.x0() || f.y1() <= g.y0() || g.y1() <= f.y0();
      require(disjoint, "fovea " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
    }
  }
}

/// Labels fovea pixels with lattice cells (clipped at the fovea edge); -1 elsewhere.
inline std::size_t rasterize_fovea(int width, int height, const std::vector<FoveaDescriptor>& fovea, int shift_index,
                                   std::vector<std::int32_t>& label) {
  label.assign(static_cast<std::size_t>(width) * height, -1);
  std::int32_t next = 0;
  for (const auto& f : fovea) {
    const Pixel off = shift_offset(shift_index, f.cell_size);
    const int ox = f.x0() + off.x;
    const int oy = f.y0() + off.y;
    const int s = f.cell_size;
    const int lx0 = floor_div(f.x0() - ox, s);
    const int ly0 = floor_div(f.y0() - oy, s);
    const int ncols = floor_div(f.x1() - 1 - ox, s) - lx0 + 1;
    const int nrows = floor_div(f.y1() - 1 - oy, s) - ly0 + 1;
    for (int y = f.y0(); y < f.y1(); ++y) {
      const int ly = floor_div(y - oy, s) - ly0;
      for (int x = f.x0(); x < f.x1(); ++x) {
        const int lx = floor_div(x - ox, s) - lx0;
        label[static_cast<std::size_t>(y) * width + x] = next + ly * ncols + lx;
      }
    }
    next += ncols * nrows;
  }
  return static_cast<std::size_t>(next);
}

struct PolarSample {
  std::size_t pixel;
  double radius;
  double azimuth;  // [0, 2*pi), already offset
};

inline std::vector<PolarSample> polar_samples(int width, int height, const std::vector<FoveaDescriptor>& fovea,
                                              const PeripheryLayout& layout, const std::vector<std::int32_t>& label,
                                              double& perimeter_bias) {
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& f : fovea) {
    cx += f.center.x;
    cy += f.center.y;
  }
  cx = cx / static_cast<double>(fovea.size()) + layout.center_jitter.x;
  cy = cy / static_cast<double>(fovea.size()) + layout.center_jitter.y;
  const bool multi = fovea.size() > 1;
  perimeter_bias = 0.0;
  if (multi)
    for (const auto& f : fovea) perimeter_bias += 4.0 * 2.0 * f.half_extent;

  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<PolarSample> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      if (label[p] >= 0) continue;
      const double px = x + 0.5;
      const double py = y + 0.5;
      double r;
      if (!multi) {
        r = std::hypot(px - cx, py - cy);
      } else {
        r = std::numeric_limits<double>::infinity();
        for (const auto& f : fovea) {
          const double dx = std::max({f.x0() - px, 0.0, px - f.x1()});
          const double dy = std::max({f.y0() - py, 0.0, py - f.y1()});
          r = std::min(r, std::hypot(dx, dy));
        }
      }
      double a = std::atan2(py - cy, px - cx) - layout.azimuth_offset;
      a = std::fmod(a, two_pi);
      if (a < 0) a += two_pi;
      if (a >= two_pi) a = 0.0;
      out.push_back({p, r, a});
    }
  }
  return out;
}

/// Ring/sector labelling of periphery samples with `rings` geometric rings of
/// initial width `inner_width`; returns per-sample raw labels and the count of
/// non-empty labels.
inline std::size_t label_rings(const std::vector<PolarSample>& samples, double r_in, double r_out, double inner_width,
                               int rings, double perimeter_bias, std::vector<std::int64_t>& raw) {
  const double span = r_out - r_in;
  std::vector<double> widths(static_cast<std::size_t>(rings));
  if (rings == 1 || rings * inner_width >= span) {
    std::fill(widths.begin(), widths.end(), span / rings);
  } else {
    // Solve inner_width * (q^R - 1) / (q - 1) = span for q > 1.
    auto total = [&](double q) {
      double s = 0.0;
      double w = inner_width;
      for (int k = 0; k < rings; ++k, w *= q) s += w;
      return s;
    };
    double lo = 1.0;
    double hi = 2.0;
    while (total(hi) < span) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (total(mid) < span ? lo : hi) = mid;
    }
    double w = inner_width;
    for (auto& wk : widths) {
      wk = w;
      w *= hi;
    }
  }
  std::vector<double> bounds(static_cast<std::size_t>(rings) + 1);
  bounds[0] = r_in;
  for (int k = 0; k < rings; ++k) bounds[k + 1] = bounds[k] + widths[k];
  bounds.back() = std::numeric_limits<double>::infinity();

  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::int64_t> sectors(static_cast<std::size_t>(rings));
  std::vector<std::int64_t> offset(static_cast<std::size_t>(rings));
  std::int64_t acc = 0;
  for (int k = 0; k < rings; ++k) {
    const double mid = bounds[k] + 0.5 * widths[k];
    const double circumference = two_pi * mid + perimeter_bias;
    sectors[k] = std::max<std::int64_t>(1, std::llround(circumference / widths[k]));
    offset[k] = acc;
    acc += sectors[k];
  }

  raw.resize(samples.size());
  std::vector<std::uint8_t> used(static_cast<std::size_t>(acc), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto k = static_cast<std::size_t>(std::upper_bound(bounds.begin() + 1, bounds.end(), s.radius) -
                                            (bounds.begin() + 1));
    const auto ring = std::min<std::size_t>(k, static_cast<std::size_t>(rings) - 1);
    auto sector = static_cast<std::int64_t>(s.azimuth / two_pi * static_cast<double>(sectors[ring]));
    sector = std::min(sector, sectors[ring] - 1);
    const std::int64_t l = offset[ring] + sector;
    raw[i] = l;
    if (!used[static_cast<std::size_t>(l)]) {
      used[static_cast<std::size_t>(l)] = 1;
      ++count;
    }
  }
  return count;
}

/// Splits/merges periphery cells until exactly `target` remain.
/// `cells` holds pixel lists; `owner` maps pixel -> periphery cell (-1 for fovea).
inline void repair_count(int width, int height, std::vector<std::vector<std::size_t>>& cells,
                         std::vector<std::int32_t>& owner, std::size_t target) {
  std::vector<std::uint8_t> alive(cells.size(), 1);
  std::size_t live = cells.size();

  while (live < target) {
    std::size_t best = cells.size();
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (alive[c] && (best == cells.size() || cells[c].size() > cells[best].size())) best = c;
    auto& px = cells[best];
    int xmin = width, xmax = -1, ymin = height, ymax = -1;
    for (auto p : px) {
      const int x = static_cast<int>(p % width);
      const int y = static_cast<int>(p / width);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    const bool along_x = (xmax - xmin) >= (ymax - ymin);
    std::sort(px.begin(), px.end(), [&](std::size_t a, std::size_t b) {
      const auto ka = along_x ? std::pair(a % width, a / width) : std::pair(a / width, a % width);
      const auto kb = along_x ? std::pair(b % width, b / width) : std::pair(b / width, b % width);
      return ka < kb;
    });
    const std::size_t keep = px.size() / 2;
    std::vector<std::size_t> moved(px.begin() + static_cast<std::ptrdiff_t>(keep), px.end());
    px.resize(keep);
    const auto id = static_cast<std::int32_t>(cells.size());
    for (auto p : moved) owner[p] = id;
    cells.push_back(std::move(moved));
    alive.push_back(1);
    ++live;
  }

  while (live > target) {
    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (alive[c]) order.push_back(c);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cells[a].size() < cells[b].size(); });
    bool merged = false;
    for (auto small : order) {
      std::size_t partner = cells.size();
      for (auto p : cells[small]) {
        const int x = static_cast<int>(p % width);
        const int y = static_cast<int>(p / width);
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= width || ny[k] >= height) continue;
          const auto o = owner[static_cast<std::size_t>(ny[k]) * width + nx[k]];
          if (o < 0 || static_cast<std::size_t>(o) == small) continue;
          const auto oc = static_cast<std::size_t>(o);
          if (partner == cells.size() || cells[oc].size() < cells[partner].size() ||
              (cells[oc].size() == cells[partner].size() && oc < partner))
            partner = oc;
        }
      }
      if (partner == cells.size()) continue;
      for (auto p : cells[small]) owner[p] = static_cast<std::int32_t>(partner);
      cells[partner].insert(cells[partner].end(), cells[small].begin(), cells[small].end());
      cells[small].clear();
      alive[small] = 0;
      --live;
      merged = true;
      break;
    }
    if (!merged) throw InvalidArgument("cell-count repair failed: no mergeable periphery cells");
  }

  std::vector<std::vector<std::size_t>> compact;
  compact.reserve(live);
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (alive[c]) compact.push_back(std::move(cells[c]));
  cells = std::move(compact);
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (auto p : cells[c]) owner[p] = static_cast<std::int32_t>(c);
}

}  // namespace detail

/// Foveated grid: Cartesian fovea cells plus a ring/sector polar periphery,
/// repaired to exactly `target_cells` cells.
inline CellGrid make_foveated_grid(int width, int height, std::size_t target_cells,
                                   const std::vector<FoveaDescriptor>& fovea, double azimuth_offset,
                                   Pixel polar_center_jitter, std::uint64_t seed, int shift_index = 0) {
  require(width > 0 && height > 0, "grid dimensions must be positive");
  require(!fovea.empty(), "a foveated grid needs at least one fovea");
  require(is_power_of_two(target_cells), "target cell count " + std::to_string(target_cells) +
                                             " is not a power of two");
  detail::validate_fovea(width, height, fovea);
  if (shift_index != 0)
    for (const auto& f : fovea) require(f.cell_size % 2 == 0, "half-cell shifts need an even fovea cell_size");

  std::vector<std::int32_t> label;
  const std::size_t fovea_cells = detail::rasterize_fovea(width, height, fovea, shift_index, label);
  std::size_t periphery_pixels = 0;
  for (auto l : label) periphery_pixels += (l < 0);

  const bool feasible = periphery_pixels == 0
                            ? target_cells == fovea_cells
                            : (fovea_cells + 1 <= target_cells && target_cells <= fovea_cells + periphery_pixels);
  if (!feasible)
    throw InvalidArgument("infeasible target_cells " + std::to_string(target_cells) + ": fovea uses " +
                          std::to_string(fovea_cells) + " cells and the periphery has " +
                          std::to_string(periphery_pixels) + " hr-pixels");

  const PeripheryLayout layout{azimuth_offset, polar_center_jitter};
  std::vector<std::int32_t> owner(label.size(), -1);
  std::vector<std::vector<std::size_t>> cells;

  if (periphery_pixels > 0) {
    double bias = 0.0;
    const auto samples = detail::polar_samples(width, height, fovea, layout, label, bias);
    double r_in = std::numeric_limits<double>::infinity();
    double r_out = 0.0;
    for (const auto& s : samples) {
      r_in = std::min(r_in, s.radius);
      r_out = std::max(r_out, s.radius);
    }
    r_out += 1e-9;
    int min_cell = fovea.front().cell_size;
    for (const auto& f : fovea) min_cell = std::min(min_cell, f.cell_size);
    const double inner_width = static_cast<double>(min_cell);
    const std::size_t want = target_cells - fovea_cells;

    int best_rings = 1;
    std::size_t best_gap = std::numeric_limits<std::size_t>::max();
    std::vector<std::int64_t> raw;
    const int max_rings = std::max(1, static_cast<int>(std::ceil((r_out - r_in) / 1.0)));
    for (int rings = 1; rings <= max_rings; ++rings) {
      const std::size_t n = detail::label_rings(samples, r_in, r_out, inner_width, rings, bias, raw);
      const std::size_t gap = n > want ? n - want : want - n;
      if (gap < best_gap) {
        best_gap = gap;
        best_rings = rings;
      }
      if (n >= want) break;  // counts grow with the ring count
    }
    detail::label_rings(samples, r_in, r_out, inner_width, best_rings, bias, raw);

    // Compact raw labels in increasing (ring, sector) order.
    std::vector<std::int64_t> distinct(raw);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    cells.resize(distinct.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto c = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), raw[i]) -
                                              distinct.begin());
      cells[c].push_back(samples[i].pixel);
      owner[samples[i].pixel] = static_cast<std::int32_t>(c);
    }
    detail::repair_count(width, height, cells, owner, want);
  }

  std::vector<std::int32_t> assignment(label.size());
  for (std::size_t p = 0; p < label.size(); ++p)
    assignment[p] = label[p] >= 0 ? label[p] : static_cast<std::int32_t>(fovea_cells) + owner[p];
  return CellGrid::from_assignment(width, height, std::move(assignment), GridKind::foveated, fovea_cells, fovea,
                                   shift_index, layout, seed);
}

/// Draws a fresh periphery layout (azimuth in [0, 2pi), jitter in {-2..2}^2).
inline PeripheryLayout draw_periphery(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> jitter(-2, 2);
  PeripheryLayout p;
  p.azimuth_offset = azimuth(rng);
  p.center_jitter.x = jitter(rng);
  p.center_jitter.y = jitter(rng);
  return p;
}

/// Translates the fovea lattice by a half-cell pattern and re-randomizes the
/// periphery from the grid's seed stream. The footprint and N are preserved.
inline CellGrid shift_fovea(const CellGrid& grid, int shift_index) {
  require(grid.kind() == GridKind::foveated && !grid.fovea().empty(), "shift_fovea needs a foveated grid");
  require(shift_index >= 0 && shift_index <= 3, "shift_index must be in 0..3");
  for (const auto& f : grid.fovea())
    require(f.cell_size % 2 == 0, "half-cell shifts need an even fovea cell_size, got " + std::to_string(f.cell_size));
  const std::uint64_t next_seed = derive_seed(grid.seed(), static_cast<std::uint64_t>(shift_index) + 1);
  const PeripheryLayout layout = draw_periphery(next_seed);
  return make_foveated_grid(grid.width(), grid.height(), grid.cell_count(), grid.fovea(), layout.azimuth_offset,
                            layout.center_jitter, next_seed, shift_index);
}

/// Cell-to-hr-pixel stretch T (sparse, via the assignment) and the diagonal area matrix A.
class StretchTransform {
 public:
  explicit StretchTransform(GridPtr grid) : grid_(std::move(grid)) { require(grid_ != nullptr, "null grid"); }

  const CellGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  /// A_mm: area of the cell containing hr-pixel m.
  double area_at(std::size_t m) const {
    return static_cast<double>(grid_->cell_area()[static_cast<std::size_t>(grid_->assignment()[m])]);
  }

  /// T * cell_values.
  std::vector<double> expand(std::span<const double> cell_values) const {
    require(cell_values.size() == grid_->cell_count(), "expand: vector length " + std::to_string(cell_values.size()) +
                                                           " != cell count " + std::to_string(grid_->cell_count()));
    const auto a = grid_->assignment();
    std::vector<double> out(a.size());
    for (std::size_t m = 0; m < a.size(); ++m) out[m] = cell_values[static_cast<std::size_t>(a[m])];
    return out;
  }

  /// T^T * hr_values (per-cell sums).
  std::vector<double> reduce(std::span<const double> hr_values) const {
    require(hr_values.size() == grid_->pixel_count(), "reduce: vector length mismatch");
    const auto a = grid_->assignment();
    std::vector<double> out(grid_->cell_count(), 0.0);
    for (std::size_t m = 0; m < a.size(); ++m) out[static_cast<std::size_t>(a[m])] += hr_values[m];
    return out;
  }

  /// Per-cell means: T^T A^-1 applied to hr_values, i.e. sums divided by area.
  std::vector<double> cell_means(std::span<const double> hr_values) const {
    auto s = reduce(hr_values);
    const auto area = grid_->cell_area();
    for (std::size_t c = 0; c < s.size(); ++c) s[c] /= static_cast<double>(area[c]);
    return s;
  }

  /// A^-1 T T^T hr_values: projection onto cell-constant fields.
  std::vector<double> project(std::span<const double> hr_values) const {
    const auto means = cell_means(hr_values);
    return expand(means);
  }

 private:
  GridPtr grid_;
};

inline StretchTransform stretch(GridPtr grid) { return StretchTransform(std::move(grid)); }

}  // namespace fovea
