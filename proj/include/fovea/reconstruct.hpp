#pragma once

#include <span>
#include <string>
#include <vector>

#include "fovea/cellgrid.hpp"
#include "fovea/common.hpp"
#include "fovea/detector.hpp"
#include "fovea/hadamard.hpp"

namespace fovea {

/// One reconstructed space-variant acquisition.
///
/// `cell_sums` is c = (1/N) H b, the per-cell sum of hr-pixel intensities;
/// `hr_image` is A^-1 T c, constant within each cell (mean intensity).
struct SubFrame {
  GridPtr grid;
  std::vector<double> cell_sums;
  std::vector<double> hr_image;
  double t_start = 0.0;
  double t_end = 0.0;

  std::size_t cell_count() const { return cell_sums.size(); }
  Image image() const {
    Image img(grid->width(), grid->height());
    img.data = hr_image;
    return img;
  }
};

namespace detail {

inline void check_record(const MeasurementRecord& rec, const HadamardBasis& basis) {
  require(rec.grid != nullptr, "record has no grid");
  require(rec.coefficients.size() == rec.grid->cell_count(),
          "record has " + std::to_string(rec.coefficients.size()) + " coefficients for a " +
              std::to_string(rec.grid->cell_count()) + "-cell grid");
  require(basis.order() == rec.grid->cell_count(), "basis order " + std::to_string(basis.order()) +
                                                       " != grid cell count " + std::to_string(rec.grid->cell_count()));
}

}  // namespace detail

/// c = (1/N) sum_n b_n h_n via FWHT, in O(N log N).
inline std::vector<double> cell_sums_from_coefficients(std::span<const double> coefficients) {
  std::vector<double> c(coefficients.begin(), coefficients.end());
  fwht_inplace(std::span<double>(c));
  const double inv_n = 1.0 / static_cast<double>(c.size());
  for (auto& v : c) v *= inv_n;
  return c;
}

inline SubFrame reconstruct_subframe(const MeasurementRecord& rec, const HadamardBasis& basis) {
  detail::check_record(rec, basis);
  SubFrame sf;
  sf.grid = rec.grid;
  sf.t_start = rec.t_start;
  sf.t_end = rec.t_end;
  sf.cell_sums = cell_sums_from_coefficients(rec.coefficients);
  std::vector<double> means(sf.cell_sums);
  const auto area = rec.grid->cell_area();
  for (std::size_t c = 0; c < means.size(); ++c) means[c] /= static_cast<double>(area[c]);
  sf.hr_image = StretchTransform(rec.grid).expand(means);
  return sf;
}

/// Uniform-grid reconstruction as a cells_x x cells_y image of mean intensities.
inline Image reconstruct_uniform(const MeasurementRecord& rec, const HadamardBasis& basis) {
  detail::check_record(rec, basis);
  require(rec.grid->kind() == GridKind::uniform, "reconstruct_uniform needs a uniform-grid record");
  const auto c = cell_sums_from_coefficients(rec.coefficients);
  const int cx = rec.grid->uniform_cells_x();
  const int cy = rec.grid->uniform_cells_y();
  const double area = static_cast<double>(rec.grid->cell_area()[0]);
  Image img(cx, cy);
  for (std::size_t i = 0; i < c.size(); ++i) img.data[i] = c[i] / area;
  return img;
}

/// Low-resolution frame interlaced between fixations.
struct BlipFrame {
  Image field;
  double t_start = 0.0;
  double t_end = 0.0;
};

inline BlipFrame reconstruct_blip(const MeasurementRecord& rec, const HadamardBasis& basis) {
  return BlipFrame{reconstruct_uniform(rec, basis), rec.t_start, rec.t_end};
}

}  // namespace fovea
