#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fovea/cellgrid.hpp"
#include "fovea/common.hpp"
#include "fovea/detector.hpp"
#include "fovea/difference_stack.hpp"
#include "fovea/hadamard.hpp"
#include "fovea/image_io.hpp"
#include "fovea/reconstruct.hpp"
#include "fovea/scene.hpp"
#include "fovea/sparse_lsq.hpp"

namespace fovea {

/// Fused hr-pixel image with per-pixel effective exposure time.
struct CompositeImage {
  Image image;
  Image exposure_map;                    ///< seconds, oldest contributing t_start to newest t_end
  std::vector<int> contributing_frames;  ///< unflagged sub-frames per hr-pixel (0 = fallback to newest)
};

/// flagged[k][cell] != 0 removes that cell of sub-frame k from fusion.
struct MotionMask {
  std::vector<std::vector<std::uint8_t>> flagged;

  static MotionMask none(std::span<const SubFrame> frames) {
    MotionMask m;
    for (const auto& f : frames) m.flagged.emplace_back(f.cell_count(), 0);
    return m;
  }
  bool is_flagged(std::size_t k, std::size_t cell) const { return flagged[k][cell] != 0; }
  std::size_t flagged_count() const {
    std::size_t n = 0;
    for (const auto& f : flagged)
      for (auto v : f) n += v != 0;
    return n;
  }
};

enum class WeightMode { area_inverse, newest_biased, best_resolution };

inline const char* to_string(WeightMode m) {
  switch (m) {
    case WeightMode::area_inverse: return "area-inverse";
    case WeightMode::newest_biased: return "newest-biased";
    case WeightMode::best_resolution: return "best-resolution";
  }
  return "?";
}

inline WeightMode weight_mode_from_string(const std::string& s) {
  if (s == "area-inverse") return WeightMode::area_inverse;
  if (s == "newest-biased") return WeightMode::newest_biased;
  if (s == "best-resolution") return WeightMode::best_resolution;
  throw InvalidArgument("unknown weighting mode '" + s + "'");
}

namespace detail {

inline void check_frames(std::span<const SubFrame> frames, const MotionMask* mask) {
  require(!frames.empty(), "fusion needs at least one sub-frame");
  const int w = frames[0].grid->width();
  const int h = frames[0].grid->height();
  for (const auto& f : frames) {
    require(f.grid != nullptr, "sub-frame without grid");
    require(f.grid->width() == w && f.grid->height() == h, "sub-frames have different field dimensions");
    require(f.hr_image.size() == f.grid->pixel_count() && f.cell_sums.size() == f.grid->cell_count(),
            "sub-frame data does not match its grid");
  }
  if (mask) {
    require(mask->flagged.size() == frames.size(), "motion mask covers a different number of sub-frames");
    for (std::size_t k = 0; k < frames.size(); ++k)
      require(mask->flagged[k].size() == frames[k].cell_count(), "motion mask cell count mismatch");
  }
}

/// Age of each frame by start-time rank: 0 for the newest.
inline std::vector<int> frame_ages(std::span<const SubFrame> frames) {
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frames[a].t_start > frames[b].t_start; });
  std::vector<int> age(frames.size());
  for (std::size_t r = 0; r < order.size(); ++r) age[order[r]] = static_cast<int>(r);
  return age;
}

inline std::size_t newest_frame(std::span<const SubFrame> frames) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < frames.size(); ++k)
    if (frames[k].t_start >= frames[best].t_start) best = k;
  return best;
}

/// Exposure and contributor counts shared by both fusion paths.
inline void fill_exposure(std::span<const SubFrame> frames, const MotionMask* mask, CompositeImage& out) {
  const int w = frames[0].grid->width();
  const int h = frames[0].grid->height();
  const std::size_t m = frames[0].grid->pixel_count();
  const std::size_t newest = newest_frame(frames);
  out.exposure_map = Image(w, h);
  out.contributing_frames.assign(m, 0);
  for (std::size_t p = 0; p < m; ++p) {
    double t0 = std::numeric_limits<double>::infinity();
    double t1 = -std::numeric_limits<double>::infinity();
    int count = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const auto c = static_cast<std::size_t>(frames[k].grid->assignment()[p]);
      if (mask && mask->is_flagged(k, c)) continue;
      t0 = std::min(t0, frames[k].t_start);
      t1 = std::max(t1, frames[k].t_end);
      ++count;
    }
    if (count == 0) {
      t0 = frames[newest].t_start;
      t1 = frames[newest].t_end;
    }
    out.exposure_map.data[p] = t1 - t0;
    out.contributing_frames[p] = count;
  }
}

}  // namespace detail

/// Per-pixel weighted mean of sub-frame values.
///
/// area-inverse: weights 1/A^(k); newest-biased: recency^age / A^(k);
/// best-resolution: equal weights over the minimum-area contributors.
/// Pixels with no unflagged contributor take the newest sub-frame's value.
inline CompositeImage weighted_average(std::span<const SubFrame> frames, WeightMode mode = WeightMode::area_inverse,
                                       const MotionMask* mask = nullptr, double recency = 0.8) {
  detail::check_frames(frames, mask);
  require(recency > 0 && recency <= 1, "recency factor must be in (0, 1]");
  const std::size_t m = frames[0].grid->pixel_count();
  const auto age = detail::frame_ages(frames);
  const std::size_t newest = detail::newest_frame(frames);

  std::vector<double> age_weight(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k)
    age_weight[k] = mode == WeightMode::newest_biased ? std::pow(recency, age[k]) : 1.0;

  CompositeImage out;
  out.image = Image(frames[0].grid->width(), frames[0].grid->height());
  for (std::size_t p = 0; p < m; ++p) {
    double min_area = std::numeric_limits<double>::infinity();
    if (mode == WeightMode::best_resolution) {
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto c = static_cast<std::size_t>(frames[k].grid->assignment()[p]);
        if (mask && mask->is_flagged(k, c)) continue;
        min_area = std::min(min_area, static_cast<double>(frames[k].grid->cell_area()[c]));
      }
    }
    // accumulated relative to the first contributor so a lone or constant
    // contribution comes back exactly
    double num = 0.0;
    double den = 0.0;
    double ref = 0.0;
    bool have_ref = false;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const auto c = static_cast<std::size_t>(frames[k].grid->assignment()[p]);
      if (mask && mask->is_flagged(k, c)) continue;
      const double area = static_cast<double>(frames[k].grid->cell_area()[c]);
      double wgt;
      if (mode == WeightMode::best_resolution) {
        if (area != min_area) continue;
        wgt = 1.0;
      } else {
        wgt = age_weight[k] / area;
      }
      if (!have_ref) {
        ref = frames[k].hr_image[p];
        have_ref = true;
      }
      num += wgt * (frames[k].hr_image[p] - ref);
      den += wgt;
    }
    out.image.data[p] = den > 0 ? ref + num / den : frames[newest].hr_image[p];
  }
  detail::fill_exposure(frames, mask, out);
  return out;
}

/// Stacked constraint matrix: one row per unflagged (sub-frame, cell) whose
/// entries are 1/sqrt(area) on the cell's hr-pixels, plus lambda * I when
/// lambda > 0. The row weight makes each sub-frame block an orthogonal
/// projection, so a row residual is the hr-pixel misfit of that cell.
class ConstraintOperator {
 public:
  ConstraintOperator(std::span<const SubFrame> frames, const MotionMask* mask, double lambda)
      : lambda_(lambda), pixels_(frames[0].grid->pixel_count()) {
    for (std::size_t k = 0; k < frames.size(); ++k) {
      std::vector<std::int64_t> row(frames[k].cell_count(), -1);  // cell -> row
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (mask && mask->is_flagged(k, c)) continue;
        row[c] = static_cast<std::int64_t>(constraint_rows_);
        cells_.push_back({k, c});
        weight_.push_back(1.0 / std::sqrt(static_cast<double>(frames[k].grid->cell_area()[c])));
        ++constraint_rows_;
      }
      const auto a = frames[k].grid->assignment();
      std::vector<std::int32_t> at(pixels_);
      for (std::size_t p = 0; p < pixels_; ++p) at[p] = static_cast<std::int32_t>(row[static_cast<std::size_t>(a[p])]);
      pixel_row_.push_back(std::move(at));
    }
  }

  std::size_t rows() const noexcept { return constraint_rows_ + (lambda_ > 0 ? pixels_ : 0); }
  std::size_t cols() const noexcept { return pixels_; }
  std::size_t constraint_rows() const noexcept { return constraint_rows_; }
  /// (sub-frame, cell) of each constraint row.
  struct RowRef {
    std::size_t frame;
    std::size_t cell;
  };
  const std::vector<RowRef>& row_cells() const noexcept { return cells_; }
  const std::vector<double>& row_weights() const noexcept { return weight_; }

  void apply(std::span<const double> x, std::span<double> y) const {
    std::fill(y.begin(), y.end(), 0.0);
    for (const auto& at : pixel_row_)
      for (std::size_t p = 0; p < pixels_; ++p)
        if (at[p] >= 0) y[static_cast<std::size_t>(at[p])] += x[p];
    for (std::size_t r = 0; r < constraint_rows_; ++r) y[r] *= weight_[r];
    if (lambda_ > 0)
      for (std::size_t p = 0; p < pixels_; ++p) y[constraint_rows_ + p] = lambda_ * x[p];
  }

  void apply_transpose(std::span<const double> y, std::span<double> x) const {
    for (std::size_t p = 0; p < pixels_; ++p) x[p] = lambda_ > 0 ? lambda_ * y[constraint_rows_ + p] : 0.0;
    for (const auto& at : pixel_row_)
      for (std::size_t p = 0; p < pixels_; ++p)
        if (at[p] >= 0) x[p] += weight_[static_cast<std::size_t>(at[p])] * y[static_cast<std::size_t>(at[p])];
  }

  /// Per-pixel count of constraint rows touching it.
  std::vector<int> coverage() const {
    std::vector<int> cov(pixels_, 0);
    for (const auto& at : pixel_row_)
      for (std::size_t p = 0; p < pixels_; ++p) cov[p] += at[p] >= 0;
    return cov;
  }

  /// Diagonal of A^T A without the lambda term: sum of 1/area over rows.
  std::vector<double> column_weight() const {
    std::vector<double> d(pixels_, 0.0);
    for (const auto& at : pixel_row_)
      for (std::size_t p = 0; p < pixels_; ++p)
        if (at[p] >= 0) d[p] += weight_[static_cast<std::size_t>(at[p])] * weight_[static_cast<std::size_t>(at[p])];
    return d;
  }

 private:
  double lambda_;
  std::size_t pixels_;
  std::size_t constraint_rows_ = 0;
  std::vector<std::vector<std::int32_t>> pixel_row_;  ///< per frame: row of each hr-pixel, or -1
  std::vector<RowRef> cells_;
  std::vector<double> weight_;
};

struct LinearConstraintsResult {
  CompositeImage composite;
  SolverReport report;
};

/// Weighted least-squares fusion of the stacked cell-sum constraints
/// T^(k)^T o' = c^(k) over unflagged cells (row k,c weighted 1/sqrt(A_c)),
/// with optional smoothing rows lambda * (o' = o_wm).
///
/// With lambda = 0 the iteration starts from `warm_start` (or zero) unscaled,
/// so it returns the minimum-norm solution as long as the warm start lies in
/// the row space (e.g. a previous solution over a subset of the same rows).
inline LinearConstraintsResult linear_constraints(std::span<const SubFrame> frames, const MotionMask* mask,
                                                  double lambda, const SolverOptions& options = {},
                                                  const std::vector<double>* warm_start = nullptr) {
  detail::check_frames(frames, mask);
  require(lambda >= 0 && std::isfinite(lambda), "smoothing weight lambda must be finite and non-negative");
  const std::size_t m = frames[0].grid->pixel_count();

  ConstraintOperator op(frames, mask, lambda);
  std::vector<double> b(op.rows(), 0.0);
  for (std::size_t r = 0; r < op.constraint_rows(); ++r) {
    const auto& rc = op.row_cells()[r];
    b[r] = op.row_weights()[r] * frames[rc.frame].cell_sums[rc.cell];
  }
  CompositeImage wm = weighted_average(frames, WeightMode::area_inverse, mask);
  if (lambda > 0)
    for (std::size_t p = 0; p < m; ++p) b[op.constraint_rows() + p] = lambda * wm.image.data[p];

  const auto cov = op.coverage();
  std::vector<double> scale;
  if (lambda > 0 && options.precondition) {
    const auto d = op.column_weight();
    scale.resize(m);
    for (std::size_t p = 0; p < m; ++p) scale[p] = 1.0 / std::sqrt(d[p] + lambda * lambda);
  }
  std::vector<double> x;
  if (warm_start) {
    require(warm_start->size() == m, "warm start length mismatch");
    x = *warm_start;
  }
  LinearConstraintsResult res;
  res.report = cgls(op, b, x, options, scale);
  if (lambda == 0) {
    bool uncovered = false;
    for (int c : cov) uncovered |= c == 0;
    res.report.rank_deficient = op.constraint_rows() < m || uncovered;
  }
  res.composite.image = Image(frames[0].grid->width(), frames[0].grid->height());
  res.composite.image.data = std::move(x);
  res.composite.exposure_map = std::move(wm.exposure_map);
  res.composite.contributing_frames = std::move(wm.contributing_frames);
  return res;
}

/// Sub-frame window and motion rule parameters.
struct MotionMaskOptions {
  double max_exposure = 4.0;     ///< seconds
  int fixation_length = 4;       ///< sub-frames per fixation
  double subframe_period = 0.125;

  /// floor(max_exposure / fixation duration) * fixation_length sub-frames.
  std::size_t window_frames() const {
    require(max_exposure > 0 && fixation_length > 0 && subframe_period > 0, "invalid motion mask options");
    const double fixation = fixation_length * subframe_period;
    return static_cast<std::size_t>(std::floor(max_exposure / fixation + 1e-9)) *
           static_cast<std::size_t>(fixation_length);
  }
};

/// Flags cell c of sub-frame k when a blip-pixel overlapping it changed after
/// t_start(k), or when k is not among the newest window_frames() sub-frames.
inline MotionMask apply_motion_mask(const DifferenceMapStack& stack, std::span<const SubFrame> frames,
                                    const MotionMaskOptions& options = {}) {
  MotionMask mask = MotionMask::none(frames);
  if (frames.empty()) return mask;
  detail::check_frames(frames, nullptr);
  const int w = frames[0].grid->width();
  const int h = frames[0].grid->height();
  require(w % stack.width() == 0 && h % stack.height() == 0, "blip lattice does not divide the field");
  const int bw = w / stack.width();
  const int bh = h / stack.height();
  const auto age = detail::frame_ages(frames);
  const std::size_t window = options.window_frames();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto& flags = mask.flagged[k];
    if (static_cast<std::size_t>(age[k]) >= window) {
      std::fill(flags.begin(), flags.end(), 1);
      continue;
    }
    const auto a = frames[k].grid->assignment();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (stack.last_change(x / bw, y / bh) > frames[k].t_start)
          flags[static_cast<std::size_t>(a[static_cast<std::size_t>(y) * w + x])] = 1;
  }
  return mask;
}

/// Red plane = exposure / max_exposure, green and blue = intensity.
inline std::string exposure_false_colour(const CompositeImage& c, double max_exposure) {
  require(max_exposure > 0, "max_exposure must be positive");
  Image red(c.exposure_map.width, c.exposure_map.height);
  for (std::size_t i = 0; i < red.size(); ++i) red.data[i] = c.exposure_map.data[i] / max_exposure;
  return encode_ppm(red, c.image, c.image);
}

enum class FusionMethod { weighted_average, linear_constraints };

struct PsfResult {
  CompositeImage composite;
  Image truth;
  std::vector<Pixel> impulses;
};

/// Measures a grid of single-hr-pixel impulses through detector, sub-frame
/// reconstruction and fusion.
inline PsfResult psf_probe(std::span<const GridPtr> grids, FusionMethod method, int spacing = 16, int offset = 8,
                           double lambda = 0.0, const SolverOptions& options = {}) {
  require(!grids.empty(), "psf_probe needs at least one grid");
  const int w = grids[0]->width();
  const int h = grids[0]->height();
  PsfResult res;
  res.truth = make_impulse_grid(w, h, spacing, offset);
  for (int y = offset; y < h; y += spacing)
    for (int x = offset; x < w; x += spacing) res.impulses.push_back({x, y});
  const DynamicScene scene(res.truth);
  Detector det(DetectorConfig{});
  std::vector<SubFrame> frames;
  for (const auto& g : grids) {
    const HadamardBasis basis(g->cell_count());
    frames.push_back(reconstruct_subframe(det.acquire(scene, g, basis, det.clock()), basis));
  }
  if (method == FusionMethod::weighted_average)
    res.composite = weighted_average(frames);
  else
    res.composite = linear_constraints(frames, nullptr, lambda, options).composite;
  return res;
}

struct PsfStats {
  Pixel impulse;
  double peak = 0.0;              ///< composite value at the impulse pixel
  double outside_fraction = 0.0;  ///< share of |energy| in the window off the impulse pixel
  double rms_radius = 0.0;        ///< |value|-weighted RMS distance from the impulse
};

/// Spread of one impulse response within a (2*radius+1)^2 window.
inline PsfStats psf_stats(const Image& composite, Pixel impulse, int radius) {
  PsfStats s;
  s.impulse = impulse;
  s.peak = composite.at(impulse.x, impulse.y);
  double total = 0.0;
  double off = 0.0;
  double moment = 0.0;
  for (int y = std::max(0, impulse.y - radius); y <= std::min(composite.height - 1, impulse.y + radius); ++y)
    for (int x = std::max(0, impulse.x - radius); x <= std::min(composite.width - 1, impulse.x + radius); ++x) {
      const double v = std::abs(composite.at(x, y));
      const double d2 = static_cast<double>((x - impulse.x) * (x - impulse.x) + (y - impulse.y) * (y - impulse.y));
      total += v;
      if (d2 > 0) off += v;
      moment += v * d2;
    }
  if (total > 0) {
    s.outside_fraction = off / total;
    s.rms_radius = std::sqrt(moment / total);
  }
  return s;
}

}  // namespace fovea
