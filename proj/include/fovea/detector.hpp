#pragma once

#include <bit>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fovea/cellgrid.hpp"
#include "fovea/common.hpp"
#include "fovea/hadamard.hpp"
#include "fovea/scene.hpp"

namespace fovea {

struct DetectorConfig {
  double mask_rate = 2e4;        ///< patterns per second
  double noise_sigma = 0.0;      ///< Gaussian std per raw reading, fraction of full scale (M)
  bool shot_noise = false;       ///< Poisson photon noise on each reading
  double photon_budget = 1e6;    ///< photons in a full-scale reading when shot_noise is on
  /// Dead time per pattern pair. The default makes a 1024-cell sub-frame
  /// take 0.125 s: 1024 * (2 / 2e4 + 22.0703125e-6) = 0.125.
  double pair_overhead = 22.0703125e-6;
  std::uint64_t seed = 0;

  void validate() const {
    require(mask_rate > 0, "mask_rate must be positive");
    require(noise_sigma >= 0, "noise_sigma must be non-negative");
    require(pair_overhead >= 0, "pair_overhead must be non-negative");
    require(!shot_noise || photon_budget > 0, "photon_budget must be positive");
  }
};

/// Differential correlation coefficients b_n = s_n^T o for one grid.
///
/// Patterns are displayed back to back over [t_start, t_end); the frame's
/// accumulated pair overhead follows t_end.
struct MeasurementRecord {
  GridPtr grid;
  std::vector<double> coefficients;
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t pattern_count = 0;
  double mask_rate = 2e4;
  double dead_time = 0.0;

  double duration() const noexcept { return t_end - t_start; }
  double next_start() const noexcept { return t_end + dead_time; }
};

/// Simulated single-pixel detector session. Owns the RNG and the mask clock;
/// calls on one session must be serialized.
class Detector {
 public:
  explicit Detector(DetectorConfig config) : config_(config), rng_(config.seed) { config_.validate(); }

  const DetectorConfig& config() const noexcept { return config_; }
  /// Earliest start time of the next record.
  double clock() const noexcept { return clock_; }

  /// Displays the positive then negative mask of every s_n = T h_n, sampling
  /// the scene at each pattern's tick, and returns b_n = i_pos - i_neg.
  MeasurementRecord acquire(const DynamicScene& scene, const GridPtr& grid, const HadamardBasis& basis,
                            double t_start) {
    require(grid != nullptr, "acquire: null grid");
    require(basis.order() == grid->cell_count(), "acquire: basis order " + std::to_string(basis.order()) +
                                                     " != grid cell count " + std::to_string(grid->cell_count()));
    require(scene.width() == grid->width() && scene.height() == grid->height(),
            "acquire: scene and grid dimensions differ");
    require(t_start >= clock_, "acquire: t_start precedes the end of the previous record");

    const std::size_t n_cells = grid->cell_count();
    const double tick = 1.0 / config_.mask_rate;
    const double full_scale = static_cast<double>(grid->pixel_count());
    const StretchTransform transform(grid);

    MeasurementRecord rec;
    rec.grid = grid;
    rec.coefficients.resize(n_cells);
    rec.t_start = t_start;
    rec.pattern_count = 2 * n_cells;
    rec.mask_rate = config_.mask_rate;
    rec.t_end = t_start + static_cast<double>(rec.pattern_count) * tick;
    rec.dead_time = static_cast<double>(n_cells) * config_.pair_overhead;

    std::vector<std::int64_t> key;
    std::vector<double> cell_sums;
    bool have_state = false;
    auto sample = [&](double t) {
      auto k = scene.state_key(t);
      if (!have_state || k != key) {
        key = std::move(k);
        const Image o = scene.evaluate(t);
        cell_sums = transform.reduce(o.data);
        have_state = true;
      }
    };
    auto read = [&](std::size_t n, bool positive) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n_cells; ++c) {
        const bool plus = (std::popcount(n & c) & 1U) == 0;
        if (plus == positive) acc += cell_sums[c];
      }
      return noisy(acc, full_scale);
    };

    for (std::size_t n = 0; n < n_cells; ++n) {
      const double t_pos = t_start + static_cast<double>(2 * n) * tick;
      sample(t_pos);
      const double i_pos = read(n, true);
      sample(t_pos + tick);
      const double i_neg = read(n, false);
      rec.coefficients[n] = differential_decode(i_pos, i_neg);
    }
    clock_ = rec.next_start();
    return rec;
  }

  /// Short uniform low-resolution frame used for motion detection.
  MeasurementRecord acquire_blip(const DynamicScene& scene, const GridPtr& blip_grid, const HadamardBasis& basis,
                                 double t_start) {
    require(blip_grid != nullptr && blip_grid->kind() == GridKind::uniform, "acquire_blip: blip grid must be uniform");
    return acquire(scene, blip_grid, basis, t_start);
  }

 private:
  double noisy(double reading, double full_scale) {
    if (config_.shot_noise) {
      const double mean_photons = std::max(0.0, reading) / full_scale * config_.photon_budget;
      double count = 0.0;
      if (mean_photons > 0) count = static_cast<double>(std::poisson_distribution<long long>(mean_photons)(rng_));
      reading = count * full_scale / config_.photon_budget;
    }
    if (config_.noise_sigma > 0) {
      std::normal_distribution<double> gauss(0.0, config_.noise_sigma * full_scale);
      reading += gauss(rng_);
    }
    return reading;
  }

  DetectorConfig config_;
  std::mt19937_64 rng_;
  double clock_ = 0.0;
};

}  // namespace fovea
