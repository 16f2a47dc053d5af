#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fovea/common.hpp"
#include "fovea/difference_stack.hpp"
#include "json.hpp"

namespace fovea {

// ---------------------------------------------------------------------------
// Difference maps

namespace detail {

inline long long cross(Pixel o, Pixel a, Pixel b) {
  return static_cast<long long>(a.x - o.x) * (b.y - o.y) - static_cast<long long>(a.y - o.y) * (b.x - o.x);
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
inline std::vector<Pixel> convex_hull(std::vector<Pixel> pts) {
  std::sort(pts.begin(), pts.end(), [](Pixel a, Pixel b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Pixel> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

inline bool in_hull(const std::vector<Pixel>& hull, Pixel p) {
  if (hull.empty()) return false;
  if (hull.size() == 1) return hull[0] == p;
  if (hull.size() == 2) {
    const Pixel a = hull[0], b = hull[1];
    if (cross(a, b, p) != 0) return false;
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
  }
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (cross(hull[i], hull[(i + 1) % hull.size()], p) < 0) return false;
  return true;
}

}  // namespace detail

/// |curr - prev| > tau, without hull fill or dilation.
inline BinaryMap threshold_map(const Image& prev, const Image& curr, double tau) {
  require(prev.width == curr.width && prev.height == curr.height, "difference_map: blip sizes differ");
  BinaryMap m(curr.width, curr.height);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = std::abs(curr.data[i] - prev.data[i]) > tau;
  return m;
}

/// Fills the convex hull of the true pixels, row by row on the lattice.
inline BinaryMap hull_fill(const BinaryMap& in) {
  std::vector<Pixel> pts;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      if (in.at(x, y)) pts.push_back({x, y});
  const auto hull = detail::convex_hull(pts);
  BinaryMap out(in.width, in.height);
  if (hull.empty()) return out;
  int y_lo = hull[0].y, y_hi = hull[0].y;
  for (auto p : hull) {
    y_lo = std::min(y_lo, p.y);
    y_hi = std::max(y_hi, p.y);
  }
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = 0; x < in.width; ++x)
      if (detail::in_hull(hull, {x, y})) out.set(x, y);
  return out;
}

/// 3x3 binary dilation.
inline BinaryMap dilate(const BinaryMap& in) {
  BinaryMap out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      if (!in.at(x, y)) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < in.width && yy < in.height) out.set(xx, yy);
        }
    }
  return out;
}

inline BinaryMap difference_map(const Image& prev, const Image& curr, double tau = 0.1) {
  return dilate(hull_fill(threshold_map(prev, curr, tau)));
}

// ---------------------------------------------------------------------------
// Decisions

enum class DecisionReason { motion, wavelet, stochastic, manual, hold };

inline const char* to_string(DecisionReason r) {
  switch (r) {
    case DecisionReason::motion: return "motion";
    case DecisionReason::wavelet: return "wavelet";
    case DecisionReason::stochastic: return "stochastic";
    case DecisionReason::manual: return "manual";
    case DecisionReason::hold: return "hold";
  }
  return "?";
}

struct FoveaDecision {
  Pixel center;
  DecisionReason reason = DecisionReason::hold;
  double decided_at = 0.0;

  friend bool operator==(const FoveaDecision&, const FoveaDecision&) = default;
};

inline nlohmann::json decision_to_json(const FoveaDecision& d) {
  return nlohmann::json{{"t", d.decided_at}, {"center", {d.center.x, d.center.y}}, {"reason", to_string(d.reason)}};
}

/// nx x ny fovea centers evenly spaced from `margin` to size - margin on each axis.
class CandidateLattice {
 public:
  CandidateLattice(int width, int height, int nx = 8, int ny = 8, int margin = 16)
      : width_(width), height_(height), margin_(margin) {
    require(nx >= 1 && ny >= 1, "candidate lattice needs at least one position per axis");
    require(2 * margin <= width && 2 * margin <= height, "candidate margin exceeds the field");
    xs_ = axis(width, nx);
    ys_ = axis(height, ny);
  }

  std::size_t size() const noexcept { return xs_.size() * ys_.size(); }
  int nx() const noexcept { return static_cast<int>(xs_.size()); }
  int ny() const noexcept { return static_cast<int>(ys_.size()); }
  const std::vector<int>& xs() const noexcept { return xs_; }
  const std::vector<int>& ys() const noexcept { return ys_; }
  Pixel at(std::size_t i) const { return {xs_[i % xs_.size()], ys_[i / xs_.size()]}; }
  std::size_t index_of(Pixel p) const {
    const auto ix = std::find(xs_.begin(), xs_.end(), p.x) - xs_.begin();
    const auto iy = std::find(ys_.begin(), ys_.end(), p.y) - ys_.begin();
    require(ix < static_cast<long>(xs_.size()) && iy < static_cast<long>(ys_.size()), "pixel is not a candidate");
    return static_cast<std::size_t>(iy) * xs_.size() + static_cast<std::size_t>(ix);
  }
  /// Center-to-center distance between neighbouring candidates (x axis).
  double spacing() const noexcept {
    return xs_.size() > 1 ? static_cast<double>(width_ - 2 * margin_) / static_cast<double>(xs_.size() - 1) : 0.0;
  }
  /// Nearest candidate, per axis; ties go to the lower coordinate.
  Pixel snap(double x, double y) const { return {nearest(xs_, x), nearest(ys_, y)}; }

 private:
  std::vector<int> axis(int size, int n) const {
    std::vector<int> v;
    if (n == 1) return {size / 2};
    const double step = static_cast<double>(size - 2 * margin_) / (n - 1);
    for (int i = 0; i < n; ++i) v.push_back(margin_ + static_cast<int>(std::lround(i * step)));
    return v;
  }
  static int nearest(const std::vector<int>& v, double t) {
    int best = v[0];
    for (int c : v)
      if (std::abs(c - t) < std::abs(best - t)) best = c;
    return best;
  }

  int width_;
  int height_;
  int margin_;
  std::vector<int> xs_;
  std::vector<int> ys_;
};

/// Centroid of the true blip pixels in hr-pixel units, snapped to the lattice.
inline std::optional<FoveaDecision> motion_target(const BinaryMap& map, const CandidateLattice& lattice, int width,
                                                  int height, double now = 0.0) {
  require(map.width > 0 && map.height > 0, "motion_target: empty map");
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      if (map.at(x, y)) {
        sx += x + 0.5;
        sy += y + 0.5;
        ++n;
      }
  if (n == 0) return std::nullopt;
  const double cx = sx / n * width / map.width;
  const double cy = sy / n * height / map.height;
  return FoveaDecision{lattice.snap(cx, cy), DecisionReason::motion, now};
}

// ---------------------------------------------------------------------------
// Haar detail

struct HaarBands {
  Image ll, lh, hl, hh;  ///< each (w/2) x (h/2)
};

/// One-level orthonormal 2D Haar transform. For the 2x2 block [a b; c d]:
/// LL = (a+b+c+d)/2, HL = (a-b+c-d)/2 (vertical edges), LH = (a+b-c-d)/2
/// (horizontal edges), HH = (a-b-c+d)/2.
inline HaarBands haar_transform(const Image& img) {
  require(img.width % 2 == 0 && img.height % 2 == 0 && img.width > 0 && img.height > 0,
          "haar_transform needs even, non-zero dimensions");
  const int w = img.width / 2, h = img.height / 2;
  HaarBands b{Image(w, h), Image(w, h), Image(w, h), Image(w, h)};
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const double a = img.at(2 * i, 2 * j), bb = img.at(2 * i + 1, 2 * j);
      const double c = img.at(2 * i, 2 * j + 1), d = img.at(2 * i + 1, 2 * j + 1);
      b.ll.at(i, j) = (a + bb + c + d) / 2;
      b.hl.at(i, j) = (a - bb + c - d) / 2;
      b.lh.at(i, j) = (a + bb - c - d) / 2;
      b.hh.at(i, j) = (a - bb - c + d) / 2;
    }
  return b;
}

/// D = sqrt(LH^2 + HL^2 + HH^2) per 2x2 block.
inline Image detail_map(const HaarBands& b) {
  Image d(b.ll.width, b.ll.height);
  for (std::size_t i = 0; i < d.size(); ++i)
    d.data[i] = std::sqrt(b.lh.data[i] * b.lh.data[i] + b.hl.data[i] * b.hl.data[i] + b.hh.data[i] * b.hh.data[i]);
  return d;
}

struct WaveletPlan {
  std::vector<FoveaDecision> decisions;
  bool truncated = false;  ///< more positions were requested than candidates exist
  std::string notice;
};

namespace detail {

/// Detail blocks whose hr-pixel center lies inside the fovea footprint at `c`.
inline void mark_footprint(const Image& d, int width, int height, Pixel c, int half_extent,
                           std::vector<std::uint8_t>& sampled) {
  const double bw = static_cast<double>(width) / d.width;
  const double bh = static_cast<double>(height) / d.height;
  for (int j = 0; j < d.height; ++j)
    for (int i = 0; i < d.width; ++i) {
      const double x = (i + 0.5) * bw, y = (j + 0.5) * bh;
      if (x >= c.x - half_extent && x < c.x + half_extent && y >= c.y - half_extent && y < c.y + half_extent)
        sampled[static_cast<std::size_t>(j) * d.width + i] = 1;
    }
}

}  // namespace detail

/// Greedy fovea trajectory over the Haar detail of a blip frame: take the
/// largest unsampled detail block, move to the nearest unused candidate, mark
/// the detail under that footprint sampled. Raster order once detail runs out.
inline WaveletPlan wavelet_trajectory(const Image& blip, const CandidateLattice& lattice, std::size_t n_positions,
                                      int width, int height, int half_extent = 16, double now = 0.0) {
  const Image d = detail_map(haar_transform(blip));
  WaveletPlan plan;
  if (n_positions > lattice.size()) {
    plan.truncated = true;
    plan.notice = "requested " + std::to_string(n_positions) + " positions, only " + std::to_string(lattice.size()) +
                  " candidates exist";
    n_positions = lattice.size();
  }
  std::vector<std::uint8_t> sampled(d.size(), 0);
  std::vector<std::uint8_t> used(lattice.size(), 0);
  const double bw = static_cast<double>(width) / d.width;
  const double bh = static_cast<double>(height) / d.height;
  while (plan.decisions.size() < n_positions) {
    std::size_t best = d.size();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!sampled[i] && d.data[i] > 0 && (best == d.size() || d.data[i] > d.data[best])) best = i;
    std::size_t pick = lattice.size();
    DecisionReason reason = DecisionReason::wavelet;
    if (best < d.size()) {
      const double x = (static_cast<double>(best % d.width) + 0.5) * bw;
      const double y = (static_cast<double>(best / d.width) + 0.5) * bh;
      double best_d2 = 0;
      for (std::size_t c = 0; c < lattice.size(); ++c) {
        if (used[c]) continue;
        const Pixel p = lattice.at(c);
        const double d2 = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
        if (pick == lattice.size() || d2 < best_d2) {
          pick = c;
          best_d2 = d2;
        }
      }
      sampled[best] = 1;
    } else {
      for (std::size_t c = 0; c < lattice.size() && pick == lattice.size(); ++c)
        if (!used[c]) pick = c;
    }
    used[pick] = 1;
    const Pixel center = lattice.at(pick);
    detail::mark_footprint(d, width, height, center, half_extent, sampled);
    plan.decisions.push_back({center, reason, now});
  }
  return plan;
}

/// Fraction of total detail mass whose blocks fall under the footprints of
/// the first `k` decisions.
inline double detail_coverage(const Image& detail, const std::vector<FoveaDecision>& decisions, std::size_t k,
                              int width, int height, int half_extent = 16) {
  std::vector<std::uint8_t> covered(detail.size(), 0);
  for (std::size_t i = 0; i < std::min(k, decisions.size()); ++i)
    detail::mark_footprint(detail, width, height, decisions[i].center, half_extent, covered);
  double total = 0, got = 0;
  for (std::size_t i = 0; i < detail.size(); ++i) {
    total += detail.data[i];
    if (covered[i]) got += detail.data[i];
  }
  return total > 0 ? got / total : 0.0;
}

// ---------------------------------------------------------------------------
// Decision policy

enum class GuidanceMode { manual, motion, wavelet };

inline const char* to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::manual: return "manual";
    case GuidanceMode::motion: return "motion";
    case GuidanceMode::wavelet: return "wavelet";
  }
  return "?";
}

/// Scheduler-owned guidance state.
struct GuidanceState {
  CandidateLattice lattice;
  int width = 128;
  int height = 128;
  int half_extent = 16;
  std::size_t recent_limit = 4;
  Pixel current{64, 64};
  std::deque<Pixel> recent;               ///< most recent last
  std::deque<FoveaDecision> trajectory;   ///< remaining wavelet positions
  std::optional<BinaryMap> motion;        ///< newest difference map
  std::optional<Image> blip;              ///< newest blip frame

  GuidanceState(CandidateLattice l, int w, int h, int half = 16)
      : lattice(std::move(l)), width(w), height(h), half_extent(half), current{w / 2, h / 2} {}

  bool recently_visited(Pixel p) const { return std::find(recent.begin(), recent.end(), p) != recent.end(); }
  void visit(Pixel p) {
    current = p;
    recent.push_back(p);
    while (recent.size() > recent_limit) recent.pop_front();
  }
};

/// Priority: manual click > stochastic jump (probability p_jump, uniform over
/// candidates not among the recent visits) > motion target > head of the
/// wavelet trajectory > hold. Updates `state` with the chosen position.
inline FoveaDecision next_decision(GuidanceState& state, const std::optional<Pixel>& manual_click, double p_jump,
                                   std::mt19937_64& rng, double now = 0.0, bool use_motion = true,
                                   bool use_wavelet = true) {
  require(p_jump >= 0 && p_jump <= 1, "p_jump must be in [0, 1]");
  FoveaDecision d{state.current, DecisionReason::hold, now};
  if (manual_click) {
    d = {state.lattice.snap(manual_click->x, manual_click->y), DecisionReason::manual, now};
  } else if (p_jump > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_jump) {
    std::vector<Pixel> options;
    for (std::size_t c = 0; c < state.lattice.size(); ++c)
      if (!state.recently_visited(state.lattice.at(c))) options.push_back(state.lattice.at(c));
    if (options.empty())
      for (std::size_t c = 0; c < state.lattice.size(); ++c) options.push_back(state.lattice.at(c));
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    d = {options[pick(rng)], DecisionReason::stochastic, now};
  } else if (auto m = use_motion && state.motion
                          ? motion_target(*state.motion, state.lattice, state.width, state.height, now)
                          : std::optional<FoveaDecision>{}) {
    d = *m;
  } else if (use_wavelet && (state.blip || !state.trajectory.empty())) {
    if (state.trajectory.empty()) {
      auto plan = wavelet_trajectory(*state.blip, state.lattice, state.lattice.size(), state.width, state.height,
                                     state.half_extent, now);
      state.trajectory.assign(plan.decisions.begin(), plan.decisions.end());
    }
    d = state.trajectory.front();
    d.decided_at = now;
    state.trajectory.pop_front();
  }
  state.visit(d.center);
  return d;
}

}  // namespace fovea
