#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "fovea/guidance.hpp"

using namespace fovea;

namespace {

Image blip_with(std::initializer_list<std::pair<Pixel, double>> px, double base = 0.0) {
  Image img(16, 16, base);
  for (const auto& [p, v] : px) img.at(p.x, p.y) = v;
  return img;
}

long long cross3(Pixel o, Pixel a, Pixel b) {
  return static_cast<long long>(a.x - o.x) * (b.y - o.y) - static_cast<long long>(a.y - o.y) * (b.x - o.x);
}

bool in_triangle(Pixel a, Pixel b, Pixel c, Pixel p) {
  if (cross3(a, b, c) == 0) return false;  // degenerate; covered by the segments
  const auto d1 = cross3(a, b, p), d2 = cross3(b, c, p), d3 = cross3(c, a, p);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

bool on_segment(Pixel a, Pixel b, Pixel p) {
  return cross3(a, b, p) == 0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

// Caratheodory: a lattice point is in the hull iff it lies in a triangle,
// on a segment, or on a point of the set.
BinaryMap brute_hull_dilate(const std::vector<Pixel>& pts, int w, int h) {
  BinaryMap hull(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Pixel p{x, y};
      bool in = false;
      for (std::size_t i = 0; i < pts.size() && !in; ++i) {
        in = pts[i] == p;
        for (std::size_t j = i + 1; j < pts.size() && !in; ++j) {
          in = on_segment(pts[i], pts[j], p);
          for (std::size_t k = j + 1; k < pts.size() && !in; ++k) in = in_triangle(pts[i], pts[j], pts[k], p);
        }
      }
      hull.set(x, y, in);
    }
  BinaryMap out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          any |= xx >= 0 && yy >= 0 && xx < w && yy < h && hull.at(xx, yy);
        }
      out.set(x, y, any);
    }
  return out;
}

int nearest_coordinate(const std::vector<int>& v, double t) {
  int best = v[0];
  for (int c : v)
    if (std::abs(c - t) < std::abs(best - t)) best = c;
  return best;
}

}  // namespace

TEST(DifferenceMap, IdenticalFramesGiveEmptyMap) {
  const auto b = blip_with({{{3, 3}, 0.7}}, 0.2);
  EXPECT_FALSE(difference_map(b, b, 0.1).any());
}

TEST(DifferenceMap, SinglePixelDilatesToNeighbourhood) {
  const auto prev = blip_with({}, 0.3);
  const auto curr = blip_with({{{5, 9}, 0.5}}, 0.3);
  const auto m = difference_map(prev, curr, 0.1);
  EXPECT_EQ(m.count(), 9u);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) EXPECT_TRUE(m.at(5 + dx, 9 + dy));
}

TEST(DifferenceMap, RowEndsFillTheSegment) {
  const auto prev = blip_with({});
  const auto curr = blip_with({{{0, 7}, 1.0}, {{15, 7}, 1.0}});
  const auto m = difference_map(prev, curr, 0.1);
  EXPECT_EQ(m, brute_hull_dilate({{0, 7}, {15, 7}}, 16, 16));
  for (int x = 0; x < 16; ++x)
    for (int y = 6; y <= 8; ++y) EXPECT_TRUE(m.at(x, y));
  EXPECT_EQ(m.count(), 48u);
}

TEST(DifferenceMap, RandomPointSetsMatchBruteForceHull) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> coord(0, 15), count(1, 7);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Pixel> pts;
    Image prev(16, 16, 0.0), curr(16, 16, 0.0);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const Pixel p{coord(rng), coord(rng)};
      pts.push_back(p);
      curr.at(p.x, p.y) = 1.0;
    }
    ASSERT_EQ(difference_map(prev, curr, 0.5), brute_hull_dilate(pts, 16, 16)) << trial;
  }
}

TEST(DifferenceMap, ThresholdIsMonotone) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Image a(16, 16), b(16, 16);
    for (auto& v : a.data) v = u(rng);
    for (auto& v : b.data) v = u(rng);
    const double t1 = u(rng), t2 = t1 + u(rng) * 0.5;
    const auto lo = threshold_map(a, b, t1), hi = threshold_map(a, b, t2);
    for (std::size_t i = 0; i < lo.data.size(); ++i) EXPECT_LE(hi.data[i], lo.data[i]);
  }
}

TEST(DifferenceMap, RejectsSizeMismatch) {
  EXPECT_THROW(difference_map(Image(16, 16), Image(8, 8)), InvalidArgument);
}

TEST(DifferenceStack, TracksLastChangeAndBoundsHistory) {
  DifferenceMapStack s(4, 4, 3);
  EXPECT_EQ(s.last_change(1, 1), DifferenceMapStack::never);
  BinaryMap m(4, 4);
  m.set(1, 1);
  s.push(m, 0.5);
  s.push(BinaryMap(4, 4), 1.0);
  EXPECT_EQ(s.last_change(1, 1), 0.5);
  m.set(2, 3);
  s.push(m, 1.5);
  s.push(m, 2.0);
  EXPECT_EQ(s.last_change(1, 1), 2.0);
  EXPECT_EQ(s.last_change(2, 3), 2.0);
  EXPECT_EQ(s.last_change(0, 0), DifferenceMapStack::never);
  EXPECT_EQ(s.history().size(), 3u);
  EXPECT_EQ(s.history().front().time, 1.0);
  EXPECT_THROW(s.push(m, 1.0), InvalidArgument);
  EXPECT_THROW(s.push(BinaryMap(2, 2), 3.0), InvalidArgument);
}

TEST(DifferenceStack, TimestampsNonDecreasingPerPixel) {
  DifferenceMapStack s(16, 16);
  std::mt19937_64 rng(1);
  std::vector<double> prev = s.last_change();
  for (int i = 0; i < 100; ++i) {
    BinaryMap m(16, 16);
    for (auto& v : m.data) v = rng() % 7 == 0;
    s.push(m, 0.5 * i);
    for (std::size_t p = 0; p < prev.size(); ++p) ASSERT_GE(s.last_change()[p], prev[p]);
    prev = s.last_change();
  }
  EXPECT_EQ(s.history().size(), 64u);
}

TEST(CandidateLattice, DefaultGeometry) {
  const CandidateLattice l(128, 128);
  EXPECT_EQ(l.size(), 64u);
  EXPECT_EQ(l.xs().front(), 16);
  EXPECT_EQ(l.xs().back(), 112);
  EXPECT_NEAR(l.spacing(), 96.0 / 7.0, 1e-12);
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_EQ(l.index_of(l.at(i)), i);
  EXPECT_THROW(l.index_of({17, 16}), InvalidArgument);
  EXPECT_THROW(CandidateLattice(128, 128, 0, 8), InvalidArgument);
}

TEST(CandidateLattice, SnapIsNearestPerAxis) {
  const CandidateLattice l(128, 128, 2, 2, 16);  // 16 and 112
  EXPECT_EQ(l.snap(20, 100), (Pixel{16, 112}));
  EXPECT_EQ(l.snap(64, 64), (Pixel{16, 16}));  // ties go low
  EXPECT_EQ(l.snap(65, 0), (Pixel{112, 16}));
}

TEST(MotionTarget, EmptyMapGivesNothing) {
  EXPECT_FALSE(motion_target(BinaryMap(16, 16), CandidateLattice(128, 128), 128, 128).has_value());
}

TEST(MotionTarget, CentroidScalesAndSnaps) {
  BinaryMap m(16, 16);
  for (int y = 7; y <= 9; ++y)
    for (int x = 7; x <= 9; ++x) m.set(x, y);
  const CandidateLattice l(128, 128);
  const auto d = motion_target(m, l, 128, 128, 2.5);
  ASSERT_TRUE(d);
  // centroid (8 + 0.5) / 16 * 128 = 68
  const int expected = nearest_coordinate(l.xs(), 68.0);
  EXPECT_EQ(d->center, (Pixel{expected, expected}));
  EXPECT_EQ(d->reason, DecisionReason::motion);
  EXPECT_EQ(d->decided_at, 2.5);
}

TEST(Haar, EnergyConservation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  Image img(16, 16);
  for (auto& v : img.data) v = u(rng);
  const auto b = haar_transform(img);
  auto energy = [](const Image& i) {
    double s = 0;
    for (auto v : i.data) s += v * v;
    return s;
  };
  EXPECT_NEAR(energy(img), energy(b.ll) + energy(b.lh) + energy(b.hl) + energy(b.hh), 1e-10);
  EXPECT_THROW(haar_transform(Image(15, 16)), InvalidArgument);
}

TEST(Haar, VerticalEdgeOnlyInItsBand) {
  Image step(16, 16, 0.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 9; x < 16; ++x) step.at(x, y) = 1.0;
  const auto b = haar_transform(step);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      EXPECT_EQ(b.lh.at(i, j), 0.0);
      EXPECT_EQ(b.hh.at(i, j), 0.0);
      EXPECT_EQ(b.hl.at(i, j) != 0.0, i == 4);
    }
  const CandidateLattice l(128, 128);
  const auto plan = wavelet_trajectory(step, l, 4, 128, 128);
  // the edge block spans hr-pixels 64..79 in x
  EXPECT_LE(std::abs(plan.decisions.front().center.x - 72), 16);
  EXPECT_EQ(plan.decisions.front().reason, DecisionReason::wavelet);
}

TEST(WaveletTrajectory, ConstantBlipFallsBackToRaster) {
  const CandidateLattice l(128, 128);
  const auto plan = wavelet_trajectory(Image(16, 16, 0.4), l, 10, 128, 128);
  ASSERT_EQ(plan.decisions.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(plan.decisions[i].center, l.at(i));
  const auto d = detail_map(haar_transform(Image(16, 16, 0.4)));
  for (auto v : d.data) EXPECT_EQ(v, 0.0);
}

TEST(WaveletTrajectory, TruncatesWithNotice) {
  const CandidateLattice l(128, 128, 2, 2);
  const auto plan = wavelet_trajectory(Image(16, 16, 0.0), l, 9, 128, 128);
  EXPECT_TRUE(plan.truncated);
  EXPECT_FALSE(plan.notice.empty());
  EXPECT_EQ(plan.decisions.size(), 4u);
  std::set<std::pair<int, int>> distinct;
  for (const auto& d : plan.decisions) distinct.insert({d.center.x, d.center.y});
  EXPECT_EQ(distinct.size(), 4u);
}

TEST(WaveletTrajectory, FirstHalfCapturesMajorityOfDetail) {
  // texture in three small patches on a flat background
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  Image blip(16, 16, 0.5);
  for (auto [cx, cy] : {std::pair{2, 3}, std::pair{12, 4}, std::pair{7, 12}})
    for (int y = cy; y < cy + 3; ++y)
      for (int x = cx; x < cx + 3; ++x) blip.at(x, y) = u(rng);
  const CandidateLattice l(128, 128, 4, 4, 16);
  const auto plan = wavelet_trajectory(blip, l, 16, 128, 128, 16);
  ASSERT_EQ(plan.decisions.size(), 16u);
  const auto d = detail_map(haar_transform(blip));
  EXPECT_GE(detail_coverage(d, plan.decisions, 8, 128, 128, 16), 0.5);
  EXPECT_NEAR(detail_coverage(d, plan.decisions, 16, 128, 128, 16), 1.0, 1e-12);
}

TEST(NextDecision, ManualClickWins) {
  GuidanceState s(CandidateLattice(128, 128), 128, 128);
  s.motion = BinaryMap(16, 16);
  s.motion->set(1, 1);
  std::mt19937_64 rng(1);
  const auto d = next_decision(s, Pixel{30, 40}, 1.0, rng, 3.0);
  EXPECT_EQ(d.reason, DecisionReason::manual);
  EXPECT_EQ(d.center, s.lattice.snap(30, 40));
  EXPECT_EQ(d.center, (Pixel{30, 43}));
  EXPECT_EQ(s.current, d.center);
}

TEST(NextDecision, AlwaysJumpNeverRepeatsRecent) {
  GuidanceState s(CandidateLattice(128, 128), 128, 128);
  std::mt19937_64 rng(2);
  std::deque<Pixel> last;
  for (int i = 0; i < 500; ++i) {
    const auto d = next_decision(s, std::nullopt, 1.0, rng);
    EXPECT_EQ(d.reason, DecisionReason::stochastic);
    EXPECT_EQ(std::find(last.begin(), last.end(), d.center), last.end()) << i;
    last.push_back(d.center);
    if (last.size() > 4) last.pop_front();
  }
}

TEST(NextDecision, NoJumpFollowsMotion) {
  GuidanceState s(CandidateLattice(128, 128), 128, 128);
  std::mt19937_64 rng(3);
  BinaryMap m(16, 16);
  m.set(13, 2);
  s.motion = m;
  s.blip = Image(16, 16, 0.1);
  const auto d = next_decision(s, std::nullopt, 0.0, rng);
  EXPECT_EQ(d, *motion_target(m, s.lattice, 128, 128));
  // with motion disabled the wavelet trajectory is used instead
  const auto w = next_decision(s, std::nullopt, 0.0, rng, 0.0, false, true);
  EXPECT_EQ(w.reason, DecisionReason::wavelet);
}

TEST(NextDecision, HoldsWithoutCues) {
  GuidanceState s(CandidateLattice(128, 128), 128, 128);
  std::mt19937_64 rng(3);
  const auto d = next_decision(s, std::nullopt, 0.0, rng, 1.0);
  EXPECT_EQ(d.reason, DecisionReason::hold);
  EXPECT_EQ(d.center, (Pixel{64, 64}));
  EXPECT_THROW(next_decision(s, std::nullopt, 1.5, rng), InvalidArgument);
}

TEST(NextDecision, WaveletTrajectoryPersistsAcrossDecisions) {
  GuidanceState s(CandidateLattice(128, 128), 128, 128);
  s.blip = Image(16, 16, 0.0);
  std::mt19937_64 rng(3);
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < 64; ++i) {
    const auto d = next_decision(s, std::nullopt, 0.0, rng);
    EXPECT_EQ(d.reason, DecisionReason::wavelet);
    seen.insert({d.center.x, d.center.y});
  }
  EXPECT_EQ(seen.size(), 64u);
}

TEST(NextDecision, Deterministic) {
  auto run = [](std::uint64_t seed) {
    GuidanceState s(CandidateLattice(128, 128), 128, 128);
    std::mt19937_64 rng(seed);
    std::mt19937_64 scene(seed + 1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<FoveaDecision> out;
    for (int i = 0; i < 100; ++i) {
      Image b(16, 16);
      for (auto& v : b.data) v = u(scene);
      s.blip = b;
      if (i % 7 == 0) {
        BinaryMap m(16, 16);
        m.set(i % 16, (3 * i) % 16);
        s.motion = m;
      } else {
        s.motion.reset();
      }
      out.push_back(next_decision(s, std::nullopt, 0.2, rng, 0.5 * i));
    }
    return out;
  };
  EXPECT_EQ(run(11), run(11));
  EXPECT_NE(run(11), run(12));
}

TEST(NextDecision, StochasticCoverageOnStaticScene) {
  // p = 0.2 over 200 decisions with the wavelet cue; count seeds that visit every candidate.
  std::mt19937_64 scene_rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  Image blip(16, 16);
  for (auto& v : blip.data) v = u(scene_rng);
  int full = 0;
  const int seeds = 1000;
  for (int seed = 0; seed < seeds; ++seed) {
    GuidanceState s(CandidateLattice(128, 128), 128, 128);
    s.blip = blip;
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::set<std::size_t> seen;
    for (int i = 0; i < 200; ++i) seen.insert(s.lattice.index_of(next_decision(s, std::nullopt, 0.2, rng).center));
    full += seen.size() == s.lattice.size();
  }
  EXPECT_GT(static_cast<double>(full) / seeds, 0.99);
}

TEST(DecisionJson, Fields) {
  const auto j = decision_to_json({{30, 43}, DecisionReason::manual, 1.5});
  EXPECT_EQ(j["t"], 1.5);
  EXPECT_EQ(j["center"], nlohmann::json::array({30, 43}));
  EXPECT_EQ(j["reason"], "manual");
}
