// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "fovea/runtime.hpp"

using namespace fovea;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::vector<std::string> only;  // criterion names from argv; empty runs all

void criterion(const char* name, const std::function<Outcome()>& body) {
  if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) return;
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Image img(w, h);
  for (auto& v : img.data) v = u(rng);
  return img;
}

std::vector<SubFrame> measure_all(const std::vector<GridPtr>& grids, const DynamicScene& scene) {
  Detector det({});
  std::vector<SubFrame> out;
  for (const auto& g : grids) {
    const HadamardBasis basis(g->cell_count());
    out.push_back(reconstruct_subframe(det.acquire(scene, g, basis, det.clock()), basis));
  }
  return out;
}

double rmse(const std::vector<double>& a, const std::vector<double>& b, const FoveaDescriptor* only, int width) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    const int x = static_cast<int>(m) % width, y = static_cast<int>(m) / width;
    if (only && !only->contains(x, y)) continue;
    s += (a[m] - b[m]) * (a[m] - b[m]);
    ++n;
  }
  return std::sqrt(s / static_cast<double>(n));
}

double dual_product(const CellGrid& g, const HadamardBasis& h, std::size_t a, std::size_t b) {
  double s = 0;
  for (std::size_t m = 0; m < g.pixel_count(); ++m) {
    const auto c = static_cast<std::size_t>(g.assignment()[m]);
    s += static_cast<double>(h.entry(a, c) * h.entry(b, c)) / g.cell_area()[c];
  }
  return s;
}

std::vector<GridPtr> default_sequence(std::size_t count, Pixel center = {64, 64}) {
  const AcquisitionPlan plan;
  std::vector<GridPtr> grids;
  for (std::size_t f = 0; grids.size() < count; ++f)
    for (auto& g : fixation_grids(plan, center, f))
      if (grids.size() < count) grids.push_back(g);
  return grids;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = detail::read_file(e.path());
  return files;
}

Outcome biorthogonality() {
  const auto t0 = Clock::now();
  const auto g = fixation_grids(AcquisitionPlan{}, {64, 64}, 0)[1];
  const HadamardBasis h(1024);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> pick(0, 1023);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t a = pick(rng), b = t % 10 == 0 ? a : pick(rng);
    worst = std::max(worst, std::abs(dual_product(*g, h, a, b) - (a == b ? 1024.0 : 0.0)));
  }
  const auto small = make_foveated_grid(16, 16, 64, {FoveaDescriptor{{8, 8}, 4, 2}}, 0.4, {1, 0}, 9);
  const HadamardBasis h64(64);
  double worst64 = 0;
  for (std::size_t a = 0; a < 64; ++a)
    for (std::size_t b = 0; b < 64; ++b)
      worst64 = std::max(worst64, std::abs(dual_product(small, h64, a, b) - (a == b ? 64.0 : 0.0)));
  const double t = seconds_since(t0);
  return {worst <= 1e-9 && worst64 <= 1e-9 && t < 10,
          fmt("max error %.2e over 1000 pairs at N=1024, %.2e exhaustive at N=64, %.2f s", worst, worst64, t)};
}

Outcome stretch_identities() {
  std::vector<GridPtr> grids = default_sequence(32);
  for (auto& g : default_sequence(8, {30, 98})) grids.push_back(g);
  grids.push_back(share(make_uniform_grid(128, 128, 32)));
  grids.push_back(share(make_uniform_grid(128, 128, 16)));
  grids.push_back(share(make_foveated_grid(128, 128, 2048, {{{36, 64}, 16, 2}, {{92, 64}, 16, 2}}, 1.0, {0, 2}, 3)));
  grids.push_back(share(make_foveated_grid(16, 16, 64, {FoveaDescriptor{{8, 8}, 4, 2}}, 0.4, {1, 0}, 9)));
  std::size_t lossless = 0, lossy = 0;
  for (const auto& g : grids) {
    // T^T A^-1 T = diag(count_c / area_c): one cell per hr-pixel and counts equal areas
    std::vector<std::int64_t> count(g->cell_count(), 0);
    bool ok = true;
    for (auto c : g->assignment()) {
      ok &= c >= 0 && static_cast<std::size_t>(c) < g->cell_count();
      if (ok) ++count[static_cast<std::size_t>(c)];
    }
    for (std::size_t c = 0; ok && c < count.size(); ++c) ok &= count[c] == g->cell_area()[c] && count[c] > 0;
    // and numerically on a random integer cell vector, where sums are exact
    const StretchTransform st(g);
    std::mt19937_64 rng(g->fingerprint());
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<int> ui(-1000, 1000);
    std::vector<double> v(g->cell_count());
    for (auto& x : v) x = ui(rng);
    const auto back = st.cell_means(st.expand(v));
    for (std::size_t c = 0; c < v.size(); ++c) ok &= back[c] == v[c];
    lossless += ok;
    // A^-1 T T^T on a non-cell-constant hr vector changes it
    std::vector<double> o(g->pixel_count());
    for (auto& x : o) x = u(rng);
    const auto p = st.project(o);
    double diff = 0;
    for (std::size_t m = 0; m < o.size(); ++m) diff = std::max(diff, std::abs(p[m] - o[m]));
    lossy += diff > 1e-3;
  }
  return {lossless == grids.size() && lossy == grids.size(),
          fmt("lossless on %zu/%zu grids, lossy projection alters %zu/%zu", lossless, grids.size(), lossy,
              grids.size())};
}

Outcome subframe_exactness() {
  const auto truth = random_image(128, 128, 31);
  const DynamicScene scene(truth);
  Detector det({});
  const HadamardBasis basis(1024);
  double worst = 0, slowest = 0;
  for (const auto& g : default_sequence(4, {43, 85})) {
    const auto t0 = Clock::now();
    const auto sf = reconstruct_subframe(det.acquire(scene, g, basis, det.clock()), basis);
    slowest = std::max(slowest, seconds_since(t0));
    const auto means = StretchTransform(g).cell_means(truth.data);
    for (std::size_t m = 0; m < sf.hr_image.size(); ++m)
      worst = std::max(worst, std::abs(sf.hr_image[m] - means[static_cast<std::size_t>(g->assignment()[m])]));
  }
  return {worst <= 1e-9 && slowest < 1.0,
          fmt("max |error| %.2e vs cell means, slowest sub-frame %.4f s", worst, slowest)};
}

Outcome resolution_doubling() {
  // default field: RMSE against ground truth inside the fovea
  const auto truth = random_image(128, 128, 41);
  const auto grids = default_sequence(4);
  const auto frames = measure_all(grids, DynamicScene(truth));
  const auto r = linear_constraints(frames, nullptr, 0.0);
  const auto& f = grids[0]->fovea().front();
  const double e_truth = rmse(r.composite.image.data, truth.data, &f, 128);

  // dense pseudo-inverse oracle on a 64x64 field with the same fovea geometry
  AcquisitionPlan small;
  small.width = small.height = 64;
  small.cells = 256;
  small.fovea = {{32, 32}, 8, 2};
  const auto sg = fixation_grids(small, {32, 32}, 0);
  const auto struth = random_image(64, 64, 42);
  const auto sframes = measure_all(sg, DynamicScene(struth));
  const auto sr = linear_constraints(sframes, nullptr, 0.0);
  const Eigen::Index m = 64 * 64;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4 * 256, m);
  Eigen::VectorXd b(4 * 256);
  for (std::size_t k = 0; k < 4; ++k) {
    for (Eigen::Index p = 0; p < m; ++p)
      a(static_cast<Eigen::Index>(k * 256 + static_cast<std::size_t>(sg[k]->assignment()[static_cast<std::size_t>(p)])), p) = 1;
    for (std::size_t c = 0; c < 256; ++c) b(static_cast<Eigen::Index>(k * 256 + c)) = sframes[k].cell_sums[c];
  }
  const Eigen::VectorXd x = a.completeOrthogonalDecomposition().solve(b);
  const std::vector<double> oracle(x.data(), x.data() + x.size());
  const auto& sf = sg[0]->fovea().front();
  const double e_oracle = rmse(sr.composite.image.data, oracle, nullptr, 64);
  const double e_small = rmse(sr.composite.image.data, struth.data, &sf, 64);
  return {e_truth <= 1e-6 && e_oracle <= 1e-6 && e_small <= 1e-6,
          fmt("fovea RMSE %.2e at 128x128; 64x64: fovea RMSE %.2e, RMSE vs dense pseudo-inverse %.2e", e_truth,
              e_small, e_oracle)};
}

Outcome periphery_supersampling() {
  const auto truth = make_resolution_target(128, 128);
  const auto all = measure_all(default_sequence(36), DynamicScene(truth));
  // default solver options; warm starts stay in the row space, so the error
  // against truth cannot grow between iterations or frame counts
  const SolverOptions opt;
  std::vector<double> warm, errs;
  bool monotone = true;
  for (std::size_t k = 4; k <= 36; ++k) {
    const std::span<const SubFrame> frames(all.data(), k);
    const auto r = linear_constraints(frames, nullptr, 0.0, opt, warm.empty() ? nullptr : &warm);
    warm = r.composite.image.data;
    errs.push_back(rmse(warm, truth.data, nullptr, 128));
    if (errs.size() > 1 && errs.back() > errs[errs.size() - 2] + 1e-9) monotone = false;
  }
  const double wa = rmse(weighted_average(all).image.data, truth.data, nullptr, 128);
  return {monotone && errs.back() <= 0.5 * wa,
          fmt("LC RMSE %.4f (4 frames) -> %.4f (36 frames), %s; WA RMSE at 36 frames %.4f (ratio %.3f)", errs.front(),
              errs.back(), monotone ? "non-increasing" : "NOT monotone", wa, errs.back() / wa)};
}

Outcome timing() {
  const auto t0 = Clock::now();
  AcquisitionPlan plan;
  plan.lc_every = 0;
  const auto t = timing_report(run_session(plan, make_moving_square_scene(), 4.0));
  AcquisitionPlan base;
  base.mode = AcquisitionMode::uniform_baseline;
  const auto tb = timing_report(run_session(base, make_moving_square_scene(), 2.0));
  const double secs = seconds_since(t0);
  const bool ok = t.subframe_rate_hz >= 7.5 && t.subframe_rate_hz <= 8.5 && std::abs(t.nominal_fovea_update_hz - 2.0) < 1e-9 &&
                  t.blip_overhead >= 0.05 && t.blip_overhead <= 0.08 && tb.subframe_rate_hz >= 8.0 - 1e-9 &&
                  tb.subframe_rate_hz <= 10.0 && secs < 5;
  return {ok, fmt("foveated %.3f Hz sub-frames, %.3f Hz fovea update (%.3f Hz with blips), blip overhead %.2f%%; "
                  "32x32 baseline %.3f Hz; %.2f s",
                  t.subframe_rate_hz, t.nominal_fovea_update_hz, t.fovea_update_hz, 100 * t.blip_overhead,
                  tb.subframe_rate_hz, secs)};
}

Outcome motion_tracking() {
  std::string per_seed;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AcquisitionPlan plan;
    plan.seed = seed;
    plan.p_jump = 0.0;
    plan.lc_every = 0;
    const auto scene = make_moving_square_scene(128, 128, 16, 8.0);
    const auto out = run_session(plan, scene, 15.0);
    const double spacing = CandidateLattice(128, 128).spacing();
    std::map<std::size_t, std::pair<double, double>> span;
    for (std::size_t i = 0; i < out.subframes.size(); ++i) {
      const auto fix = out.subframe_info[i].fixation;
      auto it = span.find(fix);
      if (it == span.end())
        span[fix] = {out.subframes[i].t_start, out.subframes[i].t_end};
      else
        it->second.second = out.subframes[i].t_end;
    }
    std::size_t hit = 0, total = 0;
    for (const auto& d : out.decisions) {
      auto it = span.find(d.fixation);
      if (it == span.end()) continue;
      const double mid = 0.5 * (it->second.first + it->second.second);
      const auto c = scene.sprite_center(0, mid);
      const double dist = std::hypot(d.decision.center.x - c[0], d.decision.center.y - c[1]);
      hit += dist <= spacing;
      ++total;
    }
    const double frac = static_cast<double>(hit) / static_cast<double>(total);
    ok &= frac >= 0.9;
    per_seed += fmt("%s%zu/%zu", seed == 1 ? "" : ", ", hit, total);
  }
  return {ok, "fixations within one lattice spacing per seed: " + per_seed};
}

Outcome motion_aware_fusion() {
  AcquisitionPlan plan;
  plan.p_jump = 0.0;
  plan.lc_every = 0;
  Session s(plan, make_moving_square_scene(), 6.0);
  s.run();
  const auto& out = s.output();
  const auto& last = out.composites.back();
  const auto& stack = s.difference_stack();
  const int bw = plan.width / stack.width();
  const std::size_t window = MotionMaskOptions{plan.max_exposure, plan.fixation_length, plan.subframe_period()}.window_frames();
  std::vector<SubFrame> frames;
  for (auto i : last.frames) frames.push_back(out.subframes[i]);

  // static pixels: no covering cell in any windowed sub-frame reaches a blip
  // pixel that ever changed
  const std::size_t m = static_cast<std::size_t>(plan.width) * plan.height;
  std::vector<std::uint8_t> near_motion(m, 0);
  for (const auto& f : frames) {
    std::vector<std::uint8_t> cell_moves(f.cell_count(), 0);
    const auto a = f.grid->assignment();
    for (std::size_t p = 0; p < m; ++p) {
      const int x = static_cast<int>(p) % plan.width, y = static_cast<int>(p) / plan.width;
      if (std::isfinite(stack.last_change(x / bw, y / bw))) cell_moves[static_cast<std::size_t>(a[p])] = 1;
    }
    for (std::size_t p = 0; p < m; ++p) near_motion[p] |= cell_moves[static_cast<std::size_t>(a[p])];
  }
  std::size_t static_px = 0, at_cap = 0;
  int max_contrib = 0;
  for (std::size_t p = 0; p < m; ++p) {
    const int n = last.composite.contributing_frames[p];
    max_contrib = std::max(max_contrib, n);
    if (near_motion[p]) continue;
    ++static_px;
    at_cap += n == 32;
  }

  const auto mask = apply_motion_mask(stack, frames, {plan.max_exposure, plan.fixation_length, plan.subframe_period()});
  auto perturbed = frames;
  for (std::size_t k = 0; k < frames.size(); ++k)
    for (std::size_t c = 0; c < frames[k].cell_count(); ++c) {
      if (!mask.is_flagged(k, c)) continue;
      perturbed[k].cell_sums[c] = perturbed[k].cell_sums[c] * 3 + 7;
      for (std::size_t p = 0; p < perturbed[k].hr_image.size(); ++p)
        if (static_cast<std::size_t>(perturbed[k].grid->assignment()[p]) == c) perturbed[k].hr_image[p] = -5.0;
    }
  const bool wa_same = weighted_average(frames, plan.weighting, &mask).image.data ==
                       weighted_average(perturbed, plan.weighting, &mask).image.data;
  const bool lc0_same = linear_constraints(frames, &mask, 0.0).composite.image.data ==
                        linear_constraints(perturbed, &mask, 0.0).composite.image.data;
  const bool lc_same = linear_constraints(frames, &mask, 0.1).composite.image.data ==
                       linear_constraints(perturbed, &mask, 0.1).composite.image.data;
  const bool ok = window == 32 && frames.size() == 32 && mask.flagged_count() > 0 && static_px >= m / 4 &&
                  at_cap == static_px && max_contrib == 32 && wa_same && lc0_same && lc_same;
  return {ok, fmt("window %zu frames, %zu flagged cells; %zu/%zu static hr-pixels at 32 contributors (max %d); "
                  "perturbing flagged cells: WA %s, LC(0) %s, LC(0.1) %s",
                  window, mask.flagged_count(), at_cap, static_px, max_contrib, wa_same ? "identical" : "changed",
                  lc0_same ? "identical" : "changed", lc_same ? "identical" : "changed")};
}

Outcome haar_guidance() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  Image img(128, 128);
  for (auto& v : img.data) v = u(rng);
  const auto b = haar_transform(img);
  auto energy = [](const Image& i) {
    double s = 0;
    for (auto v : i.data) s += v * v;
    return s;
  };
  const double e_err = std::abs(energy(img) - energy(b.ll) - energy(b.lh) - energy(b.hl) - energy(b.hh));

  // detail in a few textured patches on a flat background, seen through a blip
  Image scene(128, 128, 0.5);
  // checkers at the blip cell pitch, so the low-resolution frame sees them
  for (auto [cx, cy] : {std::pair{16, 24}, std::pair{88, 32}, std::pair{48, 96}})
    for (int y = cy; y < cy + 24; ++y)
      for (int x = cx; x < cx + 24; ++x) scene.at(x, y) = (x / 8 + y / 8) % 2 ? 0.9 : 0.1;
  const auto g = share(make_uniform_grid(128, 128, 16));
  const HadamardBasis basis(256);
  Detector det({});
  const auto blip = reconstruct_blip(det.acquire_blip(DynamicScene(scene), g, basis, 0.0), basis);
  const CandidateLattice lattice(128, 128, 4, 4, 16);
  const auto plan = wavelet_trajectory(blip.field, lattice, lattice.size(), 128, 128, 16);
  const auto d = detail_map(haar_transform(blip.field));
  const double half = detail_coverage(d, plan.decisions, lattice.size() / 2, 128, 128, 16);
  return {e_err <= 1e-10 && half >= 0.5,
          fmt("energy error %.2e; detail sampled after %zu of %zu positions: %.1f%%", e_err, lattice.size() / 2,
              lattice.size(), 100 * half)};
}

Outcome multiplexing_noise() {
  const auto g = fixation_grids(AcquisitionPlan{}, {64, 64}, 0)[0];
  const HadamardBasis basis(1024);
  const auto moving = make_moving_square_scene();
  const DynamicScene frozen(moving.evaluate(0.0));
  auto static_error = [&](const DynamicScene& scene, std::vector<std::uint8_t>& touched) {
    Detector det({});
    const auto rec = det.acquire(scene, g, basis, 0.0);
    const auto sf = reconstruct_subframe(rec, basis);
    // cells the square covers at any time during the record
    for (double t = rec.t_start; t <= rec.t_end + 1e-12; t += rec.duration() / 64) {
      const auto img = scene.evaluate(t);
      const auto ref = frozen.evaluate(0.0);
      for (std::size_t m = 0; m < img.size(); ++m)
        if (img.data[m] != ref.data[m]) touched[static_cast<std::size_t>(g->assignment()[m])] = 1;
      if (const auto p = moving.placement(0, t))
        for (int y = p->y; y < p->y + 16; ++y)
          for (int x = p->x; x < p->x + 16; ++x)
            if (x >= 0 && y >= 0 && x < 128 && y < 128) touched[static_cast<std::size_t>(g->cell_at(x, y))] = 1;
    }
    const auto truth = StretchTransform(g).cell_means(frozen.evaluate(0.0).data);
    double e = 0;
    std::size_t cells = 0;
    for (std::size_t c = 0; c < 1024; ++c) {
      if (touched[c]) continue;
      const double d = sf.cell_sums[c] / g->cell_area()[c] - truth[c];
      e += d * d;
      ++cells;
    }
    return std::pair{e, cells};
  };
  std::vector<std::uint8_t> touched(1024, 0);
  const auto [e_move, n_move] = static_error(moving, touched);
  std::vector<std::uint8_t> none(1024, 0);
  for (std::size_t c = 0; c < 1024; ++c) none[c] = touched[c];
  const auto [e_still, n_still] = static_error(frozen, none);
  return {e_move > 1e-9 && e_move >= 5 * e_still,
          fmt("error energy in %zu static cells: moving %.3e, static baseline %.3e", n_move, e_move, e_still)};
}

Outcome determinism() {
  AcquisitionPlan plan;
  plan.detector.noise_sigma = 0.01;
  plan.detector.shot_noise = true;
  ControlSchedule sched;
  sched.emplace(3, Control::make_click(100, 20));
  const auto base = fs::temp_directory_path() / "fovea_acceptance_determinism";
  fs::remove_all(base);
  for (const char* d : {"a", "b"}) write_session(run_session(plan, make_moving_sign_scene(), 3.0, sched), plan, base / d);
  const auto a = tree(base / "a"), b = tree(base / "b");
  std::size_t bytes = 0;
  for (const auto& [k, v] : a) bytes += v.size();
  return {a == b && !a.empty(), fmt("%zu files, %zu bytes, %s", a.size(), bytes, a == b ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  only.assign(argv + 1, argv + argc);
  criterion("biorthogonality", biorthogonality);
  criterion("lossless-lossy-identities", stretch_identities);
  criterion("subframe-exactness", subframe_exactness);
  criterion("resolution-doubling", resolution_doubling);
  criterion("periphery-supersampling", periphery_supersampling);
  criterion("timing-arithmetic", timing);
  criterion("motion-tracking", motion_tracking);
  criterion("motion-aware-fusion", motion_aware_fusion);
  criterion("haar-guidance", haar_guidance);
  criterion("multiplexing-noise", multiplexing_noise);
  criterion("determinism", determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
