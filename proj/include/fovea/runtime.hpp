#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fovea/cellgrid.hpp"
#include "fovea/common.hpp"
#include "fovea/detector.hpp"
#include "fovea/difference_stack.hpp"
#include "fovea/fusion.hpp"
#include "fovea/guidance.hpp"
#include "fovea/hadamard.hpp"
#include "fovea/image_io.hpp"
#include "fovea/reconstruct.hpp"
#include "fovea/scene.hpp"
#include "fovea/serialize.hpp"
#include "fovea/sparse_lsq.hpp"

namespace fovea {

enum class AcquisitionMode { manual, motion, wavelet, uniform_baseline };

inline const char* to_string(AcquisitionMode m) {
  switch (m) {
    case AcquisitionMode::manual: return "manual";
    case AcquisitionMode::motion: return "motion";
    case AcquisitionMode::wavelet: return "wavelet";
    case AcquisitionMode::uniform_baseline: return "uniform-baseline";
  }
  return "?";
}

inline AcquisitionMode acquisition_mode_from_string(const std::string& s) {
  if (s == "manual") return AcquisitionMode::manual;
  if (s == "motion") return AcquisitionMode::motion;
  if (s == "wavelet") return AcquisitionMode::wavelet;
  if (s == "uniform-baseline") return AcquisitionMode::uniform_baseline;
  throw InvalidArgument("unknown mode '" + s + "' (expected manual, motion, wavelet or uniform-baseline)");
}

struct AcquisitionPlan {
  AcquisitionMode mode = AcquisitionMode::motion;
  int width = 128;
  int height = 128;
  std::size_t cells = 1024;
  int fixation_length = 4;
  int blip_every = 1;             ///< fixations per blip; 0 disables blips
  int blip_cells_per_side = 16;
  int baseline_cells_per_side = 32;
  double p_jump = 0.2;
  double max_exposure = 4.0;      ///< seconds
  double lambda = 0.1;
  double tau = 0.1;
  int lc_every = 1;               ///< fixations per linear-constraints composite; 0 disables
  bool motion_aware = true;
  WeightMode weighting = WeightMode::area_inverse;
  SolverOptions solver{};
  DetectorConfig detector{};
  FoveaDescriptor fovea{{64, 64}, 16, 2};
  int lattice_size = 8;
  std::uint64_t seed = 1;

  double subframe_period() const {
    return static_cast<double>(2 * cells) / detector.mask_rate + static_cast<double>(cells) * detector.pair_overhead;
  }

  void validate() const {
    require(width > 0 && height > 0, "field dimensions must be positive");
    require(fixation_length == 4, "fixation_length must equal the number of fovea shifts (4)");
    require(blip_every >= 0 && lc_every >= 0, "blip_every and lc_every must be non-negative");
    require(p_jump >= 0 && p_jump <= 1, "p_jump must be in [0, 1]");
    require(max_exposure > 0, "max_exposure must be positive");
    require(lambda >= 0, "lambda must be non-negative");
    require(tau >= 0, "tau must be non-negative");
    require(lattice_size >= 1, "lattice_size must be positive");
    detector.validate();
    if (mode == AcquisitionMode::uniform_baseline) {
      make_uniform_grid(width, height, baseline_cells_per_side);
      return;
    }
    require(fovea.half_extent > 0 && 2 * fovea.half_extent <= std::min(width, height),
            "fovea (" + std::to_string(2 * fovea.half_extent) + " px) is larger than the field");
    require(2 * fovea.half_extent % fovea.cell_size == 0 && fovea.cell_size % 2 == 0,
            "fovea extent must be a whole number of even-sized cells");
    if (blip_every > 0) make_uniform_grid(width, height, blip_cells_per_side);
    // Build one grid so infeasible cell counts are rejected before the session starts.
    make_foveated_grid(width, height, cells, {fovea}, 0.0, {0, 0}, seed);
  }
};

inline json plan_to_json(const AcquisitionPlan& p) {
  return json{{"schema", schema_version},
              {"mode", to_string(p.mode)},
              {"width", p.width},
              {"height", p.height},
              {"cells", p.cells},
              {"fixation_length", p.fixation_length},
              {"blip_every", p.blip_every},
              {"blip_cells_per_side", p.blip_cells_per_side},
              {"baseline_cells_per_side", p.baseline_cells_per_side},
              {"p_jump", p.p_jump},
              {"max_exposure", p.max_exposure},
              {"lambda", p.lambda},
              {"tau", p.tau},
              {"lc_every", p.lc_every},
              {"motion_aware", p.motion_aware},
              {"weighting", to_string(p.weighting)},
              {"solver", {{"tolerance", p.solver.tolerance},
                          {"max_iterations", p.solver.max_iterations},
                          {"precondition", p.solver.precondition}}},
              {"detector", {{"mask_rate", p.detector.mask_rate},
                            {"noise_sigma", p.detector.noise_sigma},
                            {"shot_noise", p.detector.shot_noise},
                            {"photon_budget", p.detector.photon_budget},
                            {"pair_overhead", p.detector.pair_overhead},
                            {"seed", p.detector.seed}}},
              {"fovea", fovea_to_json(p.fovea)},
              {"lattice_size", p.lattice_size},
              {"seed", p.seed}};
}

inline AcquisitionPlan plan_from_json(const json& j) {
  try {
    AcquisitionPlan p;
    p.mode = acquisition_mode_from_string(j.at("mode").get<std::string>());
    p.width = j.at("width").get<int>();
    p.height = j.at("height").get<int>();
    p.cells = j.at("cells").get<std::size_t>();
    p.fixation_length = j.at("fixation_length").get<int>();
    p.blip_every = j.at("blip_every").get<int>();
    p.blip_cells_per_side = j.at("blip_cells_per_side").get<int>();
    p.baseline_cells_per_side = j.at("baseline_cells_per_side").get<int>();
    p.p_jump = j.at("p_jump").get<double>();
    p.max_exposure = j.at("max_exposure").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.tau = j.at("tau").get<double>();
    p.lc_every = j.at("lc_every").get<int>();
    p.motion_aware = j.at("motion_aware").get<bool>();
    p.weighting = weight_mode_from_string(j.at("weighting").get<std::string>());
    const auto& s = j.at("solver");
    p.solver = {s.at("tolerance").get<double>(), s.at("max_iterations").get<int>(), s.at("precondition").get<bool>()};
    const auto& d = j.at("detector");
    p.detector.mask_rate = d.at("mask_rate").get<double>();
    p.detector.noise_sigma = d.at("noise_sigma").get<double>();
    p.detector.shot_noise = d.at("shot_noise").get<bool>();
    p.detector.photon_budget = d.at("photon_budget").get<double>();
    p.detector.pair_overhead = d.at("pair_overhead").get<double>();
    p.detector.seed = d.at("seed").get<std::uint64_t>();
    p.fovea = fovea_from_json(j.at("fovea"));
    p.lattice_size = j.at("lattice_size").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed plan JSON: ") + e.what());
  }
}

/// The four grids of one fixation: a fresh periphery drawn from the plan seed
/// and fixation index, then the three half-cell shifts.
inline std::vector<GridPtr> fixation_grids(const AcquisitionPlan& plan, Pixel center, std::size_t fixation) {
  FoveaDescriptor f = plan.fovea;
  f.center = center;
  const std::uint64_t seed = derive_seed(plan.seed, 1000 + fixation);
  const PeripheryLayout layout = draw_periphery(seed);
  std::vector<GridPtr> grids;
  grids.push_back(share(make_foveated_grid(plan.width, plan.height, plan.cells, {f}, layout.azimuth_offset,
                                           layout.center_jitter, seed)));
  for (int s = 1; s < plan.fixation_length; ++s) grids.push_back(share(shift_fovea(*grids.front(), s)));
  return grids;
}

/// Control input applied at the next decision point.
struct Control {
  enum class Kind { click, mode, set_lambda, set_tau, set_p_jump };
  Kind kind = Kind::click;
  Pixel click{};
  AcquisitionMode mode = AcquisitionMode::motion;
  double value = 0.0;

  static Control make_click(int x, int y) { return {Kind::click, {x, y}, {}, 0.0}; }
  static Control make_mode(AcquisitionMode m) { return {Kind::mode, {}, m, 0.0}; }
  static Control make_lambda(double v) { return {Kind::set_lambda, {}, {}, v}; }
  static Control make_tau(double v) { return {Kind::set_tau, {}, {}, v}; }
  static Control make_p_jump(double v) { return {Kind::set_p_jump, {}, {}, v}; }
};

/// Scripted controls keyed by fixation index (applied before that fixation's decision).
using ControlSchedule = std::multimap<std::size_t, Control>;

struct CompositeRecord {
  enum class Kind { weighted_average, linear_constraints };
  Kind kind = Kind::weighted_average;
  std::size_t after_subframe = 0;     ///< index of the newest contributing sub-frame
  std::vector<std::size_t> frames;    ///< sub-frame indices considered (window)
  CompositeImage composite;
  std::optional<SolverReport> report;
};

struct SubFrameInfo {
  std::size_t fixation = 0;
  int shift_index = 0;
  Pixel fovea_center{};
};

struct DecisionRecord {
  std::size_t fixation = 0;
  FoveaDecision decision;
};

struct SessionOutput {
  std::vector<MeasurementRecord> subframe_records;
  std::vector<SubFrame> subframes;
  std::vector<SubFrameInfo> subframe_info;
  std::vector<MeasurementRecord> blip_records;
  std::vector<BlipFrame> blips;
  std::vector<DecisionRecord> decisions;
  std::vector<CompositeRecord> composites;
  double end_time = 0.0;  ///< simulated clock after the last acquisition
};

/// What one step appended to the output.
struct StepResult {
  bool finished = false;
  std::optional<std::size_t> blip;
  std::optional<std::size_t> decision;
  std::vector<std::size_t> subframes;
  std::vector<std::size_t> composites;
};

/// One acquisition session. Owns the detector clock and guidance state and
/// advances one fixation per step: blip, decide, fixation_length sub-frames.
class Session {
 public:
  Session(AcquisitionPlan plan, DynamicScene scene, double duration, ControlSchedule schedule = {})
      : plan_((plan.validate(), std::move(plan))),
        scene_(std::move(scene)),
        duration_(duration),
        schedule_(std::move(schedule)),
        detector_(detector_config(plan_)),
        rng_(derive_seed(plan_.seed, 2)),
        guidance_(CandidateLattice(plan_.width, plan_.height, plan_.lattice_size, plan_.lattice_size,
                                   plan_.fovea.half_extent),
                  plan_.width, plan_.height, plan_.fovea.half_extent),
        stack_(plan_.blip_every > 0 ? plan_.blip_cells_per_side : 1,
               plan_.blip_every > 0 ? plan_.blip_cells_per_side : 1) {
    require(duration >= 0, "session duration must be non-negative");
    require(scene_.width() == plan_.width && scene_.height() == plan_.height,
            "scene is " + std::to_string(scene_.width()) + "x" + std::to_string(scene_.height()) + ", plan expects " +
                std::to_string(plan_.width) + "x" + std::to_string(plan_.height));
    guidance_.current = guidance_.lattice.snap(plan_.fovea.center.x, plan_.fovea.center.y);
    mode_ = plan_.mode;
    for (const auto& [fix, c] : schedule_) check_control(c);
  }

  const AcquisitionPlan& plan() const noexcept { return plan_; }
  const SessionOutput& output() const noexcept { return out_; }
  SessionOutput take_output() { return std::move(out_); }
  double clock() const noexcept { return detector_.clock(); }
  double duration() const noexcept { return duration_; }
  bool finished() const noexcept { return finished_; }
  std::size_t fixation_index() const noexcept { return fixation_; }
  AcquisitionMode mode() const noexcept { return mode_; }
  double lambda() const noexcept { return plan_.lambda; }
  double tau() const noexcept { return plan_.tau; }
  const DifferenceMapStack& difference_stack() const noexcept { return stack_; }

  /// Latches a control; applied at the next decision point (last click wins).
  void submit(const Control& c) {
    check_control(c);
    pending_.push_back(c);
  }

  StepResult step() {
    StepResult res;
    if (finished_ || detector_.clock() >= duration_) return finish(res);
    for (auto [it, end] = schedule_.equal_range(fixation_); it != end; ++it) pending_.push_back(it->second);
    apply_pending();

    if (mode_ == AcquisitionMode::uniform_baseline) return step_baseline(res);

    if (plan_.blip_every > 0 && fixation_ % static_cast<std::size_t>(plan_.blip_every) == 0) {
      acquire_blip();
      res.blip = out_.blips.size() - 1;
      if (detector_.clock() >= duration_) {
        ++fixation_;
        return finish(res);
      }
    }

    const bool manual = mode_ == AcquisitionMode::manual;
    const FoveaDecision d = next_decision(guidance_, click_, manual ? 0.0 : plan_.p_jump, rng_, detector_.clock(),
                                          mode_ == AcquisitionMode::motion, !manual);
    click_.reset();
    out_.decisions.push_back({fixation_, d});
    res.decision = out_.decisions.size() - 1;

    const auto grids = fixation_grids(plan_, d.center, fixation_);
    for (int s = 0; s < plan_.fixation_length; ++s) {
      if (detector_.clock() >= duration_) {
        ++fixation_;
        return finish(res);
      }
      acquire_subframe(grids[static_cast<std::size_t>(s)], {fixation_, s, d.center}, res);
    }
    if (plan_.lc_every > 0 && fixation_ % static_cast<std::size_t>(plan_.lc_every) == 0) {
      compose_lc();
      res.composites.push_back(out_.composites.size() - 1);
    }
    ++fixation_;
    if (detector_.clock() >= duration_) finish(res);
    return res;
  }

  /// Runs to completion.
  const SessionOutput& run() {
    while (!step().finished) {
    }
    return out_;
  }

 private:
  static DetectorConfig detector_config(const AcquisitionPlan& p) {
    DetectorConfig c = p.detector;
    c.seed = derive_seed(p.seed ^ p.detector.seed, 1);
    return c;
  }

  StepResult& finish(StepResult& res) {
    finished_ = true;
    res.finished = true;
    out_.end_time = detector_.clock();
    return res;
  }

  void check_control(const Control& c) const {
    switch (c.kind) {
      case Control::Kind::click:
        require(c.click.x >= 0 && c.click.y >= 0 && c.click.x < plan_.width && c.click.y < plan_.height,
                "click lies outside the field");
        break;
      case Control::Kind::mode:
        require((c.mode == AcquisitionMode::uniform_baseline) == (plan_.mode == AcquisitionMode::uniform_baseline),
                "cannot switch between uniform-baseline and foveated modes during a session");
        break;
      case Control::Kind::set_lambda:
      case Control::Kind::set_tau:
        require(c.value >= 0 && std::isfinite(c.value), "lambda and tau must be finite and non-negative");
        break;
      case Control::Kind::set_p_jump:
        require(c.value >= 0 && c.value <= 1, "p_jump must be in [0, 1]");
        break;
    }
  }

  void apply_pending() {
    for (const auto& c : pending_) {
      switch (c.kind) {
        case Control::Kind::click: click_ = c.click; break;
        case Control::Kind::mode: mode_ = c.mode; break;
        case Control::Kind::set_lambda: plan_.lambda = c.value; break;
        case Control::Kind::set_tau: plan_.tau = c.value; break;
        case Control::Kind::set_p_jump: plan_.p_jump = c.value; break;
      }
    }
    pending_.clear();
  }

  const HadamardBasis& basis(std::size_t order) {
    auto it = bases_.find(order);
    if (it == bases_.end()) it = bases_.emplace(order, HadamardBasis(order)).first;
    return it->second;
  }

  void acquire_blip() {
    if (!blip_grid_) blip_grid_ = share(make_uniform_grid(plan_.width, plan_.height, plan_.blip_cells_per_side));
    const auto& b = basis(blip_grid_->cell_count());
    MeasurementRecord rec = detector_.acquire_blip(scene_, blip_grid_, b, detector_.clock());
    BlipFrame blip = reconstruct_blip(rec, b);
    if (!out_.blips.empty()) {
      BinaryMap map = difference_map(out_.blips.back().field, blip.field, plan_.tau);
      stack_.push(map, blip.t_end);
      guidance_.motion = std::move(map);
    }
    guidance_.blip = blip.field;
    out_.blip_records.push_back(std::move(rec));
    out_.blips.push_back(std::move(blip));
  }

  void acquire_subframe(const GridPtr& g, SubFrameInfo info, StepResult& res) {
    const auto& b = basis(g->cell_count());
    MeasurementRecord rec = detector_.acquire(scene_, g, b, detector_.clock());
    out_.subframes.push_back(reconstruct_subframe(rec, b));
    out_.subframe_records.push_back(std::move(rec));
    out_.subframe_info.push_back(info);
    res.subframes.push_back(out_.subframes.size() - 1);
    compose_wa();
    res.composites.push_back(out_.composites.size() - 1);
  }

  /// Indices of the sub-frames inside the exposure window.
  std::vector<std::size_t> window() const {
    const std::size_t cap = mode_ == AcquisitionMode::uniform_baseline ? 1 : motion_options().window_frames();
    const std::size_t n = out_.subframes.size();
    std::vector<std::size_t> idx;
    for (std::size_t i = n > cap ? n - cap : 0; i < n; ++i) idx.push_back(i);
    return idx;
  }

  MotionMaskOptions motion_options() const {
    return {plan_.max_exposure, plan_.fixation_length, plan_.subframe_period()};
  }

  void compose(CompositeRecord::Kind kind) {
    const auto idx = window();
    std::vector<SubFrame> frames;
    frames.reserve(idx.size());
    for (auto i : idx) frames.push_back(out_.subframes[i]);
    std::optional<MotionMask> mask;
    if (plan_.motion_aware && plan_.blip_every > 0) mask = apply_motion_mask(stack_, frames, motion_options());
    CompositeRecord rec;
    rec.kind = kind;
    rec.after_subframe = idx.back();
    rec.frames = idx;
    if (kind == CompositeRecord::Kind::weighted_average) {
      rec.composite = weighted_average(frames, plan_.weighting, mask ? &*mask : nullptr);
    } else {
      const std::vector<double>* warm = plan_.lambda > 0 && last_lc_ ? &*last_lc_ : nullptr;
      auto r = linear_constraints(frames, mask ? &*mask : nullptr, plan_.lambda, plan_.solver, warm);
      rec.composite = std::move(r.composite);
      rec.report = r.report;
      last_lc_ = rec.composite.image.data;
    }
    out_.composites.push_back(std::move(rec));
  }
  void compose_wa() { compose(CompositeRecord::Kind::weighted_average); }
  void compose_lc() { compose(CompositeRecord::Kind::linear_constraints); }

  StepResult& step_baseline(StepResult& res) {
    if (!baseline_grid_)
      baseline_grid_ = share(make_uniform_grid(plan_.width, plan_.height, plan_.baseline_cells_per_side));
    for (int s = 0; s < plan_.fixation_length; ++s) {
      if (detector_.clock() >= duration_) {
        ++fixation_;
        return finish(res);
      }
      acquire_subframe(baseline_grid_, {fixation_, 0, {plan_.width / 2, plan_.height / 2}}, res);
    }
    ++fixation_;
    if (detector_.clock() >= duration_) finish(res);
    return res;
  }

  AcquisitionPlan plan_;
  DynamicScene scene_;
  double duration_;
  ControlSchedule schedule_;
  Detector detector_;
  std::mt19937_64 rng_;
  GuidanceState guidance_;
  DifferenceMapStack stack_;
  AcquisitionMode mode_;
  std::map<std::size_t, HadamardBasis> bases_;
  GridPtr blip_grid_;
  GridPtr baseline_grid_;
  std::vector<Control> pending_;
  std::optional<Pixel> click_;
  std::optional<std::vector<double>> last_lc_;
  std::size_t fixation_ = 0;
  bool finished_ = false;
  SessionOutput out_;
};

inline SessionOutput run_session(const AcquisitionPlan& plan, const DynamicScene& scene, double duration,
                                 const ControlSchedule& schedule = {}) {
  Session s(plan, scene, duration, schedule);
  s.run();
  return s.take_output();
}

// ---------------------------------------------------------------------------
// Timing

struct TimingReport {
  std::size_t subframes = 0;
  std::size_t blips = 0;
  std::size_t fixations = 0;
  double elapsed = 0.0;                   ///< simulated seconds
  double subframe_rate_hz = 0.0;          ///< sub-frames per second of sub-frame acquisition time
  double effective_subframe_rate_hz = 0.0;  ///< sub-frames per elapsed second, blips included
  double fovea_update_hz = 0.0;           ///< decisions per elapsed second
  double nominal_fovea_update_hz = 0.0;   ///< 1 / (fixation_length * sub-frame period)
  double blip_overhead = 0.0;             ///< blip pattern time / total pattern time
  std::size_t total_patterns = 0;
  std::map<std::string, std::size_t> decisions_by_reason;
};

inline TimingReport timing_report(const SessionOutput& out, int fixation_length = 4) {
  require(!out.subframe_records.empty() || !out.blip_records.empty(), "timing_report needs a non-empty session");
  TimingReport r;
  r.subframes = out.subframe_records.size();
  r.blips = out.blip_records.size();
  r.elapsed = out.end_time;
  double sub_time = 0.0, sub_patterns = 0.0, blip_patterns = 0.0;
  std::size_t last_fix = 0;
  for (std::size_t i = 0; i < out.subframe_records.size(); ++i) {
    const auto& rec = out.subframe_records[i];
    sub_time += rec.next_start() - rec.t_start;
    sub_patterns += rec.duration();
    r.total_patterns += rec.pattern_count;
    if (i < out.subframe_info.size()) last_fix = std::max(last_fix, out.subframe_info[i].fixation + 1);
  }
  for (const auto& rec : out.blip_records) {
    blip_patterns += rec.duration();
    r.total_patterns += rec.pattern_count;
  }
  r.fixations = last_fix;
  if (sub_time > 0) {
    r.subframe_rate_hz = static_cast<double>(r.subframes) / sub_time;
    r.nominal_fovea_update_hz = r.subframe_rate_hz / fixation_length;
  }
  if (r.elapsed > 0) {
    r.effective_subframe_rate_hz = static_cast<double>(r.subframes) / r.elapsed;
    r.fovea_update_hz = static_cast<double>(out.decisions.size()) / r.elapsed;
  }
  if (sub_patterns + blip_patterns > 0) r.blip_overhead = blip_patterns / (sub_patterns + blip_patterns);
  for (const auto& d : out.decisions) ++r.decisions_by_reason[to_string(d.decision.reason)];
  return r;
}

inline json timing_to_json(const TimingReport& r) {
  return json{{"schema", schema_version},
              {"subframes", r.subframes},
              {"blips", r.blips},
              {"fixations", r.fixations},
              {"elapsed_s", r.elapsed},
              {"subframe_rate_hz", r.subframe_rate_hz},
              {"effective_subframe_rate_hz", r.effective_subframe_rate_hz},
              {"fovea_update_hz", r.fovea_update_hz},
              {"nominal_fovea_update_hz", r.nominal_fovea_update_hz},
              {"blip_overhead", r.blip_overhead},
              {"total_patterns", r.total_patterns},
              {"decisions_by_reason", r.decisions_by_reason}};
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

inline const char* to_string(CompositeRecord::Kind k) {
  return k == CompositeRecord::Kind::weighted_average ? "wa" : "lc";
}

inline json subframe_sidecar(const SessionOutput& out, std::size_t i) {
  const auto& sf = out.subframes[i];
  json j{{"schema", schema_version},
         {"index", i},
         {"t_start", sf.t_start},
         {"t_end", sf.t_end},
         {"cell_count", sf.cell_count()},
         {"grid_fingerprint", sf.grid->fingerprint()},
         {"grid_kind", to_string(sf.grid->kind())},
         {"record", "records/subframe_" + frame_name(i) + ".json"}};
  if (i < out.subframe_info.size()) {
    const auto& info = out.subframe_info[i];
    j["fixation"] = info.fixation;
    j["shift_index"] = info.shift_index;
    j["fovea_center"] = {info.fovea_center.x, info.fovea_center.y};
  }
  return j;
}

inline json composite_sidecar(const CompositeRecord& c, std::size_t index) {
  double lo = 0, hi = 0;
  if (!c.composite.exposure_map.data.empty()) {
    const auto [mn, mx] = std::minmax_element(c.composite.exposure_map.data.begin(), c.composite.exposure_map.data.end());
    lo = *mn;
    hi = *mx;
  }
  json j{{"schema", schema_version},
         {"index", index},
         {"kind", to_string(c.kind)},
         {"after_subframe", c.after_subframe},
         {"frames", c.frames},
         {"exposure_min_s", lo},
         {"exposure_max_s", hi},
         {"max_contributing", c.composite.contributing_frames.empty()
                                  ? 0
                                  : *std::max_element(c.composite.contributing_frames.begin(),
                                                      c.composite.contributing_frames.end())}};
  if (c.report)
    j["solver"] = {{"iterations", c.report->iterations},
                   {"relative_residual", c.report->relative_residual},
                   {"normal_residual", c.report->normal_residual},
                   {"converged", c.report->converged},
                   {"rank_deficient", c.report->rank_deficient}};
  return j;
}

/// Writes the output tree: plan.json, timing.json, decisions.jsonl,
/// subframes/, blips/, composites/, records/.
inline void write_session(const SessionOutput& out, const AcquisitionPlan& plan, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file(dir / "plan.json", plan_to_json(plan).dump(2) + "\n");
  for (std::size_t i = 0; i < out.subframes.size(); ++i) {
    const std::string n = frame_name(i);
    write_file(dir / "subframes" / (n + ".pgm"), encode_pgm(out.subframes[i].image()));
    write_file(dir / "subframes" / (n + ".json"), subframe_sidecar(out, i).dump(2) + "\n");
    write_file(dir / "records" / ("subframe_" + n + ".json"), record_to_json(out.subframe_records[i]).dump() + "\n");
  }
  for (std::size_t i = 0; i < out.blips.size(); ++i) {
    const std::string n = frame_name(i);
    write_file(dir / "blips" / (n + ".pgm"), encode_pgm(out.blips[i].field));
    write_file(dir / "blips" / (n + ".json"),
               json{{"schema", schema_version},
                    {"index", i},
                    {"t_start", out.blips[i].t_start},
                    {"t_end", out.blips[i].t_end},
                    {"record", "records/blip_" + n + ".json"}}
                       .dump(2) +
                   "\n");
    write_file(dir / "records" / ("blip_" + n + ".json"), record_to_json(out.blip_records[i]).dump() + "\n");
  }
  for (std::size_t i = 0; i < out.composites.size(); ++i) {
    const auto& c = out.composites[i];
    const std::string stem = std::string(to_string(c.kind)) + "_" + frame_name(i);
    write_file(dir / "composites" / (stem + ".pgm"), encode_pgm(c.composite.image));
    write_file(dir / "composites" / (stem + "_exposure.ppm"), exposure_false_colour(c.composite, plan.max_exposure));
    write_file(dir / "composites" / (stem + ".json"), composite_sidecar(c, i).dump(2) + "\n");
  }
  std::string log;
  for (const auto& d : out.decisions) {
    json j = decision_to_json(d.decision);
    j["fixation"] = d.fixation;
    log += j.dump() + "\n";
  }
  write_file(dir / "decisions.jsonl", log);
  if (!out.subframe_records.empty() || !out.blip_records.empty())
    write_file(dir / "timing.json", timing_to_json(timing_report(out, plan.fixation_length)).dump(2) + "\n");
  else
    write_file(dir / "timing.json", json{{"schema", schema_version}, {"subframes", 0}, {"blips", 0}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayResult {
  AcquisitionPlan plan;
  std::vector<SubFrame> subframes;
  std::vector<BlipFrame> blips;
  CompositeImage weighted_average;
  LinearConstraintsResult linear_constraints;
};

namespace detail {

inline std::vector<MeasurementRecord> load_records(const std::filesystem::path& dir, const std::string& prefix) {
  std::vector<MeasurementRecord> recs;
  for (std::size_t i = 0;; ++i) {
    const auto p = dir / "records" / (prefix + frame_name(i) + ".json");
    if (!std::filesystem::exists(p)) break;
    try {
      recs.push_back(record_from_json(json::parse(read_file(p))));
    } catch (const json::exception& e) {
      throw IngestionError(p.string(), e.what());
    } catch (const InvalidArgument& e) {
      throw IngestionError(p.string(), e.what());
    }
  }
  return recs;
}

}  // namespace detail

/// Rebuilds sub-frames, blips and the motion stack from persisted records and
/// fuses the final exposure window. `lambda` overrides the plan's value.
inline ReplayResult replay(const std::filesystem::path& dir, std::optional<double> lambda = std::nullopt) {
  ReplayResult r;
  const auto plan_path = dir / "plan.json";
  try {
    r.plan = plan_from_json(json::parse(detail::read_file(plan_path)));
  } catch (const json::exception& e) {
    throw IngestionError(plan_path.string(), e.what());
  } catch (const InvalidArgument& e) {
    throw IngestionError(plan_path.string(), e.what());
  }
  const auto subs = detail::load_records(dir, "subframe_");
  const auto blips = detail::load_records(dir, "blip_");
  if (subs.empty()) throw IngestionError(dir.string(), "no sub-frame records to replay");
  std::map<std::size_t, HadamardBasis> bases;
  auto basis = [&](std::size_t n) -> const HadamardBasis& {
    auto it = bases.find(n);
    if (it == bases.end()) it = bases.emplace(n, HadamardBasis(n)).first;
    return it->second;
  };
  const int side = r.plan.blip_every > 0 ? r.plan.blip_cells_per_side : 1;
  DifferenceMapStack stack(side, side);
  for (const auto& rec : blips) {
    r.blips.push_back(reconstruct_blip(rec, basis(rec.grid->cell_count())));
    if (r.blips.size() > 1)
      stack.push(difference_map(r.blips[r.blips.size() - 2].field, r.blips.back().field, r.plan.tau), r.blips.back().t_end);
  }
  for (const auto& rec : subs) r.subframes.push_back(reconstruct_subframe(rec, basis(rec.grid->cell_count())));

  const MotionMaskOptions mo{r.plan.max_exposure, r.plan.fixation_length, r.plan.subframe_period()};
  const std::size_t cap = r.plan.mode == AcquisitionMode::uniform_baseline ? 1 : mo.window_frames();
  const std::size_t n = r.subframes.size();
  std::vector<SubFrame> frames(r.subframes.begin() + static_cast<long>(n > cap ? n - cap : 0), r.subframes.end());
  std::optional<MotionMask> mask;
  if (r.plan.motion_aware && r.plan.blip_every > 0) mask = apply_motion_mask(stack, frames, mo);
  r.weighted_average = weighted_average(frames, r.plan.weighting, mask ? &*mask : nullptr);
  r.linear_constraints = linear_constraints(frames, mask ? &*mask : nullptr, lambda.value_or(r.plan.lambda), r.plan.solver);
  return r;
}

}  // namespace fovea
