// fovea: command-line front end for the foveated single-pixel simulator.
//
//   fovea run    --scene builtin:moving-sign --mode motion --duration 15 --out-dir out
//   fovea replay --in out --out-dir out/replay
//   fovea psf    --frames 36 --out-dir psf
//   fovea serve  --port 8765

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "fovea/gateway.hpp"
#include "fovea/runtime.hpp"

namespace {

using namespace fovea;

struct RunArgs {
  std::string scene = "builtin:moving-sign";
  std::string mode = "motion";
  double duration = 15.0;
  std::uint64_t seed = 1;
  std::string out_dir;
  double noise_sigma = 0.0;
  double lambda = 0.1;
  double tau = 0.1;
  double p_jump = 0.2;
  double max_exposure = 4.0;
  bool uniform_baseline = false;
  int lc_every = 1;
  std::vector<std::string> clicks;
};

void add_plan_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--scene", a.scene, "builtin:moving-sign|moving-square|target, scene .json or PGM/PPM image")
      ->capture_default_str();
  cmd->add_option("--mode", a.mode, "manual|motion|wavelet|uniform-baseline")->capture_default_str();
  cmd->add_option("--duration", a.duration, "simulated seconds")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", a.seed, "session seed")->capture_default_str();
  cmd->add_option("--noise-sigma", a.noise_sigma, "Gaussian detector noise, fraction of full scale")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda", a.lambda, "smoothing weight of the linear-constraints composite")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--tau", a.tau, "blip difference threshold")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--p-jump", a.p_jump, "stochastic jump probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--max-exposure", a.max_exposure, "motion-aware fusion window, seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--uniform-baseline", a.uniform_baseline, "32x32 uniform frames, no fovea or blips");
  cmd->add_option("--lc-every", a.lc_every, "fixations per linear-constraints composite (0 = off)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--click", a.clicks, "scripted click FIXATION:X,Y (repeatable)");
}

AcquisitionPlan make_plan(const RunArgs& a) {
  AcquisitionPlan p;
  p.mode = a.uniform_baseline ? AcquisitionMode::uniform_baseline : acquisition_mode_from_string(a.mode);
  p.seed = a.seed;
  p.detector.noise_sigma = a.noise_sigma;
  p.lambda = a.lambda;
  p.tau = a.tau;
  p.p_jump = a.p_jump;
  p.max_exposure = a.max_exposure;
  p.lc_every = a.lc_every;
  p.validate();
  return p;
}

ControlSchedule make_schedule(const std::vector<std::string>& clicks) {
  static const std::regex pat(R"((\d+):(\d+),(\d+))");
  ControlSchedule s;
  for (const auto& c : clicks) {
    std::smatch m;
    if (!std::regex_match(c, m, pat)) throw InvalidArgument("--click expects FIXATION:X,Y, got '" + c + "'");
    s.emplace(std::stoul(m[1]), Control::make_click(std::stoi(m[2]), std::stoi(m[3])));
  }
  return s;
}

int cmd_run(const RunArgs& a) {
  const AcquisitionPlan plan = make_plan(a);
  const DynamicScene scene = resolve_scene(a.scene, plan.width, plan.height);
  const SessionOutput out = run_session(plan, scene, a.duration, make_schedule(a.clicks));
  write_session(out, plan, a.out_dir);
  if (!out.subframes.empty() || !out.blips.empty()) {
    const auto t = timing_report(out, plan.fixation_length);
    std::printf("%zu sub-frames, %zu blips, %zu decisions in %.3f s simulated\n", t.subframes, t.blips,
                out.decisions.size(), t.elapsed);
    std::printf("sub-frame rate %.3f Hz, fovea update %.3f Hz, blip overhead %.2f%%\n", t.subframe_rate_hz,
                t.fovea_update_hz, 100.0 * t.blip_overhead);
  } else {
    std::printf("empty session\n");
  }
  std::printf("wrote %s\n", a.out_dir.c_str());
  return 0;
}

int cmd_replay(const std::string& in, const std::string& out_dir, std::optional<double> lambda) {
  const ReplayResult r = replay(in, lambda);
  const std::filesystem::path out(out_dir);
  write_file(out / "wa.pgm", encode_pgm(r.weighted_average.image));
  write_file(out / "lc.pgm", encode_pgm(r.linear_constraints.composite.image));
  write_file(out / "exposure.ppm", exposure_false_colour(r.weighted_average, r.plan.max_exposure));
  const auto& rep = r.linear_constraints.report;
  json j{{"schema", schema_version},
         {"subframes", r.subframes.size()},
         {"blips", r.blips.size()},
         {"solver",
          {{"iterations", rep.iterations},
           {"relative_residual", rep.relative_residual},
           {"converged", rep.converged},
           {"rank_deficient", rep.rank_deficient}}}};
  write_file(out / "replay.json", j.dump(2) + "\n");
  std::printf("replayed %zu sub-frames, %zu blips; solver %d iterations (%s)\n", r.subframes.size(), r.blips.size(),
              rep.iterations, rep.converged ? "converged" : "not converged");
  return 0;
}

int cmd_psf(int frames, const std::string& method, const std::string& out_dir, int spacing, double lambda,
            std::uint64_t seed) {
  require(frames >= 1, "--frames must be positive");
  if (method != "wa" && method != "lc" && method != "both") throw InvalidArgument("--method must be wa, lc or both");
  AcquisitionPlan plan;
  plan.seed = seed;
  std::vector<GridPtr> grids;
  for (std::size_t f = 0; grids.size() < static_cast<std::size_t>(frames); ++f)
    for (auto& g : fixation_grids(plan, plan.fovea.center, f))
      if (grids.size() < static_cast<std::size_t>(frames)) grids.push_back(g);
  const std::filesystem::path out(out_dir);
  auto probe = [&](FusionMethod m, const char* name) {
    const PsfResult r = psf_probe(grids, m, spacing, spacing / 2, lambda);
    write_file(out / (std::string(name) + ".pgm"), encode_pgm(r.composite.image));
    double fovea_r = 0, periph_r = 0;
    int nf = 0, np = 0;
    json stats = json::array();
    for (auto p : r.impulses) {
      const auto s = psf_stats(r.composite.image, p, spacing / 2 - 1);
      const bool in_fovea = plan.fovea.contains(p.x, p.y);
      (in_fovea ? fovea_r : periph_r) += s.rms_radius;
      (in_fovea ? nf : np) += 1;
      stats.push_back({{"x", p.x}, {"y", p.y}, {"fovea", in_fovea}, {"peak", s.peak}, {"rms_radius", s.rms_radius},
                       {"outside_fraction", s.outside_fraction}});
    }
    write_file(out / (std::string(name) + ".json"),
               json{{"schema", schema_version}, {"method", name}, {"frames", frames}, {"impulses", stats}}.dump(2) + "\n");
    std::printf("%s: mean PSF rms radius %.3f px in fovea, %.3f px in periphery\n", name, nf ? fovea_r / nf : 0.0,
                np ? periph_r / np : 0.0);
  };
  if (method == "wa" || method == "both") probe(FusionMethod::weighted_average, "wa");
  if (method == "lc" || method == "both") probe(FusionMethod::linear_constraints, "lc");
  return 0;
}

gateway::Server* g_server = nullptr;

int cmd_serve(const RunArgs& a, unsigned short port, bool realtime, double speed, bool paused) {
  const AcquisitionPlan plan = make_plan(a);
  protocol::Controller ctl(plan, resolve_scene(a.scene, plan.width, plan.height), a.duration, paused);
  gateway::Server server(ctl, {"127.0.0.1", port, realtime, speed});
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::printf("serving ws://127.0.0.1:%u\n", server.port());
  std::fflush(stdout);
  server.run();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive foveated single-pixel imaging simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "simulate a session and write its output directory");
  add_plan_options(run_cmd, run);
  run_cmd->add_option("--out-dir", run.out_dir, "output directory")->required();

  std::string replay_in, replay_out;
  std::optional<double> replay_lambda;
  auto* replay_cmd = app.add_subcommand("replay", "re-fuse a persisted session from its records");
  replay_cmd->add_option("--in", replay_in, "session output directory")->required()->check(CLI::ExistingDirectory);
  replay_cmd->add_option("--out-dir", replay_out, "where to write the replayed composites")->required();
  replay_cmd->add_option("--lambda", replay_lambda, "override the plan's smoothing weight");

  int psf_frames = 36;
  std::string psf_method = "both", psf_out;
  int psf_spacing = 16;
  double psf_lambda = 0.0;
  std::uint64_t psf_seed = 1;
  auto* psf_cmd = app.add_subcommand("psf", "impulse-grid PSF probe through measurement and fusion");
  psf_cmd->add_option("--frames", psf_frames, "number of sub-frames")->capture_default_str();
  psf_cmd->add_option("--method", psf_method, "wa|lc|both")->capture_default_str();
  psf_cmd->add_option("--spacing", psf_spacing, "impulse spacing in hr-pixels")->capture_default_str();
  psf_cmd->add_option("--lambda", psf_lambda, "smoothing weight")->capture_default_str();
  psf_cmd->add_option("--seed", psf_seed, "periphery seed")->capture_default_str();
  psf_cmd->add_option("--out-dir", psf_out, "output directory")->required();

  RunArgs serve;
  unsigned short port = 8765;
  bool no_realtime = false, paused = false;
  double speed = 1.0;
  auto* serve_cmd = app.add_subcommand("serve", "stream a live session over a websocket");
  add_plan_options(serve_cmd, serve);
  serve_cmd->add_option("--port", port, "TCP port (0 = any free port)")->capture_default_str();
  serve_cmd->add_flag("--no-realtime", no_realtime, "step as fast as possible");
  serve_cmd->add_option("--speed", speed, "simulated seconds per wall second")->capture_default_str()->check(CLI::PositiveNumber);
  serve_cmd->add_flag("--paused", paused, "start paused; advance with step messages");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*replay_cmd) return cmd_replay(replay_in, replay_out, replay_lambda);
    if (*psf_cmd) return cmd_psf(psf_frames, psf_method, psf_out, psf_spacing, psf_lambda, psf_seed);
    if (*serve_cmd) return cmd_serve(serve, port, !no_realtime, speed, paused);
  } catch (const IngestionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
