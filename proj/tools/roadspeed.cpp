// roadspeed: calibrate / simulate / run / train.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roadspeed/pipeline.hpp"

namespace rs = roadspeed;

namespace {

constexpr int kExitError = 2;

rs::fs::path base_of(const rs::fs::path& p) { return p.has_parent_path() ? p.parent_path() : rs::fs::path("."); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicle speed from a single calibrated camera"};
  app.require_subcommand(1);

  std::string config, out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::vector<std::string> frames;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", config, "JSON configuration file")->envname("ROADSPEED_CONFIG");
    if (config_required) c->required();
    sub->add_option("--seed", seed, "random seed")->envname("ROADSPEED_SEED");
    sub->add_option("--out", out, "output path")->envname("ROADSPEED_OUT")->required();
  };

  auto* calibrate = app.add_subcommand("calibrate", "markers JSON -> homography JSON");
  common(calibrate, true);
  auto* simulate = app.add_subcommand("simulate", "render a synthetic scene into a directory");
  common(simulate, false);
  auto* run = app.add_subcommand("run", "detect, read and time plates in frames; write report.csv");
  common(run, true);
  run->add_option("frames", frames, "frame files or directories (default: config 'frames')");
  auto* train = app.add_subcommand("train", "train the plate classifier or the OCR network");
  common(train, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: configuration_error: " << e.what() << "\n";
    return kExitError;
  }
  for (auto* sub : {simulate, run, train})
    if (sub->parsed()) seed_given = sub->count("--seed") > 0 || std::getenv("ROADSPEED_SEED") != nullptr;

  try {
    if (calibrate->parsed()) {
      const auto r = rs::cmd_calibrate(config, out);
      std::cout << "rms_px=" << r.rms_px << (r.high_residual ? " (high_residual)" : "") << "\n";
    } else if (simulate->parsed()) {
      rs::ScenarioSpec spec = config.empty() ? rs::default_scenario() : rs::scenario_from_json(rs::read_json(config));
      if (seed_given) spec.seed = seed;
      const auto r = rs::cmd_simulate(spec, out);
      std::cout << "frames=" << spec.n_frames << " vehicles=" << r.tracks.size() << "\n";
    } else if (run->parsed()) {
      rs::RunConfig cfg = rs::load_run_config(config);
      if (seed_given) cfg.seed = seed;
      std::vector<rs::fs::path> inputs(frames.begin(), frames.end());
      if (inputs.empty() && cfg.frames.empty()) rs::fail(rs::ErrorKind::ConfigurationError, "no frames given");
      const auto r = rs::cmd_run(cfg, inputs, out);
      std::cout << "frames_read=" << r.frames_read << " skipped=" << r.frames_skipped << " tracks=" << r.rows.size()
                << "\n";
      for (const auto& row : r.rows) {
        std::cout << "track " << row.track_id << " " << row.plate_text;
        if (row.estimate && row.estimate->v_m1) std::cout << " v_m1_kmh=" << rs::mps_to_kmh(*row.estimate->v_m1);
        if (row.estimate && row.estimate->v_m2) std::cout << " v_m2_kmh=" << rs::mps_to_kmh(*row.estimate->v_m2);
        std::cout << "\n";
      }
    } else if (train->parsed()) {
      const auto cfg = rs::train_config_from_json(rs::read_json(config), base_of(config));
      const auto r = rs::cmd_train(cfg, seed, out);
      std::cout << "kind=" << r.kind << " n_train=" << r.n_train << " n_test=" << r.n_test << " "
                << (r.kind == "plate" ? "held_out_miss_rate=" : "held_out_accuracy=") << r.metric << "\n";
    }
  } catch (const rs::Error& e) {
    std::cerr << "error: " << rs::to_string(e.kind()) << ": " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: io_error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
