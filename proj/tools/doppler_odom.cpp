#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "doppler_odom/commands.hpp"

namespace {

using namespace doppler_odom;

std::string config_key_footer() {
  std::string s = "Configuration keys (key = value, also accepted by --set):\n";
  for (const auto& k : config_keys()) {
    s += "  " + k.key + " [" + k.default_value + "]  " + k.description + "\n";
  }
  return s;
}

void add_config_flags(CLI::App& sub, cli::ConfigOptions& c, bool with_seed) {
  sub.add_option("--config", c.config_path, "configuration file");
  sub.add_option("--set", c.overrides, "override a configuration key, key=value (repeatable)");
  if (with_seed) sub.add_option("--seed", c.seed, "sets scene.seed and ransac.seed");
  sub.footer(config_key_footer());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doppler LiDAR/radar odometry: simulation, estimation, calibration, evaluation"};
  app.require_subcommand(1);

  cli::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic scan sequence with ground truth");
  add_config_flags(*simulate, sim.config, true);
  simulate->add_option("--out", sim.out_dir, "output directory")->required();

  cli::OdomOptions odom;
  auto* run = app.add_subcommand("odom", "estimate the vehicle trajectory from Doppler scans");
  add_config_flags(*run, odom.config, true);
  run->add_option("--scans", odom.scans_path, "scan CSV")->required();
  run->add_option("--out", odom.out_dir, "output directory")->required();
  run->add_option("--ransac-threshold", odom.ransac_threshold, "inlier threshold, m/s");
  run->add_option("--t0", odom.t0, "trajectory start time; default anchors at the first scan");
  run->add_option("--sensor-trajectory", odom.sensor_trajectory,
                  "also write the sensor trajectory (TUM) to this path");

  cli::CalibrateOptions cal;
  std::string mode;
  auto* calibrate = app.add_subcommand("calibrate", "estimate sensor extrinsics from dedicated runs");
  add_config_flags(*calibrate, cal.config, false);
  calibrate->add_option("mode", mode, "rotation1 | rotation2 | sx")->required();
  calibrate->add_option("--scans", cal.scans_path, "scan CSV of the calibration run");
  calibrate->add_option("--velocities", cal.velocities_path,
                        "sensor velocity CSV (timestamp,vx,vy,vz) instead of scans");
  calibrate->add_option("--reference", cal.reference_path,
                        "reference yaw rate CSV (timestamp,omega_z), sx mode");
  calibrate->add_option("--config-out", cal.config_out, "updated configuration file")->required();

  cli::EvaluateOptions ev;
  std::string rpe_mode = "per-frame";
  auto* evaluate = app.add_subcommand("evaluate", "relative pose error against ground truth");
  evaluate->add_option("--estimate", ev.estimate_path, "estimated trajectory (TUM)")->required();
  evaluate->add_option("--truth", ev.truth_path, "ground-truth trajectory (TUM)")->required();
  evaluate->add_option("--mode", rpe_mode, "per-frame | per-second");
  evaluate->add_option("--out", ev.out_csv, "per-pair RPE CSV");
  evaluate->footer(config_key_footer());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (*simulate) return cli::cmd_simulate(sim, std::cout, std::cerr);
    if (*run) return cli::cmd_odom(odom, std::cout, std::cerr);
    if (*calibrate) {
      cal.mode = cli::parse_calibration_mode(mode);
      return cli::cmd_calibrate(cal, std::cout, std::cerr);
    }
    if (*evaluate) {
      ev.mode = parse_rpe_mode(rpe_mode);
      return cli::cmd_evaluate(ev, std::cout, std::cerr);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  }
  return cli::kExitUsage;
}
