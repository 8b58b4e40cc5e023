#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "doppler_odom/calibration.hpp"
#include "doppler_odom/error.hpp"
#include "doppler_odom/evaluation.hpp"
#include "doppler_odom/io.hpp"
#include "doppler_odom/odometry.hpp"
#include "doppler_odom/simulator.hpp"

namespace doppler_odom::cli {

// Stable exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNoScans = 4;
inline constexpr int kExitExcitation = 5;
inline constexpr int kExitNoOverlap = 6;

struct ConfigOptions {
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
};

struct SimulateOptions {
  ConfigOptions config;
  std::filesystem::path out_dir = ".";
};

struct OdomOptions {
  ConfigOptions config;
  std::filesystem::path scans_path;
  std::filesystem::path out_dir = ".";
  std::optional<double> ransac_threshold;
  std::optional<double> t0;
  std::optional<std::filesystem::path> sensor_trajectory;
};

enum class CalibrationMode { Rotation1, Rotation2, LeverArm };

inline CalibrationMode parse_calibration_mode(std::string_view s) {
  if (s == "rotation1") return CalibrationMode::Rotation1;
  if (s == "rotation2") return CalibrationMode::Rotation2;
  if (s == "sx") return CalibrationMode::LeverArm;
  throw Error(ErrorCode::InvalidArgument,
              "unknown calibration mode '" + std::string(s) + "' (rotation1 | rotation2 | sx)");
}

struct CalibrateOptions {
  ConfigOptions config;  // config_path is the input config
  CalibrationMode mode = CalibrationMode::Rotation1;
  std::optional<std::filesystem::path> scans_path;
  std::optional<std::filesystem::path> velocities_path;
  std::optional<std::filesystem::path> reference_path;
  std::filesystem::path config_out;
};

struct EvaluateOptions {
  std::filesystem::path estimate_path;
  std::filesystem::path truth_path;
  RpeMode mode = RpeMode::PerFrame;
  std::optional<std::filesystem::path> out_csv;
};

namespace detail {

/// Maps library failures onto exit statuses. Failures while reading the
/// configuration are reported as configuration errors unless the file itself
/// could not be opened.
inline int exit_code_for(const Error& e, bool in_config) {
  switch (e.code()) {
    case ErrorCode::IoError:
      return kExitIo;
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::SingularGeometry:
      return in_config ? kExitConfig : kExitIo;
    case ErrorCode::NonMonotonicTimestamp:
      return kExitIo;
    case ErrorCode::InsufficientMotion:
    case ErrorCode::AmbiguousDirection:
    case ErrorCode::InsufficientExcitation:
    case ErrorCode::NoReference:
    case ErrorCode::DegenerateManeuver:
      return kExitExcitation;
    case ErrorCode::NoOverlap:
    case ErrorCode::EmptyTrajectory:
      return kExitNoOverlap;
    default:
      return kExitUsage;
  }
}

inline Config resolve_config(const ConfigOptions& opts) {
  Config cfg = opts.config_path ? load_config(*opts.config_path) : Config{};
  if (!opts.overrides.empty()) cfg = apply_overrides(cfg, opts.overrides);
  if (opts.seed) {
    cfg.scene.seed = *opts.seed;
    cfg.ransac.seed = *opts.seed;
  }
  return cfg;
}

/// Runs `body`, reporting any library error on `err` and converting it to an
/// exit status. `stage` tracks whether the configuration is being read.
inline int guarded(std::ostream& err, const std::function<int(bool&)>& body) {
  bool in_config = true;
  try {
    return body(in_config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e, in_config);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory '" + dir.string() + "'");
}

inline std::string degrees(double rad) { return format_fixed(rad * 180.0 / std::numbers::pi, 4); }

inline void print_rotation(std::ostream& out, const Rotation& r) {
  const Eigen::Vector4d q = r.quaternion_xyzw();
  const Mat3& m = r.matrix();
  // Z-Y-X (yaw, pitch, roll) decomposition for display only.
  const double yaw = std::atan2(m(1, 0), m(0, 0));
  const double pitch = std::asin(std::clamp(-m(2, 0), -1.0, 1.0));
  const double roll = std::atan2(m(2, 1), m(2, 2));
  out << "rotation_vs quaternion (x y z w): " << format_number(q(0)) << ' ' << format_number(q(1))
      << ' ' << format_number(q(2)) << ' ' << format_number(q(3)) << '\n'
      << "rotation_vs yaw/pitch/roll [deg]: " << degrees(yaw) << ' ' << degrees(pitch) << ' '
      << degrees(roll) << '\n';
}

}  // namespace detail

/// Writes scans.csv, truth_tum.txt and labels.csv into out_dir.
inline int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&](bool& in_config) {
    const Config cfg = detail::resolve_config(opts.config);
    if (cfg.profile.segments.empty()) {
      throw Error(ErrorCode::ValidationError, "config defines no profile.segment.<i> entries");
    }
    in_config = false;
    const SimulatedSequence seq = simulate_sequence(cfg.profile, cfg.vehicle, cfg.scene);
    detail::ensure_directory(opts.out_dir);
    write_scans(seq.scans, opts.out_dir / "scans.csv");
    write_trajectory(seq.truth, opts.out_dir / "truth_tum.txt");
    write_labels(seq.scans, seq.labels, opts.out_dir / "labels.csv");

    std::size_t points = 0;
    std::size_t dynamic = 0;
    for (std::size_t k = 0; k < seq.scans.size(); ++k) {
      points += seq.scans[k].points.size();
      for (bool d : seq.labels[k]) dynamic += d ? 1 : 0;
    }
    out << "scans: " << seq.scans.size() << '\n'
        << "points: " << points << " (" << dynamic << " dynamic)\n"
        << "seed: " << cfg.scene.seed << '\n'
        << "wrote: " << (opts.out_dir / "scans.csv").string() << ", "
        << (opts.out_dir / "truth_tum.txt").string() << ", "
        << (opts.out_dir / "labels.csv").string() << '\n';
    return kExitOk;
  });
}

/// Estimates the trajectory of the vehicle origin from a scan CSV. Without
/// --t0 the first scan anchors the clock: the trajectory starts at its
/// timestamp and its estimate is reported but not integrated.
inline int cmd_odom(const OdomOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&](bool& in_config) {
    Config cfg = detail::resolve_config(opts.config);
    if (opts.ransac_threshold) {
      cfg = apply_overrides(cfg, {"ransac.inlier_threshold=" + format_number(*opts.ransac_threshold)});
    }
    in_config = false;
    const std::vector<Scan> scans = read_scans(opts.scans_path);
    if (scans.empty()) {
      err << "error: no scans in '" << opts.scans_path.string() << "'\n";
      return kExitNoScans;
    }

    SequenceResult result;
    if (opts.t0) {
      Pose initial;
      initial.timestamp = *opts.t0;
      result = run_sequence(scans, cfg.vehicle, cfg.ransac, initial);
    } else {
      ScanRecord first;
      first.timestamp = scans.front().timestamp;
      try {
        first.estimate = process_scan(scans.front(), cfg.vehicle, cfg.ransac);
      } catch (const Error& e) {
        first.failure = e.code();
        first.message = e.what();
      }
      Pose initial;
      initial.timestamp = scans.front().timestamp;
      const std::vector<Scan> rest(scans.begin() + 1, scans.end());
      result = run_sequence(rest, cfg.vehicle, cfg.ransac, initial);
      result.records.insert(result.records.begin(), std::move(first));
    }

    detail::ensure_directory(opts.out_dir);
    write_trajectory(result.trajectory, opts.out_dir / "trajectory_tum.txt");
    write_estimates(result.records, opts.out_dir / "estimates.csv");
    if (opts.sensor_trajectory) {
      Pose mount;
      mount.rotation = cfg.vehicle.rotation_vs;
      mount.position = cfg.vehicle.s;
      Trajectory sensor;
      for (const auto& p : result.trajectory) sensor.push_back(compose(p, mount));
      for (std::size_t i = 0; i < sensor.size(); ++i) sensor[i].timestamp = result.trajectory[i].timestamp;
      write_trajectory(sensor, *opts.sensor_trajectory);
    }

    std::vector<double> times;
    for (const auto& r : result.records) {
      if (r.estimate) times.push_back(r.estimate->compute_time_ms);
    }
    double mean = 0.0;
    double sd = 0.0;
    for (double t : times) mean += t;
    if (!times.empty()) mean /= static_cast<double>(times.size());
    for (double t : times) sd += (t - mean) * (t - mean);
    if (times.size() > 1) sd = std::sqrt(sd / static_cast<double>(times.size() - 1));

    out << "scans: " << result.records.size() << '\n'
        << "processed: " << times.size() << '\n'
        << "gaps: " << result.records.size() - times.size() << '\n'
        << "ransac.inlier_threshold: " << format_number(cfg.ransac.inlier_threshold) << '\n'
        << "ransac.max_iterations: " << cfg.ransac.max_iterations << '\n'
        << "compute time [ms/scan]: " << format_fixed(mean, 3) << " +- " << format_fixed(sd, 3)
        << '\n';
    for (const auto& r : result.records) {
      if (!r.ok()) err << "gap at t=" << format_number(r.timestamp) << ": " << r.message << '\n';
    }
    return times.empty() ? kExitNoScans : kExitOk;
  });
}

inline int cmd_calibrate(const CalibrateOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&](bool& in_config) {
    Config cfg = detail::resolve_config(opts.config);
    in_config = false;

    CalibrationRun run;
    if (opts.velocities_path) {
      run.velocities = read_velocities(*opts.velocities_path);
    } else if (opts.scans_path) {
      run = velocities_from_scans(read_scans(*opts.scans_path), cfg.ransac);
    } else {
      throw Error(ErrorCode::InvalidArgument, "calibration needs --scans or --velocities");
    }
    if (opts.reference_path) run.reference_yaw_rate = read_yaw_rates(*opts.reference_path);

    switch (opts.mode) {
      case CalibrationMode::Rotation1: {
        const ExtrinsicRotationResult r = calibrate_rotation_step1(run);
        cfg.vehicle.rotation_vs = r.rotation_vs;
        out << "step: rotation1 (motion axis alignment)\n"
            << "samples used: " << r.samples_used << '\n'
            << "lateral/vertical velocity rms [m/s]: " << format_fixed(r.residual_rms, 6) << '\n';
        detail::print_rotation(out, r.rotation_vs);
        break;
      }
      case CalibrationMode::Rotation2: {
        const Rotation partial = cfg.vehicle.rotation_vs;
        const ExtrinsicRotationResult r = calibrate_rotation_step2(run, partial);
        cfg.vehicle.rotation_vs = r.rotation_vs;
        out << "step: rotation2 (roll about X)\n"
            << "samples used: " << r.samples_used << '\n'
            << "roll correction [deg]: " << detail::degrees(roll_angle(r.rotation_vs, partial))
            << '\n'
            << "vertical velocity rms [m/s]: " << format_fixed(r.residual_rms, 6) << '\n';
        detail::print_rotation(out, r.rotation_vs);
        break;
      }
      case CalibrationMode::LeverArm: {
        const LeverArmResult r = calibrate_sx(run, cfg.vehicle.rotation_vs);
        cfg.vehicle.s.x() = r.s_x;
        out << "step: sx (lever arm)\n"
            << "samples used: " << r.samples_used << '\n'
            << "s_x [m]: " << format_number(r.s_x) << '\n'
            << "yaw rate residual rms [rad/s]: " << format_fixed(r.residual_rms, 6) << '\n';
        break;
      }
    }
    in_config = true;
    cfg.validate();
    in_config = false;
    save_config(cfg, opts.config_out);
    out << "wrote: " << opts.config_out.string() << '\n';
    return kExitOk;
  });
}

inline int cmd_evaluate(const EvaluateOptions& opts, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&](bool& in_config) {
    in_config = false;
    const Trajectory estimate = read_trajectory(opts.estimate_path);
    const Trajectory truth = read_trajectory(opts.truth_path);
    const RpeReport report = relative_pose_error(estimate, truth, opts.mode);
    if (opts.out_csv) write_rpe_csv(report, *opts.out_csv);

    const auto line = [&](const char* name, const ErrorStats& s, const char* unit) {
      out << name << " [" << unit << "]: mean " << format_fixed(s.mean, 9) << "  median "
          << format_fixed(s.median, 9) << "  rms " << format_fixed(s.rms, 9) << "  max "
          << format_fixed(s.max, 9) << '\n';
    };
    out << "mode: " << to_string(report.mode) << '\n' << "pairs: " << report.pairs.size() << '\n';
    line("translation", report.translation, "m");
    line("rotation", report.rotation, "rad");
    return kExitOk;
  });
}

}  // namespace doppler_odom::cli
