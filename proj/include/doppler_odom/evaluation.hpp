#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"
#include "doppler_odom/io.hpp"
#include "doppler_odom/odometry.hpp"

namespace doppler_odom {

enum class RpeMode { PerFrame, PerSecond };

inline std::string_view to_string(RpeMode mode) {
  return mode == RpeMode::PerFrame ? "per-frame" : "per-second";
}

inline RpeMode parse_rpe_mode(std::string_view s) {
  if (s == "per-frame" || s == "frame") return RpeMode::PerFrame;
  if (s == "per-second" || s == "second") return RpeMode::PerSecond;
  throw Error(ErrorCode::InvalidArgument,
              "unknown RPE mode '" + std::string(s) + "' (per-frame | per-second)");
}

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double rms = 0.0;
  double max = 0.0;
};

inline ErrorStats summarize(std::vector<double> values) {
  ErrorStats s;
  if (values.empty()) return s;
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  double sq = 0.0;
  for (double v : values) {
    sum += v;
    sq += v * v;
    s.max = std::max(s.max, v);
  }
  s.mean = sum / n;
  s.rms = std::sqrt(sq / n);
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

struct RpePair {
  double timestamp = 0.0;  // timestamp of the later pose of the pair
  double translation = 0.0;
  double rotation = 0.0;
};

struct RpeReport {
  RpeMode mode = RpeMode::PerFrame;
  std::vector<RpePair> pairs;
  ErrorStats translation;
  ErrorStats rotation;
};

inline constexpr double kAssociationWindow = 0.05;  // s

namespace detail {

/// Index of the pose in `traj` nearest to t, if within the association window.
inline std::optional<std::size_t> nearest_pose(const Trajectory& traj, double t) {
  const auto it = std::lower_bound(traj.begin(), traj.end(), t,
                                   [](const Pose& p, double x) { return p.timestamp < x; });
  std::optional<std::size_t> best;
  double gap = kAssociationWindow;
  if (it != traj.end() && it->timestamp - t <= gap) {
    best = static_cast<std::size_t>(it - traj.begin());
    gap = it->timestamp - t;
  }
  if (it != traj.begin() && t - std::prev(it)->timestamp <= gap) {
    best = static_cast<std::size_t>(std::prev(it) - traj.begin());
  }
  return best;
}

}  // namespace detail

/// Relative pose error between an estimate P and the truth Q. For each pair
/// (i, j) the error transform is (Qᵢ⁻¹Qⱼ)⁻¹(Pᵢ⁻¹Pⱼ). Pairs are consecutive
/// associated frames, or in per-second mode the associated frame nearest to
/// one second after frame i.
inline RpeReport relative_pose_error(const Trajectory& estimate, const Trajectory& truth,
                                     RpeMode mode) {
  if (estimate.empty() || truth.empty()) {
    throw Error(ErrorCode::EmptyTrajectory, "both trajectories must contain poses");
  }
  // Associated (estimate, truth) pose indices, in estimate order.
  std::vector<std::pair<std::size_t, std::size_t>> assoc;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (auto j = detail::nearest_pose(truth, estimate[i].timestamp)) assoc.emplace_back(i, *j);
  }
  if (assoc.size() < 2) {
    throw Error(ErrorCode::NoOverlap, "fewer than two estimate poses lie within 50 ms of a "
                                      "ground-truth pose");
  }

  RpeReport report;
  report.mode = mode;
  const auto add_pair = [&](std::size_t a, std::size_t b) {
    const auto [pi, qi] = assoc[a];
    const auto [pj, qj] = assoc[b];
    const Pose de = relative(estimate[pi], estimate[pj]);
    const Pose dt = relative(truth[qi], truth[qj]);
    const Pose err = relative(dt, de);
    report.pairs.push_back({estimate[pj].timestamp, err.position.norm(), err.rotation.angle()});
  };

  if (mode == RpeMode::PerFrame) {
    for (std::size_t a = 0; a + 1 < assoc.size(); ++a) add_pair(a, a + 1);
  } else {
    for (std::size_t a = 0; a < assoc.size(); ++a) {
      const double target = estimate[assoc[a].first].timestamp + 1.0;
      std::optional<std::size_t> best;
      double gap = kAssociationWindow;
      for (std::size_t b = a + 1; b < assoc.size(); ++b) {
        const double t = estimate[assoc[b].first].timestamp;
        if (t - target > kAssociationWindow) break;
        if (std::abs(t - target) <= gap) {
          gap = std::abs(t - target);
          best = b;
        }
      }
      if (best) add_pair(a, *best);
    }
    if (report.pairs.empty()) {
      throw Error(ErrorCode::NoOverlap, "no pose pairs one second apart");
    }
  }

  std::vector<double> te;
  std::vector<double> re;
  for (const auto& p : report.pairs) {
    te.push_back(p.translation);
    re.push_back(p.rotation);
  }
  report.translation = summarize(te);
  report.rotation = summarize(re);
  return report;
}

inline void write_rpe_csv(const RpeReport& report, const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << kRpeHeader << '\n';
  for (const auto& p : report.pairs) {
    out << format_fixed(p.timestamp, 9) << ',' << format_number(p.translation) << ','
        << format_number(p.rotation) << '\n';
  }
  detail::finish_output(out, path);
}

}  // namespace doppler_odom
