#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doppler_odom/ego_velocity.hpp"
#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"

namespace doppler_odom {

struct VelocitySample {
  double timestamp = 0.0;
  Vec3 v = Vec3::Zero();  // sensor frame
};

struct YawRateSample {
  double timestamp = 0.0;
  double omega_z = 0.0;
};

/// Recorded maneuver: sensor velocities, and optionally an external yaw-rate
/// series (e.g. a gyroscope) for the lever-arm calibration.
struct CalibrationRun {
  std::vector<VelocitySample> velocities;
  std::optional<std::vector<YawRateSample>> reference_yaw_rate;

  void validate() const {
    for (std::size_t i = 0; i < velocities.size(); ++i) {
      const auto& s = velocities[i];
      if (!std::isfinite(s.timestamp) || !all_finite(s.v) || s.v.norm() > 1e3) {
        throw Error(ErrorCode::ValidationError,
                    "velocity sample " + std::to_string(i) + " is non-finite or above 1e3 m/s");
      }
      if (i > 0 && !(s.timestamp > velocities[i - 1].timestamp)) {
        throw Error(ErrorCode::NonMonotonicTimestamp,
                    "velocity sample " + std::to_string(i) + " does not increase in time");
      }
    }
    if (reference_yaw_rate) {
      const auto& ref = *reference_yaw_rate;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!std::isfinite(ref[i].timestamp) || !std::isfinite(ref[i].omega_z)) {
          throw Error(ErrorCode::ValidationError,
                      "yaw-rate sample " + std::to_string(i) + " is non-finite");
        }
        if (i > 0 && !(ref[i].timestamp > ref[i - 1].timestamp)) {
          throw Error(ErrorCode::NonMonotonicTimestamp,
                      "yaw-rate sample " + std::to_string(i) + " does not increase in time");
        }
      }
    }
  }
};

struct ExtrinsicRotationResult {
  Rotation rotation_vs;
  double residual_rms = 0.0;  // m/s, of the components the step drives to zero
  std::size_t samples_used = 0;
};

struct LeverArmResult {
  double s_x = 0.0;
  double residual_rms = 0.0;  // rad/s, predicted minus reference yaw rate
  std::size_t samples_used = 0;
};

inline constexpr double kCalibrationMinSpeed = 0.2;     // m/s
inline constexpr std::size_t kMinCalibrationSamples = 50;
inline constexpr double kMaxConflictFraction = 0.1;
inline constexpr double kStraightConeDeg = 30.0;
inline constexpr double kMinLateralExcitation = 0.01;   // (m/s)^2
inline constexpr double kMaxAlignmentGap = 0.05;        // s
inline constexpr double kMaxYawRateVariation = 0.2;     // coefficient of variation

namespace detail {

inline std::vector<Vec3> fast_velocities(const CalibrationRun& run) {
  std::vector<Vec3> out;
  for (const auto& s : run.velocities) {
    if (s.v.norm() >= kCalibrationMinSpeed) out.push_back(s.v);
  }
  return out;
}

}  // namespace detail

/// Straight-line run, forward and backward. The motion axis u is the principal
/// axis of Σ v vᵀ over samples above the speed gate, which minimises the
/// summed squared off-axis velocity. Its sign is chosen so the majority of
/// samples move along +u. The result is the smallest rotation taking u onto
/// the vehicle +X axis, which leaves roll about X at zero.
inline ExtrinsicRotationResult calibrate_rotation_step1(const CalibrationRun& run) {
  run.validate();
  const std::vector<Vec3> vs = detail::fast_velocities(run);
  if (vs.size() < kMinCalibrationSamples) {
    throw Error(ErrorCode::InsufficientMotion,
                std::to_string(vs.size()) + " samples at >= 0.2 m/s, need " +
                    std::to_string(kMinCalibrationSamples));
  }
  Mat3 scatter = Mat3::Zero();
  for (const auto& v : vs) scatter += v * v.transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  Vec3 u = eig.eigenvectors().col(2).normalized();

  std::size_t positive = 0;
  std::size_t conflicting = 0;
  const double cone = std::cos(kStraightConeDeg * std::numbers::pi / 180.0);
  for (const auto& v : vs) {
    const double c = v.normalized().dot(u);
    if (c > 0.0) ++positive;
    if (std::abs(c) < cone) ++conflicting;
  }
  if (static_cast<double>(conflicting) > kMaxConflictFraction * static_cast<double>(vs.size())) {
    throw Error(ErrorCode::AmbiguousDirection,
                std::to_string(conflicting) + " of " + std::to_string(vs.size()) +
                    " samples are more than 30 deg off the motion axis; drive a straight line");
  }
  if (2 * positive < vs.size() || (2 * positive == vs.size() && u.x() < 0.0)) u = -u;

  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(u, Vec3::UnitX());
  ExtrinsicRotationResult out;
  out.rotation_vs = Rotation::from_matrix(q.normalized().toRotationMatrix());
  double sq = 0.0;
  for (const auto& v : vs) sq += (out.rotation_vs * v).tail<2>().squaredNorm();
  out.residual_rms = std::sqrt(sq / static_cast<double>(vs.size()));
  out.samples_used = vs.size();
  return out;
}

namespace detail {

/// Σ (R_x(α) w_i)_z² for the partially aligned velocities w_i.
inline double roll_objective(const std::vector<Vec3>& ws, double alpha) {
  const double s = std::sin(alpha);
  const double c = std::cos(alpha);
  double f = 0.0;
  for (const auto& w : ws) {
    const double z = s * w.y() + c * w.z();
    f += z * z;
  }
  return f;
}

}  // namespace detail

/// Free driving on flat ground. Searches the roll angle α about X that
/// minimises the vertical velocity of R_x(α)·partial·v. The objective has
/// period π; the search covers (−π/2, π/2] so the vehicle Z axis stays up.
inline ExtrinsicRotationResult calibrate_rotation_step2(const CalibrationRun& run,
                                                        const Rotation& partial) {
  run.validate();
  std::vector<Vec3> ws;
  for (const auto& v : detail::fast_velocities(run)) ws.push_back(partial * v);
  if (ws.size() < kMinCalibrationSamples) {
    throw Error(ErrorCode::InsufficientExcitation,
                std::to_string(ws.size()) + " samples at >= 0.2 m/s, need " +
                    std::to_string(kMinCalibrationSamples));
  }
  // The spread between the principal second moments of (w_y, w_z) is what
  // makes roll observable; straight driving leaves only isotropic noise.
  Eigen::Matrix2d moments = Eigen::Matrix2d::Zero();
  for (const auto& w : ws) moments += w.tail<2>() * w.tail<2>().transpose();
  moments /= static_cast<double>(ws.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(moments, Eigen::EigenvaluesOnly);
  const double excitation = eig.eigenvalues()(1) - eig.eigenvalues()(0);
  if (excitation < kMinLateralExcitation) {
    throw Error(ErrorCode::InsufficientExcitation,
                "lateral velocity excitation " + std::to_string(excitation) +
                    " (m/s)^2 < 0.01; roll is unobservable without turning");
  }

  constexpr double kPi = std::numbers::pi;
  constexpr int kGrid = 720;
  const double h = kPi / kGrid;
  int best = 0;
  double best_f = detail::roll_objective(ws, -kPi / 2 + h);
  for (int i = 1; i < kGrid; ++i) {
    const double f = detail::roll_objective(ws, -kPi / 2 + h * (i + 1));
    if (f < best_f) {
      best_f = f;
      best = i;
    }
  }
  // Golden-section refinement inside the neighbouring grid cells.
  const double centre = -kPi / 2 + h * (best + 1);
  double lo = centre - h;
  double hi = centre + h;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = detail::roll_objective(ws, x1);
  double f2 = detail::roll_objective(ws, x2);
  while (hi - lo > 1e-13) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = detail::roll_objective(ws, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = detail::roll_objective(ws, x2);
    }
  }
  double alpha = 0.5 * (lo + hi);
  if (alpha <= -kPi / 2) alpha += kPi;
  if (alpha > kPi / 2) alpha -= kPi;

  ExtrinsicRotationResult out;
  out.rotation_vs = Rotation::about_x(alpha) * partial;
  out.residual_rms =
      std::sqrt(detail::roll_objective(ws, alpha) / static_cast<double>(ws.size()));
  out.samples_used = ws.size();
  return out;
}

/// Roll angle of a step-2 result relative to its partial rotation.
inline double roll_angle(const Rotation& composed, const Rotation& partial) {
  const Mat3 r = (composed * partial.inverse()).matrix();
  return std::atan2(r(2, 1), r(1, 1));
}

/// Flat circle at constant speed with a reference yaw-rate series. Each
/// velocity sample is paired with the nearest reference sample within 50 ms
/// and s_x minimises Σ (v_y/s_x − ω_z)², i.e. s_x = Σ v_y² / Σ v_y ω_z.
inline LeverArmResult calibrate_sx(const CalibrationRun& run, const Rotation& rotation_vs) {
  run.validate();
  if (!run.reference_yaw_rate || run.reference_yaw_rate->empty()) {
    throw Error(ErrorCode::NoReference, "s_x calibration needs a reference yaw-rate series");
  }
  const auto& ref = *run.reference_yaw_rate;

  std::vector<double> vy;
  std::vector<double> wz;
  for (const auto& s : run.velocities) {
    const auto it = std::lower_bound(
        ref.begin(), ref.end(), s.timestamp,
        [](const YawRateSample& r, double t) { return r.timestamp < t; });
    const YawRateSample* nearest = nullptr;
    double gap = kMaxAlignmentGap;
    if (it != ref.end() && it->timestamp - s.timestamp <= gap) {
      nearest = &*it;
      gap = it->timestamp - s.timestamp;
    }
    if (it != ref.begin() && s.timestamp - std::prev(it)->timestamp <= gap) {
      nearest = &*std::prev(it);
    }
    if (nearest == nullptr) continue;
    vy.push_back((rotation_vs * s.v).y());
    wz.push_back(nearest->omega_z);
  }
  if (vy.empty()) {
    throw Error(ErrorCode::NoReference, "no reference sample within 50 ms of any velocity");
  }

  const auto n = static_cast<double>(vy.size());
  double mean_w = 0.0;
  for (double w : wz) mean_w += w;
  mean_w /= n;
  double var_w = 0.0;
  for (double w : wz) var_w += (w - mean_w) * (w - mean_w);
  var_w /= n;
  if (!(std::abs(mean_w) > 0.0) || std::sqrt(var_w) >= kMaxYawRateVariation * std::abs(mean_w)) {
    throw Error(ErrorCode::DegenerateManeuver,
                "yaw rate is not steady (coefficient of variation >= 0.2); drive a "
                "constant-speed circle");
  }

  double syy = 0.0;
  double syw = 0.0;
  double sww = 0.0;
  for (std::size_t i = 0; i < vy.size(); ++i) {
    syy += vy[i] * vy[i];
    syw += vy[i] * wz[i];
    sww += wz[i] * wz[i];
  }
  if (!(std::abs(syw) > 1e-9 * std::sqrt(syy * sww)) || syy == 0.0) {
    throw Error(ErrorCode::DegenerateManeuver,
                "lateral velocity and yaw rate are uncorrelated; no turning observed");
  }

  LeverArmResult out;
  out.s_x = syy / syw;
  double sq = 0.0;
  for (std::size_t i = 0; i < vy.size(); ++i) {
    const double r = vy[i] / out.s_x - wz[i];
    sq += r * r;
  }
  out.residual_rms = std::sqrt(sq / n);
  out.samples_used = vy.size();
  return out;
}

/// Runs the ego-velocity estimator over recorded scans; scans that cannot be
/// processed are skipped.
inline CalibrationRun velocities_from_scans(const std::vector<Scan>& scans,
                                            const RansacParams& params) {
  CalibrationRun run;
  for (const auto& scan : scans) {
    try {
      run.velocities.push_back({scan.timestamp, estimate_velocity_ransac(scan, params).v_s});
    } catch (const Error&) {
    }
  }
  return run;
}

}  // namespace doppler_odom
