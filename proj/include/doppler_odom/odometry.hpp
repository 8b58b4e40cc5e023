#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "doppler_odom/ego_velocity.hpp"
#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"
#include "doppler_odom/kinematics.hpp"

namespace doppler_odom {

using Trajectory = std::vector<Pose>;

/// Per-scan motion of the vehicle.
struct MotionEstimate {
  double timestamp = 0.0;
  Vec3 v_s_vehicle = Vec3::Zero();  // sensor velocity, vehicle axes
  Vec3 v_origin = Vec3::Zero();     // velocity of the vehicle frame origin
  Vec3 omega = Vec3::Zero();
  Mat3 C_v = Mat3::Zero();
  Mat3 C_omega = Mat3::Zero();
  std::vector<bool> dynamic_mask;  // true marks a dynamic point
  std::size_t n_inliers = 0;
  double compute_time_ms = 0.0;
};

struct OdometryState {
  Pose pose;  // vehicle frame in world; pose.timestamp mirrors last_timestamp
  double last_timestamp = 0.0;

  static OdometryState at(const Pose& initial) { return {initial, initial.timestamp}; }
};

inline MotionEstimate process_scan(const Scan& scan, const VehicleGeometry& geom,
                                   const RansacParams& params) {
  const auto start = std::chrono::steady_clock::now();
  geom.validate();
  const SensorVelocityEstimate sensor = estimate_velocity_ransac(scan, params);
  const VehicleMotion motion = vehicle_motion(sensor, geom);

  MotionEstimate est;
  est.timestamp = scan.timestamp;
  est.v_s_vehicle = motion.v_s_vehicle;
  est.omega = motion.omega;
  est.C_v = motion.C_v_vehicle;
  est.C_omega = motion.C_omega;
  est.v_origin = vehicle_origin_velocity(motion.v_s_vehicle, motion.omega, geom);
  est.n_inliers = sensor.inlier_count();
  est.dynamic_mask.resize(sensor.inlier_mask.size());
  for (std::size_t i = 0; i < sensor.inlier_mask.size(); ++i) {
    est.dynamic_mask[i] = !sensor.inlier_mask[i];
  }
  const auto stop = std::chrono::steady_clock::now();
  est.compute_time_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return est;
}

/// Advances the vehicle pose over (last_timestamp, est.timestamp] assuming
/// the estimated body-frame twist (v_origin, ω) is constant over the interval.
/// The position update uses the SO(3) left Jacobian, which is the exact
/// constant-twist displacement; to first order it is R·v·Δt.
inline OdometryState integrate(const OdometryState& state, const MotionEstimate& est) {
  if (!(est.timestamp > state.last_timestamp)) {
    throw Error(ErrorCode::NonMonotonicTimestamp,
                "estimate at t=" + std::to_string(est.timestamp) +
                    " does not follow t=" + std::to_string(state.last_timestamp));
  }
  const double dt = est.timestamp - state.last_timestamp;
  const Rotation& r_prev = state.pose.rotation;

  OdometryState next;
  next.pose.position =
      state.pose.position + r_prev * (so3_left_jacobian(est.omega, dt) * est.v_origin * dt);
  next.pose.rotation = r_prev * so3_exp(est.omega, dt);
  if (next.pose.rotation.orthonormality_error() > kRotationTolerance) {
    next.pose.rotation = next.pose.rotation.orthonormalized();
  }
  next.pose.timestamp = est.timestamp;
  next.last_timestamp = est.timestamp;
  return next;
}

/// Outcome for one scan of a sequence. A scan that could not be processed is a
/// gap: the pose is held and `failure` names the reason.
struct ScanRecord {
  double timestamp = 0.0;
  std::optional<MotionEstimate> estimate;
  std::optional<ErrorCode> failure;
  std::string message;

  bool ok() const { return estimate.has_value(); }
};

struct SequenceResult {
  Trajectory trajectory;  // initial pose followed by one pose per scan
  std::vector<ScanRecord> records;

  std::size_t gap_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.ok() ? 0 : 1;
    return n;
  }
};

/// Processes scans in order and folds them into a trajectory. Estimation
/// failures become gaps; timestamps that do not increase abort the run.
template <typename ScanRange>
SequenceResult run_sequence(const ScanRange& scans, const VehicleGeometry& geom,
                            const RansacParams& params, const Pose& initial) {
  geom.validate();
  params.validate();
  SequenceResult out;
  OdometryState state = OdometryState::at(initial);
  out.trajectory.push_back(initial);
  for (const Scan& scan : scans) {
    if (!(scan.timestamp > state.last_timestamp)) {
      throw Error(ErrorCode::NonMonotonicTimestamp,
                  "scan at t=" + std::to_string(scan.timestamp) +
                      " does not follow t=" + std::to_string(state.last_timestamp));
    }
    ScanRecord record;
    record.timestamp = scan.timestamp;
    try {
      MotionEstimate est = process_scan(scan, geom, params);
      state = integrate(state, est);
      record.estimate = std::move(est);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonMonotonicTimestamp) throw;
      record.failure = e.code();
      record.message = e.what();
      state.pose.timestamp = scan.timestamp;
      state.last_timestamp = scan.timestamp;
    }
    out.trajectory.push_back(state.pose);
    out.records.push_back(std::move(record));
  }
  return out;
}

}  // namespace doppler_odom
