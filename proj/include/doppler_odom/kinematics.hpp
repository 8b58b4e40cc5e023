#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "doppler_odom/ego_velocity.hpp"
#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"

namespace doppler_odom {

/// Minimum distance (m) between the sensor and either ICR axis along X. Closer
/// than this the matching angular rate is unobservable.
inline constexpr double kMinLeverArm = 1e-3;

/// Sensor extrinsics in the vehicle frame (origin at the centre of the rear
/// axle, X forward, Y along the rear axle to the left, Z up) and the half
/// wheelbase m. The yaw ICR axis passes through x = 0, the pitch ICR axis
/// through x = m.
struct VehicleGeometry {
  Rotation rotation_vs;  // sensor -> vehicle
  Vec3 s = Vec3(0.4, 0.0, 0.3);
  double m = 0.25;

  /// Throws SingularGeometry naming the violated constraint.
  void validate() const {
    if (!all_finite(s) || !std::isfinite(m)) {
      throw Error(ErrorCode::SingularGeometry, "geometry has non-finite fields");
    }
    if (!(m > 0.0)) {
      throw Error(ErrorCode::SingularGeometry, "m > 0 violated (m = " + std::to_string(m) + ")");
    }
    if (!(std::abs(s.x()) > kMinLeverArm)) {
      throw Error(ErrorCode::SingularGeometry,
                  "|s_x| > 1e-3 violated: sensor on the yaw ICR axis, yaw rate unobservable");
    }
    if (!(std::abs(m - s.x()) > kMinLeverArm)) {
      throw Error(ErrorCode::SingularGeometry,
                  "|m - s_x| > 1e-3 violated: sensor on the pitch ICR axis, pitch rate "
                  "unobservable");
    }
    if (rotation_vs.orthonormality_error() > kRotationTolerance) {
      throw Error(ErrorCode::SingularGeometry, "rotation_vs is not a valid rotation");
    }
  }
};

struct VehicleMotion {
  Vec3 v_s_vehicle = Vec3::Zero();
  Vec3 omega = Vec3::Zero();  // omega.x() is exactly 0
  Mat3 C_v_vehicle = Mat3::Zero();
  Mat3 C_omega = Mat3::Zero();
};

inline std::pair<Vec3, Mat3> to_vehicle_frame(const SensorVelocityEstimate& est,
                                              const VehicleGeometry& geom) {
  const Mat3& r = geom.rotation_vs.matrix();
  Mat3 c = r * est.covariance * r.transpose();
  c = (0.5 * (c + c.transpose())).eval();
  return {r * est.v_s, c};
}

/// Yaw and pitch rates from the sensor velocity (vehicle axes) under the
/// constraints that the yaw ICR axis has no lateral velocity, the pitch ICR
/// axis has no vertical velocity and roll rate is zero.
inline Vec3 angular_velocity(const Vec3& v_vehicle, const VehicleGeometry& geom) {
  geom.validate();
  const double sx = geom.s.x();
  return {0.0, v_vehicle.z() / (geom.m - sx), v_vehicle.y() / sx};
}

/// Jacobian of angular_velocity with respect to the vehicle-frame velocity.
inline Mat3 angular_velocity_jacobian(const VehicleGeometry& geom) {
  geom.validate();
  const double sx = geom.s.x();
  Mat3 j = Mat3::Zero();
  j(1, 2) = 1.0 / (geom.m - sx);
  j(2, 1) = 1.0 / sx;
  return j;
}

/// C_ω = J C_v Jᵀ. The map is linear, so this is exact rather than first order.
inline Mat3 propagate_covariance(const Mat3& c_v_vehicle, const VehicleGeometry& geom) {
  const Mat3 j = angular_velocity_jacobian(geom);
  Mat3 c = j * c_v_vehicle * j.transpose();
  c = (0.5 * (c + c.transpose())).eval();
  c.row(0).setZero();
  c.col(0).setZero();
  return c;
}

inline Vec3 vehicle_origin_velocity(const Vec3& v_s_vehicle, const Vec3& omega,
                                    const VehicleGeometry& geom) {
  return rigid_point_velocity(v_s_vehicle, omega, Vec3::Zero(), geom.s);
}

inline VehicleMotion vehicle_motion(const SensorVelocityEstimate& est,
                                    const VehicleGeometry& geom) {
  VehicleMotion out;
  std::tie(out.v_s_vehicle, out.C_v_vehicle) = to_vehicle_frame(est, geom);
  out.omega = angular_velocity(out.v_s_vehicle, geom);
  out.C_omega = propagate_covariance(out.C_v_vehicle, geom);
  return out;
}

}  // namespace doppler_odom
