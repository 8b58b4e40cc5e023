#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "doppler_odom/error.hpp"

namespace doppler_odom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kRotationTolerance = 1e-9;
inline constexpr double kSmallAngle = 1e-8;

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

inline Mat3 hat(const Vec3& v) {
  Mat3 k;
  // clang-format off
  k <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return k;
}

/// Largest absolute entry of RᵀR − I and |det R − 1|.
inline double orthonormality_error(const Mat3& m) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m.determinant() - 1.0));
}

/// A proper rotation stored as a 3x3 matrix. Construction from arbitrary data
/// goes through the validating factories; products of valid rotations are
/// trusted and only re-orthonormalized by callers that accumulate them.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Mat3& m, double tol = kRotationTolerance) {
    if (!m.allFinite() || doppler_odom::orthonormality_error(m) > tol) {
      throw Error(ErrorCode::ValidationError,
                  "matrix is not a rotation (R^T R = I and det R = +1 within " +
                      std::to_string(tol) + ")");
    }
    return Rotation(m);
  }

  /// Hamilton quaternion; normalized on input. Norms far from one are rejected
  /// so that a typo in a config file is not silently rescaled.
  static Rotation from_quaternion(double qx, double qy, double qz, double qw,
                                  double norm_tol = 1e-6) {
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    const double n = q.norm();
    if (!std::isfinite(n) || std::abs(n - 1.0) > norm_tol) {
      throw Error(ErrorCode::ValidationError,
                  "quaternion must have unit norm (got " + std::to_string(n) + ")");
    }
    return Rotation(q.normalized().toRotationMatrix());
  }

  static Rotation about_axis(const Vec3& axis, double angle) {
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
  }

  static Rotation about_x(double a) { return about_axis(Vec3::UnitX(), a); }
  static Rotation about_y(double a) { return about_axis(Vec3::UnitY(), a); }
  static Rotation about_z(double a) { return about_axis(Vec3::UnitZ(), a); }

  const Mat3& matrix() const { return m_; }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  Rotation inverse() const { return Rotation(m_.transpose()); }

  /// Rotation angle in [0, π], accurate for small angles.
  double angle() const {
    const Vec3 axis_sin(m_(2, 1) - m_(1, 2), m_(0, 2) - m_(2, 0), m_(1, 0) - m_(0, 1));
    const double s = 0.5 * axis_sin.norm();
    const double c = 0.5 * (m_.trace() - 1.0);
    return std::atan2(s, c);
  }

  /// (qx, qy, qz, qw) with qw >= 0.
  Eigen::Vector4d quaternion_xyzw() const {
    Eigen::Quaterniond q(m_);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return {q.x(), q.y(), q.z(), q.w()};
  }

  double orthonormality_error() const { return doppler_odom::orthonormality_error(m_); }

  /// Nearest rotation in the Frobenius sense.
  Rotation orthonormalized() const {
    Eigen::JacobiSVD<Mat3> svd(m_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
      Mat3 u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    return Rotation(r);
  }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}

  Mat3 m_;
};

struct Pose {
  Rotation rotation;
  Vec3 position = Vec3::Zero();
  double timestamp = 0.0;
};

/// Rigid composition a∘b; the result carries b's timestamp.
inline Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.position + a.rotation * b.position, b.timestamp};
}

inline Pose inverse(const Pose& p) {
  const Rotation rt = p.rotation.inverse();
  return {rt, -(rt * p.position), p.timestamp};
}

/// a⁻¹∘b, the motion from a to b expressed in a.
inline Pose relative(const Pose& a, const Pose& b) { return compose(inverse(a), b); }

struct SphericalDirection {
  double azimuth = 0.0;    // rad, (−π, π]
  double elevation = 0.0;  // rad, [−π/2, π/2]
  double range = 1.0;      // m
};

/// Azimuth is defined as 0 on the poles.
inline SphericalDirection cartesian_to_spherical(const Vec3& p) {
  const double r = p.norm();
  if (!(r > 0.0)) {
    throw Error(ErrorCode::ZeroRange, "cannot convert a point at the sensor origin");
  }
  SphericalDirection d;
  d.range = r;
  d.elevation = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  if (p.x() == 0.0 && p.y() == 0.0) {
    d.azimuth = 0.0;
  } else {
    d.azimuth = std::atan2(p.y(), p.x());
    if (d.azimuth <= -std::numbers::pi) d.azimuth = std::numbers::pi;
  }
  return d;
}

inline Vec3 spherical_to_cartesian(const SphericalDirection& d) {
  const double ce = std::cos(d.elevation);
  return d.range * Vec3(std::cos(d.azimuth) * ce, std::sin(d.azimuth) * ce,
                        std::sin(d.elevation));
}

/// Unit line-of-sight vector; one row of the Doppler design matrix.
inline Vec3 direction_row(const SphericalDirection& d) {
  const double ce = std::cos(d.elevation);
  return {std::cos(d.azimuth) * ce, std::sin(d.azimuth) * ce, std::sin(d.elevation)};
}

/// exp of the rotation vector ω·dt.
inline Rotation so3_exp(const Vec3& omega, double dt) {
  const Vec3 phi = omega * dt;
  const double theta = phi.norm();
  const Mat3 k = hat(phi);
  Mat3 r;
  if (theta < kSmallAngle) {
    r = Mat3::Identity() + k + 0.5 * k * k;
  } else {
    r = Mat3::Identity() + (std::sin(theta) / theta) * k +
        ((1.0 - std::cos(theta)) / (theta * theta)) * k * k;
  }
  return Rotation::from_matrix(r, 1e-12);
}

/// Left Jacobian of SO(3) at ω·dt. Maps a body-frame velocity held constant
/// over dt (together with a constant angular velocity) to the mean direction
/// of the displacement: Δp = R₀ · so3_left_jacobian(ω, dt) · v · dt.
inline Mat3 so3_left_jacobian(const Vec3& omega, double dt) {
  const Vec3 phi = omega * dt;
  const double theta = phi.norm();
  const Mat3 k = hat(phi);
  const double t2 = theta * theta;
  if (theta < 1e-3) {
    return Mat3::Identity() + (0.5 - t2 / 24.0) * k + (1.0 / 6.0 - t2 / 120.0) * k * k;
  }
  const double half = std::sin(0.5 * theta);
  return Mat3::Identity() + (2.0 * half * half / t2) * k +
         ((theta - std::sin(theta)) / (t2 * theta)) * k * k;
}

/// Velocity of point p of a rigid body whose point s moves with v_s while the
/// body rotates with ω.
inline Vec3 rigid_point_velocity(const Vec3& v_s, const Vec3& omega, const Vec3& p,
                                 const Vec3& s) {
  return v_s + omega.cross(p - s);
}

}  // namespace doppler_odom
