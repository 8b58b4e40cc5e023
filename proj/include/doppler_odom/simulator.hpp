#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "doppler_odom/ego_velocity.hpp"
#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"
#include "doppler_odom/kinematics.hpp"
#include "doppler_odom/odometry.hpp"

namespace doppler_odom {

/// Constant body-frame twist of the vehicle origin held for `duration` seconds.
struct TwistSegment {
  double duration = 1.0;
  Vec3 v_origin = Vec3(1.0, 0.0, 0.0);
  Vec3 omega = Vec3::Zero();
};

/// Twist that satisfies the ICR constraints exactly: no lateral velocity at
/// the rear axle, no vertical velocity at x = m, no roll.
inline TwistSegment model_consistent_segment(double duration, double forward_speed,
                                             double pitch_rate, double yaw_rate, double m) {
  return {duration, Vec3(forward_speed, 0.0, pitch_rate * m), Vec3(0.0, pitch_rate, yaw_rate)};
}

struct MotionProfile {
  std::vector<TwistSegment> segments;
  double scan_rate = 10.0;  // Hz
  bool allow_model_violation = false;

  std::size_t scans_in(const TwistSegment& seg) const {
    return static_cast<std::size_t>(std::llround(seg.duration * scan_rate));
  }

  std::size_t scan_count() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += scans_in(s);
    return n;
  }

  void validate(const VehicleGeometry& geom) const {
    if (!(scan_rate > 0.0) || !std::isfinite(scan_rate)) {
      throw Error(ErrorCode::ValidationError, "profile.scan_rate > 0 violated");
    }
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      const std::string key = "profile.segment." + std::to_string(i);
      if (!(s.duration > 0.0) || !std::isfinite(s.duration)) {
        throw Error(ErrorCode::ValidationError, key + ".duration > 0 violated");
      }
      const double scans = s.duration * scan_rate;
      if (std::abs(scans - std::round(scans)) > 1e-9 * std::max(1.0, scans)) {
        throw Error(ErrorCode::ValidationError,
                    key + ": duration * scan_rate must be an integer so scans align "
                          "with segment boundaries");
      }
      if (!all_finite(s.v_origin) || !all_finite(s.omega)) {
        throw Error(ErrorCode::ValidationError, key + " has non-finite twist");
      }
      if (!allow_model_violation) {
        const double scale = 1.0 + s.v_origin.norm() + s.omega.norm();
        const double tol = 1e-12 * scale;
        if (std::abs(s.omega.x()) > tol || std::abs(s.v_origin.y()) > tol ||
            std::abs(s.v_origin.z() - s.omega.y() * geom.m) > tol) {
          throw Error(ErrorCode::ValidationError,
                      key + " violates the kinematic model (need omega.x = 0, "
                            "v_origin.y = 0, v_origin.z = omega.y * m); set "
                            "profile.allow_model_violation = true to allow it");
        }
      }
    }
  }
};

struct DynamicObject {
  Vec3 center = Vec3(10.0, 0.0, 0.0);  // world frame at t = 0
  double extent = 1.0;                 // half side of the sampling cube, m
  Vec3 velocity = Vec3::Zero();        // world frame, m/s
  int point_count = 20;
};

struct SceneSpec {
  int static_point_count = 300;
  double world_extent = 30.0;  // half side of the cube around the sensor, m
  std::vector<DynamicObject> dynamic_objects;
  double doppler_noise_sigma = 0.0;
  double power_min = 1.0;
  double power_max = 1.0;
  std::uint64_t seed = 0;

  static constexpr double kMinRange = 0.5;

  void validate() const {
    if (static_point_count < 0) {
      throw Error(ErrorCode::ValidationError, "scene.static_point_count >= 0 violated");
    }
    if (!(world_extent > kMinRange)) {
      throw Error(ErrorCode::ValidationError, "scene.world_extent > 0.5 violated");
    }
    if (!(doppler_noise_sigma >= 0.0) || !std::isfinite(doppler_noise_sigma)) {
      throw Error(ErrorCode::ValidationError, "scene.noise_sigma >= 0 violated");
    }
    if (!(power_min > 0.0) || !(power_max >= power_min) || !std::isfinite(power_max)) {
      throw Error(ErrorCode::ValidationError, "0 < scene.power_min <= scene.power_max violated");
    }
    for (std::size_t i = 0; i < dynamic_objects.size(); ++i) {
      const auto& o = dynamic_objects[i];
      const std::string key = "scene.object." + std::to_string(i);
      if (o.point_count < 0) throw Error(ErrorCode::ValidationError, key + ".point_count >= 0 violated");
      if (!(o.extent > 0.0)) throw Error(ErrorCode::ValidationError, key + ".extent > 0 violated");
      if (!all_finite(o.center) || !all_finite(o.velocity)) {
        throw Error(ErrorCode::ValidationError, key + " has non-finite fields");
      }
    }
  }
};

struct SimulatedScan {
  Scan scan;
  std::vector<bool> dynamic;  // truth label per point
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream per scan index, so scans can be generated in any order.
inline std::mt19937_64 scan_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index)));
}

inline Vec3 uniform_in_cube(std::mt19937_64& rng, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  const double x = u(rng);
  const double y = u(rng);
  const double z = u(rng);
  return {x, y, z};
}

}  // namespace detail

/// Synthetic scan seen from the vehicle at `pose` moving with the body twist
/// (v_origin, ω). Static points are drawn in a cube around the sensor; dynamic
/// object points in cubes around each object's current centre. Doppler is the
/// relative velocity of the target projected on the line of sight, so an
/// approaching target reads negative.
inline SimulatedScan simulate_scan(const Pose& pose, const Vec3& v_origin, const Vec3& omega,
                                   const VehicleGeometry& geom, const SceneSpec& scene,
                                   double t, std::uint64_t scan_index = 0) {
  scene.validate();
  std::mt19937_64 rng = detail::scan_rng(scene.seed, scan_index);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> power(scene.power_min, scene.power_max);

  const Rotation r_ws = pose.rotation * geom.rotation_vs;
  const Vec3 p_ws = pose.position + pose.rotation * geom.s;
  const Vec3 v_sensor_world =
      pose.rotation * rigid_point_velocity(v_origin, omega, geom.s, Vec3::Zero());

  SimulatedScan out;
  out.scan.timestamp = t;
  const auto emit = [&](const Vec3& q_world, const Vec3& w_world, bool dynamic) {
    const Vec3 rel = q_world - p_ws;
    const Vec3 u = rel.normalized();
    DopplerPoint p;
    p.position = r_ws.inverse() * rel;
    const double n = noise(rng);
    p.doppler = (w_world - v_sensor_world).dot(u) + scene.doppler_noise_sigma * n;
    p.power = power(rng);
    out.scan.points.push_back(p);
    out.dynamic.push_back(dynamic);
  };
  const auto draw_away_from_sensor = [&](const Vec3& centre, double half) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Vec3 q = centre + detail::uniform_in_cube(rng, half);
      if ((q - p_ws).norm() >= SceneSpec::kMinRange) return q;
    }
    throw Error(ErrorCode::InvalidArgument, "sampling volume collapses onto the sensor");
  };

  for (int i = 0; i < scene.static_point_count; ++i) {
    emit(draw_away_from_sensor(p_ws, scene.world_extent), Vec3::Zero(), false);
  }
  for (const auto& obj : scene.dynamic_objects) {
    const Vec3 centre = obj.center + obj.velocity * t;
    for (int i = 0; i < obj.point_count; ++i) {
      emit(draw_away_from_sensor(centre, obj.extent), obj.velocity, true);
    }
  }
  return out;
}

/// Pose reached from `start` after holding `seg`'s twist for tau seconds,
/// via the 4x4 matrix exponential of the twist.
inline Pose advance(const Pose& start, const TwistSegment& seg, double tau) {
  Eigen::Matrix4d xi = Eigen::Matrix4d::Zero();
  xi.topLeftCorner<3, 3>() = hat(seg.omega);
  xi.topRightCorner<3, 1>() = seg.v_origin;
  const Eigen::Matrix4d t = (xi * tau).exp();
  Pose delta;
  delta.rotation = Rotation::from_matrix(t.topLeftCorner<3, 3>());
  delta.position = t.topRightCorner<3, 1>();
  Pose out = compose(start, delta);
  out.rotation = out.rotation.orthonormality_error() > 1e-12 ? out.rotation.orthonormalized()
                                                             : out.rotation;
  return out;
}

struct SimulatedSequence {
  std::vector<Scan> scans;
  Trajectory truth;  // initial pose, then the pose at each scan timestamp
  std::vector<std::vector<bool>> labels;
  std::vector<TwistSegment> twists;  // twist in effect over the interval ending at each scan
};

/// Scans at t0 + k/scan_rate for k = 1..N. Scan k observes the twist of the
/// interval ending at its own timestamp.
inline SimulatedSequence simulate_sequence(const MotionProfile& profile,
                                           const VehicleGeometry& geom, const SceneSpec& scene,
                                           const Pose& initial = Pose{}) {
  geom.validate();
  scene.validate();
  profile.validate(geom);

  SimulatedSequence out;
  out.truth.push_back(initial);
  Pose segment_start = initial;
  std::size_t k = 0;
  for (const auto& seg : profile.segments) {
    const std::size_t n = profile.scans_in(seg);
    for (std::size_t j = 1; j <= n; ++j) {
      ++k;
      const double t = initial.timestamp + static_cast<double>(k) / profile.scan_rate;
      Pose pose = advance(segment_start, seg, static_cast<double>(j) / profile.scan_rate);
      pose.timestamp = t;
      SimulatedScan s = simulate_scan(pose, seg.v_origin, seg.omega, geom, scene, t, k);
      out.scans.push_back(std::move(s.scan));
      out.labels.push_back(std::move(s.dynamic));
      out.truth.push_back(pose);
      out.twists.push_back(seg);
    }
    segment_start = out.truth.back();
  }
  return out;
}

}  // namespace doppler_odom
