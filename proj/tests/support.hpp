#pragma once

// Seeded generators and small helpers shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "doppler_odom/doppler_odom.hpp"

namespace testing_support {

using doppler_odom::Mat3;
using doppler_odom::Rotation;
using doppler_odom::Vec3;

constexpr double kPi = std::numbers::pi;

inline double deg(double d) { return d * kPi / 180.0; }

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Vec3 vec(double half) { return {uniform(-half, half), uniform(-half, half), uniform(-half, half)}; }

  Vec3 unit() {
    Vec3 v;
    do {
      v = Vec3(normal(), normal(), normal());
    } while (v.norm() < 1e-6);
    return v.normalized();
  }

  /// Point at least `min_norm` from the origin.
  Vec3 nonzero(double half, double min_norm = 1e-3) {
    Vec3 v;
    do v = vec(half);
    while (v.norm() < min_norm);
    return v;
  }

  Rotation rotation() { return Rotation::about_axis(unit(), uniform(-kPi, kPi)); }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// exp of a skew matrix by truncated power series, independent of Rodrigues.
inline Mat3 series_exp(const Mat3& a, int terms = 20) {
  Mat3 sum = Mat3::Identity();
  Mat3 term = Mat3::Identity();
  for (int k = 1; k < terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

/// Fresh scratch directory below the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("doppler_odom_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Scan whose Doppler values follow the static-world model exactly.
inline doppler_odom::Scan static_scan(Gen& g, const Vec3& v_s, int n, double extent = 20.0,
                                      double noise = 0.0) {
  doppler_odom::Scan scan;
  scan.timestamp = 0.0;
  for (int i = 0; i < n; ++i) {
    doppler_odom::DopplerPoint p;
    p.position = g.nonzero(extent, 0.5);
    p.doppler = -p.position.normalized().dot(v_s) + (noise > 0.0 ? g.normal(noise) : 0.0);
    p.power = 1.0;
    scan.points.push_back(p);
  }
  return scan;
}

/// Simulated drive over the given segments at 10 Hz.
inline doppler_odom::SimulatedSequence drive(const std::vector<doppler_odom::TwistSegment>& segments,
                                             const doppler_odom::VehicleGeometry& geom,
                                             double sigma, std::uint64_t seed,
                                             int points = 300) {
  doppler_odom::MotionProfile profile;
  profile.segments = segments;
  doppler_odom::SceneSpec scene;
  scene.static_point_count = points;
  scene.doppler_noise_sigma = sigma;
  scene.seed = seed;
  return doppler_odom::simulate_sequence(profile, geom, scene);
}

/// Yaw rate of the ground-truth twist at every scan.
inline std::vector<doppler_odom::YawRateSample> reference_yaw_rates(
    const doppler_odom::SimulatedSequence& seq) {
  std::vector<doppler_odom::YawRateSample> out;
  for (std::size_t k = 0; k < seq.scans.size(); ++k) {
    out.push_back({seq.scans[k].timestamp, seq.twists[k].omega.z()});
  }
  return out;
}

/// Straight forward and backward driving.
inline std::vector<doppler_odom::TwistSegment> straight_maneuver(double m) {
  using doppler_odom::model_consistent_segment;
  return {model_consistent_segment(20, 1.5, 0, 0, m), model_consistent_segment(10, -1.0, 0, 0, m),
          model_consistent_segment(20, 2.0, 0, 0, m)};
}

/// Flat driving with alternating tight turns. Roll is observed only through
/// the lateral sensor velocity ω_z·s_x, so the turns are sharp and long.
inline std::vector<doppler_odom::TwistSegment> flat_maneuver(double m) {
  using doppler_odom::model_consistent_segment;
  return {model_consistent_segment(15, 2.0, 0, 1.0, m), model_consistent_segment(15, 1.5, 0, -1.0, m),
          model_consistent_segment(5, 2.5, 0, 0.0, m), model_consistent_segment(15, 1.0, 0, 0.9, m),
          model_consistent_segment(15, 2.0, 0, -0.9, m)};
}

/// Flat circle at constant speed.
inline std::vector<doppler_odom::TwistSegment> circle_maneuver(double m, double duration = 30.0) {
  return {doppler_odom::model_consistent_segment(duration, 1.0, 0, 0.5, m)};
}

}  // namespace testing_support
