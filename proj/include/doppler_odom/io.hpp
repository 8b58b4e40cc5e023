#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "doppler_odom/calibration.hpp"
#include "doppler_odom/ego_velocity.hpp"
#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"
#include "doppler_odom/kinematics.hpp"
#include "doppler_odom/odometry.hpp"
#include "doppler_odom/simulator.hpp"

namespace doppler_odom {

// ---------------------------------------------------------------------------
// Number formatting and parsing. Everything goes through <charconv>, which is
// locale-independent; doubles are written in shortest round-trip form.

inline std::string format_number(double x) {
  if (x == 0.0) x = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::int64_t x) { return std::to_string(x); }

inline std::string format_fixed(double x, int precision) {
  if (x == 0.0) x = 0.0;
  char buf[128];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == ',')) ++i;
    const std::size_t start = i;
    while (i < s.size() && !(s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == ',')) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

inline double parse_double(std::string_view field, const std::string& source, std::size_t line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (field.empty() || res.ec != std::errc() || res.ptr != last) {
    throw Error(ErrorCode::ParseError,
                where(source, line) + "expected a number, got '" + std::string(field) + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::ParseError,
                where(source, line) + "non-finite value '" + std::string(field) + "'");
  }
  return value;
}

template <typename Int>
Int parse_integer(std::string_view field, const std::string& source, std::size_t line) {
  Int value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw Error(ErrorCode::ParseError,
                where(source, line) + "expected an integer, got '" + std::string(field) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view field, const std::string& source, std::size_t line) {
  if (field == "true" || field == "1") return true;
  if (field == "false" || field == "0") return false;
  throw Error(ErrorCode::ParseError,
              where(source, line) + "expected true or false, got '" + std::string(field) + "'");
}

inline Vec3 parse_vec3(std::string_view field, const std::string& source, std::size_t line) {
  const auto parts = split_whitespace(field);
  if (parts.size() != 3) {
    throw Error(ErrorCode::ParseError, where(source, line) + "expected three numbers 'x y z', got '" +
                                           std::string(field) + "'");
  }
  return {parse_double(parts[0], source, line), parse_double(parts[1], source, line),
          parse_double(parts[2], source, line)};
}

inline std::string format_vec3(const Vec3& v) {
  return format_number(v.x()) + " " + format_number(v.y()) + " " + format_number(v.z());
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

/// Rows of a numeric CSV with a fixed header; blank lines are skipped.
struct CsvRow {
  std::size_t line = 0;
  std::vector<double> values;
};

inline std::vector<CsvRow> read_numeric_csv(const std::filesystem::path& path,
                                            std::string_view header) {
  std::ifstream in = open_input(path);
  const std::string source = path.string();
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  const std::size_t columns = split(header, ',').size();
  std::vector<CsvRow> rows;
  while (std::getline(in, text)) {
    ++line_no;
    const std::string_view line = trim(text);
    if (line.empty()) continue;
    if (!have_header) {
      if (line != header) {
        throw Error(ErrorCode::ParseError,
                    where(source, line_no) + "expected header '" + std::string(header) + "'");
      }
      have_header = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != columns) {
      throw Error(ErrorCode::ParseError, where(source, line_no) + "expected " +
                                             std::to_string(columns) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    CsvRow row{line_no, {}};
    for (const auto f : fields) row.values.push_back(parse_double(f, source, line_no));
    rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw Error(ErrorCode::ParseError, where(source, line_no) + "missing header '" +
                                           std::string(header) + "'");
  }
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scan CSV: `timestamp,x,y,z,doppler,power`; consecutive rows sharing a
// timestamp form one scan.

inline constexpr std::string_view kScanHeader = "timestamp,x,y,z,doppler,power";

/// Streams scans from a CSV file one at a time.
class ScanReader {
 public:
  explicit ScanReader(const std::filesystem::path& path)
      : in_(detail::open_input(path)), source_(path.string()) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_no_;
      const std::string_view line = detail::trim(text);
      if (line.empty()) continue;
      if (line != kScanHeader) {
        throw Error(ErrorCode::ParseError, detail::where(source_, line_no_) +
                                               "expected header '" + std::string(kScanHeader) +
                                               "'");
      }
      return;
    }
    throw Error(ErrorCode::ParseError, detail::where(source_, line_no_) + "missing header '" +
                                           std::string(kScanHeader) + "'");
  }

  std::optional<Scan> next() {
    if (!pending_) pending_ = read_row();
    if (!pending_) return std::nullopt;
    Scan scan;
    scan.timestamp = pending_->first;
    scan.points.push_back(pending_->second);
    while (true) {
      pending_ = read_row();
      if (!pending_ || pending_->first != scan.timestamp) break;
      scan.points.push_back(pending_->second);
    }
    return scan;
  }

 private:
  std::optional<std::pair<double, DopplerPoint>> read_row() {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_no_;
      const std::string_view line = detail::trim(text);
      if (line.empty()) continue;
      const auto f = detail::split(line, ',');
      if (f.size() != 6) {
        throw Error(ErrorCode::ParseError, detail::where(source_, line_no_) +
                                               "expected 6 fields, got " +
                                               std::to_string(f.size()));
      }
      double v[6];
      for (int i = 0; i < 6; ++i) v[i] = detail::parse_double(f[static_cast<std::size_t>(i)], source_, line_no_);
      if (have_last_ && v[0] < last_timestamp_) {
        throw Error(ErrorCode::NonMonotonicTimestamp,
                    detail::where(source_, line_no_) + "timestamp " + format_number(v[0]) +
                        " precedes " + format_number(last_timestamp_));
      }
      if (v[5] < 0.0) {
        throw Error(ErrorCode::ParseError,
                    detail::where(source_, line_no_) + "power must be >= 0");
      }
      if (v[1] == 0.0 && v[2] == 0.0 && v[3] == 0.0) {
        throw Error(ErrorCode::ParseError,
                    detail::where(source_, line_no_) + "point at the sensor origin");
      }
      have_last_ = true;
      last_timestamp_ = v[0];
      DopplerPoint p;
      p.position = Vec3(v[1], v[2], v[3]);
      p.doppler = v[4];
      p.power = v[5];
      return std::make_pair(v[0], p);
    }
    return std::nullopt;
  }

  std::ifstream in_;
  std::string source_;
  std::size_t line_no_ = 0;
  std::optional<std::pair<double, DopplerPoint>> pending_;
  bool have_last_ = false;
  double last_timestamp_ = 0.0;
};

inline std::vector<Scan> read_scans(const std::filesystem::path& path) {
  ScanReader reader(path);
  std::vector<Scan> scans;
  while (auto s = reader.next()) scans.push_back(std::move(*s));
  return scans;
}

inline void write_scans(const std::vector<Scan>& scans, const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << kScanHeader << '\n';
  for (const auto& scan : scans) {
    const std::string t = format_number(scan.timestamp);
    for (const auto& p : scan.points) {
      out << t << ',' << format_number(p.position.x()) << ',' << format_number(p.position.y())
          << ',' << format_number(p.position.z()) << ',' << format_number(p.doppler) << ','
          << format_number(p.power) << '\n';
    }
  }
  detail::finish_output(out, path);
}

// ---------------------------------------------------------------------------
// TUM trajectories: `timestamp tx ty tz qx qy qz qw`, quaternion with qw >= 0.

inline std::string format_tum_line(const Pose& p) {
  const Eigen::Vector4d q = p.rotation.quaternion_xyzw();
  return format_fixed(p.timestamp, 9) + ' ' + format_number(p.position.x()) + ' ' +
         format_number(p.position.y()) + ' ' + format_number(p.position.z()) + ' ' +
         format_number(q(0)) + ' ' + format_number(q(1)) + ' ' + format_number(q(2)) + ' ' +
         format_number(q(3));
}

inline void write_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (!(traj[i].timestamp > traj[i - 1].timestamp)) {
      throw Error(ErrorCode::NonMonotonicTimestamp,
                  "trajectory timestamps must increase strictly (pose " + std::to_string(i) + ")");
    }
  }
  std::ofstream out = detail::open_output(path);
  for (const auto& p : traj) out << format_tum_line(p) << '\n';
  detail::finish_output(out, path);
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  const std::string source = path.string();
  Trajectory traj;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    const std::string_view line = detail::trim(text);
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split_whitespace(line);
    if (f.size() != 8) {
      throw Error(ErrorCode::ParseError, detail::where(source, line_no) +
                                             "expected 8 fields 'timestamp tx ty tz qx qy qz qw'");
    }
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = detail::parse_double(f[static_cast<std::size_t>(i)], source, line_no);
    Pose p;
    p.timestamp = v[0];
    p.position = Vec3(v[1], v[2], v[3]);
    try {
      // Third-party files often print quaternions with few digits.
      p.rotation = Rotation::from_quaternion(v[4], v[5], v[6], v[7], 1e-3);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, detail::where(source, line_no) + e.what());
    }
    if (!traj.empty() && !(p.timestamp > traj.back().timestamp)) {
      throw Error(ErrorCode::NonMonotonicTimestamp,
                  detail::where(source, line_no) + "timestamps must increase strictly");
    }
    traj.push_back(p);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Auxiliary CSVs.

inline constexpr std::string_view kVelocityHeader = "timestamp,vx,vy,vz";
inline constexpr std::string_view kYawRateHeader = "timestamp,omega_z";
inline constexpr std::string_view kLabelsHeader = "timestamp,point_index,dynamic";
inline constexpr std::string_view kRpeHeader = "pair_timestamp,trans_err,rot_err";

inline std::vector<VelocitySample> read_velocities(const std::filesystem::path& path) {
  std::vector<VelocitySample> out;
  for (const auto& row : detail::read_numeric_csv(path, kVelocityHeader)) {
    out.push_back({row.values[0], Vec3(row.values[1], row.values[2], row.values[3])});
  }
  return out;
}

inline void write_velocities(const std::vector<VelocitySample>& samples,
                             const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << kVelocityHeader << '\n';
  for (const auto& s : samples) {
    out << format_number(s.timestamp) << ',' << format_number(s.v.x()) << ','
        << format_number(s.v.y()) << ',' << format_number(s.v.z()) << '\n';
  }
  detail::finish_output(out, path);
}

inline std::vector<YawRateSample> read_yaw_rates(const std::filesystem::path& path) {
  std::vector<YawRateSample> out;
  for (const auto& row : detail::read_numeric_csv(path, kYawRateHeader)) {
    out.push_back({row.values[0], row.values[1]});
  }
  return out;
}

inline void write_yaw_rates(const std::vector<YawRateSample>& samples,
                            const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << kYawRateHeader << '\n';
  for (const auto& s : samples) {
    out << format_number(s.timestamp) << ',' << format_number(s.omega_z) << '\n';
  }
  detail::finish_output(out, path);
}

inline void write_labels(const std::vector<Scan>& scans,
                         const std::vector<std::vector<bool>>& labels,
                         const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << kLabelsHeader << '\n';
  for (std::size_t k = 0; k < scans.size(); ++k) {
    const std::string t = format_number(scans[k].timestamp);
    for (std::size_t i = 0; i < labels[k].size(); ++i) {
      out << t << ',' << i << ',' << (labels[k][i] ? 1 : 0) << '\n';
    }
  }
  detail::finish_output(out, path);
}

inline constexpr std::string_view kEstimatesHeader =
    "timestamp,vx,vy,vz,wx,wy,wz,n_inliers,n_dynamic,"
    "cv_xx,cv_xy,cv_xz,cv_yy,cv_yz,cv_zz,"
    "cw_xx,cw_xy,cw_xz,cw_yy,cw_yz,cw_zz,time_ms,status";

/// Per-scan estimates. Gap rows keep their timestamp, leave the numeric
/// fields empty and name the failure in `status`.
inline void write_estimates(const std::vector<ScanRecord>& records,
                            const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << kEstimatesHeader << '\n';
  const auto upper = [](const Mat3& c) {
    return format_number(c(0, 0)) + ',' + format_number(c(0, 1)) + ',' + format_number(c(0, 2)) +
           ',' + format_number(c(1, 1)) + ',' + format_number(c(1, 2)) + ',' +
           format_number(c(2, 2));
  };
  for (const auto& r : records) {
    out << format_number(r.timestamp);
    if (r.estimate) {
      const MotionEstimate& e = *r.estimate;
      out << ',' << format_number(e.v_s_vehicle.x()) << ',' << format_number(e.v_s_vehicle.y())
          << ',' << format_number(e.v_s_vehicle.z()) << ',' << format_number(e.omega.x()) << ','
          << format_number(e.omega.y()) << ',' << format_number(e.omega.z()) << ','
          << e.n_inliers << ',' << (e.dynamic_mask.size() - e.n_inliers) << ',' << upper(e.C_v)
          << ',' << upper(e.C_omega) << ',' << format_fixed(e.compute_time_ms, 6) << ",ok\n";
    } else {
      out << std::string(21, ',') << ','
          << (r.failure ? to_string(*r.failure) : std::string_view("error")) << '\n';
    }
  }
  detail::finish_output(out, path);
}

// ---------------------------------------------------------------------------
// Configuration: `key = value` lines with dotted keys, `#` comments.

struct Config {
  VehicleGeometry vehicle;
  RansacParams ransac;
  SceneSpec scene;
  MotionProfile profile;

  /// Re-checks every housed invariant; failures are ValidationErrors.
  void validate() const {
    try {
      vehicle.validate();
      ransac.validate();
      scene.validate();
      profile.validate(vehicle);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ValidationError) throw;
      throw Error(ErrorCode::ValidationError, e.what());
    }
  }
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string description;
};

/// Every key load_config accepts. `<i>` stands for a zero-based index.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"vehicle.qx", "0", "sensor->vehicle rotation quaternion, x"},
      {"vehicle.qy", "0", "sensor->vehicle rotation quaternion, y"},
      {"vehicle.qz", "0", "sensor->vehicle rotation quaternion, z"},
      {"vehicle.qw", "1", "sensor->vehicle rotation quaternion, w"},
      {"vehicle.s_x", "0.4", "sensor position along X from the rear axle, m (|s_x| > 1e-3)"},
      {"vehicle.s_y", "0", "sensor position along Y, m"},
      {"vehicle.s_z", "0.3", "sensor position along Z, m"},
      {"vehicle.m", "0.25", "half wheelbase, m (m > 0, |m - s_x| > 1e-3)"},
      {"ransac.max_iterations", "100", "RANSAC hypotheses per scan (>= 1)"},
      {"ransac.inlier_threshold", "0.2", "inlier bound on the Doppler residual, m/s (> 0)"},
      {"ransac.min_inliers", "10", "minimum consensus size (>= 3)"},
      {"ransac.seed", "0", "RANSAC sampling seed"},
      {"scene.static_point_count", "300", "static points per simulated scan"},
      {"scene.world_extent", "30", "half side of the static point cube, m"},
      {"scene.noise_sigma", "0", "Doppler noise standard deviation, m/s"},
      {"scene.power_min", "1", "lower bound of simulated signal power (> 0)"},
      {"scene.power_max", "1", "upper bound of simulated signal power"},
      {"scene.seed", "0", "simulator seed"},
      {"scene.object.<i>.center", "10 0 0", "dynamic object centre at t=0, world frame, m"},
      {"scene.object.<i>.extent", "1", "dynamic object half size, m"},
      {"scene.object.<i>.velocity", "0 0 0", "dynamic object velocity, world frame, m/s"},
      {"scene.object.<i>.point_count", "20", "points on the dynamic object per scan"},
      {"profile.scan_rate", "10", "scan rate, Hz"},
      {"profile.allow_model_violation", "false", "accept twists that break the ICR model"},
      {"profile.segment.<i>.duration", "1", "segment duration, s (duration * scan_rate integer)"},
      {"profile.segment.<i>.v_origin", "1 0 0", "vehicle origin velocity, body frame, m/s"},
      {"profile.segment.<i>.omega", "0 0 0", "angular velocity, body frame, rad/s"},
  };
  return keys;
}

namespace detail {

struct ConfigValue {
  std::string value;
  std::size_t line = 0;
};

/// Splits `prefix.<i>.field`; returns nullopt if the key does not have that shape.
inline std::optional<std::pair<std::size_t, std::string>> indexed_key(std::string_view key,
                                                                      std::string_view prefix) {
  if (key.substr(0, prefix.size()) != prefix) return std::nullopt;
  std::string_view rest = key.substr(prefix.size());
  const std::size_t dot = rest.find('.');
  if (dot == std::string_view::npos || dot == 0) return std::nullopt;
  std::size_t index = 0;
  const auto res = std::from_chars(rest.data(), rest.data() + dot, index);
  if (res.ec != std::errc() || res.ptr != rest.data() + dot || index > 100000) return std::nullopt;
  return std::make_pair(index, std::string(rest.substr(dot + 1)));
}

inline void apply_settings(Config& cfg, const std::map<std::string, ConfigValue>& settings,
                           const std::string& source) {
  Eigen::Vector4d q = cfg.vehicle.rotation_vs.quaternion_xyzw();
  bool quaternion_set = false;
  std::size_t quaternion_line = 0;

  for (const auto& [key, cv] : settings) {
    const std::string_view v = cv.value;
    const std::size_t ln = cv.line;
    const auto num = [&] { return parse_double(v, source, ln); };
    const auto unknown = [&] {
      return Error(ErrorCode::ParseError, where(source, ln) + "unknown key '" + key + "'");
    };

    if (key == "vehicle.qx" || key == "vehicle.qy" || key == "vehicle.qz" || key == "vehicle.qw") {
      const int idx = key == "vehicle.qx" ? 0 : key == "vehicle.qy" ? 1 : key == "vehicle.qz" ? 2 : 3;
      q(idx) = num();
      quaternion_set = true;
      quaternion_line = ln;
    } else if (key == "vehicle.s_x") {
      cfg.vehicle.s.x() = num();
    } else if (key == "vehicle.s_y") {
      cfg.vehicle.s.y() = num();
    } else if (key == "vehicle.s_z") {
      cfg.vehicle.s.z() = num();
    } else if (key == "vehicle.m") {
      cfg.vehicle.m = num();
    } else if (key == "ransac.max_iterations") {
      cfg.ransac.max_iterations = parse_integer<int>(v, source, ln);
    } else if (key == "ransac.inlier_threshold") {
      cfg.ransac.inlier_threshold = num();
    } else if (key == "ransac.min_inliers") {
      cfg.ransac.min_inliers = parse_integer<int>(v, source, ln);
    } else if (key == "ransac.seed") {
      cfg.ransac.seed = parse_integer<std::uint64_t>(v, source, ln);
    } else if (key == "scene.static_point_count") {
      cfg.scene.static_point_count = parse_integer<int>(v, source, ln);
    } else if (key == "scene.world_extent") {
      cfg.scene.world_extent = num();
    } else if (key == "scene.noise_sigma") {
      cfg.scene.doppler_noise_sigma = num();
    } else if (key == "scene.power_min") {
      cfg.scene.power_min = num();
    } else if (key == "scene.power_max") {
      cfg.scene.power_max = num();
    } else if (key == "scene.seed") {
      cfg.scene.seed = parse_integer<std::uint64_t>(v, source, ln);
    } else if (key == "profile.scan_rate") {
      cfg.profile.scan_rate = num();
    } else if (key == "profile.allow_model_violation") {
      cfg.profile.allow_model_violation = parse_bool(v, source, ln);
    } else if (auto obj = indexed_key(key, "scene.object.")) {
      auto& objects = cfg.scene.dynamic_objects;
      if (objects.size() <= obj->first) objects.resize(obj->first + 1);
      DynamicObject& o = objects[obj->first];
      if (obj->second == "center") {
        o.center = parse_vec3(v, source, ln);
      } else if (obj->second == "extent") {
        o.extent = num();
      } else if (obj->second == "velocity") {
        o.velocity = parse_vec3(v, source, ln);
      } else if (obj->second == "point_count") {
        o.point_count = parse_integer<int>(v, source, ln);
      } else {
        throw unknown();
      }
    } else if (auto seg = indexed_key(key, "profile.segment.")) {
      auto& segments = cfg.profile.segments;
      if (segments.size() <= seg->first) segments.resize(seg->first + 1);
      TwistSegment& s = segments[seg->first];
      if (seg->second == "duration") {
        s.duration = num();
      } else if (seg->second == "v_origin") {
        s.v_origin = parse_vec3(v, source, ln);
      } else if (seg->second == "omega") {
        s.omega = parse_vec3(v, source, ln);
      } else {
        throw unknown();
      }
    } else {
      throw unknown();
    }
  }

  if (quaternion_set) {
    try {
      cfg.vehicle.rotation_vs = Rotation::from_quaternion(q(0), q(1), q(2), q(3));
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationError, where(source, quaternion_line) + e.what());
    }
  }
}

}  // namespace detail

/// Applies `key = value` text on top of `base`, then validates.
inline Config parse_config(std::string_view text, const std::string& source = "<config>",
                           Config base = {}) {
  std::map<std::string, detail::ConfigValue> settings;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? end : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError,
                  detail::where(source, line_no) + "expected 'key = value'");
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw Error(ErrorCode::ParseError, detail::where(source, line_no) + "empty key");
    }
    if (settings.count(key) != 0) {
      throw Error(ErrorCode::ParseError,
                  detail::where(source, line_no) + "duplicate key '" + key + "'");
    }
    settings[key] = {value, line_no};
  }
  detail::apply_settings(base, settings, source);
  base.validate();
  return base;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

/// Applies `key=value` overrides (same keys as the file), then validates.
inline Config apply_overrides(const Config& base, const std::vector<std::string>& overrides) {
  std::string text;
  for (const auto& o : overrides) {
    if (o.find('=') == std::string::npos) {
      throw Error(ErrorCode::ParseError, "override '" + o + "' is not of the form key=value");
    }
    text += o;
    text += '\n';
  }
  return parse_config(text, "--set", base);
}

inline std::string format_config(const Config& cfg) {
  std::ostringstream out;
  const Eigen::Vector4d q = cfg.vehicle.rotation_vs.quaternion_xyzw();
  out << "vehicle.qx = " << format_number(q(0)) << '\n'
      << "vehicle.qy = " << format_number(q(1)) << '\n'
      << "vehicle.qz = " << format_number(q(2)) << '\n'
      << "vehicle.qw = " << format_number(q(3)) << '\n'
      << "vehicle.s_x = " << format_number(cfg.vehicle.s.x()) << '\n'
      << "vehicle.s_y = " << format_number(cfg.vehicle.s.y()) << '\n'
      << "vehicle.s_z = " << format_number(cfg.vehicle.s.z()) << '\n'
      << "vehicle.m = " << format_number(cfg.vehicle.m) << '\n'
      << '\n'
      << "ransac.max_iterations = " << cfg.ransac.max_iterations << '\n'
      << "ransac.inlier_threshold = " << format_number(cfg.ransac.inlier_threshold) << '\n'
      << "ransac.min_inliers = " << cfg.ransac.min_inliers << '\n'
      << "ransac.seed = " << cfg.ransac.seed << '\n'
      << '\n'
      << "scene.static_point_count = " << cfg.scene.static_point_count << '\n'
      << "scene.world_extent = " << format_number(cfg.scene.world_extent) << '\n'
      << "scene.noise_sigma = " << format_number(cfg.scene.doppler_noise_sigma) << '\n'
      << "scene.power_min = " << format_number(cfg.scene.power_min) << '\n'
      << "scene.power_max = " << format_number(cfg.scene.power_max) << '\n'
      << "scene.seed = " << cfg.scene.seed << '\n';
  for (std::size_t i = 0; i < cfg.scene.dynamic_objects.size(); ++i) {
    const auto& o = cfg.scene.dynamic_objects[i];
    const std::string k = "scene.object." + std::to_string(i) + ".";
    out << k << "center = " << detail::format_vec3(o.center) << '\n'
        << k << "extent = " << format_number(o.extent) << '\n'
        << k << "velocity = " << detail::format_vec3(o.velocity) << '\n'
        << k << "point_count = " << o.point_count << '\n';
  }
  out << '\n'
      << "profile.scan_rate = " << format_number(cfg.profile.scan_rate) << '\n'
      << "profile.allow_model_violation = "
      << (cfg.profile.allow_model_violation ? "true" : "false") << '\n';
  for (std::size_t i = 0; i < cfg.profile.segments.size(); ++i) {
    const auto& s = cfg.profile.segments[i];
    const std::string k = "profile.segment." + std::to_string(i) + ".";
    out << k << "duration = " << format_number(s.duration) << '\n'
        << k << "v_origin = " << detail::format_vec3(s.v_origin) << '\n'
        << k << "omega = " << detail::format_vec3(s.omega) << '\n';
  }
  return out.str();
}

inline void save_config(const Config& cfg, const std::filesystem::path& path) {
  std::ofstream out = detail::open_output(path);
  out << format_config(cfg);
  detail::finish_output(out, path);
}

}  // namespace doppler_odom
