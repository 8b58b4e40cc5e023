#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"

namespace doppler_odom {

/// One return of a Doppler-capable range sensor, in the sensor frame.
/// Approaching targets have negative Doppler.
struct DopplerPoint {
  Vec3 position = Vec3::Zero();  // m
  double doppler = 0.0;          // m/s
  double power = 1.0;            // linear, >= 0
};

struct Scan {
  double timestamp = 0.0;
  std::vector<DopplerPoint> points;
};

/// B = A·v_s for a static scene, with W the diagonal of the weight matrix.
struct LinearSystem {
  Eigen::Matrix<double, Eigen::Dynamic, 3> A;
  Eigen::VectorXd B;
  Eigen::VectorXd W;

  Eigen::Index size() const { return A.rows(); }
};

struct RansacParams {
  int max_iterations = 100;
  double inlier_threshold = 0.2;  // m/s on the Doppler residual
  int min_inliers = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iterations < 1) {
      throw Error(ErrorCode::ValidationError, "ransac.max_iterations >= 1 violated");
    }
    if (!(inlier_threshold > 0.0) || !std::isfinite(inlier_threshold)) {
      throw Error(ErrorCode::ValidationError, "ransac.inlier_threshold > 0 violated");
    }
    if (min_inliers < 3) {
      throw Error(ErrorCode::ValidationError, "ransac.min_inliers >= 3 violated");
    }
  }
};

struct SensorVelocityEstimate {
  Vec3 v_s = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  std::vector<bool> inlier_mask;  // false marks a dynamic point
  double residual_rms = 0.0;

  std::size_t inlier_count() const {
    std::size_t n = 0;
    for (bool b : inlier_mask) n += b ? 1 : 0;
    return n;
  }
  std::size_t dynamic_count() const { return inlier_mask.size() - inlier_count(); }
};

/// Ratio λmax/λmin of AᵀWA above which the directions are treated as spanning
/// fewer than three dimensions. If every direction lies within δ of a plane
/// through the sensor, the ratio is at least 1/(3·sin²δ) ≈ 1.09e5 for δ = 0.1°,
/// so this bound rejects such scans regardless of the weights.
inline constexpr double kMaxConditionNumber = 1e5;

namespace detail {

inline void check_conditioning(const Mat3& normal, double max_condition) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(normal, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0);
  const double lmax = eig.eigenvalues()(2);
  if (!(lmax > 0.0) || !(lmin * max_condition >= lmax)) {
    throw Error(ErrorCode::DegenerateGeometry,
                "point directions do not span three dimensions (condition number " +
                    (lmin > 0.0 ? std::to_string(lmax / lmin) : std::string("inf")) +
                    " > " + std::to_string(max_condition) + ")");
  }
}

inline Mat3 weighted_normal(const LinearSystem& sys) {
  return sys.A.transpose() * sys.W.asDiagonal() * sys.A;
}

/// Uniform index in [0, n) from the raw 64-bit output; avoids the
/// implementation-defined std::uniform_int_distribution.
inline std::size_t bounded_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(
      (static_cast<unsigned __int128>(rng()) * n) >> 64);
}

}  // namespace detail

inline LinearSystem build_system(const Scan& scan) {
  if (scan.points.empty()) {
    throw Error(ErrorCode::EmptyScan, "scan at t=" + std::to_string(scan.timestamp) +
                                          " has no points");
  }
  const auto n = static_cast<Eigen::Index>(scan.points.size());
  LinearSystem sys;
  sys.A.resize(n, 3);
  sys.B.resize(n);
  sys.W.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const DopplerPoint& p = scan.points[static_cast<std::size_t>(i)];
    if (!all_finite(p.position) || !std::isfinite(p.doppler) || !std::isfinite(p.power) ||
        p.power < 0.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "point " + std::to_string(i) + " has non-finite fields or negative power");
    }
    sys.A.row(i) = direction_row(cartesian_to_spherical(p.position)).transpose();
    sys.B(i) = -p.doppler;
    sys.W(i) = p.power;
  }
  const double mean = sys.W.mean();
  if (mean > 0.0) {
    sys.W /= mean;
  } else {
    // No point carries power information; fall back to equal confidence.
    sys.W.setOnes();
  }
  return sys;
}

inline LinearSystem select_rows(const LinearSystem& sys, const std::vector<bool>& mask) {
  Eigen::Index count = 0;
  for (bool b : mask) count += b ? 1 : 0;
  LinearSystem out;
  out.A.resize(count, 3);
  out.B.resize(count);
  out.W.resize(count);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    out.A.row(j) = sys.A.row(i);
    out.B(j) = sys.B(i);
    out.W(j) = sys.W(i);
    ++j;
  }
  return out;
}

/// v_s = (AᵀWA)⁻¹ AᵀWB, solved by QR on the row-scaled system √W·A.
inline Vec3 solve_weighted_lsq(const LinearSystem& sys,
                               double max_condition = kMaxConditionNumber) {
  if (sys.size() < 3) {
    throw Error(ErrorCode::InsufficientPoints,
                "need at least 3 points, got " + std::to_string(sys.size()));
  }
  detail::check_conditioning(detail::weighted_normal(sys), max_condition);
  const Eigen::VectorXd sw = sys.W.cwiseSqrt();
  const Eigen::Matrix<double, Eigen::Dynamic, 3> a = sw.asDiagonal() * sys.A;
  const Eigen::VectorXd b = sw.cwiseProduct(sys.B);
  return a.colPivHouseholderQr().solve(b);
}

inline Eigen::VectorXd residuals(const LinearSystem& sys, const Vec3& v) {
  return sys.A * v - sys.B;
}

/// Residual-scaled inverse normal matrix over the inlier rows:
///   C_v = ρᵀWρ / (N_in − 3) · (AᵀWA)⁻¹
inline Mat3 estimate_covariance(const LinearSystem& sys, const Vec3& v,
                                const std::vector<bool>& mask) {
  const LinearSystem in = select_rows(sys, mask);
  if (in.size() <= 3) {
    throw Error(ErrorCode::InsufficientPoints,
                "covariance needs more than 3 inliers, got " + std::to_string(in.size()));
  }
  const Eigen::VectorXd rho = residuals(in, v);
  const double scale =
      rho.dot(in.W.cwiseProduct(rho)) / static_cast<double>(in.size() - 3);
  const Mat3 normal = detail::weighted_normal(in);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(normal);
  const Eigen::Vector3d lambda = eig.eigenvalues();
  if (!(lambda(0) > 0.0)) {
    throw Error(ErrorCode::DegenerateGeometry, "inlier normal matrix is singular");
  }
  const Mat3& q = eig.eigenvectors();
  Mat3 cov = scale * (q * lambda.cwiseInverse().asDiagonal() * q.transpose());
  return 0.5 * (cov + cov.transpose());
}

namespace detail {

inline std::vector<std::array<std::size_t, 3>> draw_minimal_samples(std::size_t n,
                                                                    int count,
                                                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::array<std::size_t, 3>> samples(static_cast<std::size_t>(count));
  for (auto& s : samples) {
    s[0] = bounded_index(rng, n);
    do {
      s[1] = bounded_index(rng, n);
    } while (s[1] == s[0]);
    do {
      s[2] = bounded_index(rng, n);
    } while (s[2] == s[0] || s[2] == s[1]);
  }
  return samples;
}

inline std::vector<bool> classify(const LinearSystem& sys, const Vec3& v, double threshold) {
  const Eigen::VectorXd rho = residuals(sys, v);
  std::vector<bool> mask(static_cast<std::size_t>(sys.size()));
  for (Eigen::Index i = 0; i < sys.size(); ++i) {
    mask[static_cast<std::size_t>(i)] = std::abs(rho(i)) <= threshold;
  }
  return mask;
}

inline std::size_t count(const std::vector<bool>& mask) {
  std::size_t n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

// Hypotheses from nearly coplanar triples are numerically meaningless.
inline constexpr double kMinSampleDeterminant = 1e-9;
inline constexpr int kRefineIterations = 3;
inline constexpr double kEarlyExitRatio = 0.95;

}  // namespace detail

/// Robust sensor velocity from one scan. Hypotheses come from unweighted exact
/// solves on random 3-point samples; the winner (most inliers, then lowest
/// inlier RMS) is refit with power weights and the inlier set re-labeled
/// against the refit until it stops changing. Points outside the final
/// consensus are the dynamic ones.
inline SensorVelocityEstimate estimate_velocity_ransac(const Scan& scan,
                                                       const RansacParams& params) {
  params.validate();
  const LinearSystem sys = build_system(scan);
  const auto n = static_cast<std::size_t>(sys.size());
  const auto needed = static_cast<std::size_t>(std::max(3, params.min_inliers));
  if (n < needed) {
    throw Error(ErrorCode::InsufficientPoints, "scan has " + std::to_string(n) +
                                                   " points, need " + std::to_string(needed));
  }
  detail::check_conditioning(sys.A.transpose() * sys.A, kMaxConditionNumber);

  const auto samples = detail::draw_minimal_samples(n, params.max_iterations, params.seed);

  bool have_model = false;
  std::size_t best_count = 0;
  double best_sq = 0.0;
  Vec3 best_v = Vec3::Zero();
  const double thr = params.inlier_threshold;
  const auto early_exit = static_cast<std::size_t>(std::ceil(detail::kEarlyExitRatio * n));

  for (const auto& s : samples) {
    Mat3 a3;
    Vec3 b3;
    for (int k = 0; k < 3; ++k) {
      a3.row(k) = sys.A.row(static_cast<Eigen::Index>(s[k]));
      b3(k) = sys.B(static_cast<Eigen::Index>(s[k]));
    }
    if (std::abs(a3.determinant()) < detail::kMinSampleDeterminant) continue;
    const Vec3 v = a3.partialPivLu().solve(b3);

    std::size_t cnt = 0;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double r = sys.A.row(ii).dot(v) - sys.B(ii);
      if (std::abs(r) <= thr) {
        ++cnt;
        sq += r * r;
      }
    }
    // Compare mean squared residuals without dividing: sq/cnt < best_sq/best_count.
    const bool better = !have_model || cnt > best_count ||
                        (cnt == best_count && sq * static_cast<double>(best_count) <
                                                  best_sq * static_cast<double>(cnt));
    if (better) {
      have_model = true;
      best_count = cnt;
      best_sq = sq;
      best_v = v;
    }
    if (best_count >= early_exit) break;
  }

  if (!have_model) {
    throw Error(ErrorCode::DegenerateGeometry, "every minimal sample was degenerate");
  }
  if (best_count < static_cast<std::size_t>(params.min_inliers)) {
    throw Error(ErrorCode::NoConsensus, "best model has " + std::to_string(best_count) +
                                            " inliers, need " +
                                            std::to_string(params.min_inliers));
  }

  std::vector<bool> mask = detail::classify(sys, best_v, thr);
  Vec3 v = solve_weighted_lsq(select_rows(sys, mask));
  for (int it = 0; it < detail::kRefineIterations; ++it) {
    std::vector<bool> relabeled = detail::classify(sys, v, thr);
    if (relabeled == mask ||
        detail::count(relabeled) < static_cast<std::size_t>(params.min_inliers)) {
      break;
    }
    mask = std::move(relabeled);
    v = solve_weighted_lsq(select_rows(sys, mask));
  }

  SensorVelocityEstimate est;
  est.v_s = v;
  est.covariance = estimate_covariance(sys, v, mask);
  const Eigen::VectorXd rho = residuals(select_rows(sys, mask), v);
  est.residual_rms = std::sqrt(rho.squaredNorm() / static_cast<double>(rho.size()));
  est.inlier_mask = std::move(mask);
  return est;
}

}  // namespace doppler_odom
