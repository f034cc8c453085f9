#pragma once

// Planar projective algebra and normalized DLT homography estimation between
// the image plane and the road plane.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "roadspeed/errors.hpp"

namespace roadspeed {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend Point2 operator*(Point2 p, double s) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2, Point2) = default;

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }

struct HomogeneousPoint2 {
  double u = 0.0;
  double v = 0.0;
  double w = 1.0;
};

/// A marker seen at `image` (pixels) whose road-plane position is `world` (m).
struct Correspondence {
  Point2 image;
  Point2 world;
};

/// |w| below this fraction of the point's largest homogeneous coordinate is
/// treated as a point at infinity.
inline constexpr double kEpsilonW = 1e-12;

/// Singular-value ratio below which a point set counts as collinear.
inline constexpr double kCollinearityTolerance = 1e-9;

/// Invertible 3x3 projective map stored in canonical scale: unit Frobenius
/// norm, sign chosen so the largest-magnitude entry is positive.
class Homography {
 public:
  Homography() : Homography(Eigen::Matrix3d::Identity()) {}

  explicit Homography(const Eigen::Matrix3d& m) {
    if (!m.allFinite()) fail(ErrorKind::DegenerateConfiguration, "homography has non-finite entries");
    const double n = m.norm();
    if (n == 0.0) fail(ErrorKind::DegenerateConfiguration, "homography is the zero matrix");
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
    const auto& s = svd.singularValues();
    if (s(2) <= 1e-13 * s(0)) fail(ErrorKind::DegenerateConfiguration, "homography is singular");
    m_ = m / n;
    Eigen::Index r = 0, c = 0;
    m_.cwiseAbs().maxCoeff(&r, &c);
    if (m_(r, c) < 0.0) m_ = -m_;
  }

  static Homography identity() { return Homography(); }

  static Homography from_row_major(std::span<const double> v) {
    if (v.size() != 9) fail(ErrorKind::ShapeError, "homography needs 9 entries, got " + std::to_string(v.size()));
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = v[static_cast<std::size_t>(i)];
    return Homography(m);
  }

  std::array<double, 9> row_major() const {
    std::array<double, 9> out{};
    for (int i = 0; i < 9; ++i) out[static_cast<std::size_t>(i)] = m_(i / 3, i % 3);
    return out;
  }

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

 private:
  Eigen::Matrix3d m_;
};

inline HomogeneousPoint2 apply_homogeneous(const Homography& h, Point2 p) {
  const Eigen::Vector3d q = h.matrix() * Eigen::Vector3d(p.x, p.y, 1.0);
  return {q(0), q(1), q(2)};
}

inline Point2 to_euclidean(const HomogeneousPoint2& q) {
  const double scale = std::max({std::abs(q.u), std::abs(q.v), std::abs(q.w)});
  if (scale == 0.0) fail(ErrorKind::InvalidInput, "homogeneous point (0,0,0) is undefined");
  if (std::abs(q.w) <= kEpsilonW * scale) fail(ErrorKind::PointAtInfinity, "point maps to infinity");
  return {q.u / q.w, q.v / q.w};
}

inline Point2 apply(const Homography& h, Point2 p) { return to_euclidean(apply_homogeneous(h, p)); }

inline Homography invert(const Homography& h) {
  const Eigen::Matrix3d& m = h.matrix();
  if (std::abs(m.determinant()) <= 1e-15) fail(ErrorKind::DegenerateConfiguration, "cannot invert a singular homography");
  return Homography(m.inverse());
}

/// Returns the map p -> a(b(p)).
inline Homography compose(const Homography& a, const Homography& b) {
  return Homography(a.matrix() * b.matrix());
}

/// Largest absolute entry difference between two homographies in canonical scale.
inline double max_entry_deviation(const Homography& a, const Homography& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

struct NormalizedPoints {
  std::vector<Point2> points;
  Eigen::Matrix3d transform;  // maps original points to `points`
};

/// Hartley conditioning: translate to zero centroid, scale to mean radius sqrt(2).
inline NormalizedPoints normalize_points(std::span<const Point2> pts) {
  if (pts.empty()) fail(ErrorKind::InsufficientData, "no points to normalize");
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    if (!p.finite()) fail(ErrorKind::InvalidInput, "non-finite point");
    cx += p.x;
    cy += p.y;
  }
  const double n = static_cast<double>(pts.size());
  cx /= n;
  cy /= n;
  double mean_r = 0.0;
  for (const auto& p : pts) mean_r += std::hypot(p.x - cx, p.y - cy);
  mean_r /= n;
  if (!(mean_r > 0.0)) fail(ErrorKind::DegenerateConfiguration, "all points are identical");

  const double s = std::sqrt(2.0) / mean_r;
  NormalizedPoints out;
  out.transform << s, 0, -s * cx,
                   0, s, -s * cy,
                   0, 0, 1;
  out.points.reserve(pts.size());
  for (const auto& p : pts) out.points.push_back({s * (p.x - cx), s * (p.y - cy)});
  return out;
}

/// True when the centered point matrix has a smallest singular value below
/// kCollinearityTolerance times its largest.
inline bool is_collinear(std::span<const Point2> pts) {
  if (pts.size() < 3) return true;
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d(p.x - cx, p.y - cy);
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter);
  const double s_max = std::sqrt(std::max(es.eigenvalues()(1), 0.0));
  const double s_min = std::sqrt(std::max(es.eigenvalues()(0), 0.0));
  return s_max == 0.0 || s_min < kCollinearityTolerance * s_max;
}

namespace detail {

inline bool has_collinear_triple(const std::array<Point2, 4>& q) {
  for (int skip = 0; skip < 4; ++skip) {
    std::array<Point2, 3> t{};
    int k = 0;
    for (int i = 0; i < 4; ++i)
      if (i != skip) t[static_cast<std::size_t>(k++)] = q[static_cast<std::size_t>(i)];
    if (is_collinear(t)) return true;
  }
  return false;
}

}  // namespace detail

/// World-to-image homography from >= 4 marker correspondences (normalized DLT).
inline Homography estimate_homography(std::span<const Correspondence> corr) {
  if (corr.size() < 4)
    fail(ErrorKind::InsufficientData,
         "insufficient correspondences (" + std::to_string(corr.size()) + " < 4)");

  std::vector<Point2> world, image;
  world.reserve(corr.size());
  image.reserve(corr.size());
  for (const auto& c : corr) {
    if (!c.world.finite() || !c.image.finite()) fail(ErrorKind::InvalidInput, "non-finite correspondence");
    world.push_back(c.world);
    image.push_back(c.image);
  }
  if (is_collinear(world) || is_collinear(image))
    fail(ErrorKind::DegenerateConfiguration, "degenerate configuration: collinear markers");
  if (corr.size() == 4) {
    std::array<Point2, 4> w{}, i{};
    std::copy(world.begin(), world.end(), w.begin());
    std::copy(image.begin(), image.end(), i.begin());
    if (detail::has_collinear_triple(w) || detail::has_collinear_triple(i))
      fail(ErrorKind::DegenerateConfiguration, "degenerate configuration: three collinear markers");
  }

  const NormalizedPoints nw = normalize_points(world);
  const NormalizedPoints ni = normalize_points(image);

  const auto n = static_cast<Eigen::Index>(corr.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Point2 s = nw.points[static_cast<std::size_t>(k)];
    const Point2 d = ni.points[static_cast<std::size_t>(k)];
    a.row(2 * k) << -s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x;
    a.row(2 * k + 1) << 0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // Eight independent constraints are needed; a second (near) null direction
  // means the markers do not pin the map down.
  if (sv.size() < 8 || sv(7) <= kCollinearityTolerance * sv(0))
    fail(ErrorKind::DegenerateConfiguration, "degenerate configuration: rank-deficient design matrix");

  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d m = ni.transform.inverse() * hn * nw.transform;
  return Homography(m);
}

/// Per-marker distance (pixels) between apply(h, world) and the observed image point.
inline std::vector<double> reprojection_errors(const Homography& h, std::span<const Correspondence> corr) {
  std::vector<double> out;
  out.reserve(corr.size());
  for (const auto& c : corr) out.push_back(distance(apply(h, c.world), c.image));
  return out;
}

inline double rms(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace roadspeed
