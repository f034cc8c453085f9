#pragma once

// Ground-truth generator: a pinhole camera over a flat road (z = 0) with
// calibration markers and vehicles whose plates move at known speed and
// height. Produces analytic tracks and rendered frames.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "roadspeed/errors.hpp"
#include "roadspeed/font.hpp"
#include "roadspeed/geometry.hpp"
#include "roadspeed/image.hpp"
#include "roadspeed/speed.hpp"

namespace roadspeed {

using Vec3 = Eigen::Vector3d;

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct CameraModel {
  double fx = 1000.0, fy = 1000.0;
  double cx = 640.0, cy = 480.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();                         // camera = R * world + t
  int width = 1280, height = 960;

  Vec3 center() const { return -rotation.transpose() * translation; }

  /// H_c: height of the center of projection above the road.
  double height_above_road() const { return center().z(); }

  Eigen::Matrix3d intrinsics() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  Eigen::Matrix<double, 3, 4> projection() const {
    Eigen::Matrix<double, 3, 4> rt;
    rt << rotation, translation;
    return intrinsics() * rt;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) fail(ErrorKind::InvalidGeometry, "focal lengths must be positive");
    if (width <= 0 || height <= 0) fail(ErrorKind::InvalidGeometry, "image size must be positive");
    if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(rotation.determinant() - 1.0) > 1e-9)
      fail(ErrorKind::InvalidGeometry, "camera rotation is not a proper rotation");
    if (!(height_above_road() > 0.0)) fail(ErrorKind::InvalidGeometry, "camera must be above the road");
  }

  /// Camera at `eye` looking at `target`, image x to the right and y down,
  /// with the world z axis up.
  static CameraModel look_at(const Vec3& eye, const Vec3& target, double focal_px, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up(0, 0, 1);
    if (std::abs(forward.dot(up)) > 1.0 - 1e-12) up = Vec3(1, 0, 0);
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    CameraModel cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = cam.fy = focal_px;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5 * width - 0.5;
    cam.cy = 0.5 * height - 0.5;
    return cam;
  }

  bool in_image(Point2 p, double margin = 0.0) const {
    return p.x >= margin && p.y >= margin && p.x <= width - 1 - margin && p.y <= height - 1 - margin;
  }
};

/// Pinhole projection with Euclidean division.
inline Point2 project(const CameraModel& cam, const Vec3& world) {
  const Vec3 pc = cam.rotation * world + cam.translation;
  if (!(pc.z() > 1e-12)) fail(ErrorKind::BehindCamera, "point is at or behind the camera plane");
  return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

struct VehicleSpec {
  std::string plate_text = "3159740";
  double plate_height_m = 0.5;  // h: height of the tracked (top) plate edge
  double plate_length_m = 0.52;
  double plate_vertical_m = 0.12;
  double plate_tilt_deg = 0.0;  // roll of the plate in its own plane, about its center
  Point2 path_start{15.0, -0.26};  // ground position of the tracked corner at enter_frame
  Point2 path_direction{-1.0, 0.0};
  double speed_mps = 50.0 / 3.6;
  Rgb plate_color{250, 210, 0};
  Rgb body_color{52, 52, 58};
  int enter_frame = 0;
  bool rear_plate = false;  // plate faces backwards (receding vehicle)
};

struct ScenarioSpec {
  CameraModel camera;
  std::vector<Point2> markers;
  std::vector<VehicleSpec> vehicles;
  double fps = 30.0;
  int n_frames = 24;
  double noise_px = 0.0;
  std::uint64_t seed = 1;
  Rgb road_color{112, 112, 112};
  Rgb sky_color{170, 190, 215};
  Rgb marker_color{245, 245, 245};
  Rgb ink_color{18, 18, 18};
  double texture_noise = 4.0;  // uniform amplitude (grey levels) of the static road texture
  double marker_arm_m = 0.6;
  double marker_width_m = 0.1;
  int supersample = 4;

  void validate() const {
    camera.validate();
    if (!(fps > 0.0)) fail(ErrorKind::InvalidGeometry, "fps must be positive");
    if (n_frames <= 0) fail(ErrorKind::InvalidGeometry, "n_frames must be positive");
    if (!(noise_px >= 0.0)) fail(ErrorKind::InvalidGeometry, "noise_px must be non-negative");
    if (supersample < 1) fail(ErrorKind::InvalidGeometry, "supersample must be >= 1");
    const double hc = camera.height_above_road();
    for (const auto& v : vehicles) {
      if (!(v.plate_height_m >= 0.0) || !(v.plate_height_m < hc))
        fail(ErrorKind::InvalidGeometry, "plate height must satisfy 0 <= h < camera height");
      if (!(v.plate_length_m > 0.0) || !(v.plate_vertical_m > 0.0))
        fail(ErrorKind::InvalidGeometry, "plate dimensions must be positive");
      if (!(v.speed_mps >= 0.0)) fail(ErrorKind::InvalidGeometry, "speed must be non-negative");
      if (!(norm(v.path_direction) > 0.0)) fail(ErrorKind::InvalidGeometry, "path direction must be non-zero");
    }
  }
};

// ---- plate geometry --------------------------------------------------------

/// Plate pose at one instant: an in-plane frame and the four corners.
struct PlatePose {
  Vec3 center;
  Vec3 axis_right;  // plate "right" as seen by a viewer facing it (tilted)
  Vec3 axis_up;     // plate "up" (tilted)
  Vec3 normal;      // facing direction
  Vec3 upper_left, upper_right, lower_right, lower_left;
  Vec3 body_center;  // untilted plate center, slightly behind the plate
  Vec3 body_right;   // untilted horizontal axis
};

inline Vec3 unit_direction(Point2 d) {
  const double n = norm(d);
  return {d.x / n, d.y / n, 0.0};
}

/// Pose of the vehicle's plate `k` samples after it enters.
inline PlatePose plate_pose(const VehicleSpec& v, double fps, int k) {
  const Vec3 d = unit_direction(v.path_direction);
  const Vec3 n = v.rear_plate ? Vec3(-d) : d;
  const Vec3 z(0, 0, 1);
  const Vec3 right = (-n).cross(z).normalized();
  const double travel = v.speed_mps * static_cast<double>(k) / fps;
  const Vec3 corner0 = Vec3(v.path_start.x, v.path_start.y, v.plate_height_m) + travel * d;

  const double half_l = 0.5 * v.plate_length_m;
  const double half_v = 0.5 * v.plate_vertical_m;
  PlatePose p;
  const Vec3 untilted_center = corner0 - half_l * right - half_v * z;
  const double th = v.plate_tilt_deg * kDegToRad;
  p.center = untilted_center;
  p.axis_right = std::cos(th) * right + std::sin(th) * z;
  p.axis_up = -std::sin(th) * right + std::cos(th) * z;
  p.normal = n;
  p.upper_right = p.center + half_l * p.axis_right + half_v * p.axis_up;
  p.upper_left = p.center - half_l * p.axis_right + half_v * p.axis_up;
  p.lower_right = p.center + half_l * p.axis_right - half_v * p.axis_up;
  p.lower_left = p.center - half_l * p.axis_right - half_v * p.axis_up;
  p.body_center = untilted_center - 0.01 * n;
  p.body_right = right;
  return p;
}

// ---- analytic tracks -------------------------------------------------------

struct TrackSample {
  int frame = 0;
  double timestamp = 0.0;
  Vec3 world;            // tracked (upper-right) corner
  Point2 pixel;          // projected corner (+ noise)
  Point2 edge_left;      // projected upper-left corner (+ noise)
  Point2 edge_right;     // projected upper-right corner (+ same noise as pixel)
};

struct SyntheticTrack {
  std::vector<TrackSample> samples;
  bool truncated = false;
};

/// Analytic track of one vehicle's upper-right plate corner. Stops and flags
/// truncation when the corner leaves the image.
inline SyntheticTrack generate_track(const ScenarioSpec& spec, std::size_t vehicle_index = 0) {
  spec.validate();
  if (vehicle_index >= spec.vehicles.size()) fail(ErrorKind::InvalidInput, "no such vehicle in scenario");
  const VehicleSpec& v = spec.vehicles[vehicle_index];
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + vehicle_index + 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticTrack track;
  for (int frame = std::max(0, v.enter_frame); frame < spec.n_frames; ++frame) {
    const PlatePose pose = plate_pose(v, spec.fps, frame - v.enter_frame);
    TrackSample s;
    s.frame = frame;
    s.timestamp = static_cast<double>(frame) / spec.fps;
    s.world = pose.upper_right;
    try {
      s.pixel = project(spec.camera, pose.upper_right);
      s.edge_left = project(spec.camera, pose.upper_left);
    } catch (const Error&) {
      track.truncated = true;
      break;
    }
    if (!spec.camera.in_image(s.pixel)) {
      track.truncated = true;
      break;
    }
    if (spec.noise_px > 0.0) {
      s.pixel.x += spec.noise_px * noise(rng);
      s.pixel.y += spec.noise_px * noise(rng);
      s.edge_left.x += spec.noise_px * noise(rng);
      s.edge_left.y += spec.noise_px * noise(rng);
    }
    s.edge_right = s.pixel;
    track.samples.push_back(s);
  }
  return track;
}

inline TrackSequence to_track_sequence(const SyntheticTrack& t, int track_id = 1, std::string plate_text = {}) {
  TrackSequence seq;
  seq.track_id = track_id;
  seq.plate_text = std::move(plate_text);
  for (const auto& s : t.samples) seq.frames.push_back({s.frame, s.timestamp, s.pixel, s.edge_left, s.edge_right});
  return seq;
}

/// Road-plane (z = 0) restriction of the camera: columns 1, 2 and 4 of P.
inline Homography ground_truth_homography(const CameraModel& cam) {
  if (std::abs(cam.height_above_road()) < 1e-9)
    fail(ErrorKind::DegenerateConfiguration, "camera center lies on the road plane");
  const Eigen::Matrix<double, 3, 4> p = cam.projection();
  Eigen::Matrix3d h;
  h.col(0) = p.col(0);
  h.col(1) = p.col(1);
  h.col(2) = p.col(3);
  return Homography(h);
}

inline Homography ground_truth_homography(const ScenarioSpec& spec) { return ground_truth_homography(spec.camera); }

/// Speed of the plate's projection onto the road plane for true speed v.
inline double expected_projected_speed(double v, double camera_height, double h) {
  if (!(camera_height > 0.0) || !(h >= 0.0) || !(h < camera_height))
    fail(ErrorKind::InvalidGeometry, "expected 0 <= h < camera height");
  return v * camera_height / (camera_height - h);
}

inline std::vector<Correspondence> marker_correspondences(const ScenarioSpec& spec) {
  std::vector<Correspondence> out;
  for (const auto& m : spec.markers) out.push_back({project(spec.camera, {m.x, m.y, 0.0}), m});
  return out;
}

// ---- rendering -------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Rectangle [u0,u1] x [w0,w1] in some plane, with a map plane -> image.
struct PlanarPatch {
  Eigen::Matrix3d plane_to_image;
  double u0, u1, w0, w1;
};

inline PlanarPatch make_patch(const CameraModel& cam, const Vec3& origin, const Vec3& axis_u, const Vec3& axis_w,
                              double u0, double u1, double w0, double w1) {
  Eigen::Matrix3d m;
  m.col(0) = cam.intrinsics() * (cam.rotation * axis_u);
  m.col(1) = cam.intrinsics() * (cam.rotation * axis_w);
  m.col(2) = cam.intrinsics() * (cam.rotation * origin + cam.translation);
  return {m, u0, u1, w0, w1};
}

/// Paints a planar patch with per-sample colors (nullopt = transparent) using
/// ss x ss supersampling. Skips patches that reach behind the camera.
template <typename ColorFn>
void paint_patch(RgbImage& img, const CameraModel& cam, const PlanarPatch& patch, int ss, bool uniform,
                 ColorFn&& color) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (double u : {patch.u0, patch.u1})
    for (double w : {patch.w0, patch.w1}) {
      const Eigen::Vector3d q = patch.plane_to_image * Eigen::Vector3d(u, w, 1.0);
      if (!(q.z() > 1e-9)) return;
      xmin = std::min(xmin, q.x() / q.z());
      xmax = std::max(xmax, q.x() / q.z());
      ymin = std::min(ymin, q.y() / q.z());
      ymax = std::max(ymax, q.y() / q.z());
    }
  const int x0 = std::max(0, static_cast<int>(std::floor(xmin)) - 1);
  const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(xmax)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(ymin)) - 1);
  const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(ymax)) + 1);
  if (x0 > x1 || y0 > y1) return;

  const Eigen::Matrix3d inv = patch.plane_to_image.inverse();
  auto to_plane = [&](double x, double y, double& u, double& w) {
    const Eigen::Vector3d q = inv * Eigen::Vector3d(x, y, 1.0);
    u = q.x() / q.z();
    w = q.y() / q.z();
  };
  auto inside = [&](double u, double w) { return u >= patch.u0 && u <= patch.u1 && w >= patch.w0 && w <= patch.w1; };

  const double inv_n = 1.0 / (ss * ss);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (uniform) {
        bool all_in = true;
        for (double dy : {-0.5, 0.5})
          for (double dx : {-0.5, 0.5}) {
            double u, w;
            to_plane(x + dx, y + dy, u, w);
            all_in = all_in && inside(u, w);
          }
        if (all_in) {
          double u, w;
          to_plane(x, y, u, w);
          if (auto c = color(u, w)) img(x, y) = *c;
          continue;
        }
      }
      double r = 0, g = 0, b = 0, cover = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          double u, w;
          to_plane(x + (sx + 0.5) / ss - 0.5, y + (sy + 0.5) / ss - 0.5, u, w);
          if (!inside(u, w)) continue;
          const std::optional<Rgb> c = color(u, w);
          if (!c) continue;
          r += c->r;
          g += c->g;
          b += c->b;
          cover += 1.0;
        }
      }
      if (cover == 0.0) continue;
      const Rgb old = img(x, y);
      const double a = cover * inv_n;
      img(x, y) = {to_u8(r * inv_n + (1 - a) * old.r), to_u8(g * inv_n + (1 - a) * old.g),
                   to_u8(b * inv_n + (1 - a) * old.b)};
    }
  }
}

}  // namespace detail

/// Glyph layout on a plate of the given size, in plate coordinates centered on
/// the plate (u to the right, w up).
struct PlateTextLayout {
  double glyph_w, glyph_h, gap, x0, top;

  static PlateTextLayout make(std::size_t n_chars, double length, double vertical) {
    PlateTextLayout l{};
    l.glyph_h = 0.5 * vertical;
    l.glyph_w = l.glyph_h * (38.0 / 60.0);
    l.gap = 0.5 * l.glyph_w;
    const double n = static_cast<double>(std::max<std::size_t>(n_chars, 1));
    double total = n * l.glyph_w + (n - 1) * l.gap;
    const double max_total = 0.82 * length;
    if (total > max_total) {
      const double s = max_total / total;
      l.glyph_w *= s;
      l.gap *= s;
      total = max_total;
    }
    l.x0 = -0.5 * total;
    l.top = 0.5 * l.glyph_h;
    return l;
  }

  /// True when plate point (u, w) is on an inked glyph cell of `text`.
  bool ink(const std::string& text, double u, double w) const {
    if (w > top || w < top - glyph_h) return false;
    const double pitch = glyph_w + gap;
    const double rel = u - x0;
    if (rel < 0) return false;
    const auto k = static_cast<std::size_t>(rel / pitch);
    if (k >= text.size()) return false;
    const double within = rel - static_cast<double>(k) * pitch;
    if (within >= glyph_w) return false;
    const auto g = font::glyph(text[k]);
    if (!g) return false;
    const int col = static_cast<int>(within / glyph_w * font::kCols);
    const int row = static_cast<int>((top - w) / glyph_h * font::kRows);
    return font::ink(*g, col, row);
  }
};

inline double road_texture(std::uint64_t seed, int x, int y, double amplitude) {
  if (amplitude <= 0.0) return 0.0;
  const std::uint64_t h = detail::splitmix64(seed ^ (static_cast<std::uint64_t>(y) << 32 | static_cast<std::uint32_t>(x)));
  return amplitude * (2.0 * static_cast<double>(h >> 11) / 9007199254740992.0 - 1.0);
}

/// Empty road with markers (no vehicles).
inline RgbImage render_background(const ScenarioSpec& spec) {
  const CameraModel& cam = spec.camera;
  RgbImage img(cam.width, cam.height);
  // A pixel's viewing ray reaches the road iff its world z component is negative.
  const Eigen::Matrix3d kinv = cam.intrinsics().inverse();
  const Eigen::RowVector3d zrow = (cam.rotation.transpose() * kinv).row(2);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const double dz = zrow(0) * x + zrow(1) * y + zrow(2);
      if (dz >= 0.0) {
        img(x, y) = spec.sky_color;
        continue;
      }
      const double t = road_texture(spec.seed, x, y, spec.texture_noise);
      img(x, y) = {to_u8(spec.road_color.r + t), to_u8(spec.road_color.g + t), to_u8(spec.road_color.b + t)};
    }
  }
  const double arm = 0.5 * spec.marker_arm_m, half_w = 0.5 * spec.marker_width_m;
  const Rgb mc = spec.marker_color;
  for (const auto& m : spec.markers) {
    const Vec3 o(m.x, m.y, 0.0);
    auto solid = [mc](double, double) -> std::optional<Rgb> { return mc; };
    detail::paint_patch(img, cam, detail::make_patch(cam, o, Vec3::UnitX(), Vec3::UnitY(), -arm, arm, -half_w, half_w),
                        spec.supersample, true, solid);
    detail::paint_patch(img, cam, detail::make_patch(cam, o, Vec3::UnitX(), Vec3::UnitY(), -half_w, half_w, -arm, arm),
                        spec.supersample, true, solid);
  }
  return img;
}

inline void render_vehicle(RgbImage& img, const ScenarioSpec& spec, const VehicleSpec& v, int k) {
  const CameraModel& cam = spec.camera;
  const PlatePose pose = plate_pose(v, spec.fps, k);
  const Vec3 z(0, 0, 1);
  const Rgb body = v.body_color;
  // Body front face: 1.8 m wide, from 0.25 m up to 0.3 m above the plate top.
  const double body_top = std::max(1.3, v.plate_height_m + 0.3);
  const double center_h = pose.body_center.z();
  detail::paint_patch(img, cam,
                      detail::make_patch(cam, pose.body_center, pose.body_right, z, -0.9, 0.9, 0.25 - center_h,
                                         body_top - center_h),
                      spec.supersample, true, [body](double, double) -> std::optional<Rgb> { return body; });

  const double hl = 0.5 * v.plate_length_m, hv = 0.5 * v.plate_vertical_m;
  const PlateTextLayout layout = PlateTextLayout::make(v.plate_text.size(), v.plate_length_m, v.plate_vertical_m);
  const Rgb plate = v.plate_color, ink = spec.ink_color;
  const std::string& text = v.plate_text;
  detail::paint_patch(img, cam, detail::make_patch(cam, pose.center, pose.axis_right, pose.axis_up, -hl, hl, -hv, hv),
                      spec.supersample, false, [&](double u, double w) -> std::optional<Rgb> {
                        return layout.ink(text, u, w) ? ink : plate;
                      });
}

/// Deterministic frame: background, then vehicles far to near.
inline RgbImage render_frame(const ScenarioSpec& spec, int frame_idx) {
  spec.validate();
  if (frame_idx < 0 || frame_idx >= spec.n_frames) fail(ErrorKind::InvalidInput, "frame index outside scenario");
  RgbImage img = render_background(spec);
  const Vec3 c = spec.camera.center();
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    const auto& v = spec.vehicles[i];
    if (frame_idx < v.enter_frame) continue;
    order.emplace_back((plate_pose(v, spec.fps, frame_idx - v.enter_frame).center - c).norm(), i);
  }
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a.first > b.first; });
  for (const auto& [dist, i] : order) {
    const auto& v = spec.vehicles[i];
    render_vehicle(img, spec, v, frame_idx - v.enter_frame);
  }
  return img;
}

/// Projected plate quad (UL, UR, LR, LL) for a vehicle at a rendered frame.
inline std::array<Point2, 4> projected_plate_quad(const ScenarioSpec& spec, std::size_t vehicle_index, int frame_idx) {
  const auto& v = spec.vehicles.at(vehicle_index);
  const PlatePose p = plate_pose(v, spec.fps, frame_idx - v.enter_frame);
  return {project(spec.camera, p.upper_left), project(spec.camera, p.upper_right),
          project(spec.camera, p.lower_right), project(spec.camera, p.lower_left)};
}

// ---- scenario builders -----------------------------------------------------

/// Roadside camera looking along the road at one approaching vehicle. The
/// plate's tracked corner travels `travel_m` ending near the camera; the
/// focal length shrinks until plate path and markers fit in the image.
struct ObliqueScenarioParams {
  double camera_height_m = 6.0;
  double plate_height_m = 0.5;
  double speed_mps = 50.0 / 3.6;
  double lateral_offset_m = 0.75;  // camera y minus plate-center y
  double fps = 30.0;
  int width = 1280, height = 960;
  double focal_px = 2400.0;
  double travel_m = 7.0;
  double plate_tilt_deg = 0.0;
  double noise_px = 0.0;
  int enter_frame = 0;
  int static_frames = 12;  // frame count when speed is zero
  std::string plate_text = "3159740";
  std::uint64_t seed = 1;
};

inline ScenarioSpec make_oblique_scenario(const ObliqueScenarioParams& p) {
  VehicleSpec v;
  v.plate_text = p.plate_text;
  v.plate_height_m = p.plate_height_m;
  v.plate_tilt_deg = p.plate_tilt_deg;
  v.speed_mps = p.speed_mps;
  v.enter_frame = p.enter_frame;
  v.path_direction = {-1.0, 0.0};

  const double x_near = std::max(7.0, (p.camera_height_m - p.plate_height_m) / std::tan(40.0 * kDegToRad));
  const double x_far = x_near + p.travel_m;
  // Tracked corner is the plate's right end; the plate center sits at y = 0.
  v.path_start = {x_far, -0.5 * v.plate_length_m};

  ScenarioSpec spec;
  spec.fps = p.fps;
  spec.noise_px = p.noise_px;
  spec.seed = p.seed;
  const int moving = p.speed_mps > 0.0
                         ? static_cast<int>(std::floor(p.travel_m / (p.speed_mps / p.fps) + 1e-9)) + 1
                         : p.static_frames;
  spec.n_frames = p.enter_frame + moving;
  spec.vehicles.push_back(v);

  const Vec3 eye(0.0, p.lateral_offset_m, p.camera_height_m);
  std::vector<Vec3> extent;
  for (int k : {0, moving - 1}) {
    const PlatePose pose = plate_pose(v, p.fps, k);
    extent.insert(extent.end(), {pose.upper_left, pose.upper_right, pose.lower_left, pose.lower_right});
  }
  double yaw_target_x = 0.5 * (x_near + x_far);
  Vec3 target(yaw_target_x, 0.0, p.plate_height_m);
  double focal = p.focal_px;
  CameraModel cam;
  for (int attempt = 0; attempt < 40; ++attempt) {
    // Re-center the plate path vertically and horizontally a few times.
    for (int it = 0; it < 4; ++it) {
      cam = CameraModel::look_at(eye, target, focal, p.width, p.height);
      double ymin = 1e300, ymax = -1e300, xmin = 1e300, xmax = -1e300;
      for (const auto& e : extent) {
        const Point2 q = project(cam, e);
        ymin = std::min(ymin, q.y);
        ymax = std::max(ymax, q.y);
        xmin = std::min(xmin, q.x);
        xmax = std::max(xmax, q.x);
      }
      const double dy = 0.5 * (ymin + ymax) - cam.cy;
      const double dx = 0.5 * (xmin + xmax) - cam.cx;
      const Vec3 ray = cam.rotation.transpose() *
                       Vec3((cam.cx + dx - cam.cx) / cam.fx, (cam.cy + dy - cam.cy) / cam.fy, 1.0);
      const Vec3 dir = ray.normalized();
      target = eye + dir * (target - eye).norm();
    }
    cam = CameraModel::look_at(eye, target, focal, p.width, p.height);
    bool fits = true;
    for (const auto& e : extent) fits = fits && cam.in_image(project(cam, e), 0.12 * p.height);
    if (fits) break;
    focal *= 0.93;
  }
  spec.camera = cam;

  // Markers: road points under four well-spread image locations.
  const Homography to_road = invert(ground_truth_homography(cam));
  for (auto [fx, fy] : {std::pair{0.12, 0.2}, {0.88, 0.2}, {0.12, 0.93}, {0.88, 0.93}}) {
    const Point2 w = apply(to_road, {fx * (p.width - 1), fy * (p.height - 1)});
    spec.markers.push_back({std::round(w.x * 1000.0) / 1000.0, std::round(w.y * 1000.0) / 1000.0});
  }
  return spec;
}

inline ScenarioSpec default_scenario() { return make_oblique_scenario({}); }

/// Two vehicles in adjacent lanes: one approaching (front plate), one
/// receding (rear plate), both in view for the whole sequence.
inline ScenarioSpec make_two_vehicle_scenario(std::uint64_t seed = 7) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.fps = 30.0;
  spec.n_frames = 24;
  VehicleSpec a;
  a.plate_text = "4827051";
  a.plate_height_m = 0.5;
  a.speed_mps = 40.0 / 3.6;
  a.path_direction = {-1.0, 0.0};
  a.path_start = {17.0, -1.75 - 0.26};
  VehicleSpec b;
  b.plate_text = "6093318";
  b.plate_height_m = 0.55;
  b.speed_mps = 45.0 / 3.6;
  b.rear_plate = true;
  b.path_direction = {1.0, 0.0};
  b.path_start = {9.5, 1.75 - 0.26};
  spec.vehicles = {a, b};
  spec.camera = CameraModel::look_at({0.0, 0.0, 6.0}, {13.0, 0.0, 0.4}, 1900.0, 1280, 960);
  const Homography to_road = invert(ground_truth_homography(spec.camera));
  for (auto [fx, fy] : {std::pair{0.1, 0.2}, {0.9, 0.2}, {0.1, 0.93}, {0.9, 0.93}}) {
    const Point2 w = apply(to_road, {fx * 1279, fy * 959});
    spec.markers.push_back({std::round(w.x * 1000.0) / 1000.0, std::round(w.y * 1000.0) / 1000.0});
  }
  return spec;
}

}  // namespace roadspeed
