#pragma once

// Pixel track -> ground speed: project through the road-plane homography,
// take the median of pairwise projected speeds, then correct for plate height.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roadspeed/errors.hpp"
#include "roadspeed/geometry.hpp"

namespace roadspeed {

struct TrackFrame {
  int frame = 0;
  double timestamp = 0.0;  // s
  Point2 corner;           // tracked plate corner (px)
  Point2 edge_left;        // top-edge endpoints (px)
  Point2 edge_right;
};

struct TrackSequence {
  int track_id = 0;
  std::string plate_text;
  std::vector<TrackFrame> frames;
};

struct SiteConfig {
  Homography H_world_to_image;
  std::optional<double> camera_height_m;
  double plate_standard_length_m = 0.52;
  std::map<std::string, double> plate_height_db;
  double fps = 30.0;

  void validate() const {
    if (!(plate_standard_length_m > 0.0)) fail(ErrorKind::ConfigurationError, "plate_standard_length_m must be positive");
    if (!(fps > 0.0)) fail(ErrorKind::ConfigurationError, "fps must be positive");
    if (camera_height_m && !(*camera_height_m > 0.0)) fail(ErrorKind::ConfigurationError, "camera_height_m must be positive");
    for (const auto& [text, h] : plate_height_db) {
      if (!(h >= 0.0) || (camera_height_m && !(h < *camera_height_m)))
        fail(ErrorKind::ConfigurationError, "plate height for '" + text + "' outside [0, camera_height_m)");
    }
  }
};

enum class PairMode { All, Consecutive };

struct SpeedEstimate {
  double s_projected = 0.0;  // m/s
  std::optional<double> rho_m1, rho_m2;
  std::optional<double> v_m1, v_m2;  // m/s
  std::size_t n_pairs = 0;
  std::size_t n_frames = 0;
  std::string plate_text;
  std::vector<std::string> flags;
};

struct PairwiseSpeeds {
  std::vector<double> speeds;
  std::vector<int> excluded_frames;  // frames whose corner projects to infinity
};

inline void validate_track(const TrackSequence& track) {
  if (track.frames.size() < 2) fail(ErrorKind::InsufficientData, "track needs at least 2 frames");
  for (const auto& f : track.frames) {
    if (!std::isfinite(f.timestamp) || !f.corner.finite()) fail(ErrorKind::InvalidInput, "non-finite track sample");
  }
}

/// Projected speed for every unordered frame pair (or consecutive pairs only).
inline PairwiseSpeeds pairwise_projected_speeds(const TrackSequence& track, const Homography& h_world_to_image,
                                                PairMode mode = PairMode::All) {
  if (track.frames.size() < 2) fail(ErrorKind::InsufficientData, "track needs at least 2 frames");
  const Homography to_road = invert(h_world_to_image);
  struct Usable {
    double t;
    Point2 q;
  };
  std::vector<Usable> usable;
  PairwiseSpeeds out;
  for (const auto& f : track.frames) {
    try {
      usable.push_back({f.timestamp, apply(to_road, f.corner)});
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PointAtInfinity) throw;
      out.excluded_frames.push_back(f.frame);
    }
  }
  if (usable.size() < 2) fail(ErrorKind::InsufficientData, "fewer than 2 usable frames");

  auto speed = [](const Usable& a, const Usable& b) {
    const double dt = std::abs(b.t - a.t);
    if (!(dt > 0.0)) fail(ErrorKind::InvalidInput, "duplicate timestamps in track");
    return distance(a.q, b.q) / dt;
  };
  if (mode == PairMode::All) {
    out.speeds.reserve(usable.size() * (usable.size() - 1) / 2);
    for (std::size_t i = 0; i < usable.size(); ++i)
      for (std::size_t j = i + 1; j < usable.size(); ++j) out.speeds.push_back(speed(usable[i], usable[j]));
  } else {
    std::sort(usable.begin(), usable.end(), [](const Usable& a, const Usable& b) { return a.t < b.t; });
    for (std::size_t i = 0; i + 1 < usable.size(); ++i) out.speeds.push_back(speed(usable[i], usable[i + 1]));
  }
  return out;
}

/// Standard median; an even count averages the two middle values.
inline double robust_median(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InsufficientData, "median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// rho = (H_c - h) / H_c.
inline double rho_from_height(double camera_height, double h) {
  if (!(camera_height > 0.0)) fail(ErrorKind::InvalidGeometry, "camera height must be positive");
  if (!(h >= 0.0) || !(h < camera_height)) fail(ErrorKind::InvalidGeometry, "plate height must satisfy 0 <= h < camera height");
  return (camera_height - h) / camera_height;
}

inline constexpr double kMinProjectedLength = 1e-6;  // m

/// Median over frames of l_standard / L_i, L_i the road-plane length of the
/// projected top edge.
inline double rho_from_plate_length(const TrackSequence& track, const Homography& h_world_to_image,
                                    double l_standard) {
  if (!(l_standard > 0.0)) fail(ErrorKind::InvalidGeometry, "standard plate length must be positive");
  const Homography to_road = invert(h_world_to_image);
  std::vector<double> ratios;
  for (const auto& f : track.frames) {
    if (!f.edge_left.finite() || !f.edge_right.finite() || f.edge_left == f.edge_right) continue;
    try {
      const double len = distance(apply(to_road, f.edge_left), apply(to_road, f.edge_right));
      if (len > kMinProjectedLength) ratios.push_back(l_standard / len);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PointAtInfinity) throw;
    }
  }
  if (ratios.empty()) fail(ErrorKind::InsufficientData, "no frame with a usable plate edge");
  return robust_median(ratios);
}

inline bool has_edges(const TrackSequence& track) {
  return std::any_of(track.frames.begin(), track.frames.end(), [](const TrackFrame& f) {
    return f.edge_left.finite() && f.edge_right.finite() && !(f.edge_left == f.edge_right);
  });
}

/// s = median of pairwise projected speeds; v = rho * s by Method 1 (camera
/// height + database plate height) and/or Method 2 (plate foreshortening).
inline SpeedEstimate estimate_speed(const TrackSequence& track, const SiteConfig& config,
                                    PairMode mode = PairMode::All) {
  config.validate();
  validate_track(track);
  SpeedEstimate est;
  est.plate_text = track.plate_text;
  est.n_frames = track.frames.size();

  const auto db = config.plate_height_db.find(track.plate_text);
  const bool m1 = config.camera_height_m && db != config.plate_height_db.end();
  const bool m2 = has_edges(track);
  if (!m1 && !m2) fail(ErrorKind::ConfigurationError, "neither correction method is computable for this track");

  const PairwiseSpeeds pairs = pairwise_projected_speeds(track, config.H_world_to_image, mode);
  est.s_projected = robust_median(pairs.speeds);
  est.n_pairs = pairs.speeds.size();
  if (!pairs.excluded_frames.empty())
    est.flags.push_back("excluded_frames=" + std::to_string(pairs.excluded_frames.size()));

  if (m1) {
    est.rho_m1 = rho_from_height(*config.camera_height_m, db->second);
    est.v_m1 = *est.rho_m1 * est.s_projected;
  }
  if (m2) {
    try {
      est.rho_m2 = rho_from_plate_length(track, config.H_world_to_image, config.plate_standard_length_m);
      est.v_m2 = *est.rho_m2 * est.s_projected;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientData || !m1) throw;
      est.flags.push_back("no_edge");
    }
  }
  return est;
}

inline double mps_to_kmh(double v) { return v * 3.6; }
inline double kmh_to_mps(double v) { return v / 3.6; }

}  // namespace roadspeed
