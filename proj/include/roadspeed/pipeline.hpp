#pragma once

// File-level orchestration behind the CLI: JSON configs and models, CSV
// reports, and the calibrate / simulate / run / train commands.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadspeed/corpus.hpp"
#include "roadspeed/detection.hpp"
#include "roadspeed/errors.hpp"
#include "roadspeed/geometry.hpp"
#include "roadspeed/image.hpp"
#include "roadspeed/ocr.hpp"
#include "roadspeed/simulator.hpp"
#include "roadspeed/speed.hpp"

namespace roadspeed {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// ---- JSON helpers -------------------------------------------------------------------

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorKind::IoError, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::ConfigurationError, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline Point2 point_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorKind::ConfigurationError, "expected a 2-element [x, y] array");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Json to_json(Point2 p) { return Json::array({p.x, p.y}); }
inline Json to_json(Rgb c) { return Json::array({c.r, c.g, c.b}); }

inline Rgb rgb_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::ConfigurationError, "expected an [r, g, b] array");
  auto ch = [](const Json& v) {
    const int x = v.get<int>();
    if (x < 0 || x > 255) fail(ErrorKind::ConfigurationError, "color channel outside [0, 255]");
    return static_cast<std::uint8_t>(x);
  };
  return {ch(j[0]), ch(j[1]), ch(j[2])};
}

inline Json to_json(const Homography& h) {
  const auto m = h.row_major();
  return Json(std::vector<double>(m.begin(), m.end()));
}

inline Homography homography_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::ConfigurationError, "H_world_to_image must be a 9-element array");
  const auto v = j.get<std::vector<double>>();
  try {
    return Homography::from_row_major(v);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigurationError, std::string("invalid H_world_to_image: ") + e.what());
  }
}

// ---- scenarios -----------------------------------------------------------------------

inline Json to_json(const CameraModel& c) {
  std::vector<double> r;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"R", r},
          {"t", {c.translation.x(), c.translation.y(), c.translation.z()}},
          {"width", c.width}, {"height", c.height}};
}

inline CameraModel camera_from_json(const Json& j) {
  if (j.contains("look_at")) {
    const Json& l = j.at("look_at");
    const auto eye = l.at("eye").get<std::vector<double>>(), target = l.at("target").get<std::vector<double>>();
    if (eye.size() != 3 || target.size() != 3) fail(ErrorKind::ConfigurationError, "look_at eye/target need 3 values");
    return CameraModel::look_at({eye[0], eye[1], eye[2]}, {target[0], target[1], target[2]},
                                l.at("focal_px").get<double>(), get_or(l, "width", 1280), get_or(l, "height", 960));
  }
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  const auto r = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) fail(ErrorKind::ConfigurationError, "camera R needs 9 values and t 3");
  for (int i = 0; i < 9; ++i) c.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  c.translation = {t[0], t[1], t[2]};
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

inline Json to_json(const VehicleSpec& v) {
  return {{"plate_text", v.plate_text},         {"plate_height_m", v.plate_height_m},
          {"plate_length_m", v.plate_length_m}, {"plate_vertical_m", v.plate_vertical_m},
          {"plate_tilt_deg", v.plate_tilt_deg}, {"path_start", to_json(v.path_start)},
          {"path_direction", to_json(v.path_direction)}, {"speed_mps", v.speed_mps},
          {"plate_color", to_json(v.plate_color)}, {"body_color", to_json(v.body_color)},
          {"enter_frame", v.enter_frame},       {"rear_plate", v.rear_plate}};
}

inline void apply_vehicle_fields(VehicleSpec& v, const Json& j) {
  v.plate_text = get_or(j, "plate_text", v.plate_text);
  v.plate_height_m = get_or(j, "plate_height_m", v.plate_height_m);
  v.plate_length_m = get_or(j, "plate_length_m", v.plate_length_m);
  v.plate_vertical_m = get_or(j, "plate_vertical_m", v.plate_vertical_m);
  v.plate_tilt_deg = get_or(j, "plate_tilt_deg", v.plate_tilt_deg);
  if (j.contains("path_start")) v.path_start = point_from_json(j.at("path_start"));
  if (j.contains("path_direction")) v.path_direction = point_from_json(j.at("path_direction"));
  v.speed_mps = get_or(j, "speed_mps", v.speed_mps);
  if (j.contains("speed_kmh")) v.speed_mps = kmh_to_mps(j.at("speed_kmh").get<double>());
  if (j.contains("plate_color")) v.plate_color = rgb_from_json(j.at("plate_color"));
  if (j.contains("body_color")) v.body_color = rgb_from_json(j.at("body_color"));
  v.enter_frame = get_or(j, "enter_frame", v.enter_frame);
  v.rear_plate = get_or(j, "rear_plate", v.rear_plate);
}

inline Json to_json(const ScenarioSpec& s) {
  Json markers = Json::array(), vehicles = Json::array();
  for (const auto& m : s.markers) markers.push_back(to_json(m));
  for (const auto& v : s.vehicles) vehicles.push_back(to_json(v));
  return {{"camera", to_json(s.camera)},     {"markers", markers},
          {"vehicles", vehicles},            {"fps", s.fps},
          {"n_frames", s.n_frames},          {"noise_px", s.noise_px},
          {"seed", s.seed},                  {"road_color", to_json(s.road_color)},
          {"sky_color", to_json(s.sky_color)}, {"marker_color", to_json(s.marker_color)},
          {"ink_color", to_json(s.ink_color)}, {"texture_noise", s.texture_noise},
          {"marker_arm_m", s.marker_arm_m},  {"marker_width_m", s.marker_width_m},
          {"supersample", s.supersample}};
}

inline ObliqueScenarioParams oblique_params_from_json(const Json& j) {
  ObliqueScenarioParams p;
  p.camera_height_m = get_or(j, "camera_height_m", p.camera_height_m);
  p.plate_height_m = get_or(j, "plate_height_m", p.plate_height_m);
  p.speed_mps = get_or(j, "speed_mps", p.speed_mps);
  if (j.contains("speed_kmh")) p.speed_mps = kmh_to_mps(j.at("speed_kmh").get<double>());
  p.lateral_offset_m = get_or(j, "lateral_offset_m", p.lateral_offset_m);
  p.fps = get_or(j, "fps", p.fps);
  p.width = get_or(j, "width", p.width);
  p.height = get_or(j, "height", p.height);
  p.focal_px = get_or(j, "focal_px", p.focal_px);
  p.travel_m = get_or(j, "travel_m", p.travel_m);
  p.plate_tilt_deg = get_or(j, "plate_tilt_deg", p.plate_tilt_deg);
  p.noise_px = get_or(j, "noise_px", p.noise_px);
  p.enter_frame = get_or(j, "enter_frame", p.enter_frame);
  p.static_frames = get_or(j, "static_frames", p.static_frames);
  p.plate_text = get_or(j, "plate_text", p.plate_text);
  p.seed = get_or(j, "seed", p.seed);
  return p;
}

/// Scenario from JSON. Starts from the default scene (or an `oblique`
/// builder block), then applies explicit camera / markers / vehicles and
/// flat single-vehicle fields.
inline ScenarioSpec scenario_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::ConfigurationError, "scenario must be a JSON object");
  ScenarioSpec s = j.contains("oblique") ? make_oblique_scenario(oblique_params_from_json(j.at("oblique")))
                                         : default_scenario();
  try {
    if (j.contains("camera")) s.camera = camera_from_json(j.at("camera"));
    if (j.contains("markers")) {
      s.markers.clear();
      for (const auto& m : j.at("markers")) s.markers.push_back(point_from_json(m));
    }
    if (j.contains("vehicles")) {
      s.vehicles.clear();
      for (const auto& v : j.at("vehicles")) {
        VehicleSpec vs;
        apply_vehicle_fields(vs, v);
        s.vehicles.push_back(vs);
      }
    }
    if (!s.vehicles.empty()) apply_vehicle_fields(s.vehicles.front(), j);
    s.fps = get_or(j, "fps", s.fps);
    s.n_frames = get_or(j, "n_frames", s.n_frames);
    s.noise_px = get_or(j, "noise_px", s.noise_px);
    s.seed = get_or(j, "seed", s.seed);
    if (j.contains("road_color")) s.road_color = rgb_from_json(j.at("road_color"));
    if (j.contains("sky_color")) s.sky_color = rgb_from_json(j.at("sky_color"));
    if (j.contains("marker_color")) s.marker_color = rgb_from_json(j.at("marker_color"));
    if (j.contains("ink_color")) s.ink_color = rgb_from_json(j.at("ink_color"));
    s.texture_noise = get_or(j, "texture_noise", s.texture_noise);
    s.marker_arm_m = get_or(j, "marker_arm_m", s.marker_arm_m);
    s.marker_width_m = get_or(j, "marker_width_m", s.marker_width_m);
    s.supersample = get_or(j, "supersample", s.supersample);
  } catch (const Json::exception& e) {
    fail(ErrorKind::ConfigurationError, std::string("bad scenario: ") + e.what());
  }
  s.validate();
  return s;
}

// ---- models ----------------------------------------------------------------------------

inline Json to_json(const LinearClassifier& c) { return {{"kind", "plate_classifier"}, {"w", c.w}, {"b", c.b}}; }

inline LinearClassifier classifier_from_json(const Json& j) {
  try {
    LinearClassifier c{j.at("w").get<std::vector<double>>(), j.at("b").get<double>()};
    if (c.w.size() != static_cast<std::size_t>(kCropSize)) fail(ErrorKind::ShapeError, "plate model must have 4752 weights");
    return c;
  } catch (const Json::exception& e) {
    fail(ErrorKind::ConfigurationError, std::string("bad plate model: ") + e.what());
  }
}

inline Json to_json(const Mlp& net) {
  Json weights = Json::array(), biases = Json::array();
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < net.weights[k].rows(); ++r)
      for (Eigen::Index c = 0; c < net.weights[k].cols(); ++c) w.push_back(net.weights[k](r, c));
    weights.push_back(w);
    biases.push_back(std::vector<double>(net.biases[k].data(), net.biases[k].data() + net.biases[k].size()));
  }
  return {{"layers", net.layers}, {"weights", weights}, {"biases", biases}, {"alphabet", net.alphabet}};
}

inline Mlp mlp_from_json(const Json& j) {
  try {
    Mlp net = Mlp::zeros(j.at("layers").get<std::vector<int>>(), get_or<std::string>(j, "alphabet", ""));
    const Json& w = j.at("weights");
    const Json& b = j.at("biases");
    if (w.size() != net.weights.size() || b.size() != net.biases.size())
      fail(ErrorKind::ShapeError, "OCR model layer count mismatch");
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
      const auto wv = w[k].get<std::vector<double>>();
      const auto bv = b[k].get<std::vector<double>>();
      if (wv.size() != static_cast<std::size_t>(net.weights[k].size()) ||
          bv.size() != static_cast<std::size_t>(net.biases[k].size()))
        fail(ErrorKind::ShapeError, "OCR model weight shape mismatch");
      for (Eigen::Index r = 0; r < net.weights[k].rows(); ++r)
        for (Eigen::Index c = 0; c < net.weights[k].cols(); ++c)
          net.weights[k](r, c) = wv[static_cast<std::size_t>(r * net.weights[k].cols() + c)];
      for (std::size_t i = 0; i < bv.size(); ++i) net.biases[k](static_cast<Eigen::Index>(i)) = bv[i];
    }
    net.validate();
    return net;
  } catch (const Json::exception& e) {
    fail(ErrorKind::ConfigurationError, std::string("bad OCR model: ") + e.what());
  }
}

// ---- calibration ----------------------------------------------------------------------------

struct MarkerFile {
  std::vector<Correspondence> markers;
  std::optional<double> camera_height_m;
};

/// Either a bare array of {image, world} objects or {markers: [...], camera_height_m}.
inline MarkerFile markers_from_json(const Json& j) {
  MarkerFile out;
  const Json* arr = &j;
  if (j.is_object()) {
    if (!j.contains("markers")) fail(ErrorKind::ConfigurationError, "marker file needs a 'markers' array");
    arr = &j.at("markers");
    if (j.contains("camera_height_m")) out.camera_height_m = j.at("camera_height_m").get<double>();
  }
  if (!arr->is_array()) fail(ErrorKind::ConfigurationError, "markers must be an array");
  for (const auto& m : *arr) {
    if (!m.contains("image") || !m.contains("world")) fail(ErrorKind::ConfigurationError, "each marker needs image and world");
    out.markers.push_back({point_from_json(m.at("image")), point_from_json(m.at("world"))});
  }
  return out;
}

inline Json markers_to_json(const std::vector<Correspondence>& markers, std::optional<double> camera_height) {
  Json arr = Json::array();
  for (const auto& c : markers) arr.push_back({{"image", to_json(c.image)}, {"world", to_json(c.world)}});
  Json j{{"markers", arr}};
  if (camera_height) j["camera_height_m"] = *camera_height;
  return j;
}

inline constexpr double kResidualWarningPx = 2.0;

struct CalibrationResult {
  Homography H;
  std::vector<double> residuals_px;
  double rms_px = 0.0;
  bool high_residual = false;
  std::optional<double> camera_height_m;
};

inline CalibrationResult calibrate(const MarkerFile& mf) {
  CalibrationResult r;
  r.H = estimate_homography(mf.markers);
  r.residuals_px = reprojection_errors(r.H, mf.markers);
  r.rms_px = rms(r.residuals_px);
  r.high_residual = r.rms_px > kResidualWarningPx;
  r.camera_height_m = mf.camera_height_m;
  return r;
}

inline Json to_json(const CalibrationResult& r) {
  Json j{{"H_world_to_image", to_json(r.H)}, {"residuals_px", r.residuals_px}, {"rms_px", r.rms_px},
         {"flags", r.high_residual ? Json::array({"high_residual"}) : Json::array()}};
  if (r.camera_height_m) j["camera_height_m"] = *r.camera_height_m;
  return j;
}

/// markers.json -> homography.json. Residual RMS above 2 px is flagged, not fatal.
inline CalibrationResult cmd_calibrate(const fs::path& markers_path, const fs::path& out_path) {
  const CalibrationResult r = calibrate(markers_from_json(read_json(markers_path)));
  write_json(out_path, to_json(r));
  if (r.high_residual) std::cerr << "warning: calibration residual RMS " << r.rms_px << " px exceeds 2 px\n";
  return r;
}

// ---- simulate ---------------------------------------------------------------------------------

inline std::string frame_name(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.ppm", idx);
  return buf;
}

inline std::string fixed(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline std::string track_csv(const SyntheticTrack& t) {
  std::ostringstream out;
  out << "frame,timestamp_s,px_x,px_y,world_x_m,world_y_m,edge_x0,edge_y0,edge_x1,edge_y1\n";
  for (const auto& s : t.samples) {
    out << s.frame << ',' << fixed(s.timestamp) << ',' << fixed(s.pixel.x) << ',' << fixed(s.pixel.y) << ','
        << fixed(s.world.x()) << ',' << fixed(s.world.y()) << ',' << fixed(s.edge_left.x) << ','
        << fixed(s.edge_left.y) << ',' << fixed(s.edge_right.x) << ',' << fixed(s.edge_right.y) << '\n';
  }
  return out.str();
}

struct SimulationResult {
  ScenarioSpec spec;
  std::vector<SyntheticTrack> tracks;  // one per vehicle
  Homography H;
};

/// Frames, background, per-vehicle track CSV (track.csv for the first
/// vehicle, track_<i>.csv for the rest), markers.json and ground_truth.json.
inline SimulationResult cmd_simulate(const ScenarioSpec& spec, const fs::path& outdir) {
  spec.validate();
  fs::create_directories(outdir);
  SimulationResult res{spec, {}, ground_truth_homography(spec)};
  const RgbImage background = render_background(spec);
  write_ppm(outdir / "background.ppm", background);
  for (int k = 0; k < spec.n_frames; ++k) write_ppm(outdir / frame_name(k), render_frame(spec, k));

  Json vehicles = Json::array();
  const double hc = spec.camera.height_above_road();
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    res.tracks.push_back(generate_track(spec, i));
    write_text(outdir / (i == 0 ? std::string("track.csv") : "track_" + std::to_string(i) + ".csv"),
               track_csv(res.tracks.back()));
    const auto& v = spec.vehicles[i];
    vehicles.push_back({{"plate_text", v.plate_text},
                        {"speed_mps", v.speed_mps},
                        {"speed_kmh", mps_to_kmh(v.speed_mps)},
                        {"plate_height_m", v.plate_height_m},
                        {"rho", rho_from_height(hc, v.plate_height_m)},
                        {"expected_projected_speed_mps", expected_projected_speed(v.speed_mps, hc, v.plate_height_m)},
                        {"track_frames", res.tracks.back().samples.size()},
                        {"truncated", res.tracks.back().truncated}});
  }
  Json gt{{"camera_height_m", hc},
          {"H_world_to_image", to_json(res.H)},
          {"fps", spec.fps},
          {"n_frames", spec.n_frames},
          {"vehicles", vehicles},
          {"scenario", to_json(spec)}};
  if (!spec.vehicles.empty()) {
    gt["speed_mps"] = spec.vehicles[0].speed_mps;
    gt["speed_kmh"] = mps_to_kmh(spec.vehicles[0].speed_mps);
  }
  write_json(outdir / "ground_truth.json", gt);
  write_json(outdir / "markers.json", markers_to_json(marker_correspondences(spec), hc));
  return res;
}

// ---- run ------------------------------------------------------------------------------------------

struct RunConfig {
  SiteConfig site;
  DetectionParams detection;
  int min_track_frames = 2;
  std::optional<fs::path> plate_model;
  std::optional<fs::path> ocr_model;
  std::optional<fs::path> background;
  std::optional<fs::path> markers;  // enables homography refresh
  std::vector<fs::path> frames;
  int homography_refresh_every_n_frames = 0;
  PairMode pairs = PairMode::All;
  std::uint64_t seed = 1;
};

inline Corner corner_from_string(const std::string& s) {
  if (s == "UL") return Corner::UL;
  if (s == "UR") return Corner::UR;
  if (s == "LL") return Corner::LL;
  if (s == "LR") return Corner::LR;
  fail(ErrorKind::ConfigurationError, "corner must be one of UL, UR, LL, LR");
}

/// Run configuration; relative paths resolve against `base_dir`. A
/// calibration is mandatory (file path or inline H_world_to_image).
inline RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) fail(ErrorKind::ConfigurationError, "run config must be a JSON object");
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  RunConfig c;
  const Json site = j.value("site", Json::object());
  if (site.contains("H_world_to_image")) {
    c.site.H_world_to_image = homography_from_json(site.at("H_world_to_image"));
  } else if (site.contains("calibration")) {
    const fs::path cal = resolve(site.at("calibration").get<std::string>());
    if (!fs::exists(cal)) fail(ErrorKind::ConfigurationError, "calibration file not found: " + cal.string());
    const Json cj = read_json(cal);
    if (!cj.contains("H_world_to_image")) fail(ErrorKind::ConfigurationError, "calibration lacks H_world_to_image");
    c.site.H_world_to_image = homography_from_json(cj.at("H_world_to_image"));
    if (cj.contains("camera_height_m")) c.site.camera_height_m = cj.at("camera_height_m").get<double>();
  } else {
    fail(ErrorKind::ConfigurationError, "missing calibration: set site.calibration or site.H_world_to_image");
  }
  if (site.contains("camera_height_m")) {
    if (site.at("camera_height_m").is_null())
      c.site.camera_height_m.reset();
    else
      c.site.camera_height_m = site.at("camera_height_m").get<double>();
  }
  c.site.plate_standard_length_m = get_or(site, "plate_standard_length_m", c.site.plate_standard_length_m);
  c.site.fps = get_or(site, "fps", c.site.fps);
  if (site.contains("plate_height_db")) {
    const Json& db = site.at("plate_height_db");
    if (db.is_string()) {
      const Json f = read_json(resolve(db.get<std::string>()));
      c.site.plate_height_db = f.get<std::map<std::string, double>>();
    } else {
      c.site.plate_height_db = db.get<std::map<std::string, double>>();
    }
  }
  c.site.validate();

  const Json det = j.value("detection", Json::object());
  if (det.contains("hsv")) {
    const Json& h = det.at("hsv");
    c.detection.hsv.hue_lo = get_or(h, "hue_lo", c.detection.hsv.hue_lo);
    c.detection.hsv.hue_hi = get_or(h, "hue_hi", c.detection.hsv.hue_hi);
    c.detection.hsv.sat_lo = get_or(h, "sat_lo", c.detection.hsv.sat_lo);
    c.detection.hsv.val_lo = get_or(h, "val_lo", c.detection.hsv.val_lo);
  }
  c.detection.morph_radius = get_or(det, "morph_radius", c.detection.morph_radius);
  c.detection.min_area = get_or(det, "min_area", c.detection.min_area);
  c.detection.corner_window = get_or(det, "corner_window", c.detection.corner_window);
  if (det.contains("corner")) c.detection.corner = corner_from_string(det.at("corner").get<std::string>());
  c.detection.gating_radius_px = get_or(det, "gating_radius_px", c.detection.gating_radius_px);
  c.detection.max_missed_frames = get_or(det, "max_missed_frames", c.detection.max_missed_frames);
  c.detection.diff_threshold = get_or(det, "diff_threshold", c.detection.diff_threshold);
  c.detection.background_alpha = get_or(det, "background_alpha", c.detection.background_alpha);
  c.min_track_frames = get_or(det, "min_track_frames", c.min_track_frames);
  c.detection.validate();
  if (c.min_track_frames < 2) fail(ErrorKind::ConfigurationError, "min_track_frames must be >= 2");

  auto opt_path = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const fs::path p = resolve(j.at(key).get<std::string>());
    if (!fs::exists(p)) fail(ErrorKind::ConfigurationError, std::string(key) + " not found: " + p.string());
    return p;
  };
  c.plate_model = opt_path("plate_model");
  c.ocr_model = opt_path("ocr_model");
  c.background = opt_path("background");
  c.markers = opt_path("markers");
  if (j.contains("frames"))
    for (const auto& f : j.at("frames")) c.frames.push_back(resolve(f.get<std::string>()));
  c.homography_refresh_every_n_frames = get_or(j, "homography_refresh_every_n_frames", 0);
  if (c.homography_refresh_every_n_frames < 0)
    fail(ErrorKind::ConfigurationError, "homography_refresh_every_n_frames must be >= 0");
  if (c.homography_refresh_every_n_frames > 0 && !c.markers)
    fail(ErrorKind::ConfigurationError, "homography refresh needs a markers file");
  const std::string pairs = j.value("speed", Json::object()).value("pairs", std::string("all"));
  if (pairs == "all")
    c.pairs = PairMode::All;
  else if (pairs == "consecutive")
    c.pairs = PairMode::Consecutive;
  else
    fail(ErrorKind::ConfigurationError, "speed.pairs must be 'all' or 'consecutive'");
  c.seed = get_or(j, "seed", c.seed);
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

inline bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".ppm" || ext == ".pgm";
}

/// Frame files: directories expand to their PPM/PGM files (background*
/// excluded) sorted by name; explicit files keep their order.
inline std::vector<fs::path> list_frames(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (!e.is_regular_file() || !is_image_path(e.path())) continue;
        if (e.path().stem().string().rfind("background", 0) == 0) continue;
        found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(in);
    }
  }
  return out;
}

/// Trailing integer of the file stem (frame_0012 -> 12), else `fallback`.
inline int frame_index_from_path(const fs::path& p, int fallback) {
  const std::string stem = p.stem().string();
  std::size_t i = stem.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(stem[i - 1]))) --i;
  if (i == stem.size() || stem.size() - i > 9) return fallback;
  return std::stoi(stem.substr(i));
}

/// Centroid of bright (marker-white) pixels within `radius` of `approx`.
inline std::optional<Point2> locate_marker(const FloatImage& gray, Point2 approx, int radius = 12,
                                           float min_level = 220.0f) {
  const int cx = static_cast<int>(std::lround(approx.x)), cy = static_cast<int>(std::lround(approx.y));
  double sx = 0, sy = 0, n = 0;
  for (int y = cy - radius; y <= cy + radius; ++y)
    for (int x = cx - radius; x <= cx + radius; ++x) {
      if (!gray.contains(x, y) || gray(x, y) < min_level) continue;
      sx += x;
      sy += y;
      n += 1;
    }
  if (n < 10) return std::nullopt;
  return Point2{sx / n, sy / n};
}

struct ReportRow {
  int track_id = 0;
  std::string plate_text;
  std::size_t n_frames = 0;
  std::optional<SpeedEstimate> estimate;
  std::vector<std::string> flags;
};

struct RunResult {
  std::vector<ReportRow> rows;
  std::vector<TrackSequence> tracks;
  std::size_t frames_read = 0, frames_skipped = 0, active_frames = 0, short_tracks_dropped = 0;
};

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "track_id,plate_text,n_frames,n_pairs,s_projected_mps,rho_m1,rho_m2,v_m1_kmh,v_m2_kmh,flags\n";
  auto opt = [](const std::optional<double>& v, double scale = 1.0) { return v ? fixed(*v * scale) : std::string(); };
  for (const auto& r : rows) {
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
    out << r.track_id << ',' << r.plate_text << ',' << r.n_frames << ',';
    if (r.estimate) {
      const auto& e = *r.estimate;
      out << e.n_pairs << ',' << fixed(e.s_projected) << ',' << opt(e.rho_m1) << ',' << opt(e.rho_m2) << ','
          << opt(e.v_m1, 3.6) << ',' << opt(e.v_m2, 3.6) << ',';
    } else {
      out << ",,,,,,";
    }
    out << flags << '\n';
  }
  return out.str();
}

inline constexpr const char* kUnknownPlate = "UNKNOWN";

/// Activity gate -> segmentation -> classification -> corners -> OCR ->
/// tracking -> speed. One row per closed track of at least min_track_frames.
inline RunResult run_pipeline(const RunConfig& cfg, const std::vector<fs::path>& frame_paths) {
  RunResult res;
  std::optional<LinearClassifier> clf;
  std::optional<Mlp> ocr;
  if (cfg.plate_model) clf = classifier_from_json(read_json(*cfg.plate_model));
  if (cfg.ocr_model) ocr = mlp_from_json(read_json(*cfg.ocr_model));
  std::optional<MarkerFile> markers;
  if (cfg.markers) markers = markers_from_json(read_json(*cfg.markers));

  std::optional<BackgroundModel> bg;
  if (cfg.background)
    bg = BackgroundModel::from_frame(read_pnm(*cfg.background), cfg.detection.background_alpha, cfg.detection.diff_threshold);

  // Homography in effect from a frame index onward.
  std::vector<std::pair<int, Homography>> h_history{{std::numeric_limits<int>::min(), cfg.site.H_world_to_image}};
  std::vector<FrameObservations> observations;
  int position = 0;
  for (const auto& path : frame_paths) {
    const int idx = frame_index_from_path(path, position++);
    RgbImage frame;
    try {
      frame = read_pnm(path);
    } catch (const Error& e) {
      std::cerr << "warning: skipping frame " << path.string() << ": " << e.what() << "\n";
      ++res.frames_skipped;
      continue;
    }
    ++res.frames_read;
    if (!bg) bg = BackgroundModel::from_frame(frame, cfg.detection.background_alpha, cfg.detection.diff_threshold);
    bool active = false;
    try {
      active = is_active_frame(*bg, frame);
    } catch (const Error& e) {
      std::cerr << "warning: skipping frame " << path.string() << ": " << e.what() << "\n";
      ++res.frames_skipped;
      continue;
    }
    FrameObservations fo{idx, idx / cfg.site.fps, {}};
    if (active) {
      ++res.active_frames;
      for (auto& det : detect_plates(frame, cfg.detection, clf ? &*clf : nullptr)) {
        Observation o{det.corner, det.edge_left, det.edge_right, {}};
        if (ocr) {
          try {
            o.text = read_plate(det.crop, *ocr).text;
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyPlate) throw;
          }
        }
        fo.observations.push_back(std::move(o));
      }
    } else if (cfg.homography_refresh_every_n_frames > 0 && markers &&
               idx % cfg.homography_refresh_every_n_frames == 0) {
      const FloatImage gray = to_gray_float(frame);
      const Homography& current = h_history.back().second;
      std::vector<Correspondence> fresh;
      for (const auto& m : markers->markers)
        if (auto p = locate_marker(gray, apply(current, m.world))) fresh.push_back({*p, m.world});
      if (fresh.size() == markers->markers.size()) {
        try {
          h_history.emplace_back(idx, estimate_homography(fresh));
        } catch (const Error& e) {
          std::cerr << "warning: homography refresh failed at frame " << idx << ": " << e.what() << "\n";
        }
      }
    }
    observations.push_back(std::move(fo));
  }

  AssociationParams ap{cfg.detection.gating_radius_px, cfg.detection.max_missed_frames};
  for (auto& track : associate_tracks(observations, ap)) {
    if (static_cast<int>(track.frames.size()) < cfg.min_track_frames) {
      ++res.short_tracks_dropped;
      continue;
    }
    ReportRow row;
    row.track_id = track.track_id;
    row.n_frames = track.frames.size();
    if (track.plate_text.empty()) {
      track.plate_text = kUnknownPlate;
      row.flags.push_back(ocr ? "ocr_unread" : "no_ocr_model");
    }
    row.plate_text = track.plate_text;
    SiteConfig site = cfg.site;
    const int first = track.frames.front().frame;
    for (const auto& [from, h] : h_history)
      if (from <= first) site.H_world_to_image = h;
    try {
      row.estimate = estimate_speed(track, site, cfg.pairs);
      row.flags.insert(row.flags.end(), row.estimate->flags.begin(), row.estimate->flags.end());
      if (!row.estimate->v_m1) row.flags.push_back("no_method1");
    } catch (const Error& e) {
      row.flags.push_back(std::string("error=") + std::string(to_string(e.kind())));
    }
    res.rows.push_back(std::move(row));
    res.tracks.push_back(std::move(track));
  }
  return res;
}

inline Json tracks_to_json(const RunResult& r) {
  Json tracks = Json::array();
  for (const auto& t : r.tracks) {
    Json frames = Json::array();
    for (const auto& f : t.frames)
      frames.push_back({{"frame", f.frame}, {"timestamp_s", f.timestamp}, {"corner", to_json(f.corner)},
                        {"edge_left", to_json(f.edge_left)}, {"edge_right", to_json(f.edge_right)}});
    tracks.push_back({{"track_id", t.track_id}, {"plate_text", t.plate_text}, {"frames", frames}});
  }
  return {{"frames_read", r.frames_read},           {"frames_skipped", r.frames_skipped},
          {"active_frames", r.active_frames},       {"short_tracks_dropped", r.short_tracks_dropped},
          {"tracks", tracks}};
}

/// Writes report.csv and tracks.json into `outdir`.
inline RunResult cmd_run(const RunConfig& cfg, const std::vector<fs::path>& inputs, const fs::path& outdir) {
  const auto paths = list_frames(inputs.empty() ? cfg.frames : inputs);
  RunResult r = run_pipeline(cfg, paths);
  fs::create_directories(outdir);
  write_text(outdir / "report.csv", report_csv(r.rows));
  write_json(outdir / "tracks.json", tracks_to_json(r));
  return r;
}

// ---- train ------------------------------------------------------------------------------------------

struct TrainConfig {
  std::string kind = "ocr";  // "plate" or "ocr"
  fs::path corpus;
  double holdout_fraction = 0.5;
  std::string alphabet = kDigits;
  ClassifierOptions classifier;
  MlpTrainOptions mlp;
  std::optional<PlateCorpusOptions> synth_plates;
  std::optional<int> synth_glyph_plates;     // plate-crop renders
  std::optional<int> synth_rendered_plates;  // plates harvested from rendered frames
};

inline TrainConfig train_config_from_json(const Json& j, const fs::path& base_dir) {
  TrainConfig c;
  c.kind = get_or<std::string>(j, "kind", c.kind);
  if (c.kind != "plate" && c.kind != "ocr") fail(ErrorKind::ConfigurationError, "train kind must be 'plate' or 'ocr'");
  if (!j.contains("corpus")) fail(ErrorKind::ConfigurationError, "train config needs a corpus directory");
  c.corpus = j.at("corpus").get<std::string>();
  if (c.corpus.is_relative()) c.corpus = base_dir / c.corpus;
  c.holdout_fraction = get_or(j, "holdout_fraction", c.kind == "plate" ? 0.5 : 0.25);
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0))
    fail(ErrorKind::ConfigurationError, "holdout_fraction must lie in (0, 1)");
  c.alphabet = get_or(j, "alphabet", c.alphabet);
  if (j.contains("classifier")) {
    c.classifier.lambda = get_or(j.at("classifier"), "lambda", c.classifier.lambda);
    c.classifier.epochs = get_or(j.at("classifier"), "epochs", c.classifier.epochs);
  }
  if (j.contains("mlp")) {
    const Json& m = j.at("mlp");
    c.mlp.hidden = get_or(m, "hidden", c.mlp.hidden);
    c.mlp.epochs = get_or(m, "epochs", c.mlp.epochs);
    c.mlp.lr = get_or(m, "lr", c.mlp.lr);
    c.mlp.batch_size = get_or(m, "batch_size", c.mlp.batch_size);
  }
  if (j.contains("synthesize")) {
    const Json& s = j.at("synthesize");
    if (c.kind == "plate") {
      PlateCorpusOptions p;
      p.n_positive = get_or(s, "n_positive", p.n_positive);
      p.n_negative = get_or(s, "n_negative", p.n_negative);
      c.synth_plates = p;
    } else {
      c.synth_glyph_plates = get_or(s, "n_plates", 400);
      c.synth_rendered_plates = get_or(s, "n_rendered_plates", 400);
    }
  }
  return c;
}

inline std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_path(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string sample_name(const std::string& label, std::size_t n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.pgm", label.c_str(), n);
  return buf;
}

/// Plate corpus layout: <dir>/plate/*.pgm and <dir>/nonplate/*.pgm, each a
/// 144x33 equalized crop.
inline void write_plate_corpus(const fs::path& dir, const std::vector<LabeledCrop>& samples) {
  fs::create_directories(dir / "plate");
  fs::create_directories(dir / "nonplate");
  std::size_t np = 0, nn = 0;
  for (const auto& s : samples) {
    GrayImage img(kCropWidth, kCropHeight);
    std::copy(s.x.begin(), s.x.end(), img.pixels().begin());
    write_pgm(s.is_plate ? dir / "plate" / sample_name("plate", np++) : dir / "nonplate" / sample_name("nonplate", nn++), img);
  }
}

inline std::vector<LabeledCrop> read_plate_corpus(const fs::path& dir) {
  std::vector<LabeledCrop> out;
  for (const auto& [sub, label] : {std::pair{"plate", true}, {"nonplate", false}})
    for (const auto& p : sorted_images(dir / sub)) {
      const GrayImage g = read_pgm(p);
      if (g.width() != kCropWidth || g.height() != kCropHeight)
        fail(ErrorKind::ShapeError, "plate corpus image is not 144x33: " + p.string());
      out.push_back({g.pixels(), label});
    }
  return out;
}

/// Glyph corpus layout: <dir>/<label>_<n>.pgm, 12x16 bitmaps whose greylevel
/// is ink coverage x 255.
inline void write_glyph_corpus(const fs::path& dir, const std::vector<LabeledVector>& samples, const std::string& alphabet) {
  fs::create_directories(dir);
  std::vector<std::size_t> counts(alphabet.size(), 0);
  for (const auto& s : samples) {
    GrayImage img(kGlyphCols, kGlyphRows);
    for (int i = 0; i < kGlyphInputs; ++i) img.pixels()[static_cast<std::size_t>(i)] = to_u8(255.0 * s.x(i));
    const auto label = static_cast<std::size_t>(s.label);
    write_pgm(dir / sample_name(std::string(1, alphabet[label]), counts[label]++), img);
  }
}

inline std::vector<LabeledVector> read_glyph_corpus(const fs::path& dir, const std::string& alphabet) {
  std::vector<LabeledVector> out;
  for (const auto& p : sorted_images(dir)) {
    const std::string stem = p.stem().string();
    const auto us = stem.find('_');
    if (us != 1) fail(ErrorKind::InvalidInput, "glyph file not named <label>_<n>: " + p.string());
    const GrayImage g = read_pgm(p);
    if (g.width() != kGlyphCols || g.height() != kGlyphRows)
      fail(ErrorKind::ShapeError, "glyph image is not 12x16: " + p.string());
    Eigen::VectorXd x(kGlyphInputs);
    for (int i = 0; i < kGlyphInputs; ++i) x(i) = g.pixels()[static_cast<std::size_t>(i)] / 255.0;
    out.push_back({x, alphabet_index(alphabet, stem[0])});
  }
  return out;
}

struct TrainResult {
  std::string kind;
  std::size_t n_train = 0, n_test = 0;
  double metric = 0.0;  // plate: held-out miss rate; ocr: held-out accuracy
  Json model;
};

/// Trains a plate classifier or OCR network from a corpus directory
/// (optionally synthesized first) and writes the model JSON.
inline TrainResult cmd_train(const TrainConfig& cfg, std::uint64_t seed, const fs::path& out_path) {
  TrainResult r;
  r.kind = cfg.kind;
  if (cfg.kind == "plate") {
    if (cfg.synth_plates) write_plate_corpus(cfg.corpus, make_plate_corpus(*cfg.synth_plates, seed));
    auto samples = read_plate_corpus(cfg.corpus);
    if (samples.empty()) fail(ErrorKind::InsufficientData, "empty plate corpus in " + cfg.corpus.string());
    auto [train, test] = split_holdout(std::move(samples), cfg.holdout_fraction, seed);
    ClassifierOptions o = cfg.classifier;
    o.seed = seed;
    const LinearClassifier clf = train_plate_classifier(train, o);
    r.n_train = train.size();
    r.n_test = test.size();
    r.metric = miss_rate(clf, test);
    r.model = to_json(clf);
    r.model["metrics"] = {{"held_out_miss_rate", r.metric}, {"n_train", r.n_train}, {"n_test", r.n_test}};
  } else {
    if (cfg.synth_glyph_plates || cfg.synth_rendered_plates) {
      auto samples = make_glyph_corpus(cfg.synth_glyph_plates.value_or(0), cfg.alphabet, seed).samples;
      const auto rendered = make_rendered_glyph_corpus(cfg.synth_rendered_plates.value_or(0), cfg.alphabet, seed + 1);
      samples.insert(samples.end(), rendered.samples.begin(), rendered.samples.end());
      write_glyph_corpus(cfg.corpus, samples, cfg.alphabet);
    }
    auto samples = read_glyph_corpus(cfg.corpus, cfg.alphabet);
    if (samples.empty()) fail(ErrorKind::InsufficientData, "empty glyph corpus in " + cfg.corpus.string());
    auto [train, test] = split_holdout(std::move(samples), cfg.holdout_fraction, seed);
    MlpTrainOptions o = cfg.mlp;
    o.seed = seed;
    const Mlp net = mlp_train(train, static_cast<int>(cfg.alphabet.size()), o, cfg.alphabet);
    std::size_t correct = 0;
    for (const auto& s : test) correct += mlp_predict(net, s.x) == s.label;
    r.n_train = train.size();
    r.n_test = test.size();
    r.metric = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
    r.model = to_json(net);
    r.model["metrics"] = {{"held_out_accuracy", r.metric}, {"n_train", r.n_train}, {"n_test", r.n_test}};
  }
  write_json(out_path, r.model);
  return r;
}

}  // namespace roadspeed
