#include <gtest/gtest.h>

#include <random>

#include "roadspeed/corpus.hpp"
#include "roadspeed/detection.hpp"
#include "roadspeed/geometry.hpp"
#include "roadspeed/simulator.hpp"

namespace rs = roadspeed;

namespace {

rs::CameraModel top_down() {
  rs::CameraModel cam;
  cam.fx = cam.fy = 1000.0;
  cam.cx = cam.cy = 500.0;
  cam.width = cam.height = 1000;
  // Looking down -z with image x along world x, image y along world -y.
  cam.rotation << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  cam.translation = -cam.rotation * rs::Vec3(0, 0, 5);
  return cam;
}

double max_vertex_error(const rs::OrientedRect& rect, const std::array<rs::Point2, 4>& quad) {
  // Match each rect corner to the nearest quad vertex.
  double worst = 0.0;
  for (const auto& c : rect.corners()) {
    double best = 1e300;
    for (const auto& q : quad) best = std::min(best, rs::distance(c, q));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST(Project, TopDownCamera) {
  const auto cam = top_down();
  cam.validate();
  EXPECT_DOUBLE_EQ(cam.height_above_road(), 5.0);
  const rs::Point2 o = rs::project(cam, {0, 0, 0});
  EXPECT_NEAR(o.x, 500.0, 1e-12);
  EXPECT_NEAR(o.y, 500.0, 1e-12);
  const rs::Point2 p = rs::project(cam, {1, 0, 0});
  EXPECT_NEAR(p.x, 700.0, 1e-12);
  EXPECT_NEAR(p.y, 500.0, 1e-12);
  try {
    rs::project(cam, {0, 0, 6});
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::BehindCamera);
  }
}

TEST(GenerateTrack, StationaryVehicleHasConstantPixels) {
  rs::ObliqueScenarioParams p;
  p.speed_mps = 0.0;
  const auto spec = rs::make_oblique_scenario(p);
  const auto t = rs::generate_track(spec);
  ASSERT_EQ(t.samples.size(), static_cast<std::size_t>(p.static_frames));
  for (const auto& s : t.samples) {
    EXPECT_EQ(s.world, t.samples.front().world);
    EXPECT_EQ(s.pixel, t.samples.front().pixel);
  }
}

TEST(GenerateTrack, DisplacementIsSpeedOverFps) {
  auto spec = rs::default_scenario();
  spec.fps = 25.0;
  spec.n_frames = 50;
  spec.vehicles[0].speed_mps = 10.0;
  const auto t = rs::generate_track(spec);
  ASSERT_GE(t.samples.size(), 2u);
  for (std::size_t i = 1; i < t.samples.size(); ++i)
    EXPECT_NEAR((t.samples[i].world - t.samples[i - 1].world).norm(), 0.4, 1e-12);
}

TEST(GenerateTrack, LeavingTheImageTruncates) {
  auto spec = rs::default_scenario();
  spec.n_frames = 400;
  const auto t = rs::generate_track(spec);
  EXPECT_TRUE(t.truncated);
  EXPECT_LT(t.samples.size(), 400u);
  for (const auto& s : t.samples) EXPECT_TRUE(spec.camera.in_image(s.pixel));
}

TEST(GroundTruthHomography, TopDownIsSimilarity) {
  const auto h = rs::ground_truth_homography(top_down());
  EXPECT_NEAR(h(2, 0), 0.0, 1e-15);
  EXPECT_NEAR(h(2, 1), 0.0, 1e-15);
  const Eigen::Matrix2d a = h.matrix().topLeftCorner<2, 2>();
  const Eigen::Matrix2d ata = a.transpose() * a;
  EXPECT_NEAR(ata(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(ata(0, 0), ata(1, 1), 1e-15);
}

TEST(GroundTruthHomography, AgreesWithProjectionAndEstimation) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    const auto spec = rs::make_oblique_scenario(rs::random_oblique_params(rng));
    const auto h = rs::ground_truth_homography(spec);
    for (const auto& m : spec.markers) {
      const rs::Point2 a = rs::apply(h, m), b = rs::project(spec.camera, {m.x, m.y, 0});
      EXPECT_NEAR(a.x, b.x, 1e-9);
      EXPECT_NEAR(a.y, b.y, 1e-9);
    }
    EXPECT_LE(rs::max_entry_deviation(rs::estimate_homography(rs::marker_correspondences(spec)), h), 1e-9);
  }
}

TEST(GroundTruthHomography, PlaneRestriction) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> ux(8.0, 20.0), uy(-3.0, 3.0);
  const auto spec = rs::default_scenario();
  const auto h = rs::ground_truth_homography(spec);
  for (int i = 0; i < 100; ++i) {
    const rs::Point2 w{ux(rng), uy(rng)};
    const rs::Point2 a = rs::apply(h, w), b = rs::project(spec.camera, {w.x, w.y, 0});
    EXPECT_NEAR(a.x, b.x, 1e-9);
    EXPECT_NEAR(a.y, b.y, 1e-9);
  }
}

TEST(GroundTruthHomography, CameraOnRoadIsDegenerate) {
  auto cam = top_down();
  cam.translation = -cam.rotation * rs::Vec3(0, 0, 0);
  try {
    rs::ground_truth_homography(cam);
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::DegenerateConfiguration);
  }
}

TEST(SimulatorLaws, ParallaxRatio) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 20; ++i) {
    const auto p = rs::random_oblique_params(rng);
    const auto spec = rs::make_oblique_scenario(p);
    const auto t = rs::generate_track(spec);
    const auto to_road = rs::invert(rs::ground_truth_homography(spec));
    const auto& a = t.samples.front();
    const auto& b = t.samples.back();
    const double d = (b.world - a.world).norm();
    const double D = rs::distance(rs::apply(to_road, b.pixel), rs::apply(to_road, a.pixel));
    const double hc = spec.camera.height_above_road();
    EXPECT_NEAR(d / D, (hc - p.plate_height_m) / hc, 1e-9);
  }
}

TEST(SimulatorLaws, ForeshorteningRatio) {
  std::mt19937_64 rng(24);
  for (int i = 0; i < 20; ++i) {
    const auto p = rs::random_oblique_params(rng);
    const auto spec = rs::make_oblique_scenario(p);
    const auto t = rs::generate_track(spec);
    const auto to_road = rs::invert(rs::ground_truth_homography(spec));
    const double hc = spec.camera.height_above_road();
    for (const auto& s : t.samples) {
      const double L = rs::distance(rs::apply(to_road, s.edge_left), rs::apply(to_road, s.edge_right));
      EXPECT_NEAR(spec.vehicles[0].plate_length_m / L, (hc - p.plate_height_m) / hc, 1e-9);
    }
  }
}

TEST(RenderFrame, OrientedRectMatchesProjectedQuad) {
  const auto spec = rs::default_scenario();
  const rs::HsvThresholds thr;
  for (int k = 0; k < spec.n_frames; k += 5) {
    const auto cands = rs::segment_candidates(rs::render_frame(spec, k), thr, 0);
    ASSERT_EQ(cands.size(), 1u) << "frame " << k;
    EXPECT_LE(max_vertex_error(cands[0].rect, rs::projected_plate_quad(spec, 0, k)), 1.0) << "frame " << k;
  }
}

// Signed distance of p from a convex quad's boundary; positive inside.
double inside_distance(const std::array<rs::Point2, 4>& q, rs::Point2 p) {
  const double orient = rs::cross(q[1] - q[0], q[2] - q[0]) > 0 ? 1.0 : -1.0;
  double d = 1e300;
  for (int i = 0; i < 4; ++i) {
    const rs::Point2 a = q[i], e = q[(i + 1) % 4] - a;
    d = std::min(d, orient * rs::cross(e, p - a) / rs::norm(e));
  }
  return d;
}

TEST(RenderFrame, MaskAgreesWithProjectedQuad) {
  std::mt19937_64 rng(25);
  for (int scene = 0; scene < 10; ++scene) {
    const auto spec = rs::make_oblique_scenario(rs::random_oblique_params(rng));
    for (int k = 0; k < spec.n_frames; k += std::max(1, spec.n_frames / 4)) {
      const auto cands = rs::segment_candidates(rs::render_frame(spec, k), rs::HsvThresholds{}, 2);
      ASSERT_EQ(cands.size(), 1u);
      const auto quad = rs::projected_plate_quad(spec, 0, k);
      const auto& c = cands[0];
      const int pad = 3;
      for (int y = -pad; y < c.mask.height() + pad; ++y)
        for (int x = -pad; x < c.mask.width() + pad; ++x) {
          const bool on = c.mask.contains(x, y) && c.mask(x, y);
          const double d = inside_distance(quad, {static_cast<double>(x + c.mask_x0), static_cast<double>(y + c.mask_y0)});
          if (on) EXPECT_GE(d, -1.0) << "scene " << scene << " frame " << k;
          if (d > 1.0) EXPECT_TRUE(on) << "scene " << scene << " frame " << k;
        }
    }
  }
}

TEST(RenderFrame, Deterministic) {
  const auto spec = rs::make_two_vehicle_scenario();
  EXPECT_EQ(rs::render_frame(spec, 7), rs::render_frame(spec, 7));
  EXPECT_EQ(rs::render_background(spec), rs::render_background(spec));
}

TEST(RenderFrame, PlateColouredLikeRoadIsInvisible) {
  auto spec = rs::default_scenario();
  spec.vehicles[0].plate_color = spec.road_color;
  for (int k = 0; k < spec.n_frames; k += 4)
    EXPECT_TRUE(rs::segment_candidates(rs::render_frame(spec, k), rs::HsvThresholds{}, 2).empty());
}

TEST(ExpectedProjectedSpeed, Arithmetic) {
  EXPECT_DOUBLE_EQ(rs::expected_projected_speed(50, 5, 0), 50.0);
  EXPECT_NEAR(rs::expected_projected_speed(45, 5, 0.5), 50.0, 1e-12);
  double prev = 0.0;
  for (double h = 0.0; h < 4.999; h += 0.05) {
    const double s = rs::expected_projected_speed(45, 5, h);
    EXPECT_GT(s, prev);
    prev = s;
  }
  try {
    rs::expected_projected_speed(45, 5, 5);
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::InvalidGeometry);
  }
}

TEST(ScenarioSpec, RejectsPlateAboveCamera) {
  auto spec = rs::default_scenario();
  spec.vehicles[0].plate_height_m = 7.0;
  EXPECT_THROW(spec.validate(), rs::Error);
}
