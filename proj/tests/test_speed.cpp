#include <gtest/gtest.h>

#include <random>

#include "roadspeed/corpus.hpp"
#include "roadspeed/simulator.hpp"
#include "roadspeed/speed.hpp"

namespace rs = roadspeed;

namespace {

// With the identity map, pixels are road coordinates.
rs::TrackSequence straight_track(const std::vector<double>& xs, double dt, double edge = 0.52) {
  rs::TrackSequence t;
  t.track_id = 1;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const rs::Point2 c{xs[i], 0.0};
    t.frames.push_back({static_cast<int>(i), dt * static_cast<double>(i), c, c - rs::Point2{edge, 0.0}, c});
  }
  return t;
}

rs::SiteConfig site_for(const rs::ScenarioSpec& spec) {
  rs::SiteConfig site;
  site.H_world_to_image = rs::ground_truth_homography(spec);
  site.camera_height_m = spec.camera.height_above_road();
  site.fps = spec.fps;
  for (const auto& v : spec.vehicles) site.plate_height_db[v.plate_text] = v.plate_height_m;
  return site;
}

template <typename F>
void expect_kind(rs::ErrorKind kind, F&& f) {
  try {
    f();
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(PairwiseSpeeds, StationaryTrackIsZero) {
  const auto r = rs::pairwise_projected_speeds(straight_track({3, 3, 3, 3}, 0.04), rs::Homography::identity());
  ASSERT_EQ(r.speeds.size(), 6u);
  for (double s : r.speeds) EXPECT_EQ(s, 0.0);
}

TEST(PairwiseSpeeds, UniformMotion) {
  const auto r = rs::pairwise_projected_speeds(straight_track({0, 0.4, 0.8}, 0.04), rs::Homography::identity());
  ASSERT_EQ(r.speeds.size(), 3u);
  for (double s : r.speeds) EXPECT_NEAR(s, 10.0, 1e-12);
}

TEST(PairwiseSpeeds, ConsecutiveMode) {
  const auto r = rs::pairwise_projected_speeds(straight_track({0, 0.4, 0.8, 1.2}, 0.04), rs::Homography::identity(),
                                               rs::PairMode::Consecutive);
  EXPECT_EQ(r.speeds.size(), 3u);
}

TEST(PairwiseSpeeds, FrameAtInfinityIsExcluded) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = 0.1;  // image -> road sends x = -10 to infinity
  const rs::Homography world_to_image = rs::invert(rs::Homography(m));
  auto t = straight_track({0, 0.4, 0.8, -10.0}, 0.04);
  const auto r = rs::pairwise_projected_speeds(t, world_to_image);
  EXPECT_EQ(r.speeds.size(), 3u);
  ASSERT_EQ(r.excluded_frames.size(), 1u);
  EXPECT_EQ(r.excluded_frames[0], 3);
  t.frames.resize(2);
  t.frames[0].corner = {-10.0, 0.0};
  expect_kind(rs::ErrorKind::InsufficientData, [&] { rs::pairwise_projected_speeds(t, world_to_image); });
}

TEST(PairwiseSpeeds, NoisyTrackMedianNearExpected) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    rs::ObliqueScenarioParams p;
    p.noise_px = 0.5;
    p.seed = seed;
    const auto spec = rs::make_oblique_scenario(p);
    const auto track = rs::to_track_sequence(rs::generate_track(spec));
    const auto r = rs::pairwise_projected_speeds(track, rs::ground_truth_homography(spec));
    const double expected = rs::expected_projected_speed(p.speed_mps, p.camera_height_m, p.plate_height_m);
    EXPECT_NEAR(rs::robust_median(r.speeds), expected, 0.02 * expected) << seed;
  }
}

TEST(RobustMedian, Examples) {
  EXPECT_EQ(rs::robust_median(std::vector<double>{10, 12, 11}), 11.0);
  EXPECT_EQ(rs::robust_median(std::vector<double>{10, 12}), 11.0);
  expect_kind(rs::ErrorKind::InsufficientData, [] { rs::robust_median(std::vector<double>{}); });
}

TEST(RobustMedian, ResistsTenfoldOutliers) {
  rs::ObliqueScenarioParams p;
  p.noise_px = 0.5;
  const auto spec = rs::make_oblique_scenario(p);
  const auto all = rs::pairwise_projected_speeds(rs::to_track_sequence(rs::generate_track(spec)),
                                                 rs::ground_truth_homography(spec)).speeds;
  ASSERT_GE(all.size(), 99u);
  std::vector<double> clean(all.begin(), all.begin() + 99);
  const double base = rs::robust_median(clean);
  auto dirty = clean;
  for (int i = 0; i < 5; ++i) dirty.push_back(10.0 * clean[static_cast<std::size_t>(i * 17)]);
  std::shuffle(dirty.begin(), dirty.end(), std::mt19937_64(5));
  EXPECT_LT(std::abs(rs::robust_median(dirty) - base) / base, 0.01);
}

TEST(RhoFromHeight, Examples) {
  EXPECT_EQ(rs::rho_from_height(5.0, 0.0), 1.0);
  EXPECT_NEAR(rs::rho_from_height(5.0, 0.5), 0.9, 1e-15);
  EXPECT_NEAR(rs::rho_from_height(6.0, 0.45), 0.925, 1e-15);
  expect_kind(rs::ErrorKind::InvalidGeometry, [] { rs::rho_from_height(5.0, 5.0); });
  expect_kind(rs::ErrorKind::InvalidGeometry, [] { rs::rho_from_height(0.0, 0.0); });
}

TEST(RhoFromHeight, StrictlyDecreasing) {
  double prev = 2.0;
  for (double h = 0.0; h < 6.0; h += 0.01) {
    const double r = rs::rho_from_height(6.0, h);
    EXPECT_LT(r, prev);
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0);
    prev = r;
  }
}

TEST(RhoFromPlateLength, Examples) {
  EXPECT_NEAR(rs::rho_from_plate_length(straight_track({0, 1, 2}, 0.04, 0.52), rs::Homography::identity(), 0.52), 1.0,
              1e-15);
  EXPECT_NEAR(rs::rho_from_plate_length(straight_track({0, 1, 2}, 0.04, 0.65), rs::Homography::identity(), 0.52), 0.8,
              1e-15);
}

TEST(RhoFromPlateLength, DegenerateEdgesAreInsufficient) {
  auto t = straight_track({0, 1, 2}, 0.04);
  for (auto& f : t.frames) f.edge_left = f.edge_right;
  expect_kind(rs::ErrorKind::InsufficientData, [&] { rs::rho_from_plate_length(t, rs::Homography::identity(), 0.52); });
}

TEST(RhoFromPlateLength, AgreesWithHeightInSimulator) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 50; ++i) {
    const auto p = rs::random_oblique_params(rng);
    const auto spec = rs::make_oblique_scenario(p);
    const double a = rs::rho_from_plate_length(rs::to_track_sequence(rs::generate_track(spec)),
                                               rs::ground_truth_homography(spec), spec.vehicles[0].plate_length_m);
    EXPECT_NEAR(a, rs::rho_from_height(spec.camera.height_above_road(), p.plate_height_m), 1e-6);
  }
}

TEST(EstimateSpeed, SimulatorFiftyKmh) {
  rs::ObliqueScenarioParams p;
  p.camera_height_m = 5.0;
  p.plate_height_m = 0.5;
  p.speed_mps = rs::kmh_to_mps(50.0);
  const auto spec = rs::make_oblique_scenario(p);
  const auto est = rs::estimate_speed(rs::to_track_sequence(rs::generate_track(spec), 1, p.plate_text), site_for(spec));
  ASSERT_TRUE(est.v_m1 && est.v_m2);
  EXPECT_NEAR(rs::mps_to_kmh(*est.v_m1), 50.0, 0.05);
  EXPECT_NEAR(rs::mps_to_kmh(*est.v_m2), 50.0, 0.05);
  EXPECT_EQ(*est.v_m1, *est.rho_m1 * est.s_projected);
  EXPECT_EQ(*est.v_m2, *est.rho_m2 * est.s_projected);
  EXPECT_EQ(est.n_pairs, est.n_frames * (est.n_frames - 1) / 2);
}

TEST(EstimateSpeed, CorrectionIdentityAcrossScenes) {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 30; ++i) {
    const auto p = rs::random_oblique_params(rng);
    const auto spec = rs::make_oblique_scenario(p);
    const auto est = rs::estimate_speed(rs::to_track_sequence(rs::generate_track(spec), 1, p.plate_text), site_for(spec));
    EXPECT_LE(std::abs(*est.v_m1 - p.speed_mps) / p.speed_mps, 1e-3);
    EXPECT_LE(std::abs(*est.v_m2 - p.speed_mps) / p.speed_mps, 1e-3);
  }
}

TEST(EstimateSpeed, SingleFrameIsInsufficient) {
  const auto spec = rs::default_scenario();
  auto track = rs::to_track_sequence(rs::generate_track(spec), 1, "3159740");
  track.frames.resize(1);
  expect_kind(rs::ErrorKind::InsufficientData, [&] { rs::estimate_speed(track, site_for(spec)); });
}

TEST(EstimateSpeed, WithoutCameraHeightOnlyMethodTwo) {
  const auto spec = rs::default_scenario();
  auto site = site_for(spec);
  site.camera_height_m.reset();
  const auto est = rs::estimate_speed(rs::to_track_sequence(rs::generate_track(spec), 1, "3159740"), site);
  EXPECT_FALSE(est.rho_m1.has_value());
  EXPECT_FALSE(est.v_m1.has_value());
  EXPECT_TRUE(est.v_m2.has_value());
}

TEST(EstimateSpeed, NeitherMethodIsConfigurationError) {
  const auto spec = rs::default_scenario();
  auto site = site_for(spec);
  site.camera_height_m.reset();
  auto track = rs::to_track_sequence(rs::generate_track(spec), 1, "3159740");
  for (auto& f : track.frames) f.edge_left = f.edge_right;
  expect_kind(rs::ErrorKind::ConfigurationError, [&] { rs::estimate_speed(track, site); });
}

TEST(EstimateSpeed, DoublingTimeHalvesSpeed) {
  const auto spec = rs::make_oblique_scenario({.noise_px = 0.5});
  const auto site = site_for(spec);
  const auto track = rs::to_track_sequence(rs::generate_track(spec), 1, "3159740");
  auto slow = track;
  for (auto& f : slow.frames) f.timestamp *= 2.0;
  const auto a = rs::estimate_speed(track, site), b = rs::estimate_speed(slow, site);
  EXPECT_EQ(b.s_projected, a.s_projected / 2);
  EXPECT_EQ(*b.v_m1, *a.v_m1 / 2);
  EXPECT_EQ(*b.v_m2, *a.v_m2 / 2);
}

TEST(EstimateSpeed, FrameOrderDoesNotMatter) {
  const auto spec = rs::make_oblique_scenario({.noise_px = 0.5});
  const auto site = site_for(spec);
  const auto track = rs::to_track_sequence(rs::generate_track(spec), 1, "3159740");
  auto shuffled = track;
  std::shuffle(shuffled.frames.begin(), shuffled.frames.end(), std::mt19937_64(53));
  EXPECT_EQ(rs::estimate_speed(shuffled, site).s_projected, rs::estimate_speed(track, site).s_projected);
}

TEST(EstimateSpeed, TiltedPlateOnReferenceScene) {
  for (double tilt : {2.0, 5.0})
    for (double sign : {-1.0, 1.0}) {
      rs::ObliqueScenarioParams p;
      p.plate_tilt_deg = sign * tilt;
      const auto spec = rs::make_oblique_scenario(p);
      const auto est = rs::estimate_speed(rs::to_track_sequence(rs::generate_track(spec), 1, p.plate_text), site_for(spec));
      EXPECT_LE(std::abs(*est.v_m2 - p.speed_mps) / p.speed_mps, tilt == 2.0 ? 0.01 : 0.03) << sign * tilt;
    }
}

TEST(SiteConfig, RejectsBadValues) {
  rs::SiteConfig site;
  site.plate_standard_length_m = 0.0;
  expect_kind(rs::ErrorKind::ConfigurationError, [&] { site.validate(); });
  site = {};
  site.camera_height_m = 5.0;
  site.plate_height_db["X"] = 5.0;
  expect_kind(rs::ErrorKind::ConfigurationError, [&] { site.validate(); });
}
