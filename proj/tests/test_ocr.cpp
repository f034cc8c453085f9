#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "roadspeed/corpus.hpp"
#include "roadspeed/ocr.hpp"

namespace rs = roadspeed;

namespace {

rs::Mlp random_net(const std::vector<int>& sizes, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  rs::Mlp net = rs::Mlp::zeros(sizes);
  for (auto& w : net.weights) w = w.unaryExpr([&](double) { return u(rng); });
  for (auto& b : net.biases) b = b.unaryExpr([&](double) { return u(rng); });
  return net;
}

Eigen::VectorXd random_input(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = u(rng);
  return x;
}

// Extended-precision forward pass and loss, written independently of the
// library so finite differences are not limited by double round-off.
long double loss_ld(const rs::Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
  std::vector<long double> a(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& W = net.weights[l];
    std::vector<long double> next(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      long double z = net.biases[l](r);
      for (Eigen::Index c = 0; c < W.cols(); ++c) z += static_cast<long double>(W(r, c)) * a[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = 1.0L / (1.0L + std::exp(-z));
    }
    a = std::move(next);
  }
  long double e = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = a[i] - target(static_cast<Eigen::Index>(i));
    e += d * d;
  }
  return 0.5L * e;
}

rs::GrayImage clean_crop(const std::string& text) {
  std::mt19937_64 rng(1);
  return rs::render_plate_crop(text, rs::CropRenderParams{}, rng);
}

const rs::Mlp& trained_digits() {
  static const rs::Mlp net = [] {
    const auto corpus = rs::make_glyph_corpus(200, rs::kDigits, 41);
    rs::MlpTrainOptions opt;
    opt.seed = 42;
    return rs::mlp_train(corpus.samples, 10, opt, rs::kDigits);
  }();
  return net;
}

}  // namespace

TEST(SegmentGlyphs, BlankCropIsEmptyPlate) {
  try {
    rs::segment_glyphs(rs::GrayImage(144, 33, 200));
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::EmptyPlate);
  }
}

TEST(SegmentGlyphs, EightCharactersLeftToRight) {
  const auto boxes = rs::segment_glyphs(clean_crop("12345678"));
  ASSERT_EQ(boxes.size(), 8u);
  for (std::size_t i = 1; i < boxes.size(); ++i) EXPECT_GT(boxes[i].x0, boxes[i - 1].x1);
  for (const auto& b : boxes) EXPECT_EQ(b.bitmap.size(), static_cast<std::size_t>(rs::kGlyphInputs));
}

TEST(SegmentGlyphs, OnePixelBridgeIsSplit) {
  rs::GrayImage crop(144, 33, 220);
  for (int y = 8; y < 25; ++y)
    for (int x = 40; x < 50; ++x) crop(x, y) = 20;
  for (int y = 8; y < 25; ++y)
    for (int x = 52; x < 62; ++x) crop(x, y) = 20;
  crop(50, 16) = crop(51, 16) = 20;
  const auto boxes = rs::segment_glyphs(crop);
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_LE(boxes[0].x1, 50);
  EXPECT_GE(boxes[1].x0, 51);
}

TEST(SegmentGlyphs, BrightnessShiftKeepsBoxCount) {
  std::mt19937_64 rng(43);
  rs::GlyphCorpusOptions opt;
  for (int i = 0; i < 30; ++i) {
    const std::string text = rs::random_plate_text(rng);
    const auto crop = rs::render_plate_crop(text, rs::random_crop_params(rng, opt), rng);
    auto brighter = crop;
    for (auto& p : brighter.pixels()) p = static_cast<std::uint8_t>(std::min(255, p + 20));
    EXPECT_EQ(rs::segment_glyphs(crop).size(), rs::segment_glyphs(brighter).size()) << text;
  }
}

TEST(MlpForward, ZeroNetGivesHalf) {
  const auto net = rs::Mlp::zeros({192, 16, 10});
  std::mt19937_64 rng(44);
  const auto y = rs::mlp_forward(net, random_input(192, rng));
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_EQ(y(i), 0.5);
}

TEST(MlpForward, HandComputedOneOneOne) {
  auto net = rs::Mlp::zeros({1, 1, 1});
  net.weights[0](0, 0) = net.weights[1](0, 0) = 1.0;
  const double y = rs::mlp_forward(net, Eigen::VectorXd::Zero(1))(0);
  EXPECT_NEAR(y, 1.0 / (1.0 + std::exp(-0.5)), 1e-15);
  EXPECT_NEAR(y, 0.6225, 1e-4);
}

TEST(MlpForward, OutputsInOpenUnitInterval) {
  std::mt19937_64 rng(45);
  for (int i = 0; i < 20; ++i) {
    const auto net = random_net({192, 16, 10}, rng, 0.5);
    const auto y = rs::mlp_forward(net, random_input(192, rng));
    for (Eigen::Index k = 0; k < y.size(); ++k) {
      EXPECT_GT(y(k), 0.0);
      EXPECT_LT(y(k), 1.0);
    }
  }
}

TEST(MlpForward, DimensionMismatch) {
  const auto net = rs::Mlp::zeros({192, 16, 10});
  try {
    rs::mlp_forward(net, Eigen::VectorXd::Zero(191));
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::ShapeError);
  }
}

TEST(MlpForward, OutputPermutationCovariance) {
  std::mt19937_64 rng(46);
  const auto net = random_net({192, 16, 10}, rng);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permuted = net;
  for (int i = 0; i < 10; ++i) {
    permuted.weights[1].row(i) = net.weights[1].row(perm[static_cast<std::size_t>(i)]);
    permuted.biases[1](i) = net.biases[1](perm[static_cast<std::size_t>(i)]);
  }
  const auto x = random_input(192, rng);
  const auto y = rs::mlp_forward(net, x), yp = rs::mlp_forward(permuted, x);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(yp(i), y(perm[static_cast<std::size_t>(i)]));
  EXPECT_EQ(rs::mlp_forward(net, x), y);
}

TEST(MlpGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(47);
  constexpr double eps = 1e-5;
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    auto net = random_net({192, 16, 10}, rng);
    const auto x = random_input(192, rng);
    Eigen::VectorXd target = Eigen::VectorXd::Zero(10);
    target(point % 10) = 1.0;
    const auto g = rs::mlp_gradient(net, x, target);
    auto check = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + eps;
      const long double up = loss_ld(net, x, target);
      param = keep - eps;
      const long double down = loss_ld(net, x, target);
      param = keep;
      const double fd = static_cast<double>((up - down) / (2.0L * eps));
      const double denom = std::max(std::abs(fd), std::abs(analytic));
      if (denom > 0.0) worst = std::max(worst, std::abs(fd - analytic) / denom);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) check(net.weights[l].data()[i], g.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) check(net.biases[l](i), g.biases[l](i));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(MlpTrain, Xor) {
  // 2-4-1 network, per-sample gradient steps, 5000 epochs at lr 0.5.
  std::mt19937_64 rng(48);
  auto net = random_net({2, 4, 1}, rng);
  const double xs[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const double ys[4] = {0, 1, 1, 0};
  for (int epoch = 0; epoch < 5000; ++epoch)
    for (int i = 0; i < 4; ++i) {
      const auto g = rs::mlp_gradient(net, Eigen::Vector2d(xs[i][0], xs[i][1]), Eigen::VectorXd::Constant(1, ys[i]));
      for (std::size_t l = 0; l < net.weights.size(); ++l) {
        net.weights[l] -= 0.5 * g.weights[l];
        net.biases[l] -= 0.5 * g.biases[l];
      }
    }
  for (int i = 0; i < 4; ++i) {
    const double y = rs::mlp_forward(net, Eigen::Vector2d(xs[i][0], xs[i][1]))(0);
    EXPECT_EQ(y > 0.5, ys[i] > 0.5) << i << ": " << y;
  }
}

TEST(MlpTrain, MemorizesOneSamplePerClass) {
  std::vector<rs::LabeledVector> samples;
  for (int c = 0; c < 10; ++c) {
    const auto boxes = rs::segment_glyphs(clean_crop(std::string(1, rs::kDigits[c])));
    ASSERT_EQ(boxes.size(), 1u);
    samples.push_back({rs::glyph_features(boxes[0]), c});
  }
  rs::MlpTrainOptions opt;
  opt.hidden = 16;
  opt.epochs = 3000;
  const auto net = rs::mlp_train(samples, 10, opt, rs::kDigits);
  for (const auto& s : samples) EXPECT_EQ(rs::mlp_predict(net, s.x), s.label);
}

TEST(MlpTrain, MissingClassIsInsufficient) {
  std::vector<rs::LabeledVector> samples{{Eigen::VectorXd::Zero(4), 0}, {Eigen::VectorXd::Ones(4), 1}};
  try {
    rs::mlp_train(samples, 3, {});
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::InsufficientData);
  }
}

TEST(MlpTrain, DeterministicForSeed) {
  const auto corpus = rs::make_glyph_corpus(20, rs::kDigits, 49);
  rs::MlpTrainOptions opt;
  opt.epochs = 3;
  const auto a = rs::mlp_train(corpus.samples, 10, opt, rs::kDigits), b = rs::mlp_train(corpus.samples, 10, opt, rs::kDigits);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    EXPECT_EQ(a.weights[l], b.weights[l]);
    EXPECT_EQ(a.biases[l], b.biases[l]);
  }
}

TEST(ReadPlate, ReadsRenderedPlate) {
  EXPECT_EQ(rs::read_plate(clean_crop("3159740"), trained_digits()).text, "3159740");
}

TEST(ReadPlate, HeldOutGlyphAccuracy) {
  rs::GlyphCorpusOptions held_out;
  held_out.min_noise_sigma = held_out.noise_sigma;
  EXPECT_GE(rs::evaluate_ocr(trained_digits(), 100, 50, held_out).accuracy(), 0.99);
}

TEST(ReadPlate, BlankCropSurfacesEmptyPlate) {
  try {
    rs::read_plate(rs::GrayImage(144, 33, 127), trained_digits());
    FAIL() << "expected an error";
  } catch (const rs::Error& e) {
    EXPECT_EQ(e.kind(), rs::ErrorKind::EmptyPlate);
  }
}
