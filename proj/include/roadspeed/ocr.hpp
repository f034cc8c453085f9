#pragma once

// Plate reading: Otsu binarization, column-projection character split,
// 16x12 glyph bitmaps and a sigmoid multilayer perceptron trained by
// mini-batch backpropagation on squared error.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "roadspeed/errors.hpp"
#include "roadspeed/image.hpp"

namespace roadspeed {

inline constexpr int kGlyphRows = 16;
inline constexpr int kGlyphCols = 12;
inline constexpr int kGlyphInputs = kGlyphRows * kGlyphCols;
inline constexpr int kMinGlyphInk = 10;
inline constexpr double kValleyFraction = 0.15;

struct GlyphBox {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // inclusive ink bounds within the crop
  std::vector<double> bitmap;           // 16x12 row-major ink coverage in [0, 1]
};

namespace detail {

inline int otsu_from_histogram(const std::array<double, 256>& hist) {
  double n = 0.0, sum_all = 0.0;
  for (int v = 0; v < 256; ++v) {
    n += hist[static_cast<std::size_t>(v)];
    sum_all += v * hist[static_cast<std::size_t>(v)];
  }
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int t_best = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[static_cast<std::size_t>(t)];
    sum0 += t * hist[static_cast<std::size_t>(t)];
    const double w1 = n - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      t_best = t;
    }
  }
  return t_best;
}

}  // namespace detail

/// Otsu threshold: ink is every level <= the returned value.
inline int otsu_threshold(const GrayImage& img) {
  std::array<double, 256> hist{};
  for (auto p : img.pixels()) hist[p] += 1.0;
  return detail::otsu_from_histogram(hist);
}

namespace detail {

/// 3x3 binomial smoothing (clamped edges). Equalization stretches flat plate
/// noise over the full grey range; smoothing first keeps Otsu on the ink.
inline GrayImage smooth3(const GrayImage& img) {
  GrayImage out(img.width(), img.height());
  constexpr int k[3] = {1, 2, 1};
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      int acc = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) acc += k[dx + 1] * k[dy + 1] * img.at_clamped(x + dx, y + dy);
      out(x, y) = static_cast<std::uint8_t>((acc + 8) / 16);
    }
  return out;
}

/// Removes 4-connected ink regions that touch the crop border (plate rim,
/// surrounding body) from a binary image.
inline void clear_border_ink(Mask& ink) {
  const int w = ink.width(), h = ink.height();
  std::vector<std::array<int, 2>> stack;
  auto seed = [&](int x, int y) {
    if (ink(x, y)) {
      ink(x, y) = 0;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const int nx = x + dx, ny = y + dy;
      if (nx >= 0 && ny >= 0 && nx < w && ny < h) seed(nx, ny);
    }
  }
}

/// Aspect-preserving box-filtered resample of an ink box into a centered
/// 16x12 coverage bitmap.
inline std::vector<double> glyph_bitmap(const Mask& ink, int x0, int x1, int y0, int y1) {
  const double bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  const double scale = std::min(kGlyphCols / bw, kGlyphRows / bh);  // output cells per source pixel
  const double ox = 0.5 * (kGlyphCols - scale * bw), oy = 0.5 * (kGlyphRows - scale * bh);
  std::vector<double> out(kGlyphInputs, 0.0);
  constexpr int ss = 4;
  for (int r = 0; r < kGlyphRows; ++r)
    for (int c = 0; c < kGlyphCols; ++c) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double u = (c + (sx + 0.5) / ss - ox) / scale;
          const double v = (r + (sy + 0.5) / ss - oy) / scale;
          if (u < 0 || v < 0 || u >= bw || v >= bh) continue;
          hits += ink(x0 + static_cast<int>(u), y0 + static_cast<int>(v));
        }
      out[static_cast<std::size_t>(r * kGlyphCols + c)] = static_cast<double>(hits) / (ss * ss);
    }
  return out;
}

}  // namespace detail

/// Smoothing + Otsu binarization, border-ink removal, column-projection split
/// at valleys (column ink mass <= 15% of the maximum), per-glyph ink
/// tightening, 16x12 bitmaps. Boxes with fewer than 10 ink pixels are dropped.
inline std::vector<GlyphBox> segment_glyphs(const GrayImage& crop) {
  const auto [mn, mx] = std::minmax_element(crop.pixels().begin(), crop.pixels().end());
  if (*mn == *mx) fail(ErrorKind::EmptyPlate, "plate crop has no ink");
  const GrayImage smooth = detail::smooth3(crop);
  const int t = otsu_threshold(smooth);
  Mask ink(crop.width(), crop.height());
  std::transform(smooth.pixels().begin(), smooth.pixels().end(), ink.pixels().begin(),
                 [t](std::uint8_t p) { return static_cast<std::uint8_t>(p <= t); });
  detail::clear_border_ink(ink);

  std::vector<int> mass(static_cast<std::size_t>(crop.width()), 0);
  for (int y = 0; y < crop.height(); ++y)
    for (int x = 0; x < crop.width(); ++x) mass[static_cast<std::size_t>(x)] += ink(x, y);
  const int peak = *std::max_element(mass.begin(), mass.end());
  if (peak == 0) fail(ErrorKind::EmptyPlate, "plate crop has no ink");
  const double valley = kValleyFraction * peak;

  std::vector<GlyphBox> boxes;
  int x = 0;
  while (x < crop.width()) {
    if (mass[static_cast<std::size_t>(x)] <= valley) {
      ++x;
      continue;
    }
    const int start = x;
    while (x < crop.width() && mass[static_cast<std::size_t>(x)] > valley) ++x;
    const int end = x - 1;
    GlyphBox b{crop.width(), -1, crop.height(), -1, {}};
    int count = 0;
    for (int yy = 0; yy < crop.height(); ++yy)
      for (int xx = start; xx <= end; ++xx)
        if (ink(xx, yy)) {
          ++count;
          b.x0 = std::min(b.x0, xx);
          b.x1 = std::max(b.x1, xx);
          b.y0 = std::min(b.y0, yy);
          b.y1 = std::max(b.y1, yy);
        }
    if (count < kMinGlyphInk) continue;
    // Re-threshold inside the box: on small blurred glyphs the global split
    // is plate vs. everything darker, which fills counters (0/6/8/9 alike).
    std::array<double, 256> hist{};
    for (int yy = b.y0; yy <= b.y1; ++yy)
      for (int xx = b.x0; xx <= b.x1; ++xx) hist[smooth(xx, yy)] += 1.0;
    const int t_box = std::min(t, detail::otsu_from_histogram(hist));
    Mask local(crop.width(), crop.height());
    for (int yy = b.y0; yy <= b.y1; ++yy)
      for (int xx = b.x0; xx <= b.x1; ++xx) local(xx, yy) = ink(xx, yy) && smooth(xx, yy) <= t_box;
    b.bitmap = detail::glyph_bitmap(local, b.x0, b.x1, b.y0, b.y1);
    boxes.push_back(std::move(b));
  }
  if (boxes.empty()) fail(ErrorKind::EmptyPlate, "no glyph survived segmentation");
  return boxes;
}

inline std::vector<GlyphBox> segment_glyphs(std::span<const std::uint8_t> crop, int width, int height) {
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != crop.size())
    fail(ErrorKind::ShapeError, "crop length does not match its dimensions");
  GrayImage img(width, height);
  std::copy(crop.begin(), crop.end(), img.pixels().begin());
  return segment_glyphs(img);
}

// ---- multilayer perceptron -------------------------------------------------------

struct Mlp {
  std::vector<int> layers;                // sizes, input first
  std::vector<Eigen::MatrixXd> weights;   // weights[k]: layers[k+1] x layers[k]
  std::vector<Eigen::VectorXd> biases;
  std::string alphabet;                   // output class labels

  static Mlp zeros(const std::vector<int>& sizes, std::string alphabet = {}) {
    if (sizes.size() < 2) fail(ErrorKind::ShapeError, "network needs at least input and output layers");
    Mlp net;
    net.layers = sizes;
    net.alphabet = std::move(alphabet);
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      if (sizes[k] <= 0 || sizes[k + 1] <= 0) fail(ErrorKind::ShapeError, "layer sizes must be positive");
      net.weights.push_back(Eigen::MatrixXd::Zero(sizes[k + 1], sizes[k]));
      net.biases.push_back(Eigen::VectorXd::Zero(sizes[k + 1]));
    }
    return net;
  }

  void validate() const {
    if (layers.size() < 2 || weights.size() != layers.size() - 1 || biases.size() != weights.size())
      fail(ErrorKind::ShapeError, "network layer count mismatch");
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k].rows() != layers[k + 1] || weights[k].cols() != layers[k] || biases[k].size() != layers[k + 1])
        fail(ErrorKind::ShapeError, "network weight shape mismatch");
      if (!weights[k].allFinite() || !biases[k].allFinite()) fail(ErrorKind::InvalidInput, "non-finite network weights");
    }
    if (!alphabet.empty() && static_cast<int>(alphabet.size()) != layers.back())
      fail(ErrorKind::ShapeError, "alphabet size differs from output layer");
  }
};

inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

/// Activations of every layer, input included.
inline std::vector<Eigen::VectorXd> mlp_activations(const Mlp& net, const Eigen::VectorXd& x) {
  if (x.size() != net.layers.front()) fail(ErrorKind::ShapeError, "input size does not match network");
  std::vector<Eigen::VectorXd> acts{x};
  for (std::size_t k = 0; k < net.weights.size(); ++k) acts.push_back(sigmoid(net.weights[k] * acts.back() + net.biases[k]));
  return acts;
}

inline Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x) {
  if (net.weights.empty()) fail(ErrorKind::ShapeError, "empty network");
  return mlp_activations(net, x).back();
}

/// 0.5 * ||forward(x) - target||^2.
inline double mlp_loss(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
  const Eigen::VectorXd y = mlp_forward(net, x);
  if (y.size() != target.size()) fail(ErrorKind::ShapeError, "target size does not match network output");
  return 0.5 * (y - target).squaredNorm();
}

struct MlpGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Backpropagated gradient of mlp_loss for one sample.
inline MlpGradient mlp_gradient(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
  const auto acts = mlp_activations(net, x);
  if (acts.back().size() != target.size()) fail(ErrorKind::ShapeError, "target size does not match network output");
  const std::size_t L = net.weights.size();
  MlpGradient g;
  g.weights.resize(L);
  g.biases.resize(L);
  Eigen::VectorXd delta =
      (acts[L] - target).cwiseProduct(acts[L].cwiseProduct(Eigen::VectorXd::Ones(acts[L].size()) - acts[L]));
  for (std::size_t k = L; k-- > 0;) {
    g.weights[k] = delta * acts[k].transpose();
    g.biases[k] = delta;
    if (k > 0) {
      const Eigen::VectorXd& a = acts[k];
      delta = (net.weights[k].transpose() * delta).cwiseProduct(a.cwiseProduct(Eigen::VectorXd::Ones(a.size()) - a));
    }
  }
  return g;
}

struct LabeledVector {
  Eigen::VectorXd x;
  int label = 0;  // class index
};

struct MlpTrainOptions {
  int hidden = 32;
  int epochs = 40;
  double lr = 0.5;
  int batch_size = 8;
  std::uint64_t seed = 1;
};

/// Mini-batch backpropagation on squared error with one-hot targets; weights
/// start uniform in +-1/sqrt(fan_in). Deterministic for a given sample order
/// and seed.
inline Mlp mlp_train(std::span<const LabeledVector> samples, int n_classes, const MlpTrainOptions& opt,
                     std::string alphabet = {}) {
  if (samples.empty()) fail(ErrorKind::InsufficientData, "no training samples");
  if (n_classes <= 0 || opt.hidden <= 0 || opt.epochs < 0 || opt.batch_size <= 0 || !(opt.lr > 0.0))
    fail(ErrorKind::ConfigurationError, "invalid training options");
  const auto dim = samples.front().x.size();
  std::vector<int> seen(static_cast<std::size_t>(n_classes), 0);
  for (const auto& s : samples) {
    if (s.x.size() != dim) fail(ErrorKind::ShapeError, "training vectors differ in length");
    if (s.label < 0 || s.label >= n_classes) fail(ErrorKind::InvalidInput, "label outside alphabet");
    seen[static_cast<std::size_t>(s.label)] = 1;
  }
  for (int c = 0; c < n_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)])
      fail(ErrorKind::InsufficientData,
           "class '" + (alphabet.empty() ? std::to_string(c) : std::string(1, alphabet[static_cast<std::size_t>(c)])) +
               "' absent from training set");

  Mlp net = Mlp::zeros({static_cast<int>(dim), opt.hidden, n_classes}, std::move(alphabet));
  std::mt19937_64 rng(opt.seed);
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    const double r = 1.0 / std::sqrt(static_cast<double>(net.layers[k]));
    std::uniform_real_distribution<double> u(-r, r);
    for (Eigen::Index i = 0; i < net.weights[k].size(); ++i) net.weights[k].data()[i] = u(rng);
    for (Eigen::Index i = 0; i < net.biases[k].size(); ++i) net.biases[k](i) = u(rng);
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Eigen::VectorXd> targets;
  for (const auto& s : samples) {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(n_classes);
    t(s.label) = 1.0;
    targets.push_back(std::move(t));
  }
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      MlpGradient acc;
      for (std::size_t i = start; i < end; ++i) {
        MlpGradient g = mlp_gradient(net, samples[order[i]].x, targets[order[i]]);
        if (acc.weights.empty()) {
          acc = std::move(g);
          continue;
        }
        for (std::size_t k = 0; k < g.weights.size(); ++k) {
          acc.weights[k] += g.weights[k];
          acc.biases[k] += g.biases[k];
        }
      }
      const double step = opt.lr / static_cast<double>(end - start);
      for (std::size_t k = 0; k < net.weights.size(); ++k) {
        net.weights[k] -= step * acc.weights[k];
        net.biases[k] -= step * acc.biases[k];
      }
    }
  }
  return net;
}

inline int mlp_predict(const Mlp& net, const Eigen::VectorXd& x, double* confidence = nullptr) {
  const Eigen::VectorXd y = mlp_forward(net, x);
  Eigen::Index best = 0;
  y.maxCoeff(&best);
  if (confidence) *confidence = y(best);
  return static_cast<int>(best);
}

// ---- plate reading ------------------------------------------------------------------

inline Eigen::VectorXd glyph_features(const GlyphBox& g) {
  if (g.bitmap.size() != static_cast<std::size_t>(kGlyphInputs)) fail(ErrorKind::ShapeError, "glyph bitmap must be 16x12");
  return Eigen::Map<const Eigen::VectorXd>(g.bitmap.data(), kGlyphInputs);
}

struct PlateReading {
  std::string text;
  std::vector<double> confidence;  // output activation of each chosen class
};

inline PlateReading read_plate(const GrayImage& crop, const Mlp& net) {
  net.validate();
  if (net.layers.front() != kGlyphInputs) fail(ErrorKind::ShapeError, "OCR network must take 192 inputs");
  if (net.alphabet.empty()) fail(ErrorKind::ConfigurationError, "OCR network has no alphabet");
  PlateReading out;
  for (const auto& g : segment_glyphs(crop)) {
    double conf = 0.0;
    const int cls = mlp_predict(net, glyph_features(g), &conf);
    out.text.push_back(net.alphabet[static_cast<std::size_t>(cls)]);
    out.confidence.push_back(conf);
  }
  return out;
}

inline PlateReading read_plate(std::span<const std::uint8_t> crop, const Mlp& net, int width = 144, int height = 33) {
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != crop.size())
    fail(ErrorKind::ShapeError, "crop length does not match its dimensions");
  GrayImage img(width, height);
  std::copy(crop.begin(), crop.end(), img.pixels().begin());
  return read_plate(img, net);
}

}  // namespace roadspeed
