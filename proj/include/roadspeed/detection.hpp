#pragma once

// Per-frame plate pipeline: empty-frame gate, HSV segmentation, morphology,
// oriented bounding rectangles, crop normalization, a linear max-margin
// plate classifier, sub-pixel corner refinement and track association.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "roadspeed/errors.hpp"
#include "roadspeed/geometry.hpp"
#include "roadspeed/image.hpp"
#include "roadspeed/speed.hpp"

namespace roadspeed {

// ---- color -----------------------------------------------------------------

struct Hsv {
  double h = 0.0;  // degrees [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

/// Hexcone conversion; achromatic pixels report hue 0.
inline Hsv rgb_to_hsv(Rgb p) {
  const double r = p.r / 255.0, g = p.g / 255.0, b = p.b / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) return out;
  double h;
  if (mx == r)
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = 60.0 * ((b - r) / d + 2.0);
  else
    h = 60.0 * ((r - g) / d + 4.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

struct HsvThresholds {
  double hue_lo = 45.0, hue_hi = 75.0;  // hue_lo > hue_hi wraps through 0
  double sat_lo = 0.5;
  double val_lo = 0.4;

  void validate() const {
    if (!(hue_lo >= 0.0 && hue_lo < 360.0 && hue_hi >= 0.0 && hue_hi < 360.0))
      fail(ErrorKind::ConfigurationError, "hue bounds must lie in [0, 360)");
    if (!(sat_lo >= 0.0 && sat_lo <= 1.0) || !(val_lo >= 0.0 && val_lo <= 1.0))
      fail(ErrorKind::ConfigurationError, "sat_lo and val_lo must lie in [0, 1]");
  }

  bool contains(const Hsv& c) const {
    if (c.s < sat_lo || c.v < val_lo) return false;
    return hue_lo <= hue_hi ? (c.h >= hue_lo && c.h <= hue_hi) : (c.h >= hue_lo || c.h <= hue_hi);
  }
};

inline Mask threshold_hsv(const RgbImage& frame, const HsvThresholds& thr) {
  Mask m(frame.width(), frame.height());
  std::transform(frame.pixels().begin(), frame.pixels().end(), m.pixels().begin(),
                 [&](Rgb p) { return static_cast<std::uint8_t>(thr.contains(rgb_to_hsv(p))); });
  return m;
}

// ---- empty-frame gate --------------------------------------------------------

inline FloatImage to_gray_float(const RgbImage& img) {
  FloatImage out(img.width(), img.height());
  std::transform(img.pixels().begin(), img.pixels().end(), out.pixels().begin(), luma);
  return out;
}

/// Running-average greylevel reference of the empty road.
struct BackgroundModel {
  FloatImage reference;
  double alpha = 0.05;
  double diff_threshold = 0.002;

  static BackgroundModel from_frame(const RgbImage& frame, double alpha = 0.05, double diff_threshold = 0.002) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::ConfigurationError, "background alpha must lie in [0, 1]");
    if (!(diff_threshold >= 0.0 && diff_threshold <= 1.0))
      fail(ErrorKind::ConfigurationError, "diff_threshold must lie in [0, 1]");
    return {to_gray_float(frame), alpha, diff_threshold};
  }
};

inline constexpr float kActivityLevel = 25.0f;  // greylevels out of 255

/// Fraction of pixels differing from the reference by more than 25/255
/// reaches diff_threshold. The reference only adapts on inactive frames.
inline bool is_active_frame(BackgroundModel& model, const RgbImage& frame) {
  if (frame.width() != model.reference.width() || frame.height() != model.reference.height())
    fail(ErrorKind::ShapeError, "frame size differs from background model");
  const FloatImage gray = to_gray_float(frame);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < gray.size(); ++i)
    if (std::abs(gray.pixels()[i] - model.reference.pixels()[i]) > kActivityLevel) ++changed;
  const double fraction = static_cast<double>(changed) / static_cast<double>(gray.size());
  const bool active = fraction >= model.diff_threshold;
  if (!active) {
    const auto a = static_cast<float>(model.alpha);
    for (std::size_t i = 0; i < gray.size(); ++i)
      model.reference.pixels()[i] = (1.0f - a) * model.reference.pixels()[i] + a * gray.pixels()[i];
  }
  return active;
}

// ---- morphology ----------------------------------------------------------------

namespace detail {

/// Square-element min/max filter by sliding counts along rows then columns.
/// Erosion treats outside pixels as set, dilation as clear.
inline Mask morph_pass(const Mask& in, int radius, bool dilate) {
  if (radius <= 0) return in;
  const int w = in.width(), h = in.height();
  const std::uint8_t pad = dilate ? 0 : 1;
  auto run = [&](const Mask& src, bool horizontal) {
    Mask out(w, h);
    const int n_lines = horizontal ? h : w;
    const int len = horizontal ? w : h;
    for (int line = 0; line < n_lines; ++line) {
      auto at = [&](int i) -> int {
        if (i < 0 || i >= len) return pad;
        return horizontal ? src(i, line) : src(line, i);
      };
      int count = 0;
      for (int i = -radius; i <= radius; ++i) count += at(i);
      const int full = 2 * radius + 1;
      for (int i = 0; i < len; ++i) {
        const std::uint8_t v = dilate ? (count > 0) : (count == full);
        if (horizontal)
          out(i, line) = v;
        else
          out(line, i) = v;
        count += at(i + radius + 1) - at(i - radius);
      }
    }
    return out;
  };
  return run(run(in, true), false);
}

}  // namespace detail

inline Mask dilate(const Mask& m, int radius) { return detail::morph_pass(m, radius, true); }
inline Mask erode(const Mask& m, int radius) { return detail::morph_pass(m, radius, false); }
inline Mask close_mask(const Mask& m, int radius) { return erode(dilate(m, radius), radius); }
inline Mask open_mask(const Mask& m, int radius) { return dilate(erode(m, radius), radius); }

// ---- components and rectangles -------------------------------------------------

struct Component {
  std::vector<std::array<int, 2>> pixels;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounding box
};

/// 8-connected components of a binary mask, in raster order of first pixel.
inline std::vector<Component> connected_components(const Mask& m, int min_area = 1) {
  const int w = m.width(), h = m.height();
  std::vector<std::uint8_t> seen(m.size(), 0);
  std::vector<Component> out;
  std::vector<std::array<int, 2>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!m(x, y) || seen[idx]) continue;
      Component c;
      c.x0 = c.x1 = x;
      c.y0 = c.y1 = y;
      seen[idx] = 1;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const auto [px, py] = stack.back();
        stack.pop_back();
        c.pixels.push_back({px, py});
        c.x0 = std::min(c.x0, px);
        c.x1 = std::max(c.x1, px);
        c.y0 = std::min(c.y0, py);
        c.y1 = std::max(c.y1, py);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx, ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (m(nx, ny) && !seen[n]) {
              seen[n] = 1;
              stack.push_back({nx, ny});
            }
          }
      }
      if (static_cast<int>(c.pixels.size()) >= min_area) out.push_back(std::move(c));
    }
  }
  return out;
}

/// Convex hull (counter-clockwise in x-right/y-up terms, no collinear points)
/// by the monotone chain over integer points.
inline std::vector<std::array<int, 2>> convex_hull(std::vector<std::array<int, 2>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto turn = [](const std::array<int, 2>& o, const std::array<int, 2>& a, const std::array<int, 2>& b) {
    return static_cast<long long>(a[0] - o[0]) * (b[1] - o[1]) - static_cast<long long>(a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<std::array<int, 2>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && turn(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && turn(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

enum class Corner { UL, UR, LR, LL };

/// Rectangle with `width` along the direction `angle_deg` (image x toward
/// image y) and `height` across it. Normalized: width >= height, angle in (-90, 90].
struct OrientedRect {
  Point2 center;
  double width = 0.0, height = 0.0;
  double angle_deg = 0.0;

  Point2 axis_u() const { return {std::cos(angle_deg * std::numbers::pi / 180.0), std::sin(angle_deg * std::numbers::pi / 180.0)}; }
  Point2 axis_v() const { const Point2 u = axis_u(); return {-u.y, u.x}; }
  double area() const { return width * height; }

  Point2 corner(Corner c) const {
    const Point2 u = 0.5 * width * axis_u(), v = 0.5 * height * axis_v();
    switch (c) {
      case Corner::UL: return center - u - v;
      case Corner::UR: return center + u - v;
      case Corner::LR: return center + u + v;
      case Corner::LL: return center - u + v;
    }
    return center;
  }

  std::array<Point2, 4> corners() const {
    return {corner(Corner::UL), corner(Corner::UR), corner(Corner::LR), corner(Corner::LL)};
  }

  OrientedRect translated(Point2 d) const { return {center + d, width, height, angle_deg}; }
};

inline OrientedRect normalize_rect(Point2 center, double w, double h, double angle_deg) {
  if (w < h) {
    std::swap(w, h);
    angle_deg += 90.0;
  }
  while (angle_deg > 90.0) angle_deg -= 180.0;
  while (angle_deg <= -90.0) angle_deg += 180.0;
  return {center, w, h, angle_deg};
}

/// Minimum-area enclosing rectangle of a point set via rotating calipers over
/// its convex hull edges. Coordinates are taken relative to the first hull
/// vertex so integer shifts of the input shift the result exactly.
inline OrientedRect min_area_rect(const std::vector<std::array<int, 2>>& points) {
  const auto hull = convex_hull(points);
  if (hull.empty()) fail(ErrorKind::InvalidInput, "no points for rectangle");
  const double ox = hull[0][0], oy = hull[0][1];
  std::vector<Point2> p;
  for (const auto& q : hull) p.push_back({q[0] - ox, q[1] - oy});
  if (p.size() == 1) return {{ox, oy}, 0.0, 0.0, 0.0};
  if (p.size() == 2) {
    const Point2 d = p[1] - p[0];
    return normalize_rect({ox + 0.5 * d.x, oy + 0.5 * d.y}, norm(d), 0.0, std::atan2(d.y, d.x) * 180.0 / std::numbers::pi);
  }
  double best_area = std::numeric_limits<double>::infinity();
  OrientedRect best;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Point2 d = p[(i + 1) % p.size()] - p[i];
    const double len = norm(d);
    if (len == 0.0) continue;
    const Point2 e = (1.0 / len) * d, n{-e.y, e.x};
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const auto& q : p) {
      umin = std::min(umin, dot(q, e));
      umax = std::max(umax, dot(q, e));
      vmin = std::min(vmin, dot(q, n));
      vmax = std::max(vmax, dot(q, n));
    }
    const double area = (umax - umin) * (vmax - vmin);
    if (area < best_area - 1e-9) {
      best_area = area;
      const double uc = 0.5 * (umin + umax), vc = 0.5 * (vmin + vmax);
      const Point2 c = uc * e + vc * n;
      best = normalize_rect({ox + c.x, oy + c.y}, umax - umin, vmax - vmin, std::atan2(e.y, e.x) * 180.0 / std::numbers::pi);
    }
  }
  return best;
}

// ---- segmentation ---------------------------------------------------------------

struct Candidate {
  Mask mask;  // component mask over its bounding box
  int mask_x0 = 0, mask_y0 = 0;
  int area = 0;
  OrientedRect rect;
};

inline constexpr int kMinComponentArea = 50;

/// HSV window -> close -> open -> 8-connected components (>= 50 px) -> oriented
/// rect per component; largest first.
inline std::vector<Candidate> segment_candidates(const RgbImage& frame, const HsvThresholds& thr, int morph_radius,
                                                 int min_area = kMinComponentArea) {
  thr.validate();
  if (morph_radius < 0) fail(ErrorKind::ConfigurationError, "morph_radius must be non-negative");
  const Mask m = open_mask(close_mask(threshold_hsv(frame, thr), morph_radius), morph_radius);
  std::vector<Candidate> out;
  for (auto& comp : connected_components(m, min_area)) {
    Candidate c;
    c.area = static_cast<int>(comp.pixels.size());
    c.mask_x0 = comp.x0;
    c.mask_y0 = comp.y0;
    c.mask = Mask(comp.x1 - comp.x0 + 1, comp.y1 - comp.y0 + 1);
    std::vector<std::array<int, 2>> boundary;
    // Hull input: leftmost and rightmost pixel of each row suffices.
    std::map<int, std::pair<int, int>> rows;
    for (const auto& [x, y] : comp.pixels) {
      c.mask(x - comp.x0, y - comp.y0) = 1;
      auto [it, inserted] = rows.try_emplace(y, x, x);
      if (!inserted) {
        it->second.first = std::min(it->second.first, x);
        it->second.second = std::max(it->second.second, x);
      }
    }
    for (const auto& [y, span] : rows) {
      boundary.push_back({span.first, y});
      boundary.push_back({span.second, y});
    }
    c.rect = min_area_rect(boundary);
    if (!(c.rect.area() > 0.0)) continue;
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.area > b.area; });
  return out;
}

// ---- crop normalization ----------------------------------------------------------

inline constexpr int kCropHeight = 33;
inline constexpr int kCropWidth = 144;
inline constexpr int kCropSize = kCropHeight * kCropWidth;

/// De-rotated, bilinearly resampled 144x33 greylevel patch covering the rect.
inline GrayImage crop_rect(const FloatImage& gray, const OrientedRect& rect) {
  for (const auto& c : rect.corners()) {
    if (c.x < -0.5 || c.y < -0.5 || c.x > gray.width() - 0.5 || c.y > gray.height() - 0.5)
      fail(ErrorKind::ClipError, "rectangle extends outside the image");
  }
  const Point2 u = rect.axis_u(), v = rect.axis_v();
  GrayImage out(kCropWidth, kCropHeight);
  for (int j = 0; j < kCropHeight; ++j) {
    const double b = ((j + 0.5) / kCropHeight - 0.5) * rect.height;
    for (int i = 0; i < kCropWidth; ++i) {
      const double a = ((i + 0.5) / kCropWidth - 0.5) * rect.width;
      const Point2 p = rect.center + a * u + b * v;
      out(i, j) = to_u8(sample_bilinear(gray, p.x, p.y));
    }
  }
  return out;
}

/// Cumulative-histogram equalization onto [0, 255]; a constant image maps to 127.
inline GrayImage equalize_histogram(const GrayImage& img) {
  std::array<std::size_t, 256> hist{};
  for (auto p : img.pixels()) ++hist[p];
  GrayImage out(img.width(), img.height());
  const std::size_t n = img.size();
  std::size_t cdf_min = 0;
  for (auto h : hist)
    if (h) {
      cdf_min = h;
      break;
    }
  if (cdf_min == n) {
    std::fill(out.pixels().begin(), out.pixels().end(), std::uint8_t{127});
    return out;
  }
  std::array<std::uint8_t, 256> lut{};
  std::size_t cdf = 0;
  for (int v = 0; v < 256; ++v) {
    cdf += hist[static_cast<std::size_t>(v)];
    lut[static_cast<std::size_t>(v)] =
        to_u8(255.0 * static_cast<double>(cdf - std::min(cdf, cdf_min)) / static_cast<double>(n - cdf_min));
  }
  std::transform(img.pixels().begin(), img.pixels().end(), out.pixels().begin(), [&](std::uint8_t p) { return lut[p]; });
  return out;
}

/// Crop, equalize and vectorize row-major (length 4752).
inline std::vector<std::uint8_t> normalize_crop(const FloatImage& gray, const OrientedRect& rect) {
  return equalize_histogram(crop_rect(gray, rect)).pixels();
}

inline std::vector<std::uint8_t> normalize_crop(const RgbImage& frame, const OrientedRect& rect) {
  return normalize_crop(to_gray_float(frame), rect);
}

// ---- plate / non-plate classifier -------------------------------------------------

struct LabeledCrop {
  std::vector<std::uint8_t> x;
  bool is_plate = false;
};

struct LinearClassifier {
  std::vector<double> w;  // one weight per crop pixel (inputs scaled to [0, 1])
  double b = 0.0;
};

struct ClassifierOptions {
  double lambda = 1e-4;
  int epochs = 200;
  std::uint64_t seed = 1;
};

/// Pegasos-style hinge-loss subgradient descent with L2 regularization; the
/// bias is a regularized weight on a constant unit feature.
inline LinearClassifier train_plate_classifier(std::span<const LabeledCrop> samples, const ClassifierOptions& opt = {}) {
  if (samples.empty()) fail(ErrorKind::InsufficientData, "no training samples");
  const std::size_t dim = samples.front().x.size();
  bool pos = false, neg = false;
  for (const auto& s : samples) {
    if (s.x.size() != dim || dim == 0) fail(ErrorKind::ShapeError, "training vectors differ in length");
    (s.is_plate ? pos : neg) = true;
  }
  if (!pos || !neg) fail(ErrorKind::InsufficientData, "training set needs both plate and non-plate samples");
  if (!(opt.lambda > 0.0) || opt.epochs <= 0) fail(ErrorKind::ConfigurationError, "invalid classifier options");

  std::vector<std::vector<double>> xs;
  xs.reserve(samples.size());
  for (const auto& s : samples) {
    std::vector<double> v(dim + 1);
    for (std::size_t i = 0; i < dim; ++i) v[i] = s.x[i] / 255.0;
    v[dim] = 1.0;
    xs.push_back(std::move(v));
  }
  std::vector<double> w(dim + 1, 0.0);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed);
  std::size_t t = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k : order) {
      ++t;
      const double eta = 1.0 / (opt.lambda * static_cast<double>(t));
      const double y = samples[k].is_plate ? 1.0 : -1.0;
      const auto& x = xs[k];
      const double margin = y * std::inner_product(w.begin(), w.end(), x.begin(), 0.0);
      const double shrink = 1.0 - eta * opt.lambda;
      if (margin < 1.0) {
        for (std::size_t i = 0; i <= dim; ++i) w[i] = shrink * w[i] + eta * y * x[i];
      } else {
        for (auto& wi : w) wi *= shrink;
      }
    }
  }
  LinearClassifier clf;
  clf.b = w[dim];
  w.pop_back();
  clf.w = std::move(w);
  return clf;
}

struct Classification {
  bool is_plate = false;
  double margin = 0.0;  // signed w.x + b
};

inline Classification classify(const LinearClassifier& clf, std::span<const std::uint8_t> crop) {
  if (crop.size() != clf.w.size()) fail(ErrorKind::ShapeError, "crop length does not match classifier");
  double s = clf.b;
  for (std::size_t i = 0; i < crop.size(); ++i) s += clf.w[i] * (crop[i] / 255.0);
  return {s > 0.0, s};
}

// ---- corner refinement -------------------------------------------------------------

inline constexpr int kCornerWindow = 7;

namespace detail {

struct Gradient {
  double gx, gy;
};

inline Gradient sobel(const FloatImage& g, int x, int y) {
  auto I = [&](int dx, int dy) -> double { return g.at_clamped(x + dx, y + dy); };
  const double gx = (I(1, -1) + 2 * I(1, 0) + I(1, 1) - I(-1, -1) - 2 * I(-1, 0) - I(-1, 1)) / 8.0;
  const double gy = (I(-1, 1) + 2 * I(0, 1) + I(1, 1) - I(-1, -1) - 2 * I(0, -1) - I(1, -1)) / 8.0;
  return {gx, gy};
}

}  // namespace detail

/// Minimum eigenvalue of the 3x3-summed structure tensor of Sobel gradients.
inline double min_eigen_response(const FloatImage& g, int x, int y) {
  double a = 0, b = 0, c = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const auto d = detail::sobel(g, x + dx, y + dy);
      a += d.gx * d.gx;
      b += d.gx * d.gy;
      c += d.gy * d.gy;
    }
  return 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
}

/// Shi-Tomasi peak in a (2w+1)^2 window around the nominal rect corner, with
/// a 3x3 quadratic fit, then a gradient-orthogonality refinement (the point
/// minimizing sum (g . (q - p))^2 over nearby edge pixels), which removes the
/// inward bias of the response peak.
inline Point2 refine_corner(const FloatImage& gray, const OrientedRect& rect, Corner which, int w = kCornerWindow) {
  const Point2 nominal = rect.corner(which);
  const int nx = static_cast<int>(std::lround(nominal.x)), ny = static_cast<int>(std::lround(nominal.y));
  const int margin = w + 3;
  if (nx - margin < 0 || ny - margin < 0 || nx + margin >= gray.width() || ny + margin >= gray.height())
    fail(ErrorKind::ClipError, "corner window leaves the image");

  const int side = 2 * w + 3;  // response over the window plus one ring for the fit
  std::vector<double> resp(static_cast<std::size_t>(side * side));
  auto R = [&](int x, int y) -> double& {
    return resp[static_cast<std::size_t>((y - ny + w + 1) * side + (x - nx + w + 1))];
  };
  double peak = 0.0;
  for (int y = ny - w - 1; y <= ny + w + 1; ++y)
    for (int x = nx - w - 1; x <= nx + w + 1; ++x) {
      R(x, y) = min_eigen_response(gray, x, y);
      peak = std::max(peak, R(x, y));
    }
  if (!(peak > 1e-9)) return nominal;

  int bx = nx, by = ny;
  double best = -1.0, best_d = 1e300;
  const double tie = 1e-9 * peak;
  for (int y = ny - w; y <= ny + w; ++y)
    for (int x = nx - w; x <= nx + w; ++x) {
      const double r = R(x, y);
      const double d = std::hypot(x - nominal.x, y - nominal.y);
      if (r > best + tie || (std::abs(r - best) <= tie && d < best_d)) {
        best = r;
        best_d = d;
        bx = x;
        by = y;
      }
    }

  auto vertex = [](double l, double c, double r) {
    const double den = l - 2.0 * c + r;
    if (!(den < 0.0)) return 0.0;
    return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
  };
  const Point2 quad{bx + vertex(R(bx - 1, by), R(bx, by), R(bx + 1, by)),
                    by + vertex(R(bx, by - 1), R(bx, by), R(bx, by + 1))};

  Point2 p = quad;
  constexpr int kRefineRadius = 4;
  for (int iter = 0; iter < 10; ++iter) {
    const int cx = static_cast<int>(std::lround(p.x)), cy = static_cast<int>(std::lround(p.y));
    Eigen::Matrix2d G = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (int y = cy - kRefineRadius; y <= cy + kRefineRadius; ++y)
      for (int x = cx - kRefineRadius; x <= cx + kRefineRadius; ++x) {
        const auto d = detail::sobel(gray, x, y);
        Eigen::Matrix2d gg;
        gg << d.gx * d.gx, d.gx * d.gy, d.gx * d.gy, d.gy * d.gy;
        G += gg;
        rhs += gg * Eigen::Vector2d(x, y);
      }
    const double tr = G.trace();
    if (!(tr > 0.0) || G.determinant() <= 1e-6 * tr * tr) break;
    const Eigen::Vector2d q = G.ldlt().solve(rhs);
    const Point2 next{q.x(), q.y()};
    if (!next.finite() || distance(next, quad) > 2.0) return quad;
    const double step = distance(next, p);
    p = next;
    if (step < 1e-3) break;
  }
  return p;
}

inline Point2 refine_corner(const RgbImage& frame, const OrientedRect& rect, Corner which, int w = kCornerWindow) {
  return refine_corner(to_gray_float(frame), rect, which, w);
}

// ---- per-frame detection ------------------------------------------------------------

struct PlateDetection {
  Mask mask;
  int mask_x0 = 0, mask_y0 = 0;
  OrientedRect rect;
  Point2 corner;                  // refined tracked corner
  Point2 edge_left, edge_right;   // refined top-edge endpoints
  std::vector<std::uint8_t> crop; // 33x144 row-major, equalized
  double score = 0.0;
  std::string text;               // OCR result, empty when unread
};

struct DetectionParams {
  HsvThresholds hsv;
  int morph_radius = 2;
  int min_area = kMinComponentArea;
  int corner_window = kCornerWindow;
  Corner corner = Corner::UR;
  double gating_radius_px = 60.0;
  int max_missed_frames = 3;
  double diff_threshold = 0.002;
  double background_alpha = 0.05;

  void validate() const {
    hsv.validate();
    if (morph_radius < 0 || min_area < 1 || corner_window < 1 || max_missed_frames < 0 || !(gating_radius_px > 0.0))
      fail(ErrorKind::ConfigurationError, "invalid detection parameters");
  }
};

/// Candidates that survive cropping, classification (when a classifier is
/// given) and corner refinement. The top edge runs through the two upper
/// rect corners.
inline std::vector<PlateDetection> detect_plates(const RgbImage& frame, const DetectionParams& params,
                                                 const LinearClassifier* clf = nullptr) {
  params.validate();
  const FloatImage gray = to_gray_float(frame);
  std::vector<PlateDetection> out;
  for (auto& cand : segment_candidates(frame, params.hsv, params.morph_radius, params.min_area)) {
    PlateDetection det;
    try {
      det.crop = normalize_crop(gray, cand.rect);
      if (clf) {
        const Classification c = classify(*clf, det.crop);
        if (!c.is_plate) continue;
        det.score = c.margin;
      }
      det.corner = refine_corner(gray, cand.rect, params.corner, params.corner_window);
      const bool right = params.corner == Corner::UR || params.corner == Corner::LR;
      const bool upper = params.corner == Corner::UR || params.corner == Corner::UL;
      const Corner other = upper ? (right ? Corner::UL : Corner::UR) : (right ? Corner::LL : Corner::LR);
      const Point2 partner = refine_corner(gray, cand.rect, other, params.corner_window);
      det.edge_left = right ? partner : det.corner;
      det.edge_right = right ? det.corner : partner;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ClipError) throw;
      continue;
    }
    det.rect = cand.rect;
    det.mask = std::move(cand.mask);
    det.mask_x0 = cand.mask_x0;
    det.mask_y0 = cand.mask_y0;
    out.push_back(std::move(det));
  }
  return out;
}

// ---- track association ---------------------------------------------------------------

struct Observation {
  Point2 corner;
  Point2 edge_left, edge_right;
  std::string text;  // per-frame plate reading, empty when unread
};

struct FrameObservations {
  int frame = 0;
  double timestamp = 0.0;
  std::vector<Observation> observations;
};

struct AssociationParams {
  double gating_radius_px = 60.0;
  int max_missed_frames = 3;
};

/// Most frequent non-empty reading; ties go to the lexicographically smallest.
inline std::string majority_text(const std::vector<std::string>& texts) {
  std::map<std::string, int> votes;
  for (const auto& t : texts)
    if (!t.empty()) ++votes[t];
  std::string best;
  int best_n = 0;
  for (const auto& [t, n] : votes)
    if (n > best_n) {
      best = t;
      best_n = n;
    }
  return best;
}

/// Greedy nearest-neighbour association on constant-velocity predictions
/// within a gating radius. A track closes after max_missed_frames frames
/// without a match. Tracks are returned in order of creation (ids from 1).
inline std::vector<TrackSequence> associate_tracks(std::span<const FrameObservations> frames,
                                                   const AssociationParams& params = {}) {
  struct Live {
    TrackSequence seq;
    std::vector<std::string> texts;
    bool open = true;
  };
  std::vector<Live> tracks;
  int next_id = 1;
  for (const auto& fr : frames) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      if (!tracks[i].open) continue;
      if (fr.frame - tracks[i].seq.frames.back().frame > params.max_missed_frames)
        tracks[i].open = false;
      else
        open.push_back(i);
    }
    struct Pair {
      double d;
      std::size_t track, obs;
    };
    std::vector<Pair> pairs;
    for (std::size_t ti : open) {
      const auto& f = tracks[ti].seq.frames;
      Point2 pred = f.back().corner;
      if (f.size() >= 2) {
        const auto& a = f[f.size() - 2];
        const auto& b = f.back();
        const Point2 vel = (1.0 / (b.frame - a.frame)) * (b.corner - a.corner);
        pred = b.corner + static_cast<double>(fr.frame - b.frame) * vel;
      }
      for (std::size_t oi = 0; oi < fr.observations.size(); ++oi) {
        const double d = distance(pred, fr.observations[oi].corner);
        if (d <= params.gating_radius_px) pairs.push_back({d, ti, oi});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
    std::vector<bool> track_used(tracks.size(), false), obs_used(fr.observations.size(), false);
    for (const auto& p : pairs) {
      if (track_used[p.track] || obs_used[p.obs]) continue;
      track_used[p.track] = obs_used[p.obs] = true;
      const auto& o = fr.observations[p.obs];
      tracks[p.track].seq.frames.push_back({fr.frame, fr.timestamp, o.corner, o.edge_left, o.edge_right});
      tracks[p.track].texts.push_back(o.text);
    }
    for (std::size_t oi = 0; oi < fr.observations.size(); ++oi) {
      if (obs_used[oi]) continue;
      const auto& o = fr.observations[oi];
      Live t;
      t.seq.track_id = next_id++;
      t.seq.frames.push_back({fr.frame, fr.timestamp, o.corner, o.edge_left, o.edge_right});
      t.texts.push_back(o.text);
      tracks.push_back(std::move(t));
    }
  }
  std::vector<TrackSequence> out;
  out.reserve(tracks.size());
  for (auto& t : tracks) {
    t.seq.plate_text = majority_text(t.texts);
    out.push_back(std::move(t.seq));
  }
  return out;
}

}  // namespace roadspeed
