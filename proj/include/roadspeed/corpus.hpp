#pragma once

// Synthetic training/evaluation corpora: glyph bitmaps cut from rendered
// plate crops, and plate / non-plate crops cut from rendered scenes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "roadspeed/detection.hpp"
#include "roadspeed/image.hpp"
#include "roadspeed/ocr.hpp"
#include "roadspeed/simulator.hpp"

namespace roadspeed {

inline constexpr const char* kDigits = "0123456789";

inline std::string random_plate_text(std::mt19937_64& rng, const std::string& alphabet = kDigits, int length = 7) {
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  for (int i = 0; i < length; ++i) s.push_back(alphabet[pick(rng)]);
  return s;
}

/// Random oblique single-vehicle scene: H_c in [4, 8] m, h in [0.3, 0.7] m,
/// v in [20, 100] km/h.
inline ObliqueScenarioParams random_oblique_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> hc(4.0, 8.0), h(0.3, 0.7), kmh(20.0, 100.0), off(0.5, 1.0);
  ObliqueScenarioParams p;
  p.camera_height_m = hc(rng);
  p.plate_height_m = h(rng);
  p.speed_mps = kmh_to_mps(kmh(rng));
  p.lateral_offset_m = off(rng);
  p.plate_text = random_plate_text(rng);
  p.seed = rng();
  return p;
}

// ---- glyphs -----------------------------------------------------------------------

struct CropRenderParams {
  double rotation_deg = 0.0;
  double noise_sigma = 0.0;   // greylevels, added at crop resolution
  double source_scale = 1.0;  // render at this fraction of 144x33, then upsample
  double margin_m = 0.0;      // crop extends this far beyond the plate edge
  double plate_length_m = 0.52;
  double plate_vertical_m = 0.12;
};

/// Plate crop as the detector would produce it: dark surround, yellow plate
/// (greylevel), black glyphs, bilinear upsampling and equalization.
inline GrayImage render_plate_crop(const std::string& text, const CropRenderParams& p, std::mt19937_64& rng) {
  const double plate_luma = luma({250, 210, 0}), ink_luma = luma({18, 18, 18}), body_luma = luma({52, 52, 58});
  const int sw = std::max(8, static_cast<int>(std::lround(kCropWidth * p.source_scale)));
  const int sh = std::max(4, static_cast<int>(std::lround(kCropHeight * p.source_scale)));
  const double span_u = p.plate_length_m + 2 * p.margin_m, span_w = p.plate_vertical_m + 2 * p.margin_m;
  const PlateTextLayout layout = PlateTextLayout::make(text.size(), p.plate_length_m, p.plate_vertical_m);
  const double th = p.rotation_deg * kDegToRad, c = std::cos(th), s = std::sin(th);
  const double hl = 0.5 * p.plate_length_m, hv = 0.5 * p.plate_vertical_m;

  FloatImage src(sw, sh);
  constexpr int ss = 4;
  for (int j = 0; j < sh; ++j)
    for (int i = 0; i < sw; ++i) {
      double acc = 0.0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double a = ((i + (sx + 0.5) / ss) / sw - 0.5) * span_u;
          const double b = (0.5 - (j + (sy + 0.5) / ss) / sh) * span_w;
          const double u = c * a + s * b, w = -s * a + c * b;
          if (std::abs(u) > hl || std::abs(w) > hv)
            acc += body_luma;
          else
            acc += layout.ink(text, u, w) ? ink_luma : plate_luma;
        }
      src(i, j) = static_cast<float>(acc / (ss * ss));
    }
  std::normal_distribution<double> noise(0.0, 1.0);
  GrayImage out(kCropWidth, kCropHeight);
  for (int j = 0; j < kCropHeight; ++j)
    for (int i = 0; i < kCropWidth; ++i) {
      const double x = (i + 0.5) * sw / kCropWidth - 0.5, y = (j + 0.5) * sh / kCropHeight - 0.5;
      out(i, j) = to_u8(sample_bilinear(src, x, y) + p.noise_sigma * noise(rng));
    }
  return equalize_histogram(out);
}

inline int alphabet_index(const std::string& alphabet, char ch) {
  const auto pos = alphabet.find(ch);
  if (pos == std::string::npos) fail(ErrorKind::InvalidInput, std::string("character '") + ch + "' not in alphabet");
  return static_cast<int>(pos);
}

struct GlyphCorpusOptions {
  double max_rotation_deg = 2.0;
  double noise_sigma = 8.0;      // per-plate noise drawn uniformly from [min_noise_sigma, noise_sigma]
  double min_noise_sigma = 0.0;  // rendered frames are noise-free, so clean crops belong in the mix
  double min_source_scale = 0.5;
  double max_margin_m = 0.008;
};

struct GlyphCorpus {
  std::vector<LabeledVector> samples;
  std::size_t plates = 0;
  std::size_t rejected_plates = 0;  // glyph count did not match the text
};

inline CropRenderParams random_crop_params(std::mt19937_64& rng, const GlyphCorpusOptions& opt) {
  std::uniform_real_distribution<double> rot(-opt.max_rotation_deg, opt.max_rotation_deg),
      scale(opt.min_source_scale, 1.0), margin(0.0, opt.max_margin_m), noise(opt.min_noise_sigma, opt.noise_sigma);
  CropRenderParams p;
  p.rotation_deg = rot(rng);
  p.source_scale = scale(rng);
  p.margin_m = margin(rng);
  p.noise_sigma = noise(rng);
  return p;
}

/// Glyph bitmaps from `n_plates` random plates; plates whose segmentation
/// does not yield one box per character are skipped and counted.
inline GlyphCorpus make_glyph_corpus(int n_plates, const std::string& alphabet, std::uint64_t seed,
                                     const GlyphCorpusOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  GlyphCorpus out;
  for (int n = 0; n < n_plates; ++n) {
    const std::string text = random_plate_text(rng, alphabet);
    const GrayImage crop = render_plate_crop(text, random_crop_params(rng, opt), rng);
    ++out.plates;
    std::vector<GlyphBox> boxes;
    try {
      boxes = segment_glyphs(crop);
    } catch (const Error&) {
    }
    if (boxes.size() != text.size()) {
      ++out.rejected_plates;
      continue;
    }
    for (std::size_t i = 0; i < boxes.size(); ++i)
      out.samples.push_back({glyph_features(boxes[i]), alphabet_index(alphabet, text[i])});
  }
  return out;
}

struct OcrEvaluation {
  std::size_t characters = 0;
  std::size_t correct = 0;
  double accuracy() const { return characters ? static_cast<double>(correct) / characters : 0.0; }
};

/// Per-character accuracy of read_plate on fresh random plates. Characters of
/// plates that fail to segment count as wrong.
inline OcrEvaluation evaluate_ocr(const Mlp& net, int n_plates, std::uint64_t seed, const GlyphCorpusOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  OcrEvaluation ev;
  for (int n = 0; n < n_plates; ++n) {
    const std::string text = random_plate_text(rng, net.alphabet);
    const GrayImage crop = render_plate_crop(text, random_crop_params(rng, opt), rng);
    ev.characters += text.size();
    try {
      const std::string got = read_plate(crop, net).text;
      for (std::size_t i = 0; i < std::min(got.size(), text.size()); ++i) ev.correct += got[i] == text[i];
    } catch (const Error&) {
    }
  }
  return ev;
}

// ---- plate / non-plate crops --------------------------------------------------------

struct PlateCorpusOptions {
  int n_positive = 400;
  int n_negative = 400;
  int frames_per_scene = 4;
  int width = 640, height = 480;
  double yellow_panel_fraction = 0.25;  // share of negatives that are text-free yellow panels
};

namespace detail {

inline bool rect_overlaps(const OrientedRect& a, const std::array<Point2, 4>& quad, double pad) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& q : quad) {
    xmin = std::min(xmin, q.x);
    xmax = std::max(xmax, q.x);
    ymin = std::min(ymin, q.y);
    ymax = std::max(ymax, q.y);
  }
  double axmin = 1e300, axmax = -1e300, aymin = 1e300, aymax = -1e300;
  for (const auto& q : a.corners()) {
    axmin = std::min(axmin, q.x);
    axmax = std::max(axmax, q.x);
    aymin = std::min(aymin, q.y);
    aymax = std::max(aymax, q.y);
  }
  return !(axmax < xmin - pad || axmin > xmax + pad || aymax < ymin - pad || aymin > ymax + pad);
}

}  // namespace detail

/// Positives: segmented plates in rendered random scenes. Negatives: random
/// rectangles of the same scenes away from the plate, plus text-free yellow
/// panels (plate-colored regions that are not plates).
inline std::vector<LabeledCrop> make_plate_corpus(const PlateCorpusOptions& opt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledCrop> pos, neg;
  const int n_panels = static_cast<int>(std::lround(opt.n_negative * opt.yellow_panel_fraction));
  const int n_background = opt.n_negative - n_panels;
  std::uniform_real_distribution<double> uw(40.0, 180.0), aspect(2.5, 6.0), ang(-12.0, 12.0), unit(0.0, 1.0);

  while (static_cast<int>(pos.size()) < opt.n_positive || static_cast<int>(neg.size()) < n_background) {
    ObliqueScenarioParams p = random_oblique_params(rng);
    p.width = opt.width;
    p.height = opt.height;
    p.focal_px = 2400.0 * opt.width / 1280.0;
    const ScenarioSpec spec = make_oblique_scenario(p);
    const RgbImage background = render_background(spec);
    for (int f = 0; f < opt.frames_per_scene; ++f) {
      const int k = spec.n_frames <= 1 ? 0 : f * (spec.n_frames - 1) / std::max(1, opt.frames_per_scene - 1);
      RgbImage img = background;
      render_vehicle(img, spec, spec.vehicles[0], k - spec.vehicles[0].enter_frame);
      const FloatImage gray = to_gray_float(img);
      const auto quad = projected_plate_quad(spec, 0, k);
      if (static_cast<int>(pos.size()) < opt.n_positive) {
        for (const auto& cand : segment_candidates(img, {}, 2)) {
          if (!detail::rect_overlaps(cand.rect, quad, 0.0)) continue;
          try {
            pos.push_back({normalize_crop(gray, cand.rect), true});
          } catch (const Error&) {
          }
          break;
        }
      }
      for (int tries = 0; tries < 40 && static_cast<int>(neg.size()) < n_background; ++tries) {
        OrientedRect r;
        r.width = uw(rng);
        r.height = r.width / aspect(rng);
        r.angle_deg = ang(rng);
        r.center = {unit(rng) * (spec.camera.width - 1), unit(rng) * (spec.camera.height - 1)};
        if (detail::rect_overlaps(r, quad, 4.0)) continue;
        try {
          neg.push_back({normalize_crop(gray, r), false});
          break;
        } catch (const Error&) {
        }
      }
    }
  }
  for (int n = 0; n < n_panels; ++n) {
    CropRenderParams p = random_crop_params(rng, {});
    neg.push_back({render_plate_crop("", p, rng).pixels(), false});
  }
  pos.resize(static_cast<std::size_t>(opt.n_positive));
  std::vector<LabeledCrop> out = std::move(pos);
  out.insert(out.end(), neg.begin(), neg.end());
  return out;
}

/// Glyph bitmaps harvested from rendered frames through the detection path
/// (segment -> normalize_crop -> segment_glyphs), so training sees the same
/// rim, perspective and resampling as a live run. Plates span roughly
/// 70-200 px in width.
inline GlyphCorpus make_rendered_glyph_corpus(int n_plates, const std::string& alphabet, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> focal(1000.0, 2600.0), tilt(-1.0, 1.0);
  GlyphCorpus out;
  while (static_cast<int>(out.plates) < n_plates) {
    ObliqueScenarioParams p = random_oblique_params(rng);
    p.plate_text = random_plate_text(rng, alphabet);
    p.width = 640;
    p.height = 480;
    p.travel_m = 2.0;
    p.focal_px = focal(rng);
    p.plate_tilt_deg = tilt(rng);
    const ScenarioSpec spec = make_oblique_scenario(p);
    const int k = std::uniform_int_distribution<int>(0, spec.n_frames - 1)(rng);
    const RgbImage img = render_frame(spec, k);
    const auto quad = projected_plate_quad(spec, 0, k);
    ++out.plates;
    std::vector<GlyphBox> boxes;
    for (const auto& cand : segment_candidates(img, {}, 2)) {
      if (!detail::rect_overlaps(cand.rect, quad, 0.0)) continue;
      try {
        boxes = segment_glyphs(normalize_crop(to_gray_float(img), cand.rect), kCropWidth, kCropHeight);
      } catch (const Error&) {
      }
      break;
    }
    if (boxes.size() != p.plate_text.size()) {
      ++out.rejected_plates;
      continue;
    }
    for (std::size_t i = 0; i < boxes.size(); ++i)
      out.samples.push_back({glyph_features(boxes[i]), alphabet_index(alphabet, p.plate_text[i])});
  }
  return out;
}

/// Deterministic shuffled split; the first part holds the training share.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_holdout(std::vector<T> items, double holdout_fraction, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(items.size())));
  std::vector<T> test(items.end() - static_cast<std::ptrdiff_t>(n_test), items.end());
  items.resize(items.size() - n_test);
  return {std::move(items), std::move(test)};
}

/// Fraction of held-out crops the classifier labels wrongly.
inline double miss_rate(const LinearClassifier& clf, const std::vector<LabeledCrop>& test) {
  if (test.empty()) fail(ErrorKind::InsufficientData, "empty evaluation set");
  std::size_t wrong = 0;
  for (const auto& s : test) wrong += classify(clf, s.x).is_plate != s.is_plate;
  return static_cast<double>(wrong) / static_cast<double>(test.size());
}

}  // namespace roadspeed
