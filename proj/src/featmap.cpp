#include "mpt/featmap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "mpt/error.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::featmap {

void validate_tracks(std::span<const BoxTrack> tracks, std::size_t frames, double width, double height) {
  for (const BoxTrack& track : tracks) {
    if (track.boxes.size() != frames) {
      throw InputError("track " + std::to_string(track.id) + " has " + std::to_string(track.boxes.size()) +
                       " boxes for " + std::to_string(frames) + " frames");
    }
    for (const Box& b : track.boxes) {
      if (!(b.x2 > b.x1 && b.y2 > b.y1)) throw InputError("track " + std::to_string(track.id) + ": empty box");
      if (b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height) {
        throw InputError("track " + std::to_string(track.id) + ": box outside frame");
      }
    }
  }
}

void init_backbone(ParamStore& store, Initializer& init, const BackboneConfig& cfg) {
  const std::size_t p1 = cfg.stage1_patch, p2 = cfg.stage2_patch;
  nn::init_linear(store, init, "backbone.stage1", cfg.in_channels * p1 * p1, cfg.stage1_channels);
  nn::init_linear(store, init, "backbone.stage2", cfg.stage1_channels * p2 * p2, cfg.channels);
}

FeatureMap synth_backbone(Tape& tape, const ParamStore& store, const BackboneConfig& cfg, Var frames) {
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[1] != cfg.in_channels) {
    throw ShapeError("synth_backbone: expected [T×" + std::to_string(cfg.in_channels) + "×H×W], got " +
                     shape_string(s));
  }
  const std::size_t t = s[0], c = s[1], h = s[2], w = s[3];
  const std::size_t stride = cfg.stride();
  if (h % stride != 0 || w % stride != 0 || h == 0 || w == 0) {
    throw ShapeError("synth_backbone: frame " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by stride " + std::to_string(stride));
  }
  const std::size_t p1 = cfg.stage1_patch, p2 = cfg.stage2_patch;
  const std::size_t h1 = h / p1, w1 = w / p1, h2 = h1 / p2, w2 = w1 / p2;

  // Stage 1 patches from channel-first frames: [T,C,h1,p1,w1,p1] → [T,h1,w1,C,p1,p1].
  Var x = ops::reshape(frames, {t, c, h1, p1, w1, p1});
  x = ops::permute(x, {0, 2, 4, 1, 3, 5});
  x = ops::reshape(x, {t, h1, w1, c * p1 * p1});
  x = nn::linear(tape, store, "backbone.stage1", x);  // [T,h1,w1,C1]

  // Stage 2 patches from channel-last: [T,h2,p2,w2,p2,C1] → [T,h2,w2,p2,p2,C1].
  const std::size_t c1 = cfg.stage1_channels;
  x = ops::reshape(x, {t, h2, p2, w2, p2, c1});
  x = ops::permute(x, {0, 1, 3, 2, 4, 5});
  x = ops::reshape(x, {t, h2, w2, p2 * p2 * c1});
  x = nn::linear(tape, store, "backbone.stage2", x);  // [T,h2,w2,C]

  return {ops::permute(x, {0, 3, 1, 2}), static_cast<double>(stride)};
}

namespace {

struct Tap {
  std::size_t index;  // offset within one [H'×W'] plane
  double weight;
};

// Bilinear taps for continuous feature coordinate (y, x), clamped to the map.
std::array<Tap, 4> bilinear_taps(double y, double x, std::size_t h, std::size_t w) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double ly = y - static_cast<double>(y0);
  const double lx = x - static_cast<double>(x0);
  return {{{y0 * w + x0, (1 - ly) * (1 - lx)},
           {y0 * w + x1, (1 - ly) * lx},
           {y1 * w + x0, ly * (1 - lx)},
           {y1 * w + x1, ly * lx}}};
}

}  // namespace

Var roi_align(const FeatureMap& fm, std::span<const BoxTrack> tracks, std::size_t out_h, std::size_t out_w) {
  const Shape& s = fm.map.shape();
  if (s.size() != 4) throw ShapeError("roi_align: feature map must be [T×C×H'×W'], got " + shape_string(s));
  if (out_h == 0 || out_w == 0) throw ConfigError("roi_align: output size must be positive");
  if (!(fm.stride > 0)) throw ConfigError("roi_align: stride must be positive");
  const std::size_t t = s[0], c = s[1], h = s[2], w = s[3];
  const std::size_t n = tracks.size();
  const std::size_t bins = out_h * out_w;

  // taps[((ti*n + ni)*bins + bin)], shared across channels.
  std::vector<std::array<Tap, 4>> taps(t * n * bins);
  for (std::size_t ni = 0; ni < n; ++ni) {
    if (tracks[ni].boxes.size() != t) throw ShapeError("roi_align: track length does not match frame count");
    for (std::size_t ti = 0; ti < t; ++ti) {
      const Box& b = tracks[ni].boxes[ti];
      const double x1 = b.x1 / fm.stride, y1 = b.y1 / fm.stride;
      const double bw = (b.x2 - b.x1) / fm.stride / static_cast<double>(out_w);
      const double bh = (b.y2 - b.y1) / fm.stride / static_cast<double>(out_h);
      if (!(bw > 0 && bh > 0) || !std::isfinite(bw) || !std::isfinite(bh)) {
        throw InputError("roi_align: degenerate box for track " + std::to_string(tracks[ni].id));
      }
      for (std::size_t i = 0; i < out_h; ++i)
        for (std::size_t j = 0; j < out_w; ++j) {
          const double cy = y1 + (static_cast<double>(i) + 0.5) * bh - 0.5;
          const double cx = x1 + (static_cast<double>(j) + 0.5) * bw - 0.5;
          taps[(ti * n + ni) * bins + i * out_w + j] = bilinear_taps(cy, cx, h, w);
        }
    }
  }

  const DenseArray& fv = fm.map.value();
  DenseArray out({t, n, c, out_h, out_w});
  for (std::size_t ti = 0; ti < t; ++ti)
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double* plane = fv.data().data() + (ti * c + ci) * h * w;
        double* o = out.data().data() + ((ti * n + ni) * c + ci) * bins;
        for (std::size_t b = 0; b < bins; ++b) {
          double acc = 0.0;
          for (const Tap& tap : taps[(ti * n + ni) * bins + b]) acc += tap.weight * plane[tap.index];
          o[b] = acc;
        }
      }

  Var map = fm.map;
  return map.tape().record(std::move(out), {map}, [map, taps = std::move(taps), t, n, c, h, w, bins](Tape& tape, std::size_t self) {
    const DenseArray& g = tape.grad(self);
    DenseArray& gf = tape.grad_accumulator(map.id());
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ci = 0; ci < c; ++ci) {
          double* plane = gf.data().data() + (ti * c + ci) * h * w;
          const double* go = g.data().data() + ((ti * n + ni) * c + ci) * bins;
          for (std::size_t b = 0; b < bins; ++b)
            for (const Tap& tap : taps[(ti * n + ni) * bins + b]) plane[tap.index] += tap.weight * go[b];
        }
  });
}

void init_roi_projection(ParamStore& store, Initializer& init, std::size_t in_dim, std::size_t dim) {
  nn::init_linear(store, init, "roi.proj", in_dim, dim);
}

Var flatten_rois(Tape& tape, const ParamStore& store, Var rois) {
  const Shape& s = rois.shape();
  if (s.size() != 5) throw ShapeError("flatten_rois: expected [T×N×C×h×w], got " + shape_string(s));
  Var flat = ops::reshape(rois, {s[0], s[1], s[2] * s[3] * s[4]});
  return nn::linear(tape, store, "roi.proj", flat);
}

}  // namespace mpt::featmap
