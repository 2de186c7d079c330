#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"

namespace mpt::featmap {

/// Axis-aligned box in frame pixels.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

/// One individual's box in every frame.
struct BoxTrack {
  std::size_t id = 0;
  std::vector<Box> boxes;
  friend bool operator==(const BoxTrack&, const BoxTrack&) = default;
};

/// Throws InputError unless every box has positive extent and lies inside a
/// width × height frame, and every track covers `frames` frames.
void validate_tracks(std::span<const BoxTrack> tracks, std::size_t frames, double width, double height);

/// Stand-in backbone: two strided patch-embedding stages (stride
/// stage1_patch · stage2_patch overall), each a linear map over a
/// non-overlapping patch.
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::size_t stage1_channels = 16;
  std::size_t channels = 32;
  std::size_t stage1_patch = 4;
  std::size_t stage2_patch = 2;

  std::size_t stride() const { return stage1_patch * stage2_patch; }
};

void init_backbone(ParamStore& store, Initializer& init, const BackboneConfig& cfg);

/// Scene feature map [T×C×H'×W'] and its stride in frame pixels.
struct FeatureMap {
  Var map;
  double stride = 1.0;
};

/// frames [T×3×H×W] → feature map [T×C×H/s×W/s].
FeatureMap synth_backbone(Tape& tape, const ParamStore& store, const BackboneConfig& cfg, Var frames);

/// RoIAlign with one bilinear sample at each bin centre and no coordinate
/// rounding. Box coordinates are divided by the stride; sample positions use
/// the half-pixel-aligned convention (feature cell j covers [j, j+1) and its
/// value sits at j + 0.5). Output [T×N×C×out_h×out_w].
Var roi_align(const FeatureMap& fm, std::span<const BoxTrack> tracks, std::size_t out_h, std::size_t out_w);

/// `roi.proj`: C·out_h·out_w → D.
void init_roi_projection(ParamStore& store, Initializer& init, std::size_t in_dim, std::size_t dim);
/// rois [T×N×C×h×w] → individual features [T×N×D].
Var flatten_rois(Tape& tape, const ParamStore& store, Var rois);

}  // namespace mpt::featmap
