#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mpt/featmap.hpp"
#include "mpt/heads_loss.hpp"
#include "mpt/kv.hpp"
#include "mpt/numerics/dense_array.hpp"
#include "mpt/types.hpp"

/// Synthetic panoramic clips with planted groups and three-level labels.
///
/// Each individual is a Gaussian blob confined to its box. The blob multiplies
/// frame-anchored 4×4 tiles taken from the rows of a 16×16 Hadamard matrix:
///   channel 0  sum of the tiles of the individual's action labels
///   channel 1  sum of the tiles of its group's social labels
///   channel 2  the tile of its group's slot within the clip
/// Group members start near a shared locus and move with a per-group velocity
/// chosen by the group's first social label. Global labels are the image of the
/// group labels under `global_of_social`.
namespace mpt::synthgen {

struct GenSpec {
  std::size_t min_individuals = 4;
  std::size_t max_individuals = 10;
  std::size_t frames = 3;
  std::size_t min_groups = 1;
  std::size_t max_groups = 3;
  heads::LabelTaxonomy taxonomy;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t box_size = 12;
  /// Pixels per frame of group motion.
  std::size_t motion = 2;
  double noise = 0.05;
  /// Chance of each class being present before the nonempty resample.
  double label_prob = 0.35;
  std::size_t clips = 8;
  std::uint64_t seed = 0;

  /// Keys match the field names. Unknown keys are an InputError.
  static GenSpec parse(std::string_view text);
  KeyValues to_kv() const;
};

/// Throws InputError for ranges the generator cannot satisfy.
void validate(const GenSpec& spec);

/// Fixed lookup from social class to global class.
std::size_t global_of_social(std::size_t social, const heads::LabelTaxonomy& taxonomy);

struct ClipSample {
  std::string clip_id;
  std::uint64_t seed = 0;
  heads::LabelTaxonomy taxonomy;
  std::size_t frames = 0, height = 0, width = 0;
  DenseArray pixels;  // [T×3×H×W], values exactly representable as float
  std::vector<featmap::BoxTrack> tracks;
  std::vector<LabelSet> individual_labels;
  Partition groups;  // canonical
  std::vector<LabelSet> group_labels;
  LabelSet global_labels;

  std::size_t individuals() const { return tracks.size(); }
  DenseArray relation() const { return relation_from_partition(groups, individuals()); }

  friend bool operator==(const ClipSample&, const ClipSample&) = default;
};

/// Checks label sets, partition cover, and box bounds.
void validate(const ClipSample& clip);

/// Deterministic in (spec, seed). Throws InputError when boxes cannot be
/// packed without overlap.
ClipSample generate_clip(const GenSpec& spec, std::uint64_t seed);

/// `spec.clips` clips; clip i uses seed spec.seed · 1000003 + i.
std::vector<ClipSample> generate_dataset(const GenSpec& spec);

/// 16×16 Sylvester Hadamard entry (−1)^popcount(i & j).
int hadamard(std::size_t i, std::size_t j);
/// Value at pixel (y, x) of the frame-anchored tile built from Hadamard row `row`.
int tile_value(std::size_t row, std::size_t y, std::size_t x);
inline constexpr std::size_t kTileRows = 15;  // rows 1..15 are usable

/// Dataset container, little-endian:
///
///   "PPAR"   magic
///   u32      format version (1)
///   u64      clip count
///   per clip:
///     u64    record length in bytes
///     u32    metadata length, metadata bytes (key/value text)
///     u64    pixel count, pixel count × f32
///   u32      CRC-32 of every preceding byte
///
/// Metadata keys: clip_id, seed, taxonomy (3 sizes), frames, height, width,
/// individuals, box.<i> (4·T coordinates), action.<i>, groups, group.<g>,
/// social.<g>, global.
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const std::vector<ClipSample>& clips);
std::vector<ClipSample> decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::vector<ClipSample>& clips, const std::string& path);
std::vector<ClipSample> read_dataset(const std::string& path);

}  // namespace mpt::synthgen
