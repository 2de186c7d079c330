#include "mpt/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "mpt/binary_io.hpp"
#include "mpt/error.hpp"

namespace mpt::synthgen {
namespace {

constexpr std::size_t kTileSide = 4;
constexpr std::size_t kPlacementTries = 400;
constexpr std::size_t kPackingRestarts = 200;

const std::set<std::string> kSpecKeys = {
    "min_individuals", "max_individuals", "frames",  "min_groups", "max_groups", "individual_classes",
    "social_classes",  "global_classes",  "height",  "width",      "box_size",   "motion",
    "noise",           "label_prob",      "clips",   "seed"};

// Unit direction per social class; cycled when there are more classes.
constexpr int kDirections[8][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};

std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

LabelSet sample_labels(std::mt19937_64& rng, std::size_t classes, double p) {
  std::bernoulli_distribution coin(p);
  while (true) {
    LabelSet out;
    for (std::size_t c = 0; c < classes; ++c)
      if (coin(rng)) out.push_back(c);
    if (!out.empty()) return out;
  }
}

struct Placed {
  long x = 0, y = 0;    // top-left at frame 0
  long vx = 0, vy = 0;  // per-frame displacement
};

bool fits(const Placed& p, const GenSpec& s) {
  const long b = static_cast<long>(s.box_size);
  for (std::size_t t = 0; t < s.frames; ++t) {
    const long x = p.x + p.vx * static_cast<long>(t), y = p.y + p.vy * static_cast<long>(t);
    if (x < 0 || y < 0 || x + b > static_cast<long>(s.width) || y + b > static_cast<long>(s.height)) return false;
  }
  return true;
}

bool overlaps(const Placed& a, const Placed& b, const GenSpec& s) {
  const long side = static_cast<long>(s.box_size) + 1;  // keep a one-pixel gap
  for (std::size_t t = 0; t < s.frames; ++t) {
    const long ti = static_cast<long>(t);
    const long dx = (a.x + a.vx * ti) - (b.x + b.vx * ti);
    const long dy = (a.y + a.vy * ti) - (b.y + b.vy * ti);
    if (std::labs(dx) < side && std::labs(dy) < side) return true;
  }
  return false;
}

// Places every individual; group members are drawn around a shared locus.
std::vector<Placed> pack(std::mt19937_64& rng, const GenSpec& s, const Partition& groups,
                         const std::vector<std::pair<long, long>>& velocity) {
  const long b = static_cast<long>(s.box_size);
  const long spread = b + b / 2;
  const std::size_t n = std::accumulate(groups.begin(), groups.end(), std::size_t{0},
                                        [](std::size_t acc, const Group& g) { return acc + g.size(); });
  for (std::size_t restart = 0; restart < kPackingRestarts; ++restart) {
    std::vector<Placed> placed(n);
    std::vector<bool> done(n, false);
    bool ok = true;
    for (std::size_t g = 0; g < groups.size() && ok; ++g) {
      const long lx = static_cast<long>(uniform_size(rng, 0, s.width - s.box_size));
      const long ly = static_cast<long>(uniform_size(rng, 0, s.height - s.box_size));
      for (std::size_t m : groups[g]) {
        bool found = false;
        for (std::size_t attempt = 0; attempt < kPlacementTries && !found; ++attempt) {
          Placed p;
          p.x = lx + std::uniform_int_distribution<long>(-spread, spread)(rng);
          p.y = ly + std::uniform_int_distribution<long>(-spread, spread)(rng);
          p.vx = velocity[g].first;
          p.vy = velocity[g].second;
          if (!fits(p, s)) continue;
          bool clash = false;
          for (std::size_t o = 0; o < n && !clash; ++o) clash = done[o] && overlaps(p, placed[o], s);
          if (clash) continue;
          placed[m] = p;
          done[m] = true;
          found = true;
        }
        if (!found) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return placed;
  }
  throw InputError("infeasible packing: cannot place " + std::to_string(n) + " boxes of size " +
                   std::to_string(s.box_size) + " in a " + std::to_string(s.width) + "x" +
                   std::to_string(s.height) + " frame");
}

void render(ClipSample& clip, const GenSpec& s, const std::vector<Placed>& placed,
            const std::vector<std::size_t>& group_of, std::mt19937_64& rng) {
  const std::size_t T = s.frames, H = s.height, W = s.width, b = s.box_size;
  std::vector<double> px(T * 3 * H * W, 0.0);
  const double sigma = static_cast<double>(b) / 3.0;
  const double half = static_cast<double>(b) / 2.0;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const std::size_t g = group_of[i];
    for (std::size_t t = 0; t < T; ++t) {
      const long x0 = placed[i].x + placed[i].vx * static_cast<long>(t);
      const long y0 = placed[i].y + placed[i].vy * static_cast<long>(t);
      for (std::size_t dy = 0; dy < b; ++dy)
        for (std::size_t dx = 0; dx < b; ++dx) {
          const std::size_t y = static_cast<std::size_t>(y0) + dy, x = static_cast<std::size_t>(x0) + dx;
          const double ry = static_cast<double>(dy) + 0.5 - half, rx = static_cast<double>(dx) + 0.5 - half;
          const double env = std::exp(-(rx * rx + ry * ry) / (2.0 * sigma * sigma));
          double c0 = 0, c1 = 0;
          for (std::size_t a : clip.individual_labels[i]) c0 += tile_value(1 + a, y, x);
          for (std::size_t l : clip.group_labels[g]) c1 += tile_value(1 + l, y, x);
          const double c2 = tile_value(1 + g, y, x);
          const std::size_t plane = H * W, pix = y * W + x;
          px[(t * 3 + 0) * plane + pix] += env * c0;
          px[(t * 3 + 1) * plane + pix] += env * c1;
          px[(t * 3 + 2) * plane + pix] += env * c2;
        }
    }
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : px) {
    if (s.noise > 0) v += s.noise * noise(rng);
    v = static_cast<double>(static_cast<float>(v));
  }
  clip.pixels = DenseArray({T, 3, H, W}, std::move(px));
}

std::string box_text(const featmap::BoxTrack& track) {
  std::vector<double> coords;
  for (const featmap::Box& b : track.boxes) coords.insert(coords.end(), {b.x1, b.y1, b.x2, b.y2});
  return join_doubles(coords);
}

KeyValues clip_metadata(const ClipSample& c) {
  KeyValues kv;
  kv.set("clip_id", c.clip_id);
  kv.set("seed", std::to_string(c.seed));
  kv.set("taxonomy", join_sizes({c.taxonomy.individual, c.taxonomy.social, c.taxonomy.global}));
  kv.set("frames", std::to_string(c.frames));
  kv.set("height", std::to_string(c.height));
  kv.set("width", std::to_string(c.width));
  kv.set("individuals", std::to_string(c.individuals()));
  for (std::size_t i = 0; i < c.individuals(); ++i) {
    kv.set("box." + std::to_string(i), box_text(c.tracks[i]));
    kv.set("action." + std::to_string(i), join_sizes(c.individual_labels[i]));
  }
  kv.set("groups", std::to_string(c.groups.size()));
  for (std::size_t g = 0; g < c.groups.size(); ++g) {
    kv.set("group." + std::to_string(g), join_sizes(c.groups[g]));
    kv.set("social." + std::to_string(g), join_sizes(c.group_labels[g]));
  }
  kv.set("global", join_sizes(c.global_labels));
  return kv;
}

FormatError malformed(const std::string& what) { return FormatError(FormatError::Kind::malformed, what); }

ClipSample clip_from_metadata(const KeyValues& kv) {
  ClipSample c;
  try {
    c.clip_id = kv.get("clip_id");
    c.seed = kv.get_u64("seed", 0);
    const auto tax = kv.size_list("taxonomy");
    if (tax.size() != 3) throw malformed("taxonomy needs three sizes");
    c.taxonomy = {tax[0], tax[1], tax[2]};
    c.frames = kv.size_value("frames");
    c.height = kv.size_value("height");
    c.width = kv.size_value("width");
    const std::size_t n = kv.size_value("individuals");
    for (std::size_t i = 0; i < n; ++i) {
      const auto coords = kv.double_list("box." + std::to_string(i));
      if (coords.size() != 4 * c.frames) throw malformed("box." + std::to_string(i) + " has wrong length");
      featmap::BoxTrack track{i, {}};
      for (std::size_t t = 0; t < c.frames; ++t)
        track.boxes.push_back({coords[4 * t], coords[4 * t + 1], coords[4 * t + 2], coords[4 * t + 3]});
      c.tracks.push_back(std::move(track));
      c.individual_labels.push_back(kv.size_list("action." + std::to_string(i)));
    }
    const std::size_t g = kv.size_value("groups");
    for (std::size_t k = 0; k < g; ++k) {
      c.groups.push_back(kv.size_list("group." + std::to_string(k)));
      c.group_labels.push_back(kv.size_list("social." + std::to_string(k)));
    }
    c.global_labels = kv.size_list("global");
  } catch (const FormatError&) {
    throw;
  } catch (const InputError& e) {
    throw malformed(std::string("clip metadata: ") + e.what());
  }
  return c;
}

}  // namespace

GenSpec GenSpec::parse(std::string_view text) {
  const KeyValues kv = KeyValues::parse(text);
  kv.require_known(kSpecKeys);
  GenSpec s;
  s.min_individuals = kv.get_size("min_individuals", s.min_individuals);
  s.max_individuals = kv.get_size("max_individuals", s.max_individuals);
  s.frames = kv.get_size("frames", s.frames);
  s.min_groups = kv.get_size("min_groups", s.min_groups);
  s.max_groups = kv.get_size("max_groups", s.max_groups);
  s.taxonomy.individual = kv.get_size("individual_classes", s.taxonomy.individual);
  s.taxonomy.social = kv.get_size("social_classes", s.taxonomy.social);
  s.taxonomy.global = kv.get_size("global_classes", s.taxonomy.global);
  s.height = kv.get_size("height", s.height);
  s.width = kv.get_size("width", s.width);
  s.box_size = kv.get_size("box_size", s.box_size);
  s.motion = kv.get_size("motion", s.motion);
  s.noise = kv.get_double("noise", s.noise);
  s.label_prob = kv.get_double("label_prob", s.label_prob);
  s.clips = kv.get_size("clips", s.clips);
  s.seed = kv.get_u64("seed", s.seed);
  validate(s);
  return s;
}

KeyValues GenSpec::to_kv() const {
  KeyValues kv;
  kv.set("min_individuals", std::to_string(min_individuals));
  kv.set("max_individuals", std::to_string(max_individuals));
  kv.set("frames", std::to_string(frames));
  kv.set("min_groups", std::to_string(min_groups));
  kv.set("max_groups", std::to_string(max_groups));
  kv.set("individual_classes", std::to_string(taxonomy.individual));
  kv.set("social_classes", std::to_string(taxonomy.social));
  kv.set("global_classes", std::to_string(taxonomy.global));
  kv.set("height", std::to_string(height));
  kv.set("width", std::to_string(width));
  kv.set("box_size", std::to_string(box_size));
  kv.set("motion", std::to_string(motion));
  kv.set("noise", format_double(noise));
  kv.set("label_prob", format_double(label_prob));
  kv.set("clips", std::to_string(clips));
  kv.set("seed", std::to_string(seed));
  return kv;
}

void validate(const GenSpec& s) {
  heads::validate(s.taxonomy);
  if (s.min_individuals == 0 || s.min_individuals > s.max_individuals) {
    throw InputError("individual range must satisfy 1 <= min_individuals <= max_individuals");
  }
  if (s.min_groups == 0 || s.min_groups > s.max_groups) {
    throw InputError("group range must satisfy 1 <= min_groups <= max_groups");
  }
  if (s.min_groups > s.min_individuals) throw InputError("min_groups exceeds min_individuals");
  if (s.max_groups > kTileRows) throw InputError("at most 15 groups per clip are supported");
  if (s.taxonomy.individual > kTileRows || s.taxonomy.social > kTileRows) {
    throw InputError("at most 15 individual and 15 social classes are supported");
  }
  if (s.frames == 0) throw InputError("frames must be positive");
  if (s.box_size == 0 || s.box_size > s.height || s.box_size > s.width) throw InputError("box_size must fit the frame");
  if (s.motion * (s.frames - 1) + s.box_size > std::min(s.height, s.width)) {
    throw InputError("motion carries boxes out of the frame");
  }
  if (!(s.noise >= 0) || !std::isfinite(s.noise)) throw InputError("noise must be a finite non-negative value");
  if (!(s.label_prob > 0 && s.label_prob <= 1)) throw InputError("label_prob must lie in (0, 1]");
}

std::size_t global_of_social(std::size_t social, const heads::LabelTaxonomy& taxonomy) {
  return social % taxonomy.global;
}

int hadamard(std::size_t i, std::size_t j) { return std::popcount(i & j) % 2 == 0 ? 1 : -1; }

int tile_value(std::size_t row, std::size_t y, std::size_t x) {
  return hadamard(row, (y % kTileSide) * kTileSide + (x % kTileSide));
}

void validate(const ClipSample& c) {
  heads::validate(c.taxonomy);
  const std::size_t n = c.individuals();
  if (c.pixels.shape() != Shape{c.frames, 3, c.height, c.width}) throw InputError("clip pixels have the wrong shape");
  featmap::validate_tracks(c.tracks, c.frames, static_cast<double>(c.width), static_cast<double>(c.height));
  if (c.individual_labels.size() != n) throw InputError("one action label set per individual is required");
  auto check = [](const LabelSet& l, std::size_t classes, const char* what) {
    if (l.empty()) throw InputError(std::string(what) + " label set is empty");
    if (make_label_set(l) != l) throw InputError(std::string(what) + " label set is not sorted and unique");
    if (l.back() >= classes) throw InputError(std::string(what) + " label out of range");
  };
  for (const LabelSet& l : c.individual_labels) check(l, c.taxonomy.individual, "action");
  validate_partition(c.groups, n, /*require_cover=*/true);
  if (c.group_labels.size() != c.groups.size()) throw InputError("one social label set per group is required");
  for (const LabelSet& l : c.group_labels) check(l, c.taxonomy.social, "social");
  check(c.global_labels, c.taxonomy.global, "global");
}

ClipSample generate_clip(const GenSpec& spec, std::uint64_t seed) {
  validate(spec);
  std::mt19937_64 rng(seed);
  ClipSample clip;
  clip.clip_id = "clip-" + std::to_string(seed);
  clip.seed = seed;
  clip.taxonomy = spec.taxonomy;
  clip.frames = spec.frames;
  clip.height = spec.height;
  clip.width = spec.width;

  const std::size_t n = uniform_size(rng, spec.min_individuals, spec.max_individuals);
  const std::size_t g_count = uniform_size(rng, spec.min_groups, std::min(spec.max_groups, n));

  // Every group gets one member, the rest go to uniformly chosen groups; then
  // individual indices are shuffled so groups are not contiguous.
  std::vector<std::size_t> group_of(n);
  for (std::size_t i = 0; i < n; ++i) group_of[i] = i < g_count ? i : uniform_size(rng, 0, g_count - 1);
  std::shuffle(group_of.begin(), group_of.end(), rng);
  Partition raw(g_count);
  for (std::size_t i = 0; i < n; ++i) raw[group_of[i]].push_back(i);
  clip.groups = canonical_partition(raw);
  for (std::size_t g = 0; g < g_count; ++g)
    for (std::size_t m : clip.groups[g]) group_of[m] = g;

  std::vector<std::pair<long, long>> velocity;
  for (std::size_t g = 0; g < g_count; ++g) {
    clip.group_labels.push_back(sample_labels(rng, spec.taxonomy.social, spec.label_prob));
    const auto& dir = kDirections[clip.group_labels[g].front() % 8];
    const long m = static_cast<long>(spec.motion);
    velocity.emplace_back(dir[0] * m, dir[1] * m);
  }
  for (std::size_t i = 0; i < n; ++i)
    clip.individual_labels.push_back(sample_labels(rng, spec.taxonomy.individual, spec.label_prob));
  std::vector<std::size_t> global;
  for (const LabelSet& l : clip.group_labels)
    for (std::size_t s : l) global.push_back(global_of_social(s, spec.taxonomy));
  clip.global_labels = make_label_set(global);

  const std::vector<Placed> placed = pack(rng, spec, clip.groups, velocity);
  const double b = static_cast<double>(spec.box_size);
  for (std::size_t i = 0; i < n; ++i) {
    featmap::BoxTrack track{i, {}};
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const double x = static_cast<double>(placed[i].x + placed[i].vx * static_cast<long>(t));
      const double y = static_cast<double>(placed[i].y + placed[i].vy * static_cast<long>(t));
      track.boxes.push_back({x, y, x + b, y + b});
    }
    clip.tracks.push_back(std::move(track));
  }
  render(clip, spec, placed, group_of, rng);
  return clip;
}

std::vector<ClipSample> generate_dataset(const GenSpec& spec) {
  std::vector<ClipSample> clips;
  for (std::size_t i = 0; i < spec.clips; ++i) clips.push_back(generate_clip(spec, spec.seed * 1000003ULL + i));
  return clips;
}

std::vector<std::uint8_t> encode_dataset(const std::vector<ClipSample>& clips) {
  io::ByteWriter w;
  w.bytes("PPAR");
  w.u32(kDatasetVersion);
  w.u64(clips.size());
  for (const ClipSample& c : clips) {
    validate(c);
    io::ByteWriter rec;
    rec.string(clip_metadata(c).to_text());
    rec.u64(c.pixels.size());
    for (double v : c.pixels.values()) rec.f32(static_cast<float>(v));
    w.u64(rec.buffer().size());
    auto& out = w.buffer();
    out.insert(out.end(), rec.buffer().begin(), rec.buffer().end());
  }
  w.u32(io::crc32(w.buffer()));
  return w.buffer();
}

std::vector<ClipSample> decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PPAR", 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "not a dataset file (bad magic)");
  }
  io::ByteReader header(bytes.subspan(4));
  const std::uint32_t version = header.u32();
  if (version != kDatasetVersion) {
    throw FormatError(FormatError::Kind::version_mismatch,
                      "dataset format version " + std::to_string(version) + ", expected " +
                          std::to_string(kDatasetVersion));
  }
  const std::uint64_t count = header.u64();

  // Walk the record lengths to find where the checksum must sit.
  std::size_t end = 4 + header.position();
  for (std::uint64_t i = 0; i < count; ++i) {
    io::ByteReader len(bytes.subspan(std::min(end, bytes.size())));
    const std::uint64_t n = len.u64();
    if (n > bytes.size() - end - 8) throw FormatError(FormatError::Kind::truncated, "dataset record is truncated");
    end += 8 + n;
  }
  if (bytes.size() < end + 4) throw FormatError(FormatError::Kind::truncated, "dataset checksum is missing");
  if (bytes.size() > end + 4) throw malformed("trailing bytes after dataset checksum");
  io::ByteReader tail(bytes.subspan(end));
  if (tail.u32() != io::crc32(bytes.first(end))) {
    throw FormatError(FormatError::Kind::checksum_mismatch, "dataset checksum mismatch");
  }

  std::vector<ClipSample> clips;
  io::ByteReader r(bytes.subspan(4 + header.position(), end - 4 - header.position()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t n = r.u64();
    io::ByteReader rec(r.take(n));
    ClipSample c = clip_from_metadata(KeyValues::parse(rec.string()));
    const std::uint64_t pixels = rec.u64();
    if (pixels != c.frames * 3 * c.height * c.width) throw malformed("pixel count does not match clip shape");
    std::vector<double> px(pixels);
    for (double& v : px) v = rec.f32();
    if (rec.remaining() != 0) throw malformed("trailing bytes in clip record");
    c.pixels = DenseArray({c.frames, 3, c.height, c.width}, std::move(px));
    try {
      validate(c);
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw malformed(std::string("invalid clip: ") + e.what());
    }
    clips.push_back(std::move(c));
  }
  return clips;
}

void write_dataset(const std::vector<ClipSample>& clips, const std::string& path) {
  io::write_file_atomic(path, encode_dataset(clips));
}

std::vector<ClipSample> read_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace mpt::synthgen
