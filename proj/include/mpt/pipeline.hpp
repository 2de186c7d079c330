#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpt/featmap.hpp"
#include "mpt/heads_loss.hpp"
#include "mpt/kv.hpp"
#include "mpt/metrics.hpp"
#include "mpt/numerics/adam.hpp"
#include "mpt/numerics/param_store.hpp"
#include "mpt/numerics/tape.hpp"
#include "mpt/psicga.hpp"
#include "mpt/scene.hpp"
#include "mpt/stre.hpp"
#include "mpt/synthgen.hpp"
#include "mpt/types.hpp"

/// Full model: backbone → RoIAlign → STRE → relation head / clustering →
/// PSICGA aggregation → scene fusion → three classification heads.
namespace mpt::pipeline {

struct ModelConfig {
  std::size_t dim = 96;
  featmap::BackboneConfig backbone;
  std::size_t roi_size = 3;
  stre::StreConfig stre;
  psicga::AggregatorConfig aggregator;
  scene::SceneConfig scene;
  std::size_t relation_hidden = 96;
  heads::LabelTaxonomy taxonomy;
  double threshold = 0.5;
  std::size_t kmax = 8;
  std::size_t frame_height = 64;
  std::size_t frame_width = 64;
  /// Ablation toggles: STRE off → temporal mean; PSICGA off → max-pool;
  /// scene off → no scene tokens or fusion.
  bool use_stre = true;
  bool use_psicga = true;
  bool use_scene = true;
  std::uint64_t seed = 0;

  static ModelConfig from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
};

void validate(const ModelConfig& cfg);

struct TrainConfig {
  std::size_t batch_size = 2;
  std::size_t epochs = 30;
  AdamConfig adam;
  std::uint64_t seed = 0;

  /// Reads `train.*` keys.
  static TrainConfig from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
};

void validate(const TrainConfig& cfg);

/// A run config file holds model keys and `train.*` keys side by side.
/// Unknown keys are an InputError.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  static RunConfig parse(std::string_view text);
};

/// Small model and data used for finite-difference checks: D=16, C=4, K=2,
/// one layer per encoder, 3 individuals over 2 frames of 16×16.
ModelConfig tiny_model_config();
synthgen::GenSpec tiny_gen_spec();

/// Every parameter the configuration uses, initialised from cfg.seed.
ParamStore init_params(const ModelConfig& cfg);

enum class Mode { train, eval };

struct ForwardOptions {
  /// Replaces clustering in eval mode.
  std::optional<Partition> partition_override;
};

struct ForwardResult {
  Var individual_logits;  // [N×C_I]
  Var social_logits;      // [G×C_S], rows follow `groups`
  Var global_logits;      // [1×C_G]
  Var relation_logits;    // [N×N]
  Partition groups;
  std::optional<Var> scene_attention;  // [T×K×(H'·W')] when the scene module is on
  std::optional<heads::LossTerms> loss;  // train mode only
};

/// Train mode groups by the ground-truth partition and returns the loss; eval
/// mode groups by spectral clustering of the predicted affinities.
ForwardResult forward(Tape& tape, const ModelConfig& cfg, const ParamStore& params, const synthgen::ClipSample& clip,
                      Mode mode, const ForwardOptions& options = {});

struct Prediction {
  std::vector<LabelSet> individual;
  Partition groups;
  std::vector<LabelSet> social;
  LabelSet global;
};

Prediction predict(const ModelConfig& cfg, const ParamStore& params, const synthgen::ClipSample& clip,
                   const ForwardOptions& options = {});

/// The ground truth itself, as the upper-bound harness.
Prediction oracle_prediction(const synthgen::ClipSample& clip);

metrics::PanoramicScore score_predictions(const std::vector<synthgen::ClipSample>& data,
                                          const std::vector<Prediction>& predictions,
                                          metrics::Averaging averaging = metrics::Averaging::example);

struct EvalResult {
  metrics::PanoramicScore score;
  std::vector<Prediction> predictions;
};

/// Throws ConfigError when a clip's taxonomy differs from the model's.
EvalResult evaluate(const std::vector<synthgen::ClipSample>& data, const ModelConfig& cfg, const ParamStore& params);

struct EpochLog {
  std::size_t epoch = 0;
  heads::LossBreakdown loss;  // mean over the epoch's clips
};

/// Seeded per-epoch shuffle, per-batch gradient mean, one Adam step per batch.
/// A non-finite loss throws NumericError naming the term.
std::vector<EpochLog> train_loop(const std::vector<synthgen::ClipSample>& data, const ModelConfig& cfg,
                                 const TrainConfig& tcfg, ParamStore& params,
                                 const std::function<void(const EpochLog&)>& on_epoch = {});

/// `epoch L_i L_s L_g L_d total` per line, shortest round-trip decimals.
std::string format_log(const std::vector<EpochLog>& log);

/// Fixed report schema: one `key raw_fraction percent` line for each of
/// P_i R_i F_i P_p R_p F_p P_g R_g F_g F_a, in that order.
std::string format_report(const metrics::PanoramicScore& score);

void save_model(const std::string& path, const ModelConfig& cfg, const ParamStore& params);

struct LoadedModel {
  ModelConfig config;
  ParamStore params;
};

LoadedModel load_model(const std::string& path);

}  // namespace mpt::pipeline
