#include "mpt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "mpt/error.hpp"
#include "mpt/grouping.hpp"
#include "mpt/numerics/checkpoint.hpp"
#include "mpt/numerics/layers.hpp"
#include "mpt/numerics/ops.hpp"

namespace mpt::pipeline {
namespace {

const std::set<std::string> kModelKeys = {
    "dim",          "backbone.stage1_channels", "backbone.channels", "roi_size",      "stre.layers",
    "stre.heads",   "stre.structure",           "pia.layers",        "pia.heads",     "psa.layers",
    "psa.heads",    "lambda_social",            "lambda_global",     "max_members",   "scene.tokens",
    "scene.heads",  "relation_hidden",          "taxonomy",          "threshold",     "kmax",
    "frame_height", "frame_width",              "use_stre",          "use_psicga",    "use_scene",
    "seed"};

const std::set<std::string> kTrainKeys = {"train.batch_size", "train.epochs",       "train.lr",
                                          "train.weight_decay", "train.beta1",      "train.beta2",
                                          "train.eps",        "train.seed"};

std::string bool_text(bool b) { return b ? "true" : "false"; }

heads::LossTargets targets_for(const synthgen::ClipSample& clip) {
  heads::LossTargets t;
  t.individual = heads::multi_hot(clip.individual_labels, clip.taxonomy.individual);
  t.social = heads::multi_hot(clip.group_labels, clip.taxonomy.social);
  t.global = heads::multi_hot({clip.global_labels}, clip.taxonomy.global);
  t.relation = clip.relation();
  return t;
}

void check_compatible(const ModelConfig& cfg, const synthgen::ClipSample& clip) {
  if (!(clip.taxonomy == cfg.taxonomy)) {
    throw ConfigError("taxonomy mismatch: clip " + clip.clip_id + " has " + std::to_string(clip.taxonomy.individual) +
                      "/" + std::to_string(clip.taxonomy.social) + "/" + std::to_string(clip.taxonomy.global) +
                      " classes, model expects " + std::to_string(cfg.taxonomy.individual) + "/" +
                      std::to_string(cfg.taxonomy.social) + "/" + std::to_string(cfg.taxonomy.global));
  }
  if (clip.height != cfg.frame_height || clip.width != cfg.frame_width) {
    throw ConfigError("clip " + clip.clip_id + " frame size differs from the model's");
  }
}

void check_finite(const heads::LossBreakdown& b) {
  const std::pair<const char*, double> terms[] = {
      {"individual", b.individual}, {"social", b.social}, {"global", b.global}, {"detection", b.detection}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term: ") + name);
  if (!std::isfinite(b.total)) throw NumericError("non-finite loss term: total");
}

}  // namespace

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  c.dim = kv.get_size("dim", c.dim);
  c.backbone.stage1_channels = kv.get_size("backbone.stage1_channels", c.backbone.stage1_channels);
  c.backbone.channels = kv.get_size("backbone.channels", c.backbone.channels);
  c.roi_size = kv.get_size("roi_size", c.roi_size);
  c.stre.layers = kv.get_size("stre.layers", c.stre.layers);
  c.stre.heads = kv.get_size("stre.heads", c.stre.heads);
  if (kv.has("stre.structure")) {
    try {
      c.stre.structure = stre::parse_structure(kv.get("stre.structure"));
    } catch (const ConfigError& e) {
      throw InputError(e.what());
    }
  }
  c.aggregator.pia_layers = kv.get_size("pia.layers", c.aggregator.pia_layers);
  c.aggregator.pia_heads = kv.get_size("pia.heads", c.aggregator.pia_heads);
  c.aggregator.psa_layers = kv.get_size("psa.layers", c.aggregator.psa_layers);
  c.aggregator.psa_heads = kv.get_size("psa.heads", c.aggregator.psa_heads);
  c.aggregator.lambda_social = kv.get_double("lambda_social", c.aggregator.lambda_social);
  c.aggregator.lambda_global = kv.get_double("lambda_global", c.aggregator.lambda_global);
  c.aggregator.max_members = kv.get_size("max_members", c.aggregator.max_members);
  c.scene.tokens = kv.get_size("scene.tokens", c.scene.tokens);
  c.scene.fusion_heads = kv.get_size("scene.heads", c.scene.fusion_heads);
  c.relation_hidden = kv.get_size("relation_hidden", c.relation_hidden);
  if (kv.has("taxonomy")) {
    const auto t = kv.size_list("taxonomy");
    if (t.size() != 3) throw InputError("taxonomy needs three class counts");
    c.taxonomy = {t[0], t[1], t[2]};
  }
  c.threshold = kv.get_double("threshold", c.threshold);
  c.kmax = kv.get_size("kmax", c.kmax);
  c.frame_height = kv.get_size("frame_height", c.frame_height);
  c.frame_width = kv.get_size("frame_width", c.frame_width);
  c.use_stre = kv.get_bool("use_stre", c.use_stre);
  c.use_psicga = kv.get_bool("use_psicga", c.use_psicga);
  c.use_scene = kv.get_bool("use_scene", c.use_scene);
  c.seed = kv.get_u64("seed", c.seed);
  return c;
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("dim", std::to_string(dim));
  kv.set("backbone.stage1_channels", std::to_string(backbone.stage1_channels));
  kv.set("backbone.channels", std::to_string(backbone.channels));
  kv.set("roi_size", std::to_string(roi_size));
  kv.set("stre.layers", std::to_string(stre.layers));
  kv.set("stre.heads", std::to_string(stre.heads));
  kv.set("stre.structure", std::string(stre::to_string(stre.structure)));
  kv.set("pia.layers", std::to_string(aggregator.pia_layers));
  kv.set("pia.heads", std::to_string(aggregator.pia_heads));
  kv.set("psa.layers", std::to_string(aggregator.psa_layers));
  kv.set("psa.heads", std::to_string(aggregator.psa_heads));
  kv.set("lambda_social", format_double(aggregator.lambda_social));
  kv.set("lambda_global", format_double(aggregator.lambda_global));
  kv.set("max_members", std::to_string(aggregator.max_members));
  kv.set("scene.tokens", std::to_string(scene.tokens));
  kv.set("scene.heads", std::to_string(scene.fusion_heads));
  kv.set("relation_hidden", std::to_string(relation_hidden));
  kv.set("taxonomy", join_sizes({taxonomy.individual, taxonomy.social, taxonomy.global}));
  kv.set("threshold", format_double(threshold));
  kv.set("kmax", std::to_string(kmax));
  kv.set("frame_height", std::to_string(frame_height));
  kv.set("frame_width", std::to_string(frame_width));
  kv.set("use_stre", bool_text(use_stre));
  kv.set("use_psicga", bool_text(use_psicga));
  kv.set("use_scene", bool_text(use_scene));
  kv.set("seed", std::to_string(seed));
  return kv;
}

void validate(const ModelConfig& c) {
  if (c.dim == 0) throw ConfigError("dim must be positive");
  if (c.roi_size == 0) throw ConfigError("roi_size must be positive");
  if (c.relation_hidden == 0) throw ConfigError("relation_hidden must be positive");
  if (c.kmax == 0) throw ConfigError("kmax must be positive");
  if (!(c.threshold > 0 && c.threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
  const std::size_t stride = c.backbone.stride();
  if (c.frame_height == 0 || c.frame_width == 0 || c.frame_height % stride || c.frame_width % stride) {
    throw ConfigError("frame size must be a positive multiple of the backbone stride");
  }
  heads::validate(c.taxonomy);
  if (c.use_stre) stre::validate(c.stre, c.dim);
  if (c.use_psicga) psicga::validate(c.aggregator, c.dim);
  if (c.use_scene) {
    if (c.scene.tokens == 0) throw ConfigError("scene token count must be positive");
    nn::check_heads(c.dim, c.scene.fusion_heads);
  }
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  c.batch_size = kv.get_size("train.batch_size", c.batch_size);
  c.epochs = kv.get_size("train.epochs", c.epochs);
  c.adam.lr = kv.get_double("train.lr", c.adam.lr);
  c.adam.weight_decay = kv.get_double("train.weight_decay", c.adam.weight_decay);
  c.adam.beta1 = kv.get_double("train.beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("train.beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("train.eps", c.adam.eps);
  c.seed = kv.get_u64("train.seed", c.seed);
  return c;
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.lr", format_double(adam.lr));
  kv.set("train.weight_decay", format_double(adam.weight_decay));
  kv.set("train.beta1", format_double(adam.beta1));
  kv.set("train.beta2", format_double(adam.beta2));
  kv.set("train.eps", format_double(adam.eps));
  kv.set("train.seed", std::to_string(seed));
  return kv;
}

void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.adam.lr < 0 || !std::isfinite(c.adam.lr)) throw ConfigError("lr must be finite and non-negative");
  if (c.adam.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (!(c.adam.beta1 >= 0 && c.adam.beta1 < 1) || !(c.adam.beta2 >= 0 && c.adam.beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(c.adam.eps > 0)) throw ConfigError("Adam eps must be positive");
}

RunConfig RunConfig::parse(std::string_view text) {
  const KeyValues kv = KeyValues::parse(text);
  std::set<std::string> known = kModelKeys;
  known.insert(kTrainKeys.begin(), kTrainKeys.end());
  kv.require_known(known);
  RunConfig rc{ModelConfig::from_kv(kv), TrainConfig::from_kv(kv)};
  return rc;
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.dim = 16;
  c.backbone.stage1_channels = 8;
  c.backbone.channels = 4;
  c.roi_size = 2;
  c.stre = {1, 4, stre::Structure::serial};
  c.aggregator.pia_layers = 1;
  c.aggregator.pia_heads = 4;
  c.aggregator.psa_layers = 1;
  c.aggregator.psa_heads = 4;
  c.aggregator.max_members = 8;
  c.scene = {2, 4};
  c.relation_hidden = 16;
  c.frame_height = 16;
  c.frame_width = 16;
  c.kmax = 3;
  return c;
}

synthgen::GenSpec tiny_gen_spec() {
  synthgen::GenSpec s;
  s.min_individuals = s.max_individuals = 3;
  s.frames = 2;
  s.min_groups = 1;
  s.max_groups = 2;
  s.height = s.width = 16;
  s.box_size = 4;
  s.motion = 1;
  s.clips = 1;
  return s;
}

ParamStore init_params(const ModelConfig& cfg) {
  validate(cfg);
  ParamStore store;
  Initializer init(cfg.seed);
  featmap::init_backbone(store, init, cfg.backbone);
  featmap::init_roi_projection(store, init, cfg.backbone.channels * cfg.roi_size * cfg.roi_size, cfg.dim);
  if (cfg.use_stre) stre::init_stre(store, init, cfg.stre, cfg.dim);
  grouping::init_relation_head(store, init, cfg.dim, cfg.relation_hidden);
  if (cfg.use_psicga) psicga::init_aggregator(store, init, cfg.aggregator, cfg.dim);
  if (cfg.use_scene) {
    const std::size_t s = cfg.backbone.stride();
    scene::init_scene(store, init, cfg.scene, cfg.backbone.channels, cfg.frame_height / s, cfg.frame_width / s,
                      cfg.dim);
  }
  heads::init_heads(store, init, cfg.taxonomy, cfg.dim);
  return store;
}

ForwardResult forward(Tape& tape, const ModelConfig& cfg, const ParamStore& params, const synthgen::ClipSample& clip,
                      Mode mode, const ForwardOptions& options) {
  check_compatible(cfg, clip);
  ForwardResult out;
  const featmap::FeatureMap fm = featmap::synth_backbone(tape, params, cfg.backbone, tape.constant(clip.pixels));
  Var rois = featmap::roi_align(fm, clip.tracks, cfg.roi_size, cfg.roi_size);
  Var x = featmap::flatten_rois(tape, params, rois);  // [T×N×D]
  Var x_st = cfg.use_stre ? stre::stre_forward(tape, params, cfg.stre, x) : ops::mean_axis(x, 0);

  out.relation_logits = grouping::relation_logits(tape, params, x_st);
  if (mode == Mode::train) {
    out.groups = clip.groups;
  } else if (options.partition_override) {
    validate_partition(*options.partition_override, clip.individuals(), /*require_cover=*/true);
    out.groups = *options.partition_override;
  } else {
    out.groups = grouping::spectral_cluster(grouping::affinity_from_logits(out.relation_logits.value()), cfg.kmax,
                                            cfg.seed);
  }

  Var groups = cfg.use_psicga ? psicga::aggregate_groups(tape, params, cfg.aggregator, x_st, out.groups)
                              : psicga::max_pool_groups(x_st, out.groups);
  Var global = cfg.use_psicga ? psicga::aggregate_global(tape, params, cfg.aggregator, x_st)
                              : psicga::max_pool_global(x_st);
  Var individual = x_st;
  if (cfg.use_scene) {
    const scene::SceneTokens tokens = scene::scene_tokens(tape, params, fm.map);
    out.scene_attention = tokens.attention;
    Var pooled = scene::scene_pool(tokens);
    individual = scene::fuse_individual(tape, params, cfg.scene, individual, pooled);
    groups = scene::fuse_social(tape, params, cfg.scene, groups, pooled);
    global = scene::fuse_global(tape, params, global, pooled);
  }
  out.individual_logits = heads::classify(tape, params, individual, heads::Head::individual);
  out.social_logits = heads::classify(tape, params, groups, heads::Head::social);
  out.global_logits = heads::classify(tape, params, global, heads::Head::global);

  if (mode == Mode::train) {
    out.loss = heads::multitask_loss(out.individual_logits, out.social_logits, out.global_logits,
                                     out.relation_logits, targets_for(clip));
  }
  return out;
}

Prediction predict(const ModelConfig& cfg, const ParamStore& params, const synthgen::ClipSample& clip,
                   const ForwardOptions& options) {
  Tape tape;
  const ForwardResult r = forward(tape, cfg, params, clip, Mode::eval, options);
  Prediction p;
  p.individual = heads::decide_labels(r.individual_logits.value(), cfg.threshold);
  p.groups = r.groups;
  p.social = heads::decide_labels(r.social_logits.value(), cfg.threshold);
  p.global = heads::decide_labels(r.global_logits.value(), cfg.threshold).front();
  return p;
}

Prediction oracle_prediction(const synthgen::ClipSample& clip) {
  return {clip.individual_labels, clip.groups, clip.group_labels, clip.global_labels};
}

metrics::PanoramicScore score_predictions(const std::vector<synthgen::ClipSample>& data,
                                          const std::vector<Prediction>& predictions, metrics::Averaging averaging) {
  if (data.size() != predictions.size()) throw InputError("one prediction per clip is required");
  metrics::ScoreAccumulator acc(averaging);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Prediction& p = predictions[i];
    const synthgen::ClipSample& c = data[i];
    acc.add_clip(p.individual, c.individual_labels, {p.groups, p.social}, {c.groups, c.group_labels}, p.global,
                 c.global_labels);
  }
  return acc.score();
}

EvalResult evaluate(const std::vector<synthgen::ClipSample>& data, const ModelConfig& cfg, const ParamStore& params) {
  validate(cfg);
  EvalResult r;
  for (const synthgen::ClipSample& clip : data) r.predictions.push_back(predict(cfg, params, clip));
  r.score = score_predictions(data, r.predictions);
  return r;
}

std::vector<EpochLog> train_loop(const std::vector<synthgen::ClipSample>& data, const ModelConfig& cfg,
                                 const TrainConfig& tcfg, ParamStore& params,
                                 const std::function<void(const EpochLog&)>& on_epoch) {
  validate(cfg);
  validate(tcfg);
  if (data.empty()) throw InputError("training data is empty");
  for (const auto& clip : data) check_compatible(cfg, clip);

  std::mt19937_64 rng(tcfg.seed);
  std::vector<std::size_t> order(data.size());
  std::vector<EpochLog> log;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      std::map<std::string, DenseArray> grads;
      for (std::size_t b = start; b < stop; ++b) {
        Tape tape;
        const ForwardResult r = forward(tape, cfg, params, data[order[b]], Mode::train);
        const heads::LossBreakdown parts = r.loss->values();
        check_finite(parts);
        tape.backward(r.loss->total);
        for (auto& [name, g] : tape.parameter_grads()) {
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, std::move(g));
          } else {
            auto dst = it->second.data();
            auto src = g.data();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
          }
        }
        entry.loss.individual += parts.individual;
        entry.loss.social += parts.social;
        entry.loss.global += parts.global;
        entry.loss.detection += parts.detection;
        entry.loss.total += parts.total;
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& [name, g] : grads)
        for (double& v : g.data()) v *= inv;
      adam_step(params, grads, tcfg.adam);
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    entry.loss.individual *= inv;
    entry.loss.social *= inv;
    entry.loss.global *= inv;
    entry.loss.detection *= inv;
    entry.loss.total *= inv;
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

std::string format_log(const std::vector<EpochLog>& log) {
  std::string out = "# epoch L_i L_s L_g L_d total\n";
  for (const EpochLog& e : log) {
    out += std::to_string(e.epoch) + " " +
           join_doubles({e.loss.individual, e.loss.social, e.loss.global, e.loss.detection, e.loss.total}) + "\n";
  }
  return out;
}

std::string format_report(const metrics::PanoramicScore& s) {
  const std::pair<const char*, double> rows[] = {
      {"P_i", s.individual.precision}, {"R_i", s.individual.recall}, {"F_i", s.individual.f1},
      {"P_p", s.social.precision},     {"R_p", s.social.recall},     {"F_p", s.social.f1},
      {"P_g", s.global.precision},     {"R_g", s.global.recall},     {"F_g", s.global.f1},
      {"F_a", s.overall}};
  std::string out;
  for (const auto& [key, v] : rows) out += std::string(key) + " " + format_double(v) + " " +
                                           format_fixed1(metrics::percent_1dp(v)) + "\n";
  return out;
}

void save_model(const std::string& path, const ModelConfig& cfg, const ParamStore& params) {
  write_checkpoint(path, params, cfg.to_kv().to_text());
}

LoadedModel load_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  const KeyValues kv = KeyValues::parse(ck.metadata);
  kv.require_known(kModelKeys);
  LoadedModel m{ModelConfig::from_kv(kv), std::move(ck.params)};
  validate(m.config);
  const ParamStore expected = init_params(m.config);
  for (const auto& [name, p] : expected.entries()) {
    if (!m.params.contains(name)) throw ConfigError("checkpoint lacks parameter " + name);
    if (m.params.value(name).shape() != p.value.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_string(m.params.value(name).shape()) +
                        ", config implies " + shape_string(p.value.shape()));
    }
  }
  if (m.params.entries().size() != expected.entries().size()) {
    throw ConfigError("checkpoint holds parameters the config does not use");
  }
  return m;
}

}  // namespace mpt::pipeline
