// mptpar: generate / train / eval / gradcheck / inspect.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpt/binary_io.hpp"
#include "mpt/error.hpp"
#include "mpt/kv.hpp"
#include "mpt/metrics.hpp"
#include "mpt/numerics/gradcheck.hpp"
#include "mpt/numerics/ops.hpp"
#include "mpt/pipeline.hpp"
#include "mpt/synthgen.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum Exit { kOk = 0, kFailure = 1, kInputError = 2, kNumericError = 3, kCheckFailed = 4 };

using mpt::KeyValues;

std::string command_line(int argc, char** argv) {
  std::string out;
  for (int i = 1; i < argc; ++i) out += (i > 1 ? " " : "") + std::string(argv[i]);
  return out;
}

// Config snapshot, seed and artifacts, enough to rerun the command.
void write_manifest(const std::string& path, const std::string& command, const std::string& args,
                    std::uint64_t seed, const KeyValues& config, const std::vector<std::string>& artifacts) {
  KeyValues kv;
  kv.set("tool", "mptpar");
  kv.set("tool_version", kToolVersion);
  kv.set("command", command);
  kv.set("args", args);
  kv.set("seed", std::to_string(seed));
  std::string joined;
  for (const auto& a : artifacts) joined += (joined.empty() ? "" : " ") + a;
  kv.set("artifacts", joined);
  for (const auto& [k, v] : config.entries()) kv.set("config." + k, v);
  mpt::io::write_text_atomic(path, kv.to_text());
}

std::string read_text(const std::string& path) {
  const auto bytes = mpt::io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

int cmd_generate(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed,
                 const std::string& args) {
  mpt::synthgen::GenSpec spec = mpt::synthgen::GenSpec::parse(read_text(spec_path));
  if (seed) spec.seed = *seed;
  const auto clips = mpt::synthgen::generate_dataset(spec);
  mpt::synthgen::write_dataset(clips, out);
  write_manifest(out + ".manifest", "generate", args, spec.seed, spec.to_kv(), {out});
  std::cout << "wrote " << clips.size() << " clips to " << out << "\n";
  return kOk;
}

int cmd_train(const std::string& data_path, const std::string& config_path, const std::string& out,
              const std::string& args) {
  const auto rc = mpt::pipeline::RunConfig::parse(read_text(config_path));
  const auto data = mpt::synthgen::read_dataset(data_path);
  mpt::ParamStore params = mpt::pipeline::init_params(rc.model);
  const auto log = mpt::pipeline::train_loop(data, rc.model, rc.train, params, [](const auto& e) {
    std::printf("epoch %zu  L_i %.6f  L_s %.6f  L_g %.6f  L_d %.6f  total %.6f\n", e.epoch, e.loss.individual,
                e.loss.social, e.loss.global, e.loss.detection, e.loss.total);
  });
  mpt::pipeline::save_model(out, rc.model, params);
  mpt::io::write_text_atomic(out + ".log", mpt::pipeline::format_log(log));
  KeyValues config = rc.model.to_kv();
  const KeyValues train_kv = rc.train.to_kv();
  for (const auto& [k, v] : train_kv.entries()) config.set(k, v);
  write_manifest(out + ".manifest", "train", args, rc.train.seed, config, {out, out + ".log"});
  return kOk;
}

int cmd_eval(const std::string& data_path, const std::string& checkpoint, const std::string& report, bool oracle,
             const std::string& args) {
  const auto data = mpt::synthgen::read_dataset(data_path);
  mpt::metrics::PanoramicScore score;
  KeyValues config;
  std::uint64_t seed = 0;
  if (oracle) {
    std::vector<mpt::pipeline::Prediction> preds;
    for (const auto& clip : data) preds.push_back(mpt::pipeline::oracle_prediction(clip));
    score = mpt::pipeline::score_predictions(data, preds);
    config.set("oracle", "true");
  } else {
    if (checkpoint.empty()) throw mpt::InputError("--checkpoint is required unless --oracle is given");
    const auto model = mpt::pipeline::load_model(checkpoint);
    score = mpt::pipeline::evaluate(data, model.config, model.params).score;
    config = model.config.to_kv();
    seed = model.config.seed;
  }
  const std::string text = mpt::pipeline::format_report(score);
  mpt::io::write_text_atomic(report, text);
  write_manifest(report + ".manifest", "eval", args, seed, config, {report});
  std::cout << text;
  return kOk;
}

// Contributes nothing to the loss value but pushes ones into the gradient of
// `param`, so the analytic gradient disagrees with finite differences.
mpt::Var sabotage(mpt::Tape& tape, mpt::Var param) {
  return tape.record(mpt::DenseArray::scalar(0.0), {param}, [param](mpt::Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    for (double& v : t.grad_accumulator(param.id()).data()) v += g;
  });
}

int cmd_gradcheck(const std::string& config_path, double tolerance, const std::string& sabotaged,
                  std::size_t coords, const std::string& manifest, const std::string& args) {
  mpt::pipeline::ModelConfig cfg = mpt::pipeline::tiny_model_config();
  if (!config_path.empty()) {
    KeyValues kv = cfg.to_kv();
    const KeyValues overrides = KeyValues::parse(read_text(config_path));
    for (const auto& [k, v] : overrides.entries()) kv.set(k, v);
    cfg = mpt::pipeline::ModelConfig::from_kv(kv);
  }
  mpt::synthgen::GenSpec spec = mpt::pipeline::tiny_gen_spec();
  spec.height = cfg.frame_height;
  spec.width = cfg.frame_width;
  spec.taxonomy = cfg.taxonomy;
  spec.seed = cfg.seed;
  const auto clip = mpt::synthgen::generate_clip(spec, cfg.seed);
  const mpt::ParamStore params = mpt::pipeline::init_params(cfg);
  if (!sabotaged.empty() && !params.contains(sabotaged)) {
    throw mpt::InputError("--sabotage: unknown parameter " + sabotaged);
  }

  const mpt::ScalarObjective objective = [&](mpt::Tape& tape, const mpt::ParamStore& store) {
    auto r = mpt::pipeline::forward(tape, cfg, store, clip, mpt::pipeline::Mode::train);
    mpt::Var total = r.loss->total;
    if (!sabotaged.empty()) total = mpt::ops::add(total, sabotage(tape, tape.parameter(store, sabotaged)));
    return total;
  };
  mpt::GradCheckOptions opts;
  opts.max_coords_per_param = coords;
  opts.seed = cfg.seed;
  const auto report = mpt::finite_diff_check(objective, params, opts);
  const auto& worst = report.worst();
  std::printf("checked %zu parameters, worst %s[%zu]: rel error %.3e (analytic %.9g, numeric %.9g)\n",
              report.params.size(), worst.name.c_str(), worst.worst_index, worst.max_rel_error, worst.analytic,
              worst.numeric);
  if (!manifest.empty()) write_manifest(manifest, "gradcheck", args, cfg.seed, cfg.to_kv(), {});
  if (!report.passed(tolerance)) {
    std::printf("FAILED: %s exceeds tolerance %g\n", worst.name.c_str(), tolerance);
    return kCheckFailed;
  }
  std::printf("passed at tolerance %g\n", tolerance);
  return kOk;
}

int cmd_inspect(const std::string& checkpoint, const std::string& data_path, std::size_t clip_index,
                const std::string& out_dir, const std::string& args) {
  const auto model = mpt::pipeline::load_model(checkpoint);
  if (!model.config.use_scene) throw mpt::InputError("the checkpoint has no scene module to inspect");
  const auto data = mpt::synthgen::read_dataset(data_path);
  if (clip_index >= data.size()) {
    throw mpt::InputError("--clip " + std::to_string(clip_index) + " out of range, dataset has " +
                          std::to_string(data.size()) + " clips");
  }
  mpt::Tape tape;
  const auto r = mpt::pipeline::forward(tape, model.config, model.params, data[clip_index], mpt::pipeline::Mode::eval);
  const mpt::DenseArray& a = r.scene_attention->value();  // [T×K×HW]
  const std::size_t stride = model.config.backbone.stride();
  const std::size_t h = model.config.frame_height / stride, w = model.config.frame_width / stride;
  const std::size_t frames = a.extent(0), tokens = a.extent(1);

  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < tokens; ++k) {
      std::string pgm = "P2\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const long v = std::lround(255.0 * a.at({t, k, y * w + x}));
          pgm += (x ? " " : "") + std::to_string(v);
        }
        pgm += "\n";
      }
      char name[64];
      std::snprintf(name, sizeof name, "attn_t%02zu_k%02zu.pgm", t, k);
      const std::string path = (std::filesystem::path(out_dir) / name).string();
      mpt::io::write_text_atomic(path, pgm);
      written.push_back(path);
    }
  KeyValues config = model.config.to_kv();
  config.set("clip", std::to_string(clip_index));
  write_manifest((std::filesystem::path(out_dir) / "manifest.txt").string(), "inspect", args, model.config.seed,
                 config, written);
  std::cout << "wrote " << written.size() << " attention maps to " << out_dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panoramic activity recognition toolkit"};
  app.require_subcommand(1);
  const std::string args = command_line(argc, argv);

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  std::string spec_path, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--spec", spec_path, "Generator spec (key = value)")->required();
  gen->add_option("--out", gen_out, "Dataset file")->required();
  gen->add_option("--seed", gen_seed, "Overrides the generator seed");

  auto* train = app.add_subcommand("train", "Train and write a checkpoint");
  std::string train_data, train_config, train_out;
  train->add_option("--data", train_data, "Dataset file")->required();
  train->add_option("--config", train_config, "Model and train.* keys")->required();
  train->add_option("--out", train_out, "Checkpoint file")->required();

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  std::string eval_data, eval_ckpt, eval_report;
  bool eval_oracle = false;
  eval->add_option("--data", eval_data, "Dataset file")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval->add_option("--report", eval_report, "Report file")->required();
  eval->add_flag("--oracle", eval_oracle, "Score ground truth against itself");

  auto* grad = app.add_subcommand("gradcheck", "Compare tape gradients with finite differences");
  std::string grad_config, grad_sabotage, grad_manifest;
  double grad_tol = 1e-4;
  std::size_t grad_coords = 8;
  grad->add_option("--config", grad_config, "Overrides on the small check model");
  grad->add_option("--tolerance", grad_tol, "Max relative error")->capture_default_str();
  grad->add_option("--coords", grad_coords, "Coordinates per parameter, 0 for all")->capture_default_str();
  grad->add_option("--sabotage", grad_sabotage, "Corrupt the gradient of this parameter");
  grad->add_option("--manifest", grad_manifest, "Run manifest file");

  auto* inspect = app.add_subcommand("inspect", "Export scene attention maps as PGM images");
  std::string insp_ckpt, insp_data, insp_out;
  std::size_t insp_clip = 0;
  inspect->add_option("--checkpoint", insp_ckpt, "Checkpoint file")->required();
  inspect->add_option("--data", insp_data, "Dataset file")->required();
  inspect->add_option("--clip", insp_clip, "Clip index")->capture_default_str();
  inspect->add_option("--out", insp_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (gen->parsed()) return cmd_generate(spec_path, gen_out, gen_seed, args);
    if (train->parsed()) return cmd_train(train_data, train_config, train_out, args);
    if (eval->parsed()) return cmd_eval(eval_data, eval_ckpt, eval_report, eval_oracle, args);
    if (grad->parsed()) return cmd_gradcheck(grad_config, grad_tol, grad_sabotage, grad_coords, grad_manifest, args);
    if (inspect->parsed()) return cmd_inspect(insp_ckpt, insp_data, insp_clip, insp_out, args);
  } catch (const mpt::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const mpt::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const mpt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInputError;
  } catch (const mpt::CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
