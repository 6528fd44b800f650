#include <CLI11.hpp>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "fancgan/cli/commands.hpp"
#include "fancgan/error.hpp"

namespace fs = std::filesystem;
using namespace fancgan;
using namespace fancgan::cli;

namespace {

// Options shared by every command that reads the run configuration.
struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "INI run configuration");
    app->add_option("--set", overrides, "Override a config value, e.g. --set training.epochs=5")
        ->type_name("SECTION.KEY=VALUE");
  }

  // Flags are applied after --set so they win.
  RunConfig resolve(const std::vector<std::string>& flag_overrides) const {
    std::vector<std::string> all = overrides;
    all.insert(all.end(), flag_overrides.begin(), flag_overrides.end());
    std::optional<fs::path> file;
    if (!config_path.empty()) file = config_path;
    return load_config(file, all);
  }
};

template <class T>
void flag_override(std::vector<std::string>& out, const std::string& key, const std::optional<T>& value) {
  if (!value) return;
  std::ostringstream os;
  os << std::setprecision(17) << *value;
  out.push_back(key + "=" + os.str());
}

fs::path data_root_of(const std::string& flag, const RunConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.data_root.empty()) return cfg.data_root;
  throw ValidationError("no dataset given: pass --data or set data.root in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fancgan: mask-conditioned microscopy image synthesis with a segmentation cycle"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fancgan 0.1.0");

  // train
  ConfigOptions train_cfg;
  std::string train_data, train_out, train_resume, train_size;
  std::optional<int> train_epochs;
  std::optional<long long> train_seed;
  auto* train = app.add_subcommand("train", "Train G, F and both discriminators");
  train_cfg.attach(train);
  train->add_option("-d,--data", train_data, "Dataset root with images/ and masks/");
  train->add_option("-o,--out", train_out, "Output directory")->required();
  train->add_option("--epochs", train_epochs, "training.epochs");
  train->add_option("--seed", train_seed, "training.seed");
  train->add_option("--image-size", train_size, "data.image_size, e.g. 64x64");
  train->add_option("--resume", train_resume, "Continue from a checkpoint");

  // generate
  ConfigOptions gen_cfg;
  std::string gen_ckpt, gen_masks, gen_synth, gen_out;
  std::optional<long long> gen_seed;
  std::optional<double> gen_brightness, gen_exposure, gen_shadow, gen_highlight;
  auto* generate = app.add_subcommand("generate", "Synthesize images from masks");
  gen_cfg.attach(generate);
  generate->add_option("-k,--checkpoint", gen_ckpt, "Checkpoint file")->required();
  auto* masks_opt = generate->add_option("-m,--masks", gen_masks, "Directory of mask rasters");
  auto* synth_opt = generate->add_option("--synthesize", gen_synth,
                                         "Synthesize masks: count=N[,canvas=HxW,particles=A:B,radius=R0:R1,"
                                         "ellipticity=E0:E1,overlap=0|1,seed=S]");
  masks_opt->excludes(synth_opt);
  generate->add_option("-o,--out", gen_out, "Output directory")->required();
  generate->add_option("--seed", gen_seed, "eval.seed");
  generate->add_option("--brightness", gen_brightness, "eval.brightness_shift");
  generate->add_option("--exposure", gen_exposure, "eval.exposure_gain");
  generate->add_option("--shadow", gen_shadow, "eval.shadow_lift");
  generate->add_option("--highlight", gen_highlight, "eval.highlight_cut");

  // segment
  ConfigOptions seg_cfg;
  std::string seg_ckpt, seg_images, seg_out;
  std::optional<double> seg_threshold;
  auto* segment = app.add_subcommand("segment", "Predict binary masks for images");
  seg_cfg.attach(segment);
  segment->add_option("-k,--checkpoint", seg_ckpt, "Checkpoint file")->required();
  segment->add_option("-i,--images", seg_images, "Directory of images")->required();
  segment->add_option("-o,--out", seg_out, "Output directory")->required();
  segment->add_option("--threshold", seg_threshold, "eval.threshold");

  // evaluate
  ConfigOptions eval_cfg;
  std::string eval_ckpt, eval_data, eval_out, eval_extractor, eval_split;
  std::optional<long long> eval_seed;
  bool eval_identity = false;
  auto* evaluate = app.add_subcommand("evaluate", "FID and SSIM on the test split");
  eval_cfg.attach(evaluate);
  evaluate->add_option("-k,--checkpoint", eval_ckpt, "Checkpoint file")->required();
  evaluate->add_option("-d,--data", eval_data, "Dataset root");
  evaluate->add_option("-o,--out", eval_out, "Output directory")->required();
  evaluate->add_option("--extractor", eval_extractor, "eval.extractor");
  evaluate->add_option("--seed", eval_seed, "eval.seed");
  evaluate->add_option("--split-manifest", eval_split, "split.tsv from a training run");
  evaluate->add_flag("--identity-baseline", eval_identity, "eval.identity_baseline");

  // ablate
  ConfigOptions abl_cfg;
  std::string abl_data, abl_out;
  std::optional<int> abl_epochs;
  auto* ablate = app.add_subcommand("ablate", "Train and compare the segmentation loss configurations");
  abl_cfg.attach(ablate);
  ablate->add_option("-d,--data", abl_data, "Dataset root");
  ablate->add_option("-o,--out", abl_out, "Output directory")->required();
  ablate->add_option("--epochs", abl_epochs, "training.epochs");

  // make-masks
  ConfigOptions mm_cfg;
  std::string mm_out, mm_spec;
  int mm_count = 0;
  auto* make_masks = app.add_subcommand("make-masks", "Write synthetic particle masks");
  mm_cfg.attach(make_masks);
  make_masks->add_option("-o,--out", mm_out, "Output directory")->required();
  make_masks->add_option("-n,--count", mm_count, "Number of masks")->required();
  make_masks->add_option("--spec", mm_spec, "canvas=HxW,particles=A:B,radius=R0:R1,ellipticity=E0:E1,overlap=0|1,seed=S");

  // make-toy-data
  MakeToyDataArgs toy;
  auto* make_toy = app.add_subcommand("make-toy-data", "Write a procedural image/mask dataset");
  make_toy->add_option("-o,--out", toy.out_dir, "Output directory")->required();
  make_toy->add_option("-n,--count", toy.count, "Number of pairs");
  make_toy->add_option("--size", toy.size, "Square image side");
  make_toy->add_option("--seed", toy.seed, "Seed");

  // replay
  std::string replay_manifest, replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest.json");
  replay->add_option("manifest", replay_manifest, "manifest.json")->required();
  replay->add_option("-o,--out", replay_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) {
      std::vector<std::string> flags;
      flag_override(flags, "training.epochs", train_epochs);
      flag_override(flags, "training.seed", train_seed);
      if (!train_size.empty()) flags.push_back("data.image_size=" + train_size);
      TrainArgs a;
      a.config = train_cfg.resolve(flags);
      a.data_root = data_root_of(train_data, a.config);
      a.config.data_root = a.data_root.string();
      a.out_dir = train_out;
      if (!train_resume.empty()) a.resume = train_resume;
      cmd_train(a, std::cout);
    } else if (*generate) {
      std::vector<std::string> flags;
      flag_override(flags, "eval.seed", gen_seed);
      flag_override(flags, "eval.brightness_shift", gen_brightness);
      flag_override(flags, "eval.exposure_gain", gen_exposure);
      flag_override(flags, "eval.shadow_lift", gen_shadow);
      flag_override(flags, "eval.highlight_cut", gen_highlight);
      const RunConfig cfg = gen_cfg.resolve(flags);
      GenerateArgs a;
      a.checkpoint = gen_ckpt;
      a.out_dir = gen_out;
      a.seed = cfg.eval.seed;
      a.post = cfg.eval.post;
      a.synthesis = cfg.synthesis;
      if (!gen_masks.empty()) a.masks_dir = gen_masks;
      if (!gen_synth.empty()) a.synthesize_count = parse_synthesis_request(gen_synth, a.synthesis);
      cmd_generate(a, std::cout);
    } else if (*segment) {
      std::vector<std::string> flags;
      flag_override(flags, "eval.threshold", seg_threshold);
      const RunConfig cfg = seg_cfg.resolve(flags);
      cmd_segment({seg_ckpt, seg_images, seg_out, cfg.eval.threshold}, std::cout);
    } else if (*evaluate) {
      std::vector<std::string> flags;
      if (!eval_extractor.empty()) flags.push_back("eval.extractor=" + eval_extractor);
      flag_override(flags, "eval.seed", eval_seed);
      if (eval_identity) flags.push_back("eval.identity_baseline=true");
      EvaluateArgs a;
      a.config = eval_cfg.resolve(flags);
      a.checkpoint = eval_ckpt;
      a.data_root = data_root_of(eval_data, a.config);
      a.out_dir = eval_out;
      if (!eval_split.empty()) a.split_manifest = eval_split;
      cmd_evaluate(a, std::cout);
    } else if (*ablate) {
      std::vector<std::string> flags;
      flag_override(flags, "training.epochs", abl_epochs);
      AblateArgs a;
      a.config = abl_cfg.resolve(flags);
      a.data_root = data_root_of(abl_data, a.config);
      a.config.data_root = a.data_root.string();
      a.out_dir = abl_out;
      cmd_ablate(a, std::cout);
    } else if (*make_masks) {
      const RunConfig cfg = mm_cfg.resolve({});
      MakeMasksArgs a;
      a.spec = cfg.synthesis;
      if (!mm_spec.empty()) parse_synthesis_request("count=0," + mm_spec, a.spec);
      if (a.spec.canvas.height == 0 && a.spec.canvas.width == 0) a.spec.canvas = cfg.model.image_size;
      a.count = mm_count;
      a.out_dir = mm_out;
      cmd_make_masks(a, std::cout);
    } else if (*make_toy) {
      cmd_make_toy_data(toy, std::cout);
    } else if (*replay) {
      cmd_replay(replay_manifest, replay_out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "fancgan: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
