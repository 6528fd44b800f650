#include "fancgan/cli/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <unistd.h>
#include <sstream>

#include "fancgan/archive.hpp"
#include "fancgan/cli/manifest.hpp"
#include "fancgan/error.hpp"
#include "fancgan/extractor.hpp"
#include "fancgan/image_io.hpp"

namespace fancgan::cli {
namespace fs = std::filesystem;
namespace {

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw DataError(std::string(what) + " '" + dir.string() + "' is not a directory");
}

std::vector<fs::path> list_rasters(const fs::path& dir) {
  require_dir(dir, "input directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && io::is_supported_raster(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void check_raster_size(const Raster& r, const data::ImageSize& size, const fs::path& file) {
  if (r.height() != size.height || r.width() != size.width) {
    throw ShapeError("'" + file.string() + "' is " + std::to_string(r.height()) + "x" + std::to_string(r.width()) +
                     " but the checkpoint was trained at " + std::to_string(size.height) + "x" +
                     std::to_string(size.width));
  }
}

std::string synthesis_request(const gen::MaskSynthesisSpec& s, int count) {
  std::ostringstream os;
  os << "count=" << count << ",canvas=" << s.canvas.height << 'x' << s.canvas.width
     << ",particles=" << s.particle_count_range.first << ':' << s.particle_count_range.second
     << ",radius=" << io::format_double(s.radius_range.first) << ':' << io::format_double(s.radius_range.second)
     << ",ellipticity=" << io::format_double(s.ellipticity_range.first) << ':'
     << io::format_double(s.ellipticity_range.second) << ",overlap=" << (s.overlap_allowed ? 1 : 0)
     << ",seed=" << s.seed << ",max_attempts=" << s.max_attempts;
  return os.str();
}

std::string indexed_name(const char* prefix, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
}

// Test split reproduced from the split seed, or taken from a split.tsv.
std::vector<data::SamplePair> test_pairs(std::vector<data::SamplePair> pairs, std::uint64_t split_seed,
                                         const std::optional<fs::path>& split_manifest) {
  if (!split_manifest) return data::split_dataset(std::move(pairs), split_seed).test;
  const auto assignment = data::read_split_manifest(*split_manifest);
  std::vector<data::SamplePair> test;
  for (auto& p : pairs) {
    const auto it = assignment.find(p.id);
    if (it != assignment.end() && it->second == "test") test.push_back(std::move(p));
  }
  if (test.empty()) throw DataError("split manifest '" + split_manifest->string() + "' lists no test pairs present in the data");
  return test;
}

void write_reports(const fs::path& out, const std::vector<eval::MetricsReport>& rows, const std::string& title,
                   const std::string& label_header, std::ostream& log) {
  std::ostringstream table;
  eval::write_report_table(table, rows, title, label_header);
  write_text(out / "report.txt", table.str());
  eval::write_report_tsv(out / "report.tsv", rows);
  log << table.str();
}

std::string slug(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) out += std::isalnum(ch) ? static_cast<char>(ch) : '_';
  return out;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  return dynamic_cast<const ValidationError*>(&e) ? 1 : 2;
}

void cmd_train(const TrainArgs& args, std::ostream& log) {
  require_dir(args.data_root, "data root");
  if (args.resume && !fs::exists(*args.resume)) {
    throw ValidationError("resume checkpoint '" + args.resume->string() + "' does not exist");
  }
  const RunConfig& cfg = args.config;
  cfg.validate();

  RunManifest manifest("train", args.out_dir);
  manifest.set_argument("data_root", args.data_root.string());
  manifest.set_argument("out_dir", args.out_dir.string());
  if (args.resume) manifest.set_argument("resume", args.resume->string());
  manifest.add_input("data_root", args.data_root);
  manifest.set_config(to_ini(cfg));
  manifest.set_seed(cfg.training.seed);
  manifest.write_started();
  write_text(args.out_dir / "resolved_config.ini", to_ini(cfg));

  auto pairs = data::load_dataset(args.data_root, cfg.model.image_size);
  const data::DatasetSplit split = data::split_dataset(std::move(pairs), cfg.split_seed);
  data::write_split_manifest(args.out_dir / "split.tsv", split);
  log << "train: " << split.train.size() << " train / " << split.val.size() << " val / " << split.test.size()
      << " test pairs\n";

  train::TrainState state;
  if (args.resume) {
    state = train::load_checkpoint(*args.resume, &cfg.model);
    log << "train: resuming from epoch " << state.epoch << '\n';
  } else {
    fs::remove(args.out_dir / "metrics.tsv");
    fs::remove(args.out_dir / "val_report.tsv");
    state = train::init_state(cfg.model, cfg.training.seed);
  }
  const auto extractor = make_extractor(cfg.eval.extractor);
  train::TrainOptions options;
  options.out_dir = args.out_dir;
  options.on_epoch = [&log](const train::TrainState& s, const train::ValidationRow& row) {
    log << "epoch " << s.epoch << " step " << s.step << " val_segmentation " << row.segmentation_loss
        << " val_ssim " << row.ssim << '\n';
  };
  train::train(split, std::move(state), cfg.losses, cfg.training, *extractor, options);
  manifest.write_completed();
}

void cmd_generate(const GenerateArgs& args, std::ostream& log) {
  if (!args.masks_dir && !args.synthesize_count) {
    throw ValidationError("generate needs either a masks directory or a synthesis request");
  }
  if (args.masks_dir && args.synthesize_count) {
    throw ValidationError("generate takes a masks directory or a synthesis request, not both");
  }
  args.post.validate();
  const train::TrainState state = train::load_checkpoint(args.checkpoint);
  const data::ImageSize size = state.model.image_size;

  RunManifest manifest("generate", args.out_dir);
  manifest.set_argument("checkpoint", args.checkpoint.string());
  manifest.set_argument("out_dir", args.out_dir.string());
  manifest.set_argument("seed", std::to_string(args.seed));
  manifest.set_argument("brightness_shift", io::format_double(args.post.brightness_shift));
  manifest.set_argument("exposure_gain", io::format_double(args.post.exposure_gain));
  manifest.set_argument("shadow_lift", io::format_double(args.post.shadow_lift));
  manifest.set_argument("highlight_cut", io::format_double(args.post.highlight_cut));
  manifest.add_input("checkpoint", args.checkpoint);
  manifest.set_seed(args.seed);

  std::vector<std::pair<std::string, Raster>> masks;
  if (args.synthesize_count) {
    gen::MaskSynthesisSpec spec = args.synthesis;
    if (spec.canvas.height == 0 && spec.canvas.width == 0) spec.canvas = size;
    manifest.set_argument("synthesize", synthesis_request(spec, *args.synthesize_count));
    manifest.write_started();
    const auto synth = gen::synthesize_masks(spec, *args.synthesize_count);
    fs::create_directories(args.out_dir / "masks");
    for (std::size_t i = 0; i < synth.size(); ++i) {
      const std::string name = indexed_name("synth", i);
      io::write_mask_u8(args.out_dir / "masks" / (name + ".png"), synth[i]);
      masks.emplace_back(name, synth[i]);
    }
  } else {
    manifest.set_argument("masks_dir", args.masks_dir->string());
    manifest.add_input("masks_dir", *args.masks_dir);
    const auto files = list_rasters(*args.masks_dir);
    manifest.write_started();
    for (const auto& f : files) {
      Raster m = data::binarize(io::read_grayscale(f));
      check_raster_size(m, size, f);
      masks.emplace_back(f.stem().string(), std::move(m));
    }
  }

  fs::create_directories(args.out_dir / "images");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    Raster img = gen::generate(masks[i].second, state.generator, gen::derive_seed(args.seed, i), size);
    img = gen::post_process(img, args.post);
    io::write_image_u8(args.out_dir / "images" / (masks[i].first + ".png"), img);
  }
  log << "generate: wrote " << masks.size() << " images to " << (args.out_dir / "images").string() << '\n';
  manifest.write_completed();
}

void cmd_segment(const SegmentArgs& args, std::ostream& log) {
  if (!(args.threshold >= 0.0)) throw ValidationError("threshold must be >= 0");
  const train::TrainState state = train::load_checkpoint(args.checkpoint);
  const auto files = list_rasters(args.images_dir);

  RunManifest manifest("segment", args.out_dir);
  manifest.set_argument("checkpoint", args.checkpoint.string());
  manifest.set_argument("images_dir", args.images_dir.string());
  manifest.set_argument("out_dir", args.out_dir.string());
  manifest.set_argument("threshold", io::format_double(args.threshold));
  manifest.add_input("checkpoint", args.checkpoint);
  manifest.add_input("images_dir", args.images_dir);
  manifest.write_started();

  fs::create_directories(args.out_dir);
  for (const auto& f : files) {
    const Raster image = data::normalize_image(io::read_grayscale(f));
    check_raster_size(image, state.model.image_size, f);
    const Raster mask = gen::segment(image, state.segmenter, args.threshold, state.model.image_size);
    io::write_mask_u8(args.out_dir / (f.stem().string() + ".png"), mask);
  }
  log << "segment: wrote " << files.size() << " masks to " << args.out_dir.string() << '\n';
  manifest.write_completed();
}

std::vector<eval::MetricsReport> cmd_evaluate(const EvaluateArgs& args, std::ostream& log) {
  require_dir(args.data_root, "data root");
  const RunConfig& cfg = args.config;
  const auto extractor = make_extractor(cfg.eval.extractor);
  const train::TrainState state = train::load_checkpoint(args.checkpoint);

  RunManifest manifest("evaluate", args.out_dir);
  manifest.set_argument("checkpoint", args.checkpoint.string());
  manifest.set_argument("data_root", args.data_root.string());
  manifest.set_argument("out_dir", args.out_dir.string());
  if (args.split_manifest) manifest.set_argument("split_manifest", args.split_manifest->string());
  manifest.add_input("checkpoint", args.checkpoint);
  manifest.add_input("data_root", args.data_root);
  manifest.set_config(to_ini(cfg));
  manifest.set_seed(cfg.eval.seed);
  manifest.write_started();

  const auto test = test_pairs(data::load_dataset(args.data_root, state.model.image_size), cfg.split_seed,
                               args.split_manifest);
  log << "evaluate: " << test.size() << " test pairs, extractor " << extractor->name() << '\n';

  std::vector<eval::MetricsReport> rows;
  rows.push_back(eval::evaluate_model(test, state.generator, cfg.eval.seed, *extractor, "F-ANcGAN"));
  if (!cfg.eval.post.is_identity()) {
    rows.push_back(eval::evaluate_images(
        test,
        [&](const data::SamplePair& p, std::size_t i) {
          return gen::post_process(
              gen::generate(p.mask, state.generator, gen::derive_seed(cfg.eval.seed, i)), cfg.eval.post);
        },
        *extractor, "F-ANcGAN + post-processing"));
  }
  if (cfg.eval.identity_baseline) {
    rows.push_back(eval::evaluate_images(
        test, [](const data::SamplePair& p, std::size_t) { return p.image; }, *extractor,
        "Identity (paired real image)"));
  }
  fs::create_directories(args.out_dir);
  write_reports(args.out_dir, rows, "Evaluation", "Methodology", log);
  eval::write_per_sample_ssim(args.out_dir / "per_sample_ssim.tsv", rows.front());
  manifest.write_completed();
  return rows;
}

std::vector<eval::MetricsReport> cmd_ablate(const AblateArgs& args, std::ostream& log) {
  require_dir(args.data_root, "data root");
  const RunConfig& cfg = args.config;
  cfg.validate();
  if (cfg.ablations.empty()) throw ConfigError("no ablation configurations to compare");
  const auto extractor = make_extractor(cfg.eval.extractor);

  RunManifest manifest("ablate", args.out_dir);
  manifest.set_argument("data_root", args.data_root.string());
  manifest.set_argument("out_dir", args.out_dir.string());
  manifest.add_input("data_root", args.data_root);
  manifest.set_config(to_ini(cfg));
  manifest.set_seed(cfg.training.seed);
  manifest.set_note("fairness", "every row trains from the same initial state (training.seed=" +
                                    std::to_string(cfg.training.seed) + ") on the same split (split_seed=" +
                                    std::to_string(cfg.split_seed) + ") for " +
                                    std::to_string(cfg.training.epochs) + " epochs and is evaluated with eval.seed=" +
                                    std::to_string(cfg.eval.seed));
  manifest.write_started();
  write_text(args.out_dir / "resolved_config.ini", to_ini(cfg));

  auto pairs = data::load_dataset(args.data_root, cfg.model.image_size);
  const data::DatasetSplit split = data::split_dataset(std::move(pairs), cfg.split_seed);
  data::write_split_manifest(args.out_dir / "split.tsv", split);

  std::vector<eval::MetricsReport> rows;
  std::ofstream params(args.out_dir / "configurations.tsv");
  if (!params) throw IoError("cannot write configurations.tsv");
  params << "label\talpha_t\tgamma\ttversky_alpha\ttversky_beta\ttversky_gamma\tlambda1\tlambda2\ttraining_seed\t"
            "split_seed\teval_seed\tepochs\n";
  for (const auto& row : cfg.ablations) {
    log << "ablate: training '" << row.label << "'\n";
    const fs::path dir = args.out_dir / slug(row.key);
    const auto& l = row.losses;
    params << row.label << '\t' << io::format_double(l.alpha_t) << '\t' << io::format_double(l.gamma) << '\t'
           << io::format_double(l.tversky_alpha) << '\t' << io::format_double(l.tversky_beta) << '\t'
           << io::format_double(l.tversky_gamma) << '\t' << io::format_double(l.lambda1) << '\t'
           << io::format_double(l.lambda2) << '\t' << cfg.training.seed << '\t' << cfg.split_seed << '\t'
           << cfg.eval.seed << '\t' << cfg.training.epochs << '\n';
    fs::remove(dir / "metrics.tsv");
    fs::remove(dir / "val_report.tsv");
    train::TrainOptions options;
    options.out_dir = dir;
    const train::TrainState trained = train::train(split, train::init_state(cfg.model, cfg.training.seed),
                                                   row.losses, cfg.training, *extractor, options);
    rows.push_back(eval::evaluate_model(split.test, trained.generator, cfg.eval.seed, *extractor, row.label));
  }
  params.close();
  write_reports(args.out_dir, rows, "Ablation Study", "Loss Configuration", log);
  manifest.write_completed();
  return rows;
}

void cmd_make_masks(const MakeMasksArgs& args, std::ostream& log) {
  args.spec.validate();
  RunManifest manifest("make-masks", args.out_dir);
  manifest.set_argument("out_dir", args.out_dir.string());
  manifest.set_argument("synthesize", synthesis_request(args.spec, args.count));
  manifest.set_seed(args.spec.seed);
  manifest.write_started();
  const auto masks = gen::synthesize_masks(args.spec, args.count);
  fs::create_directories(args.out_dir);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    io::write_mask_u8(args.out_dir / (indexed_name("mask", i) + ".png"), masks[i]);
  }
  log << "make-masks: wrote " << masks.size() << " masks to " << args.out_dir.string() << '\n';
  manifest.write_completed();
}

void cmd_make_toy_data(const MakeToyDataArgs& args, std::ostream& log) {
  RunManifest manifest("make-toy-data", args.out_dir);
  manifest.set_argument("out_dir", args.out_dir.string());
  manifest.set_argument("count", std::to_string(args.count));
  manifest.set_argument("size", std::to_string(args.size));
  manifest.set_seed(args.seed);
  manifest.write_started();
  gen::write_dataset(args.out_dir, gen::make_toy_dataset(args.count, args.size, args.seed));
  log << "make-toy-data: wrote " << args.count << " pairs to " << args.out_dir.string() << '\n';
  manifest.write_completed();
}

void cmd_replay(const fs::path& manifest_path, const fs::path& out_dir, std::ostream& log) {
  const auto m = RunManifest::read(manifest_path);
  auto arg = [&](const std::string& k) -> std::string {
    const auto it = m.arguments.find(k);
    if (it == m.arguments.end()) throw SchemaError("manifest has no argument '" + k + "'");
    return it->second;
  };
  auto opt = [&](const std::string& k) -> std::optional<std::string> {
    const auto it = m.arguments.find(k);
    return it == m.arguments.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  auto config = [&]() {
    const fs::path tmp = fs::temp_directory_path() / ("fancgan_replay_" + std::to_string(::getpid()) + ".ini");
    write_text(tmp, m.config);
    RunConfig c;
    try {
      c = load_config(tmp, {});
    } catch (...) {
      fs::remove(tmp);
      throw;
    }
    fs::remove(tmp);
    return c;
  };
  log << "replay: " << m.command << " into " << out_dir.string() << '\n';
  if (m.command == "train") {
    if (opt("resume")) throw ValidationError("replaying a resumed training run is not supported");
    cmd_train({config(), arg("data_root"), out_dir, std::nullopt}, log);
  } else if (m.command == "generate") {
    GenerateArgs g;
    g.checkpoint = arg("checkpoint");
    g.out_dir = out_dir;
    g.seed = static_cast<std::uint64_t>(io::parse_int(arg("seed"), "seed"));
    g.post.brightness_shift = io::parse_double(arg("brightness_shift"), "brightness_shift");
    g.post.exposure_gain = io::parse_double(arg("exposure_gain"), "exposure_gain");
    g.post.shadow_lift = io::parse_double(arg("shadow_lift"), "shadow_lift");
    g.post.highlight_cut = io::parse_double(arg("highlight_cut"), "highlight_cut");
    if (const auto s = opt("synthesize")) {
      g.synthesize_count = parse_synthesis_request(*s, g.synthesis);
    } else {
      g.masks_dir = arg("masks_dir");
    }
    cmd_generate(g, log);
  } else if (m.command == "segment") {
    cmd_segment({arg("checkpoint"), arg("images_dir"), out_dir, io::parse_double(arg("threshold"), "threshold")}, log);
  } else if (m.command == "evaluate") {
    std::optional<fs::path> split;
    if (const auto s = opt("split_manifest")) split = *s;
    cmd_evaluate({config(), arg("checkpoint"), arg("data_root"), out_dir, split}, log);
  } else if (m.command == "ablate") {
    cmd_ablate({config(), arg("data_root"), out_dir}, log);
  } else if (m.command == "make-masks") {
    MakeMasksArgs a;
    a.count = parse_synthesis_request(arg("synthesize"), a.spec);
    a.out_dir = out_dir;
    cmd_make_masks(a, log);
  } else if (m.command == "make-toy-data") {
    cmd_make_toy_data({static_cast<int>(io::parse_int(arg("count"), "count")),
                       static_cast<int>(io::parse_int(arg("size"), "size")), m.seed, out_dir},
                      log);
  } else {
    throw SchemaError("manifest names unknown command '" + m.command + "'");
  }
}

}  // namespace fancgan::cli
