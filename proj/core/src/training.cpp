#include "fancgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "fancgan/archive.hpp"
#include "fancgan/error.hpp"
#include "fancgan/evaluation.hpp"
#include "fancgan/generation.hpp"
#include "fancgan/ops.hpp"

namespace fancgan::train {
namespace {

using io::format_double;

void require_positive(long long v, const char* field) {
  if (v < 1) throw ConfigError(std::string(field) + " = " + std::to_string(v) + " must be >= 1");
}

std::string size_str(const data::ImageSize& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width);
}

data::ImageSize parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw SchemaError("malformed image size '" + s + "'");
  return {static_cast<int>(io::parse_int(s.substr(0, x), "image_size")),
          static_cast<int>(io::parse_int(s.substr(x + 1), "image_size"))};
}

Tensor stack_images(const std::vector<data::SamplePair>& batch) {
  std::vector<const Raster*> r;
  for (const auto& p : batch) r.push_back(&p.image);
  return stack_rasters(r);
}

Tensor stack_masks(const std::vector<data::SamplePair>& batch) {
  std::vector<const Raster*> r;
  for (const auto& p : batch) r.push_back(&p.mask);
  return stack_rasters(r);
}

void add_params(io::Archive& ar, const std::string& group, const std::vector<NamedParam>& params,
                const AdamState& adam) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ar.add(group + "/" + params[i].name, params[i].var->value());
    ar.add("adam/" + group + "/m/" + params[i].name, adam.m.at(i));
    ar.add("adam/" + group + "/v/" + params[i].name, adam.v.at(i));
  }
  ar.meta["adam/" + group + "/t"] = std::to_string(adam.t);
}

void load_params(const io::Archive& ar, const std::string& group, const std::vector<NamedParam>& params,
                 AdamState& adam) {
  adam = make_adam_state(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    auto fetch = [&](const std::string& name, Tensor& dst) {
      const Tensor& t = ar.tensor(name);
      if (t.shape() != dst.shape()) {
        throw SchemaError("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape()) +
                          ", expected " + shape_str(dst.shape()));
      }
      dst = t;
    };
    fetch(group + "/" + p.name, p.var->mutable_value());
    fetch("adam/" + group + "/m/" + p.name, adam.m[i]);
    fetch("adam/" + group + "/v/" + p.name, adam.v[i]);
  }
  adam.t = io::parse_int(ar.meta_at("adam/" + group + "/t"), "adam/" + group + "/t");
}

void check_finite(const char* name, const Var& v) {
  const double x = v.value().item();
  if (!std::isfinite(x)) {
    std::ostringstream os;
    os << "non-finite loss term '" << name << "' (" << x << ")";
    throw NumericalError(os.str());
  }
}

}  // namespace

void TrainingConfig::validate() const {
  if (epochs < 0) throw ConfigError("training.epochs = " + std::to_string(epochs) + " must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("training.learning_rate must be a positive finite value");
  }
  require_positive(batch_size, "training.batch_size");
  require_positive(checkpoint_every, "training.checkpoint_every");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("training.beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("training.beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("training.adam_eps must be > 0");
  if (device != "cpu") {
    throw ConfigError("training.device = '" + device + "' is not available; this build runs on 'cpu'");
  }
  augmentation.validate();
}

void ModelConfig::validate() const {
  if (image_size.height < 1 || image_size.width < 1) throw ConfigError("model.image_size must be positive");
  auto divisible = [&](int depth, const char* field) {
    if (depth < 1) throw ConfigError(std::string(field) + " must be >= 1");
    const int f = 1 << depth;
    if (image_size.height % f != 0 || image_size.width % f != 0) {
      throw ConfigError("model.image_size " + size_str(image_size) + " is not divisible by 2^" +
                        std::to_string(depth) + " (" + field + ")");
    }
  };
  divisible(generator.depth, "model.generator_depth");
  divisible(segmenter.depth, "model.segmenter_depth");
  if (generator.base_width < 1 || segmenter.base_width < 1 || discriminator.base_width < 1) {
    throw ConfigError("model base widths must be >= 1");
  }
  if (generator.latent_dim < 1 || generator.style_dim < 1 || generator.mapping_layers < 1) {
    throw ConfigError("model.latent_dim, model.style_dim and model.mapping_layers must be >= 1");
  }
  std::mt19937_64 rng(0);
  nn::PatchDiscriminatorConfig small = discriminator;
  small.base_width = 1;
  small.max_width_multiplier = 1;
  nn::PatchDiscriminator(small, rng).output_size(image_size.height, image_size.width);
}

std::vector<std::pair<std::string, std::string>> describe(const ModelConfig& c) {
  return {
      {"image_size", size_str(c.image_size)},
      {"generator.depth", std::to_string(c.generator.depth)},
      {"generator.base_width", std::to_string(c.generator.base_width)},
      {"generator.latent_dim", std::to_string(c.generator.latent_dim)},
      {"generator.style_dim", std::to_string(c.generator.style_dim)},
      {"generator.mapping_layers", std::to_string(c.generator.mapping_layers)},
      {"generator.adain_eps", format_double(c.generator.adain_eps)},
      {"generator.slope", format_double(c.generator.slope)},
      {"segmenter.depth", std::to_string(c.segmenter.depth)},
      {"segmenter.base_width", std::to_string(c.segmenter.base_width)},
      {"segmenter.slope", format_double(c.segmenter.slope)},
      {"discriminator.base_width", std::to_string(c.discriminator.base_width)},
      {"discriminator.strided_layers", std::to_string(c.discriminator.strided_layers)},
      {"discriminator.kernel", std::to_string(c.discriminator.kernel)},
      {"discriminator.max_width_multiplier", std::to_string(c.discriminator.max_width_multiplier)},
      {"discriminator.slope", format_double(c.discriminator.slope)},
      {"discriminator.norm_eps", format_double(c.discriminator.norm_eps)},
  };
}

ModelConfig model_config_from(const std::map<std::string, std::string>& f) {
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = f.find(k);
    if (it == f.end()) throw SchemaError("model field '" + k + "' is missing");
    return it->second;
  };
  auto i = [&](const std::string& k) { return static_cast<int>(io::parse_int(get(k), k)); };
  auto d = [&](const std::string& k) { return io::parse_double(get(k), k); };
  ModelConfig c;
  c.image_size = parse_size(get("image_size"));
  c.generator.depth = i("generator.depth");
  c.generator.base_width = i("generator.base_width");
  c.generator.latent_dim = i("generator.latent_dim");
  c.generator.style_dim = i("generator.style_dim");
  c.generator.mapping_layers = i("generator.mapping_layers");
  c.generator.adain_eps = d("generator.adain_eps");
  c.generator.slope = d("generator.slope");
  c.segmenter.depth = i("segmenter.depth");
  c.segmenter.base_width = i("segmenter.base_width");
  c.segmenter.slope = d("segmenter.slope");
  c.discriminator.base_width = i("discriminator.base_width");
  c.discriminator.strided_layers = i("discriminator.strided_layers");
  c.discriminator.kernel = i("discriminator.kernel");
  c.discriminator.max_width_multiplier = i("discriminator.max_width_multiplier");
  c.discriminator.slope = d("discriminator.slope");
  c.discriminator.norm_eps = d("discriminator.norm_eps");
  return c;
}

AdamState make_adam_state(const std::vector<NamedParam>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.var->shape());
    s.v.emplace_back(p.var->shape());
  }
  return s;
}

void adam_step(const std::vector<NamedParam>& params, AdamState& state, double lr, const AdamConfig& config) {
  if (state.m.size() != params.size()) throw ValidationError("optimizer state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& p = *params[i].var;
    if (!p.has_grad()) continue;
    const Tensor& g = p.node()->grad;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    Tensor& w = p.mutable_value();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.eps);
    }
  }
}

TrainState TrainState::clone() const {
  TrainState s;
  s.model = model;
  s.generator = generator.clone();
  s.segmenter = segmenter.clone();
  s.disc_image = disc_image.clone();
  s.disc_mask = disc_mask.clone();
  s.opt_generator = opt_generator;
  s.opt_segmenter = opt_segmenter;
  s.opt_disc_image = opt_disc_image;
  s.opt_disc_mask = opt_disc_mask;
  s.epoch = epoch;
  s.step = step;
  s.rng = rng;
  return s;
}

TrainState init_state(const ModelConfig& model, std::uint64_t seed) {
  model.validate();
  TrainState s;
  s.model = model;
  std::mt19937_64 init(seed);
  s.generator = nn::StyleUNet(model.generator, init);
  s.segmenter = nn::AttentionUNet(model.segmenter, init);
  s.disc_image = nn::PatchDiscriminator(model.discriminator, init);
  s.disc_mask = nn::PatchDiscriminator(model.discriminator, init);
  s.opt_generator = make_adam_state(s.generator.parameters());
  s.opt_segmenter = make_adam_state(s.segmenter.parameters());
  s.opt_disc_image = make_adam_state(s.disc_image.parameters());
  s.opt_disc_mask = make_adam_state(s.disc_mask.parameters());
  s.rng.seed(gen::derive_seed(seed, 1));
  return s;
}

Var discriminator_objective(const nn::PatchDiscriminator& disc, const Tensor& real, const Var& fake) {
  const Var real_loss = loss::lsgan_loss(disc.forward(constant(real)), 1.0);
  const Var fake_loss = loss::lsgan_loss(disc.forward(detach(fake)), 0.0);
  return ops::add(real_loss, fake_loss);
}

loss::LossReport train_step(const std::vector<data::SamplePair>& batch, TrainState& state,
                            const loss::LossConfig& lc, const TrainingConfig& config,
                            const FeatureExtractor& extractor) {
  if (batch.empty()) throw ValidationError("train_step: empty batch");
  const Tensor images = stack_images(batch);
  const Tensor masks = stack_masks(batch);
  const int n = images.dim(0);
  const auto& size = state.model.image_size;
  if (images.dim(2) != size.height || images.dim(3) != size.width) {
    throw ShapeError("train_step: batch is " + std::to_string(images.dim(2)) + "x" +
                     std::to_string(images.dim(3)) + " but the model expects " + size_str(size));
  }

  std::mt19937_64 rng = state.rng;
  const Tensor z_forward = Tensor::randn({n, state.model.generator.latent_dim}, rng);
  const std::uint64_t noise_forward = rng();
  const Tensor z_backward = Tensor::randn({n, state.model.generator.latent_dim}, rng);
  const std::uint64_t noise_backward = rng();

  const Var image_var = constant(images);
  const Var mask_var = constant(masks);

  // Forward path.
  const Var fake = state.generator.forward(mask_var, z_forward, noise_forward);
  const Var rec_mask = state.segmenter.forward(fake);
  // Backward path.
  const Var pred_mask = state.segmenter.forward(image_var);
  const Var rec_image = state.generator.forward(pred_mask, z_backward, noise_backward);

  const Var adv_image = loss::lsgan_loss(state.disc_image.forward(fake), 1.0);
  const Var adv_mask = loss::lsgan_loss(state.disc_mask.forward(pred_mask), 1.0);
  const Var l1 = loss::l1_loss(fake, image_var);
  const Var perceptual = loss::perceptual_loss(fake, image_var, extractor);
  const Var seg = loss::segmentation_loss(pred_mask, masks, lc);
  const loss::CycleLosses cyc = loss::cycle_losses(masks, rec_mask, images, rec_image, lc, &extractor);

  Var generator_total = ops::scale(adv_image, lc.weight_adversarial);
  generator_total = ops::add(generator_total, ops::scale(l1, lc.weight_l1));
  generator_total = ops::add(generator_total, ops::scale(perceptual, lc.weight_perceptual));
  generator_total = ops::add(generator_total, ops::scale(cyc.image_cycle, lc.weight_cycle));
  Var segmentation_total = ops::scale(adv_mask, lc.weight_adversarial);
  segmentation_total = ops::add(segmentation_total, seg);
  segmentation_total = ops::add(segmentation_total, ops::scale(cyc.mask_cycle, lc.weight_cycle));

  const Var disc_image = discriminator_objective(state.disc_image, images, fake);
  const Var disc_mask = discriminator_objective(state.disc_mask, masks, pred_mask);

  const std::pair<const char*, const Var*> terms[] = {
      {"generator_total", &generator_total},
      {"segmentation_total", &segmentation_total},
      {"disc_image", &disc_image},
      {"disc_mask", &disc_mask},
      {"adv_image", &adv_image},
      {"adv_mask", &adv_mask},
      {"l1", &l1},
      {"perceptual", &perceptual},
      {"segmentation", &seg},
      {"mask_cycle", &cyc.mask_cycle},
      {"image_cycle", &cyc.image_cycle},
  };
  for (const auto& [name, v] : terms) check_finite(name, *v);

  const auto g_params = state.generator.parameters();
  const auto f_params = state.segmenter.parameters();
  const auto di_params = state.disc_image.parameters();
  const auto dm_params = state.disc_mask.parameters();

  // (1) generator and segmenter jointly.
  zero_grads(g_params);
  zero_grads(f_params);
  ops::add(generator_total, segmentation_total).backward();
  adam_step(g_params, state.opt_generator, config.learning_rate, config.adam);
  adam_step(f_params, state.opt_segmenter, config.learning_rate, config.adam);

  // (2) image discriminator, (3) mask discriminator. Their graphs were built
  // from detached fakes before the update above.
  zero_grads(di_params);
  disc_image.backward();
  adam_step(di_params, state.opt_disc_image, config.learning_rate, config.adam);

  zero_grads(dm_params);
  disc_mask.backward();
  adam_step(dm_params, state.opt_disc_mask, config.learning_rate, config.adam);

  // Leave no stale gradients on any network.
  zero_grads(g_params);
  zero_grads(f_params);
  zero_grads(di_params);
  zero_grads(dm_params);

  state.rng = rng;
  ++state.step;

  loss::LossReport report;
  for (const auto& [name, v] : terms) report.set(name, v->value().item());
  return report;
}

ValidationRow validate_epoch(const std::vector<data::SamplePair>& val, const TrainState& state,
                             const loss::LossConfig& losses, std::uint64_t seed) {
  ValidationRow row{state.epoch, 0.0, 0.0};
  if (val.empty()) return row;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& p = val[i];
    const Var probs = state.segmenter.forward(constant(stack_rasters({&p.image})));
    row.segmentation_loss += loss::segmentation_loss(probs, stack_rasters({&p.mask}), losses).value().item();
    const Raster fake = gen::generate(p.mask, state.generator, gen::derive_seed(seed, i));
    row.ssim += eval::ssim(fake, p.image);
  }
  row.segmentation_loss /= static_cast<double>(val.size());
  row.ssim /= static_cast<double>(val.size());
  return row;
}

std::filesystem::path checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_epoch%04d.fcg", epoch);
  return buf;
}

TrainState train(const data::DatasetSplit& split, TrainState state, const loss::LossConfig& losses,
                 const TrainingConfig& config, const FeatureExtractor& extractor, const TrainOptions& options) {
  config.validate();
  losses.validate();
  if (split.train.empty()) throw DataError("training split is empty");
  const bool write = !options.out_dir.empty();
  if (write) std::filesystem::create_directories(options.out_dir);

  bool ran = false;
  while (state.epoch < config.epochs) {
    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    std::ofstream metrics;
    if (write) {
      metrics.open(options.out_dir / "metrics.tsv", std::ios::app);
      if (!metrics) throw IoError("cannot append to '" + (options.out_dir / "metrics.tsv").string() + "'");
      metrics << std::setprecision(17);
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<data::SamplePair> batch;
      for (std::size_t i = start; i < end; ++i) {
        const auto& pair = split.train[order[i]];
        batch.push_back(config.augment ? data::augment(pair, config.augmentation, state.rng) : pair);
      }
      const loss::LossReport report = train_step(batch, state, losses, config, extractor);
      if (write) {
        for (const auto& [name, value] : report.entries()) metrics << state.step << '\t' << name << '\t' << value << '\n';
      }
    }
    ++state.epoch;
    ran = true;

    const ValidationRow row = validate_epoch(split.val, state, losses, config.seed);
    if (write) {
      const auto path = options.out_dir / "val_report.tsv";
      const bool fresh = !std::filesystem::exists(path);
      std::ofstream vr(path, std::ios::app);
      if (!vr) throw IoError("cannot append to '" + path.string() + "'");
      if (fresh) vr << "epoch\tsegmentation_loss\tssim\n";
      vr << std::setprecision(17) << row.epoch << '\t' << row.segmentation_loss << '\t' << row.ssim << '\n';
      if (state.epoch % config.checkpoint_every == 0) {
        save_checkpoint(state, options.out_dir / checkpoint_name(state.epoch));
      }
    }
    if (options.on_epoch) options.on_epoch(state, row);
  }
  if (write && ran) save_checkpoint(state, options.out_dir / "final.fcg");
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  TrainState s = state.clone();
  io::Archive ar;
  for (const auto& [k, v] : describe(s.model)) ar.meta["model." + k] = v;
  ar.meta["epoch"] = std::to_string(s.epoch);
  ar.meta["step"] = std::to_string(s.step);
  std::ostringstream rng;
  rng << s.rng;
  ar.meta["rng"] = rng.str();
  add_params(ar, "generator", s.generator.parameters(), s.opt_generator);
  add_params(ar, "segmenter", s.segmenter.parameters(), s.opt_segmenter);
  add_params(ar, "disc_image", s.disc_image.parameters(), s.opt_disc_image);
  add_params(ar, "disc_mask", s.disc_mask.parameters(), s.opt_disc_mask);
  try {
    io::write_archive(path, ar, kCheckpointSchemaVersion);
  } catch (const IoError& e) {
    throw IoError(std::string("checkpoint write failed: ") + e.what());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  const io::Archive ar = io::read_archive(path, kCheckpointSchemaVersion);
  std::map<std::string, std::string> fields;
  for (const auto& [k, v] : ar.meta) {
    if (k.rfind("model.", 0) == 0) fields[k.substr(6)] = v;
  }
  const ModelConfig model = model_config_from(fields);
  if (expected) {
    const auto want = describe(*expected);
    const auto have = describe(model);
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (want[i].second != have[i].second) {
        throw SchemaError("checkpoint '" + path.string() + "' field '" + want[i].first + "' is " +
                          have[i].second + " but the configuration expects " + want[i].second);
      }
    }
  }
  TrainState s = init_state(model, 0);
  load_params(ar, "generator", s.generator.parameters(), s.opt_generator);
  load_params(ar, "segmenter", s.segmenter.parameters(), s.opt_segmenter);
  load_params(ar, "disc_image", s.disc_image.parameters(), s.opt_disc_image);
  load_params(ar, "disc_mask", s.disc_mask.parameters(), s.opt_disc_mask);
  s.epoch = static_cast<int>(io::parse_int(ar.meta_at("epoch"), "epoch"));
  s.step = io::parse_int(ar.meta_at("step"), "step");
  std::istringstream rng(ar.meta_at("rng"));
  rng >> s.rng;
  if (!rng) throw SchemaError("checkpoint rng state is malformed");
  return s;
}

}  // namespace fancgan::train
