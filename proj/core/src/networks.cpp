#include "fancgan/networks.hpp"

#include <cmath>

#include "fancgan/error.hpp"
#include "fancgan/ops.hpp"

namespace fancgan::nn {

// ---------------------------------------------------------------------------
// Layers

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

void Conv2d::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  if (bias.defined()) out.push_back({prefix + ".bias", &bias});
}

Conv2d make_conv(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng,
                 bool with_bias, double gain) {
  if (in < 1 || out < 1 || kernel < 1) throw ConfigError("convolution sizes must be positive");
  Conv2d c;
  const double stddev = gain * std::sqrt(2.0 / (in * kernel * kernel));
  c.weight = Var(Tensor::randn({out, in, kernel, kernel}, rng, stddev), true);
  if (with_bias) c.bias = Var(Tensor({out}), true);
  c.stride = stride;
  c.pad = pad;
  return c;
}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

Linear make_linear(int in, int out, std::mt19937_64& rng, double gain) {
  if (in < 1 || out < 1) throw ConfigError("linear sizes must be positive");
  Linear l;
  l.weight = Var(Tensor::randn({out, in}, rng, gain / std::sqrt(static_cast<double>(in))), true);
  l.bias = Var(Tensor({out}), true);
  return l;
}

Var DoubleConv::operator()(const Var& x, double slope) const {
  return ops::leaky_relu(second(ops::leaky_relu(first(x), slope)), slope);
}

void DoubleConv::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  first.collect(out, prefix + ".conv1");
  second.collect(out, prefix + ".conv2");
}

DoubleConv make_double_conv(int in, int out, std::mt19937_64& rng) {
  DoubleConv d;
  d.first = make_conv(in, out, 3, 1, 1, rng);
  d.second = make_conv(out, out, 3, 1, 1, rng);
  return d;
}

namespace {

void require_divisible(const Var& x, int depth, const char* who) {
  const int factor = 1 << depth;
  if (x.value().rank() != 4 || x.dim(1) != 1) {
    throw ShapeError(std::string(who) + ": expected (N, 1, H, W) input, got " + shape_str(x.shape()));
  }
  if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
    throw ConfigError(std::string(who) + ": spatial size " + std::to_string(x.dim(2)) + "x" +
                      std::to_string(x.dim(3)) + " is not divisible by 2^depth = " +
                      std::to_string(factor));
  }
}

int level_width(int base, int level) { return base << level; }

}  // namespace

// ---------------------------------------------------------------------------
// Style path

void MappingNetwork::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + ".fc" + std::to_string(i));
}

MappingNetwork make_mapping_network(int latent_dim, int style_dim, int layers, std::mt19937_64& rng) {
  if (layers < 1) throw ConfigError("mapping network needs at least one layer");
  MappingNetwork net;
  for (int i = 0; i < layers; ++i) {
    net.layers.push_back(make_linear(i == 0 ? latent_dim : style_dim, style_dim, rng));
  }
  return net;
}

Var mapping_network(const Var& z, const MappingNetwork& net) {
  if (z.value().rank() != 2 || z.dim(1) != net.latent_dim()) {
    throw ShapeError("mapping_network: latent " + shape_str(z.shape()) + " does not match latent_dim " +
                     std::to_string(net.latent_dim()));
  }
  Var x = z;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = net.layers[i](x);
    if (i + 1 < net.layers.size()) x = ops::leaky_relu(x, net.slope);
  }
  return x;
}

Var adain(const Var& features, const Var& style, const Linear& affine, double eps) {
  const int c = features.dim(1);
  if (affine.out_features() != 2 * c) {
    throw ShapeError("adain: affine produces " + std::to_string(affine.out_features()) +
                     " values for " + std::to_string(c) + " channels");
  }
  if (style.value().rank() != 2 || style.dim(0) != features.dim(0)) {
    throw ShapeError("adain: style " + shape_str(style.shape()) + " for features " +
                     shape_str(features.shape()));
  }
  const Var params = affine(style);
  const Var scale = ops::slice_cols(params, 0, c);
  const Var shift = ops::slice_cols(params, c, c);
  return ops::channel_affine(ops::instance_norm(features, eps), scale, shift);
}

Var noise_inject(const Var& features, const Tensor& noise, const Var& scales) {
  return ops::add_channel_noise(features, scales, noise);
}

std::vector<Var> style_blend(const std::vector<Var>& styles, const std::map<int, int>& assignment,
                             int levels) {
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const auto it = assignment.find(l);
    if (it == assignment.end()) {
      throw ValidationError("style_blend: decoder level " + std::to_string(l) + " has no style");
    }
    if (it->second < 0 || it->second >= static_cast<int>(styles.size())) {
      throw ValidationError("style_blend: level " + std::to_string(l) + " refers to style " +
                            std::to_string(it->second) + " of " + std::to_string(styles.size()));
    }
    out.push_back(styles[static_cast<std::size_t>(it->second)]);
  }
  return out;
}

std::map<int, int> broadcast_assignment(int levels) {
  std::map<int, int> m;
  for (int l = 0; l < levels; ++l) m[l] = 0;
  return m;
}

// ---------------------------------------------------------------------------
// Generator

void StyleDecoderLevel::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  up.collect(out, prefix + ".up");
  fuse.collect(out, prefix + ".fuse");
  affine.collect(out, prefix + ".adain");
  out.push_back({prefix + ".noise_scales", &noise_scales});
}

StyleUNet::StyleUNet(const StyleUNetConfig& config, std::mt19937_64& rng) : config_(config) {
  if (config.depth < 1 || config.base_width < 1 || config.latent_dim < 1 || config.style_dim < 1) {
    throw ConfigError("generator depth, base_width, latent_dim and style_dim must be positive");
  }
  mapping = make_mapping_network(config.latent_dim, config.style_dim, config.mapping_layers, rng);
  int in = 1;
  for (int l = 0; l < config.depth; ++l) {
    const int w = level_width(config.base_width, l);
    encoder.push_back(make_double_conv(in, w, rng));
    in = w;
  }
  bottleneck = make_double_conv(in, level_width(config.base_width, config.depth), rng);
  for (int l = 0; l < config.depth; ++l) {
    const int enc_level = config.depth - 1 - l;
    const int w = level_width(config.base_width, enc_level);
    StyleDecoderLevel d;
    d.up = make_conv(2 * w, w, 3, 1, 1, rng);
    d.fuse = make_conv(2 * w, w, 3, 1, 1, rng);
    d.affine = make_linear(config.style_dim, 2 * w, rng, 0.2);
    for (int c = 0; c < w; ++c) d.affine.bias.mutable_value()[static_cast<std::size_t>(c)] = 1.0;
    d.noise_scales = Var(Tensor({w}), true);
    decoder.push_back(std::move(d));
  }
  head = make_conv(config.base_width, 1, 1, 1, 0, rng);
}

Var StyleUNet::forward(const Var& mask, const Tensor& z, std::uint64_t noise_seed) const {
  return forward(mask, std::vector<Tensor>{z}, broadcast_assignment(levels()), noise_seed);
}

Var StyleUNet::forward(const Var& mask, const std::vector<Tensor>& latents,
                       const std::map<int, int>& assignment, std::uint64_t noise_seed) const {
  std::vector<Var> styles;
  styles.reserve(latents.size());
  for (const Tensor& z : latents) styles.push_back(mapping_network(constant(z), mapping));
  return forward_styles(mask, style_blend(styles, assignment, levels()), noise_seed);
}

Var StyleUNet::forward_styles(const Var& mask, const std::vector<Var>& level_styles,
                              std::uint64_t noise_seed) const {
  require_divisible(mask, config_.depth, "style_unet_forward");
  if (static_cast<int>(level_styles.size()) != levels()) {
    throw ValidationError("style_unet_forward: one style per decoder level required");
  }
  const double slope = config_.slope;
  std::vector<Var> skips;
  Var x = mask;
  for (const auto& block : encoder) {
    x = block(x, slope);
    skips.push_back(x);
    x = ops::maxpool2x2(x);
  }
  x = bottleneck(x, slope);

  std::mt19937_64 noise_rng(noise_seed);
  for (int l = 0; l < levels(); ++l) {
    const auto& d = decoder[static_cast<std::size_t>(l)];
    const Var& skip = skips[static_cast<std::size_t>(levels() - 1 - l)];
    x = ops::leaky_relu(d.up(ops::upsample_nearest2x(x)), slope);
    x = d.fuse(ops::concat_channels(x, skip));
    x = adain(x, level_styles[static_cast<std::size_t>(l)], d.affine, config_.adain_eps);
    const Tensor noise = Tensor::randn({x.dim(0), 1, x.dim(2), x.dim(3)}, noise_rng);
    x = ops::leaky_relu(noise_inject(x, noise, d.noise_scales), slope);
  }
  return ops::tanh(head(x));
}

std::vector<NamedParam> StyleUNet::parameters() {
  std::vector<NamedParam> out;
  mapping.collect(out, "mapping");
  for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].collect(out, "enc" + std::to_string(i));
  bottleneck.collect(out, "bottleneck");
  for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].collect(out, "dec" + std::to_string(i));
  head.collect(out, "head");
  return out;
}

StyleUNet StyleUNet::clone() const {
  StyleUNet c = *this;
  for (auto& p : c.parameters()) *p.var = p.var->deep_copy();
  return c;
}

// ---------------------------------------------------------------------------
// Segmenter

void AttentionGate::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  theta.collect(out, prefix + ".theta");
  phi.collect(out, prefix + ".phi");
  psi.collect(out, prefix + ".psi");
}

AttentionGate make_attention_gate(int skip_channels, int gate_channels, int inter_channels,
                                  std::mt19937_64& rng) {
  AttentionGate g;
  g.theta = make_conv(skip_channels, inter_channels, 1, 1, 0, rng, false);
  g.phi = make_conv(gate_channels, inter_channels, 1, 1, 0, rng);
  g.psi = make_conv(inter_channels, 1, 1, 1, 0, rng);
  return g;
}

Var attention_coefficients(const Var& skip, const Var& gate, const AttentionGate& params) {
  if (skip.value().rank() != 4 || gate.value().rank() != 4 || skip.dim(0) != gate.dim(0)) {
    throw ShapeError("attention_gate: skip " + shape_str(skip.shape()) + ", gate " +
                     shape_str(gate.shape()));
  }
  Var g = gate;
  if (gate.dim(2) * 2 == skip.dim(2) && gate.dim(3) * 2 == skip.dim(3)) {
    g = ops::upsample_nearest2x(gate);
  } else if (gate.dim(2) != skip.dim(2) || gate.dim(3) != skip.dim(3)) {
    throw ShapeError("attention_gate: gate " + shape_str(gate.shape()) +
                     " is neither at skip resolution nor half of it");
  }
  const Var joint = ops::relu(ops::add(params.theta(skip), params.phi(g)));
  return ops::sigmoid(params.psi(joint));
}

Var attention_gate(const Var& skip, const Var& gate, const AttentionGate& params) {
  return ops::spatial_gate(skip, attention_coefficients(skip, gate, params));
}

void AttentionDecoderLevel::collect(std::vector<NamedParam>& out, const std::string& prefix) {
  gate.collect(out, prefix + ".gate");
  up.collect(out, prefix + ".up");
  fuse.collect(out, prefix + ".fuse");
}

AttentionUNet::AttentionUNet(const AttentionUNetConfig& config, std::mt19937_64& rng)
    : config_(config) {
  if (config.depth < 1 || config.base_width < 1) {
    throw ConfigError("segmenter depth and base_width must be positive");
  }
  int in = 1;
  for (int l = 0; l < config.depth; ++l) {
    const int w = level_width(config.base_width, l);
    encoder.push_back(make_double_conv(in, w, rng));
    in = w;
  }
  bottleneck = make_double_conv(in, level_width(config.base_width, config.depth), rng);
  for (int l = 0; l < config.depth; ++l) {
    const int w = level_width(config.base_width, config.depth - 1 - l);
    AttentionDecoderLevel d;
    d.gate = make_attention_gate(w, 2 * w, std::max(1, w / 2), rng);
    d.up = make_conv(2 * w, w, 3, 1, 1, rng);
    d.fuse = make_double_conv(2 * w, w, rng);
    decoder.push_back(std::move(d));
  }
  head = make_conv(config.base_width, 1, 1, 1, 0, rng);
}

Var AttentionUNet::forward(const Var& image) const {
  require_divisible(image, config_.depth, "attention_unet_forward");
  const double slope = config_.slope;
  std::vector<Var> skips;
  Var x = image;
  for (const auto& block : encoder) {
    x = block(x, slope);
    skips.push_back(x);
    x = ops::maxpool2x2(x);
  }
  x = bottleneck(x, slope);
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const auto& d = decoder[l];
    const Var& skip = skips[skips.size() - 1 - l];
    const Var gated = attention_gate(skip, x, d.gate);
    const Var up = ops::leaky_relu(d.up(ops::upsample_nearest2x(x)), slope);
    x = d.fuse(ops::concat_channels(up, gated), slope);
  }
  return ops::sigmoid(head(x));
}

std::vector<NamedParam> AttentionUNet::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].collect(out, "enc" + std::to_string(i));
  bottleneck.collect(out, "bottleneck");
  for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].collect(out, "dec" + std::to_string(i));
  head.collect(out, "head");
  return out;
}

AttentionUNet AttentionUNet::clone() const {
  AttentionUNet c = *this;
  for (auto& p : c.parameters()) *p.var = p.var->deep_copy();
  return c;
}

// ---------------------------------------------------------------------------
// Discriminator

void LinearAttentionBlock::collect(std::vector<NamedParam>& out_params, const std::string& prefix) {
  query.collect(out_params, prefix + ".query");
  key.collect(out_params, prefix + ".key");
  value.collect(out_params, prefix + ".value");
  out.collect(out_params, prefix + ".out");
}

LinearAttentionBlock make_linear_attention(int channels, std::mt19937_64& rng) {
  const int d = std::max(1, channels / 8);
  LinearAttentionBlock b;
  b.query = make_conv(channels, d, 1, 1, 0, rng);
  b.key = make_conv(channels, d, 1, 1, 0, rng);
  b.value = make_conv(channels, channels, 1, 1, 0, rng);
  b.out = make_conv(channels, channels, 1, 1, 0, rng, true, 0.1);
  return b;
}

Var residual_linear_attention(const Var& features, const LinearAttentionBlock& params) {
  const Var q = ops::elu_plus_one(params.query(features));
  const Var k = ops::elu_plus_one(params.key(features));
  const Var v = params.value(features);
  return ops::add(features, params.out(ops::linear_attention(q, k, v)));
}

PatchDiscriminator::PatchDiscriminator(const PatchDiscriminatorConfig& config, std::mt19937_64& rng)
    : config_(config) {
  if (config.base_width < 1 || config.strided_layers < 1 || config.kernel < 2) {
    throw ConfigError("discriminator base_width, strided_layers and kernel must be positive");
  }
  const int k = config.kernel;
  const int pad = (k - 1) / 2;
  const int cap = config.base_width * config.max_width_multiplier;
  int in = 1;
  for (int i = 0; i <= config.strided_layers; ++i) {
    const int out = std::min(cap, config.base_width << i);
    const int stride = i < config.strided_layers ? 2 : 1;
    // Layers followed by instance norm do not need a bias.
    convs.push_back(make_conv(in, out, k, stride, pad, rng, i == 0));
    in = out;
  }
  attention = make_linear_attention(in, rng);
  head = make_conv(in, 1, k, 1, pad, rng);
}

ScoreMapSize PatchDiscriminator::output_size(int height, int width) const {
  int h = height, w = width;
  auto step = [&](const Conv2d& c) {
    h = ops::conv_output_size(h, c.kernel(), c.stride, c.pad);
    w = ops::conv_output_size(w, c.kernel(), c.stride, c.pad);
    if (h < 1 || w < 1) {
      throw ConfigError("discriminator input " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than one receptive field of the conv stack");
    }
  };
  for (const auto& c : convs) step(c);
  step(head);
  return {h, w};
}

Var PatchDiscriminator::forward(const Var& input) const {
  if (input.value().rank() != 4 || input.dim(1) != 1) {
    throw ShapeError("patch_discriminator_forward: expected (N, 1, H, W), got " + shape_str(input.shape()));
  }
  output_size(input.dim(2), input.dim(3));
  Var x = input;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    x = convs[i](x);
    if (i > 0) x = ops::instance_norm(x, config_.norm_eps);
    x = ops::leaky_relu(x, config_.slope);
  }
  x = residual_linear_attention(x, attention);
  return head(x);
}

std::vector<NamedParam> PatchDiscriminator::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(out, "conv" + std::to_string(i));
  attention.collect(out, "attention");
  head.collect(out, "head");
  return out;
}

PatchDiscriminator PatchDiscriminator::clone() const {
  PatchDiscriminator c = *this;
  for (auto& p : c.parameters()) *p.var = p.var->deep_copy();
  return c;
}

}  // namespace fancgan::nn
