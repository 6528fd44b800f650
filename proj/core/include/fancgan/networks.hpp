#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fancgan/autograd.hpp"

namespace fancgan::nn {

// ---------------------------------------------------------------------------
// Layers

struct Conv2d {
  Var weight;  // (out, in, k, k)
  Var bias;    // (out) or undefined
  int stride = 1;
  int pad = 0;

  Var operator()(const Var& x) const;
  int in_channels() const { return weight.dim(1); }
  int out_channels() const { return weight.dim(0); }
  int kernel() const { return weight.dim(2); }
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

// He-normal weights, zero bias.
Conv2d make_conv(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng,
                 bool with_bias = true, double gain = 1.0);

struct Linear {
  Var weight;  // (out, in)
  Var bias;    // (out)

  Var operator()(const Var& x) const;
  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

Linear make_linear(int in, int out, std::mt19937_64& rng, double gain = 1.0);

// conv3x3 -> leaky -> conv3x3 -> leaky
struct DoubleConv {
  Conv2d first;
  Conv2d second;
  Var operator()(const Var& x, double slope) const;
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

DoubleConv make_double_conv(int in, int out, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Style path

struct MappingNetwork {
  std::vector<Linear> layers;
  double slope = 0.2;
  int latent_dim() const { return layers.front().in_features(); }
  int style_dim() const { return layers.back().out_features(); }
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

MappingNetwork make_mapping_network(int latent_dim, int style_dim, int layers, std::mt19937_64& rng);

// Affine layers with leaky activations between them; the last layer is left
// linear. z is (N, latent_dim); returns styles (N, style_dim).
Var mapping_network(const Var& z, const MappingNetwork& net);

// Standardizes each channel over its spatial extent, then applies the scale
// and shift produced by `affine` (style_dim -> 2C; first C are scales).
Var adain(const Var& features, const Var& style, const Linear& affine, double eps = 1e-5);

// features + scales[c] * noise, noise (N, 1, H, W).
Var noise_inject(const Var& features, const Tensor& noise, const Var& scales);

// Picks styles[assignment[level]] for every level in [0, levels).
std::vector<Var> style_blend(const std::vector<Var>& styles, const std::map<int, int>& assignment,
                             int levels);
std::map<int, int> broadcast_assignment(int levels);

// ---------------------------------------------------------------------------
// Generator

struct StyleUNetConfig {
  int depth = 4;
  int base_width = 64;
  int latent_dim = 128;
  int style_dim = 128;
  int mapping_layers = 4;
  double adain_eps = 1e-5;
  double slope = 0.2;
  friend bool operator==(const StyleUNetConfig&, const StyleUNetConfig&) = default;
};

struct StyleDecoderLevel {
  Conv2d up;      // after nearest upsampling: width(l+1) -> width(l)
  Conv2d fuse;    // concat(up, skip): 2 width(l) -> width(l)
  Linear affine;  // style -> (scale, shift)
  Var noise_scales;
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

// U-Net whose decoder levels are modulated by AdaIN styles and noise.
// Decoder level 0 is the coarsest.
class StyleUNet {
 public:
  StyleUNet() = default;
  StyleUNet(const StyleUNetConfig& config, std::mt19937_64& rng);

  const StyleUNetConfig& config() const { return config_; }
  int levels() const { return config_.depth; }

  // mask (N, 1, H, W); z (N, latent_dim). Output in [-1, 1].
  Var forward(const Var& mask, const Tensor& z, std::uint64_t noise_seed) const;
  // One latent per style; assignment maps decoder level -> latent index.
  Var forward(const Var& mask, const std::vector<Tensor>& latents,
              const std::map<int, int>& assignment, std::uint64_t noise_seed) const;
  Var forward_styles(const Var& mask, const std::vector<Var>& level_styles,
                     std::uint64_t noise_seed) const;

  std::vector<NamedParam> parameters();
  StyleUNet clone() const;

  MappingNetwork mapping;
  std::vector<DoubleConv> encoder;
  DoubleConv bottleneck;
  std::vector<StyleDecoderLevel> decoder;
  Conv2d head;

 private:
  StyleUNetConfig config_;
};

// ---------------------------------------------------------------------------
// Segmenter

struct AttentionGate {
  Conv2d theta;  // skip -> inter (1x1)
  Conv2d phi;    // gate -> inter (1x1)
  Conv2d psi;    // inter -> 1 (1x1)
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

AttentionGate make_attention_gate(int skip_channels, int gate_channels, int inter_channels,
                                  std::mt19937_64& rng);

// Sigmoid coefficients (N, 1, H, W) for the skip features.
Var attention_coefficients(const Var& skip, const Var& gate, const AttentionGate& params);
// skip * coefficients; a gate at half the skip resolution is upsampled first.
Var attention_gate(const Var& skip, const Var& gate, const AttentionGate& params);

struct AttentionUNetConfig {
  int depth = 4;
  int base_width = 64;
  double slope = 0.2;
  friend bool operator==(const AttentionUNetConfig&, const AttentionUNetConfig&) = default;
};

struct AttentionDecoderLevel {
  AttentionGate gate;
  Conv2d up;
  DoubleConv fuse;
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

class AttentionUNet {
 public:
  AttentionUNet() = default;
  AttentionUNet(const AttentionUNetConfig& config, std::mt19937_64& rng);

  const AttentionUNetConfig& config() const { return config_; }

  // image (N, 1, H, W) in [-1, 1] -> foreground probabilities in [0, 1].
  Var forward(const Var& image) const;

  std::vector<NamedParam> parameters();
  AttentionUNet clone() const;

  std::vector<DoubleConv> encoder;
  DoubleConv bottleneck;
  std::vector<AttentionDecoderLevel> decoder;  // coarsest first
  Conv2d head;

 private:
  AttentionUNetConfig config_;
};

// ---------------------------------------------------------------------------
// Discriminator

struct LinearAttentionBlock {
  Conv2d query;  // 1x1, C -> D
  Conv2d key;    // 1x1, C -> D
  Conv2d value;  // 1x1, C -> C
  Conv2d out;    // 1x1, C -> C
  void collect(std::vector<NamedParam>& out, const std::string& prefix);
};

LinearAttentionBlock make_linear_attention(int channels, std::mt19937_64& rng);

// features + out(linear_attention(phi(query), phi(key), value)).
Var residual_linear_attention(const Var& features, const LinearAttentionBlock& params);

struct PatchDiscriminatorConfig {
  int base_width = 64;
  int strided_layers = 3;  // stride-2 convs before the stride-1 conv
  int kernel = 4;
  int max_width_multiplier = 8;
  double slope = 0.2;
  double norm_eps = 1e-5;
  friend bool operator==(const PatchDiscriminatorConfig&, const PatchDiscriminatorConfig&) = default;
};

struct ScoreMapSize {
  int height, width;
};

class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(const PatchDiscriminatorConfig& config, std::mt19937_64& rng);

  const PatchDiscriminatorConfig& config() const { return config_; }

  // Raw (unbounded) realism scores (N, 1, h, w).
  Var forward(const Var& input) const;
  // Throws ConfigError when the input is too small for the conv stack.
  ScoreMapSize output_size(int height, int width) const;

  std::vector<NamedParam> parameters();
  PatchDiscriminator clone() const;

  std::vector<Conv2d> convs;  // all but the final projection
  LinearAttentionBlock attention;
  Conv2d head;

 private:
  PatchDiscriminatorConfig config_;
};

}  // namespace fancgan::nn
