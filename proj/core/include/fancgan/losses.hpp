#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fancgan/autograd.hpp"
#include "fancgan/extractor.hpp"

namespace fancgan::loss {

inline constexpr double kProbEps = 1e-7;

struct LossConfig {
  // Focal cross-entropy.
  double alpha_t = 0.25;
  double gamma = 2.0;
  // Tversky index weights; tversky_gamma > 1 or < 1 gives the focal variant
  // (1 - TI)^gamma, 1 is the plain loss.
  double tversky_alpha = 0.4;
  double tversky_beta = 0.6;
  double tversky_gamma = 1.0;
  double smooth = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  // Generator objective weights.
  double weight_perceptual = 10.0;
  double weight_l1 = 100.0;
  double weight_adversarial = 1.0;
  double weight_cycle = 10.0;
  // Optional perceptual term inside the image reconstruction cycle.
  double weight_cycle_perceptual = 0.0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// Mean over pixels of -alpha_t (1 - p_t)^gamma log(p_t), with pred clamped to
// [1e-7, 1 - 1e-7] and p_t = pred on foreground, 1 - pred on background.
Var focal_ce(const Var& pred, const Tensor& target, double alpha_t, double gamma);

// 1 - (TP + s) / (TP + alpha FP + beta FN + s) over soft counts, raised to
// focal_gamma.
Var tversky_loss(const Var& pred, const Tensor& target, double alpha, double beta, double smooth,
                 double focal_gamma = 1.0);

// lambda1 * focal_ce + lambda2 * tversky_loss.
Var segmentation_loss(const Var& pred, const Tensor& target, const LossConfig& config);

Var l1_loss(const Var& a, const Var& b);

// Mean of (score - label)^2.
Var lsgan_loss(const Var& scores, double label);

// Sum over `layers` of the mean absolute feature difference. An empty layer
// list means the extractor's own perceptual layers.
Var perceptual_loss(const Var& generated, const Var& real, const FeatureExtractor& extractor,
                    const std::vector<int>& layers = {});

struct CycleLosses {
  Var mask_cycle;
  Var image_cycle;
};

// mask_cycle: segmentation loss of the reconstructed mask probabilities.
// image_cycle: L1 of the reconstructed image, plus weight_cycle_perceptual
// times the perceptual term when an extractor is given.
CycleLosses cycle_losses(const Tensor& original_mask, const Var& reconstructed_mask_probs,
                         const Tensor& original_image, const Var& reconstructed_image,
                         const LossConfig& config, const FeatureExtractor* extractor = nullptr);

// Named scalars from one training step, in insertion order.
class LossReport {
 public:
  void set(const std::string& name, double value);
  double get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  bool all_finite() const;

  friend bool operator==(const LossReport&, const LossReport&) = default;

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

}  // namespace fancgan::loss
