#include "fancgan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fancgan/error.hpp"
#include "fancgan/ops.hpp"

namespace fancgan::loss {

void LossConfig::validate() const {
  auto in_range = [](double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi)) {
      throw ConfigError(std::string("losses.") + name + " = " + std::to_string(v) + " must lie in [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("losses.") + name + " = " + std::to_string(v) +
                        " must be a finite value >= 0");
    }
  };
  in_range(alpha_t, 0.0, 1.0, "alpha_t");
  non_negative(gamma, "gamma");
  non_negative(tversky_alpha, "tversky_alpha");
  non_negative(tversky_beta, "tversky_beta");
  if (!(tversky_gamma > 0.0)) throw ConfigError("losses.tversky_gamma must be > 0");
  if (!(tversky_alpha + tversky_beta > 0.0)) {
    throw ConfigError("losses.tversky_alpha + losses.tversky_beta must be > 0");
  }
  if (!(smooth > 0.0)) throw ConfigError("losses.smooth must be > 0");
  non_negative(lambda1, "lambda1");
  non_negative(lambda2, "lambda2");
  non_negative(weight_perceptual, "weight_perceptual");
  non_negative(weight_l1, "weight_l1");
  non_negative(weight_adversarial, "weight_adversarial");
  non_negative(weight_cycle, "weight_cycle");
  non_negative(weight_cycle_perceptual, "weight_cycle_perceptual");
}

Var focal_ce(const Var& pred, const Tensor& target, double alpha_t, double gamma) {
  require_same_shape(pred.value(), target, "focal_ce");
  const std::size_t n = target.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.value()[i], kProbEps, 1.0 - kProbEps);
    const double pt = target[i] > 0.5 ? p : 1.0 - p;
    total += -alpha_t * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return make_result(Tensor::scalar(total / static_cast<double>(n)), {pred},
                     [pred, target, alpha_t, gamma, n](const Tensor& g) {
    Tensor dp(pred.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = pred.value()[i];
      if (raw < kProbEps || raw > 1.0 - kProbEps) continue;
      const bool fg = target[i] > 0.5;
      const double pt = fg ? raw : 1.0 - raw;
      const double q = 1.0 - pt;
      // d/dpt of -a q^g log(pt) = a (g q^(g-1) log(pt) - q^g / pt)
      double d = -std::pow(q, gamma) / pt;
      if (gamma != 0.0) d += gamma * std::pow(q, gamma - 1.0) * std::log(pt);
      d *= alpha_t;
      dp[i] = g[0] * (fg ? d : -d) / static_cast<double>(n);
    }
    pred.node()->accumulate(dp);
  });
}

Var tversky_loss(const Var& pred, const Tensor& target, double alpha, double beta, double smooth,
                 double focal_gamma) {
  require_same_shape(pred.value(), target, "tversky_loss");
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = pred.value()[i], t = target[i];
    tp += p * t;
    fp += p * (1.0 - t);
    fn += (1.0 - p) * t;
  }
  const double num = tp + smooth;
  const double den = tp + alpha * fp + beta * fn + smooth;
  const double ti = num / den;
  const double base = std::max(0.0, 1.0 - ti);
  const double value = focal_gamma == 1.0 ? base : std::pow(base, focal_gamma);
  return make_result(Tensor::scalar(value), {pred},
                     [pred, target, alpha, beta, num, den, base, focal_gamma](const Tensor& g) {
    double dl_dti = -1.0;
    if (focal_gamma != 1.0) {
      dl_dti = base > 0.0 ? -focal_gamma * std::pow(base, focal_gamma - 1.0) : 0.0;
    }
    Tensor dp(pred.shape());
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double t = target[i];
      const double dnum = t;
      const double dden = t + alpha * (1.0 - t) - beta * t;
      const double dti = (dnum * den - num * dden) / (den * den);
      dp[i] = g[0] * dl_dti * dti;
    }
    pred.node()->accumulate(dp);
  });
}

Var segmentation_loss(const Var& pred, const Tensor& target, const LossConfig& config) {
  const Var fce = focal_ce(pred, target, config.alpha_t, config.gamma);
  const Var tv = tversky_loss(pred, target, config.tversky_alpha, config.tversky_beta, config.smooth,
                              config.tversky_gamma);
  return ops::add(ops::scale(fce, config.lambda1), ops::scale(tv, config.lambda2));
}

Var l1_loss(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "l1_loss");
  const std::size_t n = a.value().size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor::scalar(total / static_cast<double>(n)), {a, b}, [a, b, n](const Tensor& g) {
    Tensor da(a.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = a.value()[i] - b.value()[i];
      da[i] = g[0] * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / static_cast<double>(n);
    }
    if (a.requires_grad()) a.node()->accumulate(da);
    if (b.requires_grad()) {
      da *= -1.0;
      b.node()->accumulate(da);
    }
  });
}

Var lsgan_loss(const Var& scores, double label) {
  const std::size_t n = scores.value().size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = scores.value()[i] - label;
    total += d * d;
  }
  return make_result(Tensor::scalar(total / static_cast<double>(n)), {scores},
                     [scores, label, n](const Tensor& g) {
    Tensor ds(scores.shape());
    for (std::size_t i = 0; i < n; ++i) {
      ds[i] = g[0] * 2.0 * (scores.value()[i] - label) / static_cast<double>(n);
    }
    scores.node()->accumulate(ds);
  });
}

Var perceptual_loss(const Var& generated, const Var& real, const FeatureExtractor& extractor,
                    const std::vector<int>& layers) {
  require_same_shape(generated.value(), real.value(), "perceptual_loss");
  const std::vector<int> chosen = layers.empty() ? extractor.perceptual_layers() : layers;
  const auto fa = extractor.features(match_channels(generated, extractor));
  const auto fb = extractor.features(match_channels(real, extractor));
  Var total = constant(Tensor::scalar(0.0));
  for (int l : chosen) {
    if (l < 0 || l >= static_cast<int>(fa.size())) {
      throw ValidationError("perceptual_loss: layer " + std::to_string(l) + " out of range");
    }
    total = ops::add(total, l1_loss(fa[static_cast<std::size_t>(l)], fb[static_cast<std::size_t>(l)]));
  }
  return total;
}

CycleLosses cycle_losses(const Tensor& original_mask, const Var& reconstructed_mask_probs,
                         const Tensor& original_image, const Var& reconstructed_image,
                         const LossConfig& config, const FeatureExtractor* extractor) {
  CycleLosses out;
  out.mask_cycle = segmentation_loss(reconstructed_mask_probs, original_mask, config);
  const Var target = constant(original_image);
  out.image_cycle = l1_loss(reconstructed_image, target);
  if (extractor && config.weight_cycle_perceptual > 0.0) {
    out.image_cycle = ops::add(
        out.image_cycle,
        ops::scale(perceptual_loss(reconstructed_image, target, *extractor), config.weight_cycle_perceptual));
  }
  return out;
}

void LossReport::set(const std::string& name, double value) {
  for (auto& [k, v] : entries_) {
    if (k == name) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(name, value);
}

double LossReport::get(const std::string& name) const {
  for (const auto& [k, v] : entries_) {
    if (k == name) return v;
  }
  throw ValidationError("loss report has no entry '" + name + "'");
}

bool LossReport::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

bool LossReport::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const auto& e) { return std::isfinite(e.second); });
}

}  // namespace fancgan::loss
