#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fancgan/autograd.hpp"

namespace fancgan::testing {

struct GradCheckResult {
  double relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // name of the input with the largest error
  double worst_analytic_norm = 0.0;
  double worst_numeric_norm = 0.0;
};

// Compares backward() against central differences of `loss` with respect to
// every element of every input (or a random subset of at most `max_per_input`
// elements per input). The error is ||g_a - g_n|| / max(||g_a|| + ||g_n||, floor)
// per input; the largest one is reported. The floor is `floor_fraction` times the
// norm of the full analytic gradient. Some inputs carry a gradient many orders
// below the rest (or exactly zero, like a bias right before a normalization);
// there the central difference is dominated by round-off in the loss, and the
// floor keeps that noise from reading as a large relative error.
inline GradCheckResult gradcheck(const std::function<Var()>& loss, const std::vector<NamedParam>& inputs,
                                 double step = 1e-6, std::size_t max_per_input = 0,
                                 std::uint64_t seed = 7, double floor_fraction = 1e-4) {
  for (const auto& p : inputs) p.var->zero_grad();
  loss().backward();
  std::vector<Tensor> analytic;
  double total2 = 0.0;
  for (const auto& p : inputs) {
    analytic.push_back(p.var->grad());
    for (double g : analytic.back().data()) total2 += g * g;
  }
  const double floor = std::max(floor_fraction * std::sqrt(total2), 1e-12);

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& value = inputs[i].var->mutable_value();
    std::vector<std::size_t> idx(value.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    if (max_per_input && idx.size() > max_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_input);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k : idx) {
      const double orig = value[k];
      value[k] = orig + step;
      const double up = loss().value().item();
      value[k] = orig - step;
      const double down = loss().value().item();
      value[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][k];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), floor);
    result.checked += idx.size();
    if (rel >= result.relative_error) {
      result.relative_error = rel;
      result.worst = inputs[i].name;
      result.worst_analytic_norm = std::sqrt(a2);
      result.worst_numeric_norm = std::sqrt(n2);
    }
  }
  for (const auto& p : inputs) p.var->zero_grad();
  return result;
}

}  // namespace fancgan::testing
