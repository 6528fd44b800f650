#pragma once

#include <cmath>
#include <vector>

#include "fancgan/raster.hpp"

namespace fancgan::testing {

// Straight from the definition: an 11x11 Gaussian window (sigma 1.5) at every
// offset fully inside the image, weighted central moments, data range 2.
inline double ssim_direct(const Raster& a, const Raster& b) {
  const int ws = 11;
  const double sigma = 1.5, c1 = std::pow(0.01 * 2.0, 2), c2 = std::pow(0.03 * 2.0, 2);
  std::vector<double> w(ws * ws);
  double total = 0.0;
  for (int u = 0; u < ws; ++u)
    for (int v = 0; v < ws; ++v) {
      const double d2 = (u - 5.0) * (u - 5.0) + (v - 5.0) * (v - 5.0);
      w[u * ws + v] = std::exp(-d2 / (2 * sigma * sigma));
      total += w[u * ws + v];
    }
  for (double& x : w) x /= total;
  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + ws <= a.height(); ++y)
    for (int x = 0; x + ws <= a.width(); ++x) {
      double ma = 0, mb = 0;
      for (int u = 0; u < ws; ++u)
        for (int v = 0; v < ws; ++v) {
          ma += w[u * ws + v] * a.at(y + u, x + v);
          mb += w[u * ws + v] * b.at(y + u, x + v);
        }
      double va = 0, vb = 0, cov = 0;
      for (int u = 0; u < ws; ++u)
        for (int v = 0; v < ws; ++v) {
          const double da = a.at(y + u, x + v) - ma, db = b.at(y + u, x + v) - mb;
          va += w[u * ws + v] * da * da;
          vb += w[u * ws + v] * db * db;
          cov += w[u * ws + v] * da * db;
        }
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace fancgan::testing
