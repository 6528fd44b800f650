#include "fancgan/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "fancgan/error.hpp"

namespace fancgan::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_rank(const Var& v, int rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(v.shape()));
  }
}

void accumulate_if(const Var& v, const Tensor& g) {
  if (v.requires_grad()) v.node()->accumulate(g);
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Tensor out_copy = out;
  return make_result(std::move(out), {x}, [x, out_copy, deriv](const Tensor& g) {
    Tensor dx(x.shape());
    const auto& in = x.value();
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] = g[i] * deriv(in[i], out_copy[i]);
    accumulate_if(x, dx);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Unfolds one sample (C, H, W) into a (C*k*k, Ho*Wo) row-major matrix.
void im2col(const double* img, int channels, int h, int w, int k, int stride, int pad, int ho,
            int wo, double* col) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < wo; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = img + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int channels, int h, int w, int k, int stride, int pad, int ho,
            int wo, double* img) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = img + (static_cast<std::size_t>(c) * h + iy) * w;
          const double* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
    accumulate_if(a, g);
    accumulate_if(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
    accumulate_if(a, g);
    if (b.requires_grad()) {
      Tensor ng = g;
      ng *= -1.0;
      b.node()->accumulate(ng);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
    if (a.requires_grad()) {
      Tensor da = g;
      for (std::size_t i = 0; i < da.size(); ++i) da[i] *= b.value()[i];
      a.node()->accumulate(da);
    }
    if (b.requires_grad()) {
      Tensor db = g;
      for (std::size_t i = 0; i < db.size(); ++i) db[i] *= a.value()[i];
      b.node()->accumulate(db);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return make_result(std::move(out), {a}, [a, s](const Tensor& g) {
    Tensor da = g;
    da *= s;
    accumulate_if(a, da);
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  return make_result(std::move(out), {a}, [a](const Tensor& g) { accumulate_if(a, g); });
}

Var sum(const Var& a) {
  return make_result(Tensor::scalar(a.value().sum()), {a}, [a](const Tensor& g) {
    accumulate_if(a, Tensor(a.shape(), g[0]));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return make_result(Tensor::scalar(a.value().mean()), {a}, [a, n](const Tensor& g) {
    accumulate_if(a, Tensor(a.shape(), g[0] / n));
  });
}

int conv_output_size(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int co = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != ci || weight.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != co)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/pad");
  const int ho = conv_output_size(h, k, stride, pad);
  const int wo = conv_output_size(w, k, stride, pad);
  if (ho < 1 || wo < 1) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " too small for kernel " +
                     std::to_string(k));
  }
  const int kk = ci * k * k;
  const int plane = ho * wo;

  Tensor out({n, co, ho, wo});
  Buffer col(static_cast<std::size_t>(kk) * plane);
  CMapMat wmat(weight.value().data().data(), co, kk);
  for (int s = 0; s < n; ++s) {
    const double* img = x.value().data().data() + static_cast<std::size_t>(s) * ci * h * w;
    im2col(img, ci, h, w, k, stride, pad, ho, wo, col.data());
    MapMat omat(out.data().data() + static_cast<std::size_t>(s) * co * plane, co, plane);
    omat.noalias() = wmat * CMapMat(col.data(), kk, plane);
    if (bias.defined()) {
      for (int c = 0; c < co; ++c) omat.row(c).array() += bias.value()[c];
    }
  }

  return make_result(std::move(out), {x, weight, bias},
                     [x, weight, bias, n, ci, h, w, co, k, stride, pad, ho, wo, kk,
                      plane](const Tensor& g) {
    Buffer colbuf(static_cast<std::size_t>(kk) * plane);
    CMapMat wmat(weight.value().data().data(), co, kk);
    Tensor dx, dw, db;
    if (x.requires_grad()) dx = Tensor(x.shape());
    if (weight.requires_grad()) dw = Tensor(weight.shape());
    if (bias.requires_grad()) db = Tensor(bias.shape());
    RowMat dcol;
    for (int s = 0; s < n; ++s) {
      CMapMat gmat(g.data().data() + static_cast<std::size_t>(s) * co * plane, co, plane);
      if (weight.requires_grad()) {
        const double* img = x.value().data().data() + static_cast<std::size_t>(s) * ci * h * w;
        im2col(img, ci, h, w, k, stride, pad, ho, wo, colbuf.data());
        MapMat(dw.data().data(), co, kk).noalias() +=
            gmat * CMapMat(colbuf.data(), kk, plane).transpose();
      }
      if (bias.requires_grad()) {
        for (int c = 0; c < co; ++c) db[c] += gmat.row(c).sum();
      }
      if (x.requires_grad()) {
        dcol.noalias() = wmat.transpose() * gmat;
        col2im(dcol.data(), ci, h, w, k, stride, pad, ho, wo,
               dx.data().data() + static_cast<std::size_t>(s) * ci * h * w);
      }
    }
    accumulate_if(x, dx);
    accumulate_if(weight, dw);
    accumulate_if(bias, db);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const int n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != outd)) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  }
  Tensor out({n, outd});
  CMapMat xm(x.value().data().data(), n, in);
  CMapMat wm(weight.value().data().data(), outd, in);
  MapMat om(out.data().data(), n, outd);
  om.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < outd; ++c) om(r, c) += bias.value()[c];
  }
  return make_result(std::move(out), {x, weight, bias}, [x, weight, bias, n, in, outd](const Tensor& g) {
    CMapMat gm(g.data().data(), n, outd);
    if (x.requires_grad()) {
      Tensor dx(x.shape());
      MapMat(dx.data().data(), n, in).noalias() =
          gm * CMapMat(weight.value().data().data(), outd, in);
      x.node()->accumulate(dx);
    }
    if (weight.requires_grad()) {
      Tensor dw(weight.shape());
      MapMat(dw.data().data(), outd, in).noalias() =
          gm.transpose() * CMapMat(x.value().data().data(), n, in);
      weight.node()->accumulate(dw);
    }
    if (bias.requires_grad()) {
      Tensor db(bias.shape());
      for (int c = 0; c < outd; ++c) db[c] = gm.col(c).sum();
      bias.node()->accumulate(db);
    }
  });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu_plus_one(const Var& x) {
  return unary(
      x, [](double v) { return v > 0 ? v + 1.0 : std::exp(v); },
      [](double v, double y) { return v > 0 ? 1.0 : y; });
}

Var instance_norm(const Var& x, double eps) {
  require_rank(x, 4, "instance_norm");
  const int nc = x.dim(0) * x.dim(1);
  const int plane = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(nc));
  const double* in = x.value().data().data();
  for (int i = 0; i < nc; ++i) {
    const double* src = in + static_cast<std::size_t>(i) * plane;
    double mu = 0.0;
    for (int p = 0; p < plane; ++p) mu += src[p];
    mu /= plane;
    double var = 0.0;
    for (int p = 0; p < plane; ++p) var += (src[p] - mu) * (src[p] - mu);
    var /= plane;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = inv;
    double* dst = out.data().data() + static_cast<std::size_t>(i) * plane;
    for (int p = 0; p < plane; ++p) dst[p] = (src[p] - mu) * inv;
  }
  Tensor y = out;
  return make_result(std::move(out), {x}, [x, y, inv_std, nc, plane](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor dx(x.shape());
    for (int i = 0; i < nc; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * plane;
      double sg = 0.0, sgy = 0.0;
      for (int p = 0; p < plane; ++p) {
        sg += g[off + p];
        sgy += g[off + p] * y[off + p];
      }
      const double inv = inv_std[static_cast<std::size_t>(i)];
      for (int p = 0; p < plane; ++p) {
        dx[off + p] = inv / plane * (plane * g[off + p] - sg - y[off + p] * sgy);
      }
    }
    x.node()->accumulate(dx);
  });
}

Var channel_affine(const Var& x, const Var& gamma, const Var& beta) {
  require_rank(x, 4, "channel_affine");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const Shape nc{n, c};
  if (gamma.shape() != nc || beta.shape() != nc) {
    throw ShapeError("channel_affine: gamma/beta must be " + shape_str(nc) + ", got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  Tensor out(x.shape());
  for (int i = 0; i < n * c; ++i) {
    const double gm = gamma.value()[i], bt = beta.value()[i];
    const std::size_t off = static_cast<std::size_t>(i) * plane;
    for (int p = 0; p < plane; ++p) out[off + p] = x.value()[off + p] * gm + bt;
  }
  return make_result(std::move(out), {x, gamma, beta}, [x, gamma, beta, n, c, plane](const Tensor& g) {
    Tensor dx, dg, db;
    if (x.requires_grad()) dx = Tensor(x.shape());
    if (gamma.requires_grad()) dg = Tensor(gamma.shape());
    if (beta.requires_grad()) db = Tensor(beta.shape());
    for (int i = 0; i < n * c; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * plane;
      const double gm = gamma.value()[i];
      double sgx = 0.0, sg = 0.0;
      for (int p = 0; p < plane; ++p) {
        sgx += g[off + p] * x.value()[off + p];
        sg += g[off + p];
        if (!dx.empty()) dx[off + p] = g[off + p] * gm;
      }
      if (!dg.empty()) dg[i] = sgx;
      if (!db.empty()) db[i] = sg;
    }
    accumulate_if(x, dx);
    accumulate_if(gamma, dg);
    accumulate_if(beta, db);
  });
}

Var add_channel_noise(const Var& x, const Var& scales, const Tensor& noise) {
  require_rank(x, 4, "add_channel_noise");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (noise.shape() != Shape{n, 1, h, w}) {
    throw ShapeError("noise_inject: noise " + shape_str(noise.shape()) + " does not match features " +
                     shape_str(x.shape()));
  }
  if (scales.shape() != Shape{c}) {
    throw ShapeError("noise_inject: scales " + shape_str(scales.shape()) + " for " +
                     std::to_string(c) + " channels");
  }
  const int plane = h * w;
  Tensor out = x.value();
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      const double k = scales.value()[ch];
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
      const std::size_t noff = static_cast<std::size_t>(s) * plane;
      for (int p = 0; p < plane; ++p) out[off + p] += k * noise[noff + p];
    }
  return make_result(std::move(out), {x, scales}, [x, scales, noise, n, c, plane](const Tensor& g) {
    accumulate_if(x, g);
    if (scales.requires_grad()) {
      Tensor ds(scales.shape());
      for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
          const std::size_t noff = static_cast<std::size_t>(s) * plane;
          double acc = 0.0;
          for (int p = 0; p < plane; ++p) acc += g[off + p] * noise[noff + p];
          ds[ch] += acc;
        }
      scales.node()->accumulate(ds);
    }
  });
}

Var spatial_gate(const Var& x, const Var& a) {
  require_rank(x, 4, "spatial_gate");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (a.shape() != Shape{n, 1, x.dim(2), x.dim(3)}) {
    throw ShapeError("spatial_gate: coefficients " + shape_str(a.shape()) + " vs features " +
                     shape_str(x.shape()));
  }
  Tensor out(x.shape());
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
      const std::size_t aoff = static_cast<std::size_t>(s) * plane;
      for (int p = 0; p < plane; ++p) out[off + p] = x.value()[off + p] * a.value()[aoff + p];
    }
  return make_result(std::move(out), {x, a}, [x, a, n, c, plane](const Tensor& g) {
    Tensor dx, da;
    if (x.requires_grad()) dx = Tensor(x.shape());
    if (a.requires_grad()) da = Tensor(a.shape());
    for (int s = 0; s < n; ++s)
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(s) * c + ch) * plane;
        const std::size_t aoff = static_cast<std::size_t>(s) * plane;
        for (int p = 0; p < plane; ++p) {
          if (!dx.empty()) dx[off + p] = g[off + p] * a.value()[aoff + p];
          if (!da.empty()) da[aoff + p] += g[off + p] * x.value()[off + p];
        }
      }
    accumulate_if(x, dx);
    accumulate_if(a, da);
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x, 4, "upsample");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) out.at(s, ch, y, xx) = x.value().at(s, ch, y / 2, xx / 2);
  return make_result(std::move(out), {x}, [x, n, c, h, w](const Tensor& g) {
    Tensor dx(x.shape());
    for (int s = 0; s < n; ++s)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx) dx.at(s, ch, y / 2, xx / 2) += g.at(s, ch, y, xx);
    accumulate_if(x, dx);
  });
}

Var maxpool2x2(const Var& x) {
  require_rank(x, 4, "maxpool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2x2: odd spatial size " + shape_str(x.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  const auto& in = x.value();
  std::size_t o = 0;
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx, ++o) {
          std::size_t best = ((static_cast<std::size_t>(s) * c + ch) * h + 2 * y) * w + 2 * xx;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(s) * c + ch) * h + 2 * y + dy) * w + 2 * xx + dx;
              if (in[idx] > in[best]) best = idx;
            }
          argmax[o] = best;
          out[o] = in[best];
        }
  return make_result(std::move(out), {x}, [x, argmax](const Tensor& g) {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += g[i];
    accumulate_if(x, dx);
  });
}

Var avgpool2x2(const Var& x) {
  require_rank(x, 4, "avgpool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("avgpool2x2: odd spatial size " + shape_str(x.shape()));
  Tensor out({n, c, h / 2, w / 2});
  for (int s = 0; s < n; ++s)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(s, ch, y / 2, xx / 2) += 0.25 * x.value().at(s, ch, y, xx);
  return make_result(std::move(out), {x}, [x, n, c, h, w](const Tensor& g) {
    Tensor dx(x.shape());
    for (int s = 0; s < n; ++s)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) dx.at(s, ch, y, xx) = 0.25 * g.at(s, ch, y / 2, xx / 2);
    accumulate_if(x, dx);
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out({n, c});
  for (int i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (int p = 0; p < plane; ++p) acc += x.value()[static_cast<std::size_t>(i) * plane + p];
    out[i] = acc / plane;
  }
  return make_result(std::move(out), {x}, [x, n, c, plane](const Tensor& g) {
    Tensor dx(x.shape());
    for (int i = 0; i < n * c; ++i)
      for (int p = 0; p < plane; ++p) dx[static_cast<std::size_t>(i) * plane + p] = g[i] / plane;
    accumulate_if(x, dx);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank(a, 4, "concat");
  require_rank(b, 4, "concat");
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w) {
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int s = 0; s < n; ++s) {
    std::copy_n(a.value().data().data() + s * ca * plane, ca * plane,
                out.data().data() + s * (ca + cb) * plane);
    std::copy_n(b.value().data().data() + s * cb * plane, cb * plane,
                out.data().data() + (s * (ca + cb) + ca) * plane);
  }
  return make_result(std::move(out), {a, b}, [a, b, n, ca, cb, plane](const Tensor& g) {
    if (a.requires_grad()) {
      Tensor da(a.shape());
      for (int s = 0; s < n; ++s)
        std::copy_n(g.data().data() + s * (ca + cb) * plane, ca * plane,
                    da.data().data() + s * ca * plane);
      a.node()->accumulate(da);
    }
    if (b.requires_grad()) {
      Tensor db(b.shape());
      for (int s = 0; s < n; ++s)
        std::copy_n(g.data().data() + (s * (ca + cb) + ca) * plane, cb * plane,
                    db.data().data() + s * cb * plane);
      b.node()->accumulate(db);
    }
  });
}

Var repeat_channels(const Var& x, int times) {
  require_rank(x, 4, "repeat_channels");
  if (times < 1) throw ShapeError("repeat_channels: times must be positive");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t block = static_cast<std::size_t>(c) * x.dim(2) * x.dim(3);
  Tensor out({n, c * times, x.dim(2), x.dim(3)});
  for (int s = 0; s < n; ++s)
    for (int t = 0; t < times; ++t)
      std::copy_n(x.value().data().data() + s * block, block,
                  out.data().data() + (static_cast<std::size_t>(s) * times + t) * block);
  return make_result(std::move(out), {x}, [x, n, times, block](const Tensor& g) {
    Tensor dx(x.shape());
    for (int s = 0; s < n; ++s)
      for (int t = 0; t < times; ++t)
        for (std::size_t i = 0; i < block; ++i)
          dx[s * block + i] += g[(static_cast<std::size_t>(s) * times + t) * block + i];
    accumulate_if(x, dx);
  });
}

Var slice_cols(const Var& x, int start, int len) {
  require_rank(x, 2, "slice_cols");
  const int n = x.dim(0), f = x.dim(1);
  if (start < 0 || len < 0 || start + len > f) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + shape_str(x.shape()));
  }
  Tensor out({n, len});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < len; ++c) out[r * len + c] = x.value()[r * f + start + c];
  return make_result(std::move(out), {x}, [x, n, f, start, len](const Tensor& g) {
    Tensor dx(x.shape());
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < len; ++c) dx[r * f + start + c] = g[r * len + c];
    accumulate_if(x, dx);
  });
}

Var linear_attention(const Var& q, const Var& k, const Var& v, double eps) {
  require_rank(q, 4, "linear_attention q");
  require_rank(k, 4, "linear_attention k");
  require_rank(v, 4, "linear_attention v");
  if (q.shape() != k.shape() || v.dim(0) != q.dim(0) || v.dim(2) != q.dim(2) ||
      v.dim(3) != q.dim(3)) {
    throw ShapeError("linear_attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                     ", v " + shape_str(v.shape()));
  }
  const int n = q.dim(0), d = q.dim(1), c = v.dim(1), plane = q.dim(2) * q.dim(3);
  Tensor out(v.shape());
  std::vector<double> dens(static_cast<std::size_t>(n) * plane);
  for (int s = 0; s < n; ++s) {
    CMapMat qm(q.value().data().data() + static_cast<std::size_t>(s) * d * plane, d, plane);
    CMapMat km(k.value().data().data() + static_cast<std::size_t>(s) * d * plane, d, plane);
    CMapMat vm(v.value().data().data() + static_cast<std::size_t>(s) * c * plane, c, plane);
    const RowMat kv = km * vm.transpose();                   // (d, c)
    const Eigen::VectorXd ksum = km.rowwise().sum();         // (d)
    const Eigen::RowVectorXd den = (ksum.transpose() * qm).array() + eps;  // (plane)
    MapMat om(out.data().data() + static_cast<std::size_t>(s) * c * plane, c, plane);
    om.noalias() = kv.transpose() * qm;
    for (int p = 0; p < plane; ++p) {
      om.col(p) /= den(p);
      dens[static_cast<std::size_t>(s) * plane + p] = den(p);
    }
  }
  Tensor y = out;
  return make_result(std::move(out), {q, k, v}, [q, k, v, y, dens, n, d, c, plane](const Tensor& g) {
    Tensor dq, dk, dv;
    if (q.requires_grad()) dq = Tensor(q.shape());
    if (k.requires_grad()) dk = Tensor(k.shape());
    if (v.requires_grad()) dv = Tensor(v.shape());
    for (int s = 0; s < n; ++s) {
      CMapMat qm(q.value().data().data() + static_cast<std::size_t>(s) * d * plane, d, plane);
      CMapMat km(k.value().data().data() + static_cast<std::size_t>(s) * d * plane, d, plane);
      CMapMat vm(v.value().data().data() + static_cast<std::size_t>(s) * c * plane, c, plane);
      CMapMat gm(g.data().data() + static_cast<std::size_t>(s) * c * plane, c, plane);
      CMapMat ym(y.data().data() + static_cast<std::size_t>(s) * c * plane, c, plane);
      const RowMat kv = km * vm.transpose();
      const Eigen::VectorXd ksum = km.rowwise().sum();
      RowMat dnum(c, plane);
      Eigen::RowVectorXd dden(plane);
      for (int p = 0; p < plane; ++p) {
        const double den = dens[static_cast<std::size_t>(s) * plane + p];
        dnum.col(p) = gm.col(p) / den;
        // out = num / den, so d out / d den = -out / den.
        dden(p) = -(gm.col(p).array() * ym.col(p).array()).sum() / den;
      }
      const RowMat dkv = qm * dnum.transpose();                // (d, c)
      const Eigen::VectorXd dksum = qm * dden.transpose();     // (d)
      if (!dq.empty()) {
        MapMat(dq.data().data() + static_cast<std::size_t>(s) * d * plane, d, plane).noalias() =
            kv * dnum + ksum * dden;
      }
      if (!dk.empty()) {
        MapMat dkm(dk.data().data() + static_cast<std::size_t>(s) * d * plane, d, plane);
        dkm.noalias() = dkv * vm;
        dkm.colwise() += dksum;
      }
      if (!dv.empty()) {
        MapMat(dv.data().data() + static_cast<std::size_t>(s) * c * plane, c, plane).noalias() =
            dkv.transpose() * km;
      }
    }
    accumulate_if(q, dq);
    accumulate_if(k, dk);
    accumulate_if(v, dv);
  });
}

}  // namespace fancgan::ops
