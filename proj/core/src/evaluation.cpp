#include "fancgan/evaluation.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fancgan/error.hpp"
#include "fancgan/generation.hpp"
#include "fancgan/ops.hpp"

namespace fancgan::eval {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const std::vector<double>& data, int d) {
  return Eigen::Map<const Matrix>(data.data(), d, d);
}

Matrix sqrt_psd(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable "valid" filtering.
Raster filter_valid(const Raster& r, const std::vector<double>& k) {
  const int ws = static_cast<int>(k.size());
  const int h = r.height(), w = r.width();
  const int oh = h - ws + 1, ow = w - ws + 1;
  Raster rows(h, ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < ws; ++i) acc += k[static_cast<std::size_t>(i)] * r.at(y, x + i);
      rows.at(y, x) = acc;
    }
  Raster out(oh, ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < ws; ++i) acc += k[static_cast<std::size_t>(i)] * rows.at(y + i, x);
      out.at(y, x) = acc;
    }
  return out;
}

Raster elementwise(const Raster& a, const Raster& b, double (*f)(double, double)) {
  Raster out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.pixels()[i] = f(a.pixels()[i], b.pixels()[i]);
  return out;
}

// Code points, so labels with Greek letters line up.
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad_right(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

}  // namespace

Tensor extract_features(const std::vector<Raster>& images, const FeatureExtractor& extractor) {
  if (images.empty()) throw ValidationError("extract_features: no images");
  const int side = extractor.input_size();
  std::vector<Raster> prepared;
  prepared.reserve(images.size());
  for (const Raster& img : images) {
    prepared.push_back(side > 0 ? resize(img, side, side) : img);
  }
  Tensor out;
  int d = 0;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const Var x = match_channels(constant(stack_rasters({&prepared[i]})), extractor);
    const auto feats = extractor.features(x);
    const Var pooled = ops::global_avg_pool(feats.at(static_cast<std::size_t>(extractor.pooled_layer())));
    if (i == 0) {
      d = pooled.dim(1);
      out = Tensor({static_cast<int>(prepared.size()), d});
    }
    std::copy(pooled.value().data().begin(), pooled.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  return out;
}

FeatureStats gaussian_stats(const Tensor& features) {
  if (features.rank() != 2) throw ShapeError("gaussian_stats: expected an (N, d) matrix");
  const int n = features.dim(0), d = features.dim(1);
  if (n < 2) throw ValidationError("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
  const Eigen::Map<const Matrix> x(features.data().data(), n, d);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Matrix centered = x.rowwise() - mu;
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  FeatureStats s;
  s.mean.assign(mu.data(), mu.data() + d);
  s.covariance.assign(cov.data(), cov.data() + static_cast<std::ptrdiff_t>(d) * d);
  s.sample_count = static_cast<std::size_t>(n);
  return s;
}

double fid(const FeatureStats& real, const FeatureStats& generated) {
  const int d = real.dim();
  if (generated.dim() != d) {
    throw ShapeError("fid: feature dimensions differ (" + std::to_string(d) + " vs " +
                     std::to_string(generated.dim()) + ")");
  }
  if (real.covariance.size() != static_cast<std::size_t>(d) * d ||
      generated.covariance.size() != static_cast<std::size_t>(d) * d) {
    throw ShapeError("fid: covariance size does not match the mean dimension");
  }
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = real.mean[static_cast<std::size_t>(i)] - generated.mean[static_cast<std::size_t>(i)];
    mean_term += diff * diff;
  }
  const Matrix sr = to_matrix(real.covariance, d);
  const Matrix sg = to_matrix(generated.covariance, d);
  const Matrix root_r = sqrt_psd(sr);
  const Matrix inner = root_r * sg * root_r;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = mean_term + sr.trace() + sg.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, value);
}

Raster ssim_map(const Raster& a, const Raster& b, const SsimOptions& options) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("ssim: image sizes differ");
  }
  if (a.size() == 0) throw ShapeError("ssim: empty images");
  if (options.window_size < 1 || options.window_size % 2 == 0) {
    throw ValidationError("ssim: window_size must be a positive odd integer");
  }
  int ws = std::min({options.window_size, a.height(), a.width()});
  if (ws % 2 == 0) --ws;
  const auto k = gaussian_kernel(ws, options.sigma);
  const double c1 = std::pow(options.k1 * options.data_range, 2);
  const double c2 = std::pow(options.k2 * options.data_range, 2);

  const Raster mu_a = filter_valid(a, k);
  const Raster mu_b = filter_valid(b, k);
  const Raster e_aa = filter_valid(elementwise(a, a, [](double x, double y) { return x * y; }), k);
  const Raster e_bb = filter_valid(elementwise(b, b, [](double x, double y) { return x * y; }), k);
  const Raster e_ab = filter_valid(elementwise(a, b, [](double x, double y) { return x * y; }), k);

  Raster out(mu_a.height(), mu_a.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ma = mu_a.pixels()[i], mb = mu_b.pixels()[i];
    const double va = e_aa.pixels()[i] - ma * ma;
    const double vb = e_bb.pixels()[i] - mb * mb;
    const double cov = e_ab.pixels()[i] - ma * mb;
    out.pixels()[i] = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return out;
}

double ssim(const Raster& a, const Raster& b, const SsimOptions& options) {
  const Raster m = ssim_map(a, b, options);
  double total = 0.0;
  for (double v : m.pixels()) total += v;
  return total / static_cast<double>(m.size());
}

MetricsReport evaluate_images(const std::vector<data::SamplePair>& test, const ImageSource& source,
                              const FeatureExtractor& extractor, std::string label) {
  if (test.empty()) throw ValidationError("evaluate: empty test set");
  std::vector<Raster> real, fake;
  real.reserve(test.size());
  fake.reserve(test.size());
  MetricsReport report;
  report.label = std::move(label);
  report.extractor = extractor.name();
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Raster generated = source(test[i], i);
    const double s = ssim(generated, test[i].image);
    report.per_sample_ssim.emplace_back(test[i].id, s);
    total += s;
    real.push_back(test[i].image);
    fake.push_back(std::move(generated));
  }
  report.ssim_mean = total / static_cast<double>(test.size());
  report.fid = fid(gaussian_stats(extract_features(real, extractor)),
                   gaussian_stats(extract_features(fake, extractor)));
  return report;
}

MetricsReport evaluate_model(const std::vector<data::SamplePair>& test, const nn::StyleUNet& generator,
                             std::uint64_t seed, const FeatureExtractor& extractor, std::string label) {
  return evaluate_images(
      test,
      [&](const data::SamplePair& pair, std::size_t index) {
        return gen::generate(pair.mask, generator, gen::derive_seed(seed, index));
      },
      extractor, std::move(label));
}

void write_report_table(std::ostream& os, const std::vector<MetricsReport>& rows, const std::string& title,
                        const std::string& label_header) {
  std::size_t width = display_width(label_header);
  for (const auto& r : rows) width = std::max(width, display_width(r.label));
  const std::string rule = "+" + std::string(width + 2, '-') + "+" + std::string(13, '-') + "+" +
                           std::string(13, '-') + "+";
  os << title << '\n';
  if (!rows.empty()) {
    os << "feature extractor: " << rows.front().extractor << "; covariance: "
       << rows.front().covariance_convention << '\n';
  }
  os << rule << '\n';
  os << "| " << pad_right(label_header, width) << " | " << pad_right("FID SCORE", 11) << " | "
     << pad_right("SSIM SCORE", 11) << " |\n";
  os << rule << '\n';
  for (const auto& r : rows) {
    std::ostringstream fid, ssim;
    fid << std::fixed << std::setprecision(4) << r.fid;
    ssim << std::fixed << std::setprecision(4) << r.ssim_mean;
    os << "| " << pad_right(r.label, width) << " | " << std::setw(11) << fid.str() << " | " << std::setw(11)
       << ssim.str() << " |\n";
  }
  os << rule << '\n';
}

void write_report_tsv(const std::filesystem::path& path, const std::vector<MetricsReport>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report '" + path.string() + "'");
  os << "# extractor\t" << (rows.empty() ? std::string(kFallbackExtractorName) : rows.front().extractor) << '\n';
  os << "# covariance\t" << kCovarianceConvention << '\n';
  os << "configuration\tfid\tssim_mean\tn\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.label << '\t' << r.fid << '\t' << r.ssim_mean << '\t' << r.per_sample_ssim.size() << '\n';
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

void write_per_sample_ssim(const std::filesystem::path& path, const MetricsReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << "id\tssim\n" << std::setprecision(17);
  for (const auto& [id, s] : report.per_sample_ssim) os << id << '\t' << s << '\n';
}

}  // namespace fancgan::eval
