#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fancgan/data.hpp"
#include "fancgan/extractor.hpp"
#include "fancgan/networks.hpp"
#include "fancgan/raster.hpp"

namespace fancgan::eval {

inline constexpr const char* kCovarianceConvention = "unbiased (N-1)";

struct FeatureStats {
  std::vector<double> mean;        // d
  std::vector<double> covariance;  // d x d, row-major
  std::size_t sample_count = 0;
  int dim() const { return static_cast<int>(mean.size()); }
};

// Row i is the spatially pooled feature vector of image i. Single-channel
// images are replicated and resampled to the extractor's input size.
Tensor extract_features(const std::vector<Raster>& images, const FeatureExtractor& extractor);

// Sample mean and unbiased covariance of an (N, d) matrix; N >= 2.
FeatureStats gaussian_stats(const Tensor& features);

// Frechet distance between two Gaussians. The trace of the matrix square
// root of S_r S_g is taken from the eigenvalues of sqrt(S_r) S_g sqrt(S_r),
// symmetrized, with negative eigenvalues clipped to zero.
double fid(const FeatureStats& real, const FeatureStats& generated);

struct SsimOptions {
  int window_size = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 2.0;
};

// Local SSIM over every window position fully inside both images. The window
// shrinks to the largest odd size that fits when the image is smaller.
Raster ssim_map(const Raster& a, const Raster& b, const SsimOptions& options = {});
double ssim(const Raster& a, const Raster& b, const SsimOptions& options = {});

struct MetricsReport {
  std::string label;
  double fid = 0.0;
  double ssim_mean = 0.0;
  std::vector<std::pair<std::string, double>> per_sample_ssim;
  std::string extractor;
  std::string covariance_convention = kCovarianceConvention;
};

// Produces the synthetic image for test sample `index`.
using ImageSource = std::function<Raster(const data::SamplePair& pair, std::size_t index)>;

MetricsReport evaluate_images(const std::vector<data::SamplePair>& test, const ImageSource& source,
                              const FeatureExtractor& extractor, std::string label);

// One generated image per test mask under a fixed seed.
MetricsReport evaluate_model(const std::vector<data::SamplePair>& test, const nn::StyleUNet& generator,
                             std::uint64_t seed, const FeatureExtractor& extractor,
                             std::string label = "F-ANcGAN");

// Table layout: row label, FID, SSIM.
void write_report_table(std::ostream& os, const std::vector<MetricsReport>& rows,
                        const std::string& title, const std::string& label_header = "Loss Configuration");
// Tab-separated with `#` header lines naming extractor and covariance convention.
void write_report_tsv(const std::filesystem::path& path, const std::vector<MetricsReport>& rows);
void write_per_sample_ssim(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace fancgan::eval
