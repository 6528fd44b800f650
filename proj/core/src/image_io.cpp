#include "fancgan/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fancgan/error.hpp"

namespace fancgan::io {

Raster read_grayscale(const std::filesystem::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  } catch (const cv::Exception& e) {
    throw DataError("unreadable raster '" + path.string() + "': " + e.what());
  }
  if (m.empty()) throw DataError("unreadable raster '" + path.string() + "'");
  double scale = 1.0;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 1.0; break;
    default: throw DataError("unsupported pixel depth in '" + path.string() + "'");
  }
  cv::Mat d;
  m.convertTo(d, CV_64F, scale);
  Raster r(d.rows, d.cols);
  for (int y = 0; y < d.rows; ++y)
    for (int x = 0; x < d.cols; ++x) r.at(y, x) = std::clamp(d.at<double>(y, x), 0.0, 1.0);
  return r;
}

unsigned char to_u8(double v) {
  const double level = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * 255.0;
  // nearbyint honours the default round-to-nearest-even mode.
  return static_cast<unsigned char>(std::nearbyint(level));
}

namespace {
void write_u8(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write '" + path.string() + "': " + e.what());
  }
  if (!ok) throw IoError("cannot write '" + path.string() + "'");
}
}  // namespace

void write_image_u8(const std::filesystem::path& path, const Raster& image) {
  cv::Mat m(image.height(), image.width(), CV_8U);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) m.at<unsigned char>(y, x) = to_u8(image.at(y, x));
  write_u8(path, m);
}

void write_mask_u8(const std::filesystem::path& path, const Raster& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8U);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) m.at<unsigned char>(y, x) = mask.at(y, x) > 0.5 ? 255 : 0;
  write_u8(path, m);
}

bool is_supported_raster(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

}  // namespace fancgan::io
