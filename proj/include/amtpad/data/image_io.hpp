#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "amtpad/image.hpp"

namespace amtpad::data {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8- or 16-bit image as grayscale intensities in [0,1]. Colour
/// inputs are converted to luminance. A non-zero `size` resizes to size×size.
inline GrayImage read_gray(const std::filesystem::path& path, int size = 0) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  if (m.empty()) throw ImageIoError("cannot read image " + path.string());
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
  else if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2GRAY);
  double scale = 1.0;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw ImageIoError("unsupported pixel depth in " + path.string());
  }
  cv::Mat f;
  m.convertTo(f, CV_64F, scale);
  if (size > 0 && (f.rows != size || f.cols != size))
    cv::resize(f, f, cv::Size(size, size), 0, 0, f.rows > size ? cv::INTER_AREA : cv::INTER_LINEAR);
  GrayImage img(f.rows, f.cols);
  for (int r = 0; r < f.rows; ++r) std::copy_n(f.ptr<double>(r), f.cols, &img.at(r, 0));
  return img;
}

/// Writes intensities in [0,1] (clamped) as an 8-bit grayscale PNG.
inline void write_gray(const std::filesystem::path& path, const GrayImage& img) {
  cv::Mat m(img.height, img.width, CV_8U);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      m.at<unsigned char>(r, c) = static_cast<unsigned char>(std::lround(std::clamp(img.at(r, c), 0.0, 1.0) * 255.0));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw ImageIoError("cannot write image " + path.string());
}

/// Rounds intensities to the 8-bit grid, as a write/read cycle would.
inline GrayImage quantize8(GrayImage img) {
  for (auto& v : img.pixels) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  return img;
}

}  // namespace amtpad::data
