#include "samadapter/image.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "samadapter/error.hpp"

namespace samadapter {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) {
    throw ValidationError("image must be non-empty with 1 or 3 channels");
  }
  values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> values)
    : ImageTensor(height, width, channels) {
  if (values.size() != values_.size()) {
    throw ValidationError("image value count does not match H*W*C");
  }
  values_ = std::move(values);
}

Mat ImageTensor::channel(int c) const {
  Mat plane(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) plane(y, x) = at(y, x, c);
  return plane;
}

void ImageTensor::set_channel(int c, const Mat& plane) {
  if (plane.rows() != height_ || plane.cols() != width_) {
    throw ValidationError("channel plane shape mismatch");
  }
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) at(y, x, c) = plane(y, x);
}

void ImageTensor::validate(bool require_unit_range) const {
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("image contains non-finite values");
    if (require_unit_range && (v < 0.0 || v > 1.0)) {
      throw ValidationError("image values must lie in [0, 1]");
    }
  }
}

BinaryMask::BinaryMask(Mat m) : values(std::move(m)) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (v != 0.0 && v != 1.0) throw ValidationError("mask is not binary");
  }
}

BinaryMask BinaryMask::threshold(const Mat& m, double threshold) {
  BinaryMask out;
  out.values = (m.array() >= threshold).cast<double>().matrix();
  return out;
}

namespace {

cv::Mat imread_checked(const std::filesystem::path& path, int flags) {
  if (!std::filesystem::exists(path)) throw IoError(path.string(), "file not found");
  cv::Mat img = cv::imread(path.string(), flags);
  if (img.empty()) throw IoError(path.string(), "cannot decode image");
  return img;
}

void imwrite_checked(const std::filesystem::path& path, const cv::Mat& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Fixed compression settings keep the byte stream reproducible.
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), img, params)) throw IoError(path.string(), "cannot write image");
}

double depth_scale(const cv::Mat& img) {
  switch (img.depth()) {
    case CV_8U: return 1.0 / 255.0;
    case CV_16U: return 1.0 / 65535.0;
    default: return 1.0;
  }
}

}  // namespace

ImageTensor read_image_rgb(const std::filesystem::path& path) {
  cv::Mat img = imread_checked(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  const double scale = depth_scale(img);
  cv::Mat rgb;
  cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f;
  rgb.convertTo(f, CV_64FC3, scale);
  ImageTensor out(f.rows, f.cols, 3);
  for (int y = 0; y < f.rows; ++y) {
    const auto* row = f.ptr<cv::Vec3d>(y);
    for (int x = 0; x < f.cols; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::clamp(row[x][c], 0.0, 1.0);
  }
  return out;
}

Mat read_gray(const std::filesystem::path& path) {
  cv::Mat img = imread_checked(path, cv::IMREAD_GRAYSCALE);
  Mat out(img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<unsigned char>(y);
    for (int x = 0; x < img.cols; ++x) out(y, x) = row[x] / 255.0;
  }
  return out;
}

BinaryMask read_mask(const std::filesystem::path& path) {
  cv::Mat img = imread_checked(path, cv::IMREAD_GRAYSCALE);
  std::set<unsigned char> levels;
  Mat out(img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<unsigned char>(y);
    for (int x = 0; x < img.cols; ++x) {
      if (levels.size() <= 2) levels.insert(row[x]);
      out(y, x) = row[x] >= 128 ? 1.0 : 0.0;
    }
  }
  if (levels.size() > 2) {
    spdlog::warn("mask {} has more than two gray levels; thresholded at 128", path.string());
  }
  return BinaryMask(std::move(out));
}

void write_gray_png(const std::filesystem::path& path, const Mat& values) {
  cv::Mat img(static_cast<int>(values.rows()), static_cast<int>(values.cols()), CV_8UC1);
  for (int y = 0; y < img.rows; ++y) {
    auto* row = img.ptr<unsigned char>(y);
    for (int x = 0; x < img.cols; ++x) {
      const double p = std::clamp(values(y, x), 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(255.0 * p));
    }
  }
  imwrite_checked(path, img);
}

void write_rgb_png(const std::filesystem::path& path, const ImageTensor& image) {
  cv::Mat img(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < img.rows; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src_c = image.channels() == 1 ? 0 : c;
        const double v = std::clamp(image.at(y, x, src_c), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(255.0 * v));
      }
    }
  }
  imwrite_checked(path, img);
}

Mat bilinear_matrix(int out_size, int in_size) {
  Mat r = Mat::Zero(out_size, in_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const int i1 = std::min(i0 + 1, in_size - 1);
    const double lambda = src - i0;
    r(o, i0) += 1.0 - lambda;
    r(o, i1) += lambda;
  }
  return r;
}

Mat resize_bilinear(const Mat& plane, int height, int width) {
  if (plane.rows() == height && plane.cols() == width) return plane;
  const Mat ry = bilinear_matrix(height, static_cast<int>(plane.rows()));
  const Mat rx = bilinear_matrix(width, static_cast<int>(plane.cols()));
  return ry * plane * rx.transpose();
}

ImageTensor resize_bilinear(const ImageTensor& image, int height, int width) {
  ImageTensor out(height, width, image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    out.set_channel(c, resize_bilinear(image.channel(c), height, width));
  }
  return out;
}

Mat resize_nearest(const Mat& plane, int height, int width) {
  Mat out(height, width);
  const auto in_h = plane.rows();
  const auto in_w = plane.cols();
  for (int y = 0; y < height; ++y) {
    const auto sy = static_cast<Eigen::Index>(y) * in_h / height;
    for (int x = 0; x < width; ++x) {
      const auto sx = static_cast<Eigen::Index>(x) * in_w / width;
      out(y, x) = plane(sy, sx);
    }
  }
  return out;
}

}  // namespace samadapter
