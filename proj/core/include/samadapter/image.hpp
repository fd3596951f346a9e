#pragma once

#include <filesystem>
#include <vector>

#include "samadapter/tensor.hpp"

namespace samadapter {

/// H x W x C image with interleaved (HWC) storage and values in [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> values);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  double& at(int y, int x, int c) { return values_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return values_[index(y, x, c)]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  Mat channel(int c) const;
  void set_channel(int c, const Mat& plane);

  /// Throws ValidationError on non-finite values; with `require_unit_range`
  /// also on values outside [0, 1].
  void validate(bool require_unit_range = true) const;

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Ground-truth mask, every entry exactly 0 or 1.
struct BinaryMask {
  Mat values;

  BinaryMask() = default;
  /// Validates that `m` is strictly binary.
  explicit BinaryMask(Mat m);
  /// Pixels >= threshold become 1.
  static BinaryMask threshold(const Mat& m, double threshold = 0.5);

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
};

/// Squashed decoder output, probabilities in [0, 1].
struct SoftPrediction {
  Mat values;

  SoftPrediction() = default;
  explicit SoftPrediction(Mat m) : values(std::move(m)) {}

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
};

// -- PNG / image file I/O ----------------------------------------------------

/// Decodes any OpenCV-readable image as RGB in [0, 1]; grayscale inputs are
/// replicated to three channels.
ImageTensor read_image_rgb(const std::filesystem::path& path);

/// Reads an 8-bit grayscale map and scales it to [0, 1].
Mat read_gray(const std::filesystem::path& path);

/// Reads a mask and thresholds it at 128; warns when more than two gray
/// levels are present.
BinaryMask read_mask(const std::filesystem::path& path);

/// Writes a [0, 1] map as an 8-bit PNG with pixel = round(255 p).
void write_gray_png(const std::filesystem::path& path, const Mat& values);
void write_rgb_png(const std::filesystem::path& path, const ImageTensor& image);

// -- resampling ----------------------------------------------------------------

/// Half-pixel-centred bilinear resize, per channel.
ImageTensor resize_bilinear(const ImageTensor& image, int height, int width);
Mat resize_bilinear(const Mat& plane, int height, int width);
/// Nearest-neighbour resize with source index floor(dst * src / dst_size).
Mat resize_nearest(const Mat& plane, int height, int width);

/// Dense (out x in) interpolation matrix for half-pixel bilinear resampling
/// along one axis. Out = Ry * In * Rx^T.
Mat bilinear_matrix(int out_size, int in_size);

}  // namespace samadapter
