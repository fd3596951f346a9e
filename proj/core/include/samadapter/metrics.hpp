#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "samadapter/image.hpp"
#include "samadapter/task.hpp"

namespace samadapter {

/// Mean absolute error.
double mae(const SoftPrediction& pred, const BinaryMask& gt);

/// Structure measure: alpha * S_object + (1 - alpha) * S_region, region
/// split at the (rounded, 1-based) GT centroid. All-zero GT gives
/// 1 - mean(pred), all-one GT gives mean(pred).
double s_measure(const SoftPrediction& pred, const BinaryMask& gt, double alpha = 0.5);

/// Enhanced-alignment measure averaged over the 256 thresholds k/255
/// (pred >= threshold is foreground). Normalised by the pixel count.
double e_measure_mean(const SoftPrediction& pred, const BinaryMask& gt);

/// Weighted F-beta with a 7x7 sigma-5 Gaussian dependency kernel and
/// distance-decayed background weights. Zero when GT has no foreground.
double weighted_fbeta(const SoftPrediction& pred, const BinaryMask& gt, double beta2 = 1.0);

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

/// Counts over pred >= threshold.
Confusion confusion(const SoftPrediction& pred, const BinaryMask& gt, double threshold = 0.5);

/// 100 * (1 - (TPR + TNR) / 2); a class absent from GT scores accuracy 1.
double ber(const Confusion& counts);
double ber(const SoftPrediction& pred, const BinaryMask& gt, double threshold = 0.5);

struct DiceIou {
  double dice = 0.0;
  double iou = 0.0;
};
/// Both are 1 when prediction and GT are empty.
DiceIou dice_iou(const SoftPrediction& pred, const BinaryMask& gt, double threshold = 0.5);

/// Euclidean distance transform to the nearest foreground pixel. `nearest`
/// holds its linear index; ties prefer the smaller column, then the smaller
/// row. Foreground pixels map to themselves at distance 0.
struct DistanceField {
  Mat distance;
  std::vector<std::int64_t> nearest;
};
DistanceField distance_to_foreground(const BinaryMask& gt);

struct ImageMetrics {
  std::string stem;
  double s_alpha = 0.0;
  double e_phi = 0.0;
  double f_beta_w = 0.0;
  double mae = 0.0;
  double ber = 0.0;
  double mdice = 0.0;
  double miou = 0.0;
  Confusion counts;
};

ImageMetrics evaluate_image(const std::string& stem, const SoftPrediction& pred, const BinaryMask& gt);

struct MetricReport {
  std::string task;
  double s_alpha = 0.0;
  double e_phi = 0.0;
  double f_beta_w = 0.0;
  double mae = 0.0;
  double ber = 0.0;
  double mdice = 0.0;
  double miou = 0.0;
  std::vector<ImageMetrics> per_image;

  std::string to_json(int indent = 2) const;
  std::string to_csv() const;
  /// S_alpha (camouflage), -BER (shadow), mDice (polyp); larger is better.
  double primary_metric(Task task) const;
};

/// Means of per-image values, except BER which uses summed confusion counts.
MetricReport aggregate_metrics(const std::string& task, std::vector<ImageMetrics> per_image);

struct EvalOptions {
  bool allow_missing = false;
  double threshold = 0.5;
};

/// Thrown when prediction and GT folders do not pair up one-to-one.
class UnmatchedFilesError : public std::runtime_error {
 public:
  UnmatchedFilesError(const std::string& what, std::vector<std::string> stems)
      : std::runtime_error(what), stems_(std::move(stems)) {}
  const std::vector<std::string>& stems() const noexcept { return stems_; }

 private:
  std::vector<std::string> stems_;
};

/// Pairs PNG predictions with GT masks by file stem. Predictions of another
/// size are bilinearly resized to the GT size.
MetricReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir, Task task,
                              const EvalOptions& options = {});

}  // namespace samadapter
