#include "samadapter/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "samadapter/error.hpp"

namespace samadapter {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_shapes(const SoftPrediction& pred, const BinaryMask& gt) {
  if (pred.values.rows() != gt.values.rows() || pred.values.cols() != gt.values.cols()) {
    throw ValidationError("prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                          " does not match mask " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  if (pred.values.size() == 0) throw ValidationError("empty prediction");
}

// -- structure measure ---------------------------------------------------------------

double object_similarity(const Eigen::ArrayXd& values) {
  const auto n = static_cast<double>(values.size());
  const double mean = values.mean();
  const double sigma = values.size() > 1 ? std::sqrt((values - mean).square().sum() / (n - 1.0)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sigma + kEps);
}

Eigen::ArrayXd select(const Mat& values, const Mat& mask, double want) {
  Eigen::ArrayXd out((mask.array() == want).count());
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (mask.data()[i] == want) out(j++) = values.data()[i];
  return out;
}

double object_score(const Mat& pred, const Mat& gt) {
  const double u = gt.mean();
  const Eigen::ArrayXd fg = select(pred, gt, 1.0);
  const Eigen::ArrayXd bg = 1.0 - select(pred, gt, 0.0);
  return u * object_similarity(fg) + (1.0 - u) * object_similarity(bg);
}

template <typename Block>
double block_ssim(const Block& p, const Block& g) {
  const auto n = static_cast<double>(p.size());
  const double x = p.mean();
  const double y = g.mean();
  const double denom = std::max(n - 1.0, 1.0);
  const double sx = (p.array() - x).square().sum() / denom;
  const double sy = (g.array() - y).square().sum() / denom;
  const double sxy = ((p.array() - x) * (g.array() - y)).sum() / denom;
  const double alpha = 4.0 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx + sy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double region_score(const Mat& pred, const Mat& gt) {
  const auto h = gt.rows();
  const auto w = gt.cols();
  double sum_r = 0.0;
  double sum_c = 0.0;
  double area = 0.0;
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      if (gt(r, c) == 1.0) {
        sum_r += static_cast<double>(r);
        sum_c += static_cast<double>(c);
        area += 1.0;
      }
  // 1-based split point, centroid rounded half-to-even.
  const auto cx = static_cast<Eigen::Index>(std::nearbyint(sum_c / area)) + 1;
  const auto cy = static_cast<Eigen::Index>(std::nearbyint(sum_r / area)) + 1;
  const double total = static_cast<double>(h * w);
  const double w1 = static_cast<double>(cx * cy) / total;
  const double w2 = static_cast<double>(cy * (w - cx)) / total;
  const double w3 = static_cast<double>((h - cy) * cx) / total;
  const double w4 = 1.0 - w1 - w2 - w3;

  const std::array<std::array<Eigen::Index, 4>, 4> blocks{{
      {0, 0, cy, cx},
      {0, cx, cy, w - cx},
      {cy, 0, h - cy, cx},
      {cy, cx, h - cy, w - cx},
  }};
  const std::array<double, 4> weights{w1, w2, w3, w4};
  double score = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto [r0, c0, rows, cols] = blocks[i];
    if (rows <= 0 || cols <= 0) continue;
    score += weights[i] * block_ssim(pred.block(r0, c0, rows, cols), gt.block(r0, c0, rows, cols));
  }
  return score;
}

// -- distance transform --------------------------------------------------------------

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double mae(const SoftPrediction& pred, const BinaryMask& gt) {
  check_shapes(pred, gt);
  return (pred.values - gt.values).cwiseAbs().mean();
}

double s_measure(const SoftPrediction& pred, const BinaryMask& gt, double alpha) {
  check_shapes(pred, gt);
  const double y = gt.values.mean();
  if (y == 0.0) return 1.0 - pred.values.mean();
  if (y == 1.0) return pred.values.mean();
  const double score = alpha * object_score(pred.values, gt.values) + (1.0 - alpha) * region_score(pred.values, gt.values);
  return std::max(0.0, score);
}

double e_measure_mean(const SoftPrediction& pred, const BinaryMask& gt) {
  check_shapes(pred, gt);
  constexpr int kLevels = 256;
  const auto numel = static_cast<double>(pred.values.size());
  const double gt_fg = gt.values.sum();

  // Highest threshold index k with pred >= k/255, histogrammed per GT class.
  std::array<double, kLevels> hist_fg{};
  std::array<double, kLevels> hist_bg{};
  for (Eigen::Index i = 0; i < pred.values.size(); ++i) {
    const double p = pred.values.data()[i];
    int k = static_cast<int>(std::floor(p * 255.0));
    k = std::clamp(k, -1, kLevels - 1);
    while (k + 1 < kLevels && p >= (k + 1) / 255.0) ++k;
    while (k >= 0 && p < k / 255.0) --k;
    if (k < 0) continue;
    (gt.values.data()[i] == 1.0 ? hist_fg : hist_bg)[static_cast<std::size_t>(k)] += 1.0;
  }

  double total = 0.0;
  double fg_fg = 0.0;
  double fg_bg = 0.0;
  for (int k = kLevels - 1; k >= 0; --k) {
    fg_fg += hist_fg[static_cast<std::size_t>(k)];
    fg_bg += hist_bg[static_cast<std::size_t>(k)];
    const double pred_fg = fg_fg + fg_bg;
    double enhanced_sum = 0.0;
    if (gt_fg == 0.0) {
      enhanced_sum = numel - pred_fg;
    } else if (gt_fg == numel) {
      enhanced_sum = pred_fg;
    } else {
      const double mean_pred = pred_fg / numel;
      const double mean_gt = gt_fg / numel;
      const std::array<double, 4> counts{fg_fg, fg_bg, gt_fg - fg_fg, numel - gt_fg - fg_bg};
      const std::array<double, 4> pv{1.0 - mean_pred, 1.0 - mean_pred, -mean_pred, -mean_pred};
      const std::array<double, 4> gv{1.0 - mean_gt, -mean_gt, 1.0 - mean_gt, -mean_gt};
      for (std::size_t j = 0; j < 4; ++j) {
        const double align = 2.0 * pv[j] * gv[j] / (pv[j] * pv[j] + gv[j] * gv[j] + kEps);
        enhanced_sum += (align + 1.0) * (align + 1.0) / 4.0 * counts[j];
      }
    }
    total += enhanced_sum / numel;
  }
  return total / kLevels;
}

DistanceField distance_to_foreground(const BinaryMask& gt) {
  const auto h = static_cast<int>(gt.values.rows());
  const auto w = static_cast<int>(gt.values.cols());
  // Column pass: nearest foreground row per pixel, ties to the upper row.
  Mat col_d2(h, w);
  std::vector<int> col_row(static_cast<std::size_t>(h) * w, -1);
  for (int x = 0; x < w; ++x) {
    std::vector<int> above(h, -1);
    std::vector<int> below(h, -1);
    int last = -1;
    for (int y = 0; y < h; ++y) {
      if (gt.values(y, x) == 1.0) last = y;
      above[y] = last;
    }
    last = -1;
    for (int y = h - 1; y >= 0; --y) {
      if (gt.values(y, x) == 1.0) last = y;
      below[y] = last;
    }
    for (int y = 0; y < h; ++y) {
      int best = -1;
      if (above[y] >= 0) best = above[y];
      if (below[y] >= 0 && (best < 0 || below[y] - y < y - best)) best = below[y];
      col_row[static_cast<std::size_t>(y) * w + x] = best;
      col_d2(y, x) = best < 0 ? kInf : static_cast<double>((y - best) * (y - best));
    }
  }

  // Row pass: lower envelope of parabolas over finite columns; at a tie point
  // the envelope keeps the earlier (smaller) column.
  DistanceField out;
  out.distance = Mat(h, w);
  out.nearest.assign(static_cast<std::size_t>(h) * w, -1);
  std::vector<int> v(w);
  std::vector<double> z(w + 1);
  for (int y = 0; y < h; ++y) {
    int k = -1;
    for (int q = 0; q < w; ++q) {
      const double fq = col_d2(y, q);
      if (fq == kInf) continue;
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        continue;
      }
      double s = 0.0;
      while (true) {
        const int p = v[k];
        s = ((fq + static_cast<double>(q) * q) - (col_d2(y, p) + static_cast<double>(p) * p)) / (2.0 * (q - p));
        if (s > z[k]) break;
        --k;  // z[0] is -inf, so k never drops below 0
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
    }
    if (k < 0) {
      for (int x = 0; x < w; ++x) out.distance(y, x) = kInf;
      continue;
    }
    int j = 0;
    for (int x = 0; x < w; ++x) {
      while (z[j + 1] < x) ++j;
      const int col = v[j];
      const double d2 = static_cast<double>((x - col) * (x - col)) + col_d2(y, col);
      out.distance(y, x) = std::sqrt(d2);
      out.nearest[static_cast<std::size_t>(y) * w + x] =
          static_cast<std::int64_t>(col_row[static_cast<std::size_t>(y) * w + col]) * w + col;
    }
  }
  return out;
}

namespace {

std::array<double, 7> gaussian_taps() {
  std::array<double, 7> taps{};
  double sum = 0.0;
  for (int i = 0; i < 7; ++i) {
    const double x = i - 3;
    taps[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * 25.0));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Zero-padded separable 7x7 filter.
Mat gaussian_filter(const Mat& in) {
  static const auto taps = gaussian_taps();
  const auto h = in.rows();
  const auto w = in.cols();
  Mat rows_done = Mat::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -3; t <= 3; ++t) {
        const auto xx = x + t;
        if (xx >= 0 && xx < w) acc += taps[static_cast<std::size_t>(t + 3)] * in(y, xx);
      }
      rows_done(y, x) = acc;
    }
  Mat out = Mat::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -3; t <= 3; ++t) {
        const auto yy = y + t;
        if (yy >= 0 && yy < h) acc += taps[static_cast<std::size_t>(t + 3)] * rows_done(yy, x);
      }
      out(y, x) = acc;
    }
  return out;
}

}  // namespace

double weighted_fbeta(const SoftPrediction& pred, const BinaryMask& gt, double beta2) {
  check_shapes(pred, gt);
  const double gt_area = gt.values.sum();
  if (gt_area == 0.0) return 0.0;

  const Mat err = (pred.values - gt.values).cwiseAbs();
  const DistanceField field = distance_to_foreground(gt);
  Mat err_t = err;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    if (gt.values.data()[i] == 0.0) err_t.data()[i] = err.data()[field.nearest[static_cast<std::size_t>(i)]];
  }
  const Mat err_a = gaussian_filter(err_t);

  double fg_ew = 0.0;
  double bg_ew = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const bool fg = gt.values.data()[i] == 1.0;
    double e = err.data()[i];
    if (fg && err_a.data()[i] < e) e = err_a.data()[i];
    if (fg) {
      fg_ew += e;
    } else {
      const double b = 2.0 - std::exp(std::log(0.5) / 5.0 * field.distance.data()[i]);
      bg_ew += e * b;
    }
  }
  const double tp_w = gt_area - fg_ew;
  const double recall = 1.0 - fg_ew / gt_area;
  const double precision = tp_w / (kEps + tp_w + bg_ew);
  return (1.0 + beta2) * recall * precision / (kEps + recall + beta2 * precision);
}

Confusion confusion(const SoftPrediction& pred, const BinaryMask& gt, double threshold) {
  check_shapes(pred, gt);
  Confusion c;
  for (Eigen::Index i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values.data()[i] >= threshold;
    const bool g = gt.values.data()[i] == 1.0;
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double ber(const Confusion& c) {
  const double pos = static_cast<double>(c.tp + c.fn);
  const double neg = static_cast<double>(c.tn + c.fp);
  const double tpr = pos > 0 ? static_cast<double>(c.tp) / pos : 1.0;
  const double tnr = neg > 0 ? static_cast<double>(c.tn) / neg : 1.0;
  return 100.0 * (1.0 - 0.5 * (tpr + tnr));
}

double ber(const SoftPrediction& pred, const BinaryMask& gt, double threshold) {
  return ber(confusion(pred, gt, threshold));
}

DiceIou dice_iou(const SoftPrediction& pred, const BinaryMask& gt, double threshold) {
  const Confusion c = confusion(pred, gt, threshold);
  const double inter = static_cast<double>(c.tp);
  const double p = static_cast<double>(c.tp + c.fp);
  const double g = static_cast<double>(c.tp + c.fn);
  if (p + g == 0.0) return {1.0, 1.0};
  return {2.0 * inter / (p + g), inter / (p + g - inter)};
}

ImageMetrics evaluate_image(const std::string& stem, const SoftPrediction& pred, const BinaryMask& gt) {
  ImageMetrics m;
  m.stem = stem;
  m.s_alpha = s_measure(pred, gt);
  m.e_phi = e_measure_mean(pred, gt);
  m.f_beta_w = weighted_fbeta(pred, gt);
  m.mae = mae(pred, gt);
  m.counts = confusion(pred, gt);
  m.ber = ber(m.counts);
  const DiceIou di = dice_iou(pred, gt);
  m.mdice = di.dice;
  m.miou = di.iou;
  return m;
}

MetricReport aggregate_metrics(const std::string& task, std::vector<ImageMetrics> per_image) {
  MetricReport r;
  r.task = task;
  if (per_image.empty()) throw ValidationError("cannot aggregate an empty metric list");
  Confusion total;
  for (const auto& m : per_image) {
    r.s_alpha += m.s_alpha;
    r.e_phi += m.e_phi;
    r.f_beta_w += m.f_beta_w;
    r.mae += m.mae;
    r.mdice += m.mdice;
    r.miou += m.miou;
    total += m.counts;
  }
  const auto n = static_cast<double>(per_image.size());
  r.s_alpha /= n;
  r.e_phi /= n;
  r.f_beta_w /= n;
  r.mae /= n;
  r.mdice /= n;
  r.miou /= n;
  r.ber = ber(total);
  r.per_image = std::move(per_image);
  return r;
}

double MetricReport::primary_metric(Task t) const {
  switch (t) {
    case Task::camouflage: return s_alpha;
    case Task::shadow: return -ber;
    case Task::polyp: return mdice;
  }
  return s_alpha;
}

}  // namespace samadapter
