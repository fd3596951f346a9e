#pragma once

// Brute-force reference metrics written directly from the published
// definitions, one pixel at a time.

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "grid.hpp"

namespace oracle {

inline double mean_of(const Grid& g) {
  double s = 0;
  for (double x : g.v) s += x;
  return s / g.size();
}

inline double mae(const Grid& pred, const Grid& gt) {
  double s = 0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) s += std::fabs(pred(y, x) - gt(y, x));
  return s / gt.size();
}

struct Counts {
  double tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts counts(const Grid& pred, const Grid& gt, double t = 0.5) {
  Counts c;
  for (int i = 0; i < gt.size(); ++i) {
    const bool p = pred.v[i] >= t, g = gt.v[i] > 0.5;
    if (p && g) c.tp += 1;
    if (p && !g) c.fp += 1;
    if (!p && g) c.fn += 1;
    if (!p && !g) c.tn += 1;
  }
  return c;
}

inline double ber(const Counts& c) {
  const double pos_acc = (c.tp + c.fn) > 0 ? c.tp / (c.tp + c.fn) : 1.0;
  const double neg_acc = (c.tn + c.fp) > 0 ? c.tn / (c.tn + c.fp) : 1.0;
  return 100.0 * (1.0 - 0.5 * (pos_acc + neg_acc));
}

inline double dice(const Grid& pred, const Grid& gt, double t = 0.5) {
  const Counts c = counts(pred, gt, t);
  const double denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : 2 * c.tp / denom;
}

inline double iou(const Grid& pred, const Grid& gt, double t = 0.5) {
  const Counts c = counts(pred, gt, t);
  const double uni = c.tp + c.fp + c.fn;
  return uni == 0 ? 1.0 : c.tp / uni;
}

// -- S-measure -----------------------------------------------------------------

namespace detail {

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = 0;
  for (double x : xs) m += x;
  m /= xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / (xs.size() - 1));
}

inline double s_object(const std::vector<double>& xs) {
  double m = 0;
  for (double x : xs) m += x;
  m /= xs.size();
  return 2 * m / (m * m + 1 + sample_std(xs) + DBL_EPSILON);
}

// SSIM-style similarity of one quadrant [r0, r1) x [c0, c1).
inline double quadrant_ssim(const Grid& pred, const Grid& gt, int r0, int r1, int c0, int c1) {
  const int n = (r1 - r0) * (c1 - c0);
  double mx = 0, my = 0;
  for (int y = r0; y < r1; ++y)
    for (int x = c0; x < c1; ++x) mx += pred(y, x), my += gt(y, x);
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  for (int y = r0; y < r1; ++y)
    for (int x = c0; x < c1; ++x) {
      vx += (pred(y, x) - mx) * (pred(y, x) - mx);
      vy += (gt(y, x) - my) * (gt(y, x) - my);
      cxy += (pred(y, x) - mx) * (gt(y, x) - my);
    }
  const double d = n > 1 ? n - 1 : 1;
  vx /= d;
  vy /= d;
  cxy /= d;
  const double a = 4 * mx * my * cxy;
  const double b = (mx * mx + my * my) * (vx + vy);
  if (a != 0) return a / (b + DBL_EPSILON);
  return b == 0 ? 1.0 : 0.0;
}

}  // namespace detail

inline double s_measure(const Grid& pred, const Grid& gt, double alpha = 0.5) {
  const double y_mean = mean_of(gt);
  if (y_mean == 0) return 1 - mean_of(pred);
  if (y_mean == 1) return mean_of(pred);

  std::vector<double> fg, bg;
  for (int i = 0; i < gt.size(); ++i) {
    if (gt.v[i] == 1) fg.push_back(pred.v[i]);
    else bg.push_back(1 - pred.v[i]);
  }
  const double object = y_mean * detail::s_object(fg) + (1 - y_mean) * detail::s_object(bg);

  double sy = 0, sx = 0, area = 0;
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x)
      if (gt(y, x) == 1) sy += y, sx += x, area += 1;
  const int cx = static_cast<int>(std::nearbyint(sx / area)) + 1;
  const int cy = static_cast<int>(std::nearbyint(sy / area)) + 1;
  const double total = gt.h * gt.w;
  const int rows[3] = {0, cy, gt.h}, cols[3] = {0, cx, gt.w};
  double region = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const int nr = rows[i + 1] - rows[i], nc = cols[j + 1] - cols[j];
      if (nr <= 0 || nc <= 0) continue;
      region += nr * nc / total * detail::quadrant_ssim(pred, gt, rows[i], rows[i + 1], cols[j], cols[j + 1]);
    }
  return std::max(0.0, alpha * object + (1 - alpha) * region);
}

// -- E-measure, one threshold at a time ----------------------------------------

inline double e_measure_mean(const Grid& pred, const Grid& gt) {
  const int n = gt.size();
  const double gt_mean = mean_of(gt);
  double total = 0;
  for (int k = 0; k <= 255; ++k) {
    const double t = k / 255.0;
    Grid bin(gt.h, gt.w);
    for (int i = 0; i < n; ++i) bin.v[i] = pred.v[i] >= t ? 1.0 : 0.0;
    double score = 0;
    if (gt_mean == 0) {
      for (int i = 0; i < n; ++i) score += 1 - bin.v[i];
    } else if (gt_mean == 1) {
      for (int i = 0; i < n; ++i) score += bin.v[i];
    } else {
      const double bin_mean = mean_of(bin);
      for (int i = 0; i < n; ++i) {
        const double a = bin.v[i] - bin_mean, b = gt.v[i] - gt_mean;
        const double align = 2 * a * b / (a * a + b * b + DBL_EPSILON);
        score += (align + 1) * (align + 1) / 4;
      }
    }
    total += score / n;
  }
  return total / 256;
}

// -- weighted F-beta -----------------------------------------------------------

/// Nearest foreground pixel by exhaustive search; ties go to the smaller
/// column, then the smaller row. Returns -1 when there is no foreground.
inline int nearest_foreground(const Grid& gt, int y, int x, double* dist) {
  int best = -1;
  long best_d2 = 0;
  for (int c = 0; c < gt.w; ++c)
    for (int r = 0; r < gt.h; ++r) {
      if (gt(r, c) != 1) continue;
      const long d2 = static_cast<long>(r - y) * (r - y) + static_cast<long>(c - x) * (c - x);
      if (best < 0 || d2 < best_d2) best = r * gt.w + c, best_d2 = d2;
    }
  *dist = best < 0 ? INFINITY : std::sqrt(static_cast<double>(best_d2));
  return best;
}

/// Zero-padded 7x7 Gaussian (sigma 5) applied as a direct 2D sum.
inline Grid gaussian7(const Grid& in) {
  double k[7][7], sum = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) sum += k[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / 50.0);
  Grid out(in.h, in.w);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      double acc = 0;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
          const int yy = y + i - 3, xx = x + j - 3;
          if (yy >= 0 && yy < in.h && xx >= 0 && xx < in.w) acc += k[i][j] / sum * in(yy, xx);
        }
      out(y, x) = acc;
    }
  return out;
}

inline double weighted_fbeta(const Grid& pred, const Grid& gt, double beta2 = 1.0) {
  double area = 0;
  for (double g : gt.v) area += g;
  if (area == 0) return 0.0;
  Grid err(gt.h, gt.w), err_t(gt.h, gt.w), dist(gt.h, gt.w);
  for (int i = 0; i < gt.size(); ++i) err.v[i] = std::fabs(pred.v[i] - gt.v[i]);
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      double d = 0;
      const int idx = nearest_foreground(gt, y, x, &d);
      dist(y, x) = d;
      err_t(y, x) = gt(y, x) == 1 ? err(y, x) : err.v[idx];
    }
  const Grid ea = gaussian7(err_t);
  double fg_err = 0, bg_err = 0;
  for (int i = 0; i < gt.size(); ++i) {
    if (gt.v[i] == 1) {
      fg_err += std::min(err.v[i], ea.v[i]);
    } else {
      bg_err += err.v[i] * (2 - std::exp(std::log(0.5) / 5 * dist.v[i]));
    }
  }
  const double tpw = area - fg_err;
  const double r = 1 - fg_err / area;
  const double p = tpw / (DBL_EPSILON + tpw + bg_err);
  return (1 + beta2) * r * p / (DBL_EPSILON + r + beta2 * p);
}

}  // namespace oracle
