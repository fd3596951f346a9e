#pragma once

#include <string_view>

#include "samadapter/image.hpp"
#include "samadapter/task.hpp"

namespace samadapter {

enum class LossKind { balanced_bce, bce_plus_iou };

LossKind parse_loss_kind(std::string_view name);
std::string to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::bce_plus_iou;
  double iou_weight = 1.0;
  double epsilon = 1e-6;

  void validate() const;
  /// Balanced BCE for shadow, BCE + IoU for camouflage and polyp.
  static LossConfig for_task(Task task);
};

/// Loss value together with dL/dpred.
struct LossValue {
  double value = 0.0;
  Mat grad;
};

/// Mean per-pixel binary cross entropy with pred clamped to [eps, 1 - eps].
double bce_loss(const SoftPrediction& pred, const BinaryMask& gt, double eps = 1e-6);
LossValue bce_loss_grad(const SoftPrediction& pred, const BinaryMask& gt, double eps = 1e-6);

/// BCE whose positive term is weighted by N_neg/N and negative term by
/// N_pos/N; a single-class mask weights its class by 1.
double balanced_bce_loss(const SoftPrediction& pred, const BinaryMask& gt, double eps = 1e-6);
LossValue balanced_bce_loss_grad(const SoftPrediction& pred, const BinaryMask& gt, double eps = 1e-6);

/// 1 - (sum pg + eps) / (sum p + sum g - sum pg + eps).
double iou_loss(const SoftPrediction& pred, const BinaryMask& gt, double eps = 1e-6);
LossValue iou_loss_grad(const SoftPrediction& pred, const BinaryMask& gt, double eps = 1e-6);

double task_loss(const LossConfig& config, const SoftPrediction& pred, const BinaryMask& gt);
LossValue task_loss_grad(const LossConfig& config, const SoftPrediction& pred, const BinaryMask& gt);

}  // namespace samadapter
