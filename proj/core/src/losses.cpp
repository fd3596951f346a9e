#include "samadapter/losses.hpp"

#include <algorithm>
#include <cmath>

#include "samadapter/error.hpp"

namespace samadapter {

Task parse_task(std::string_view name) {
  if (name == "camouflage") return Task::camouflage;
  if (name == "shadow") return Task::shadow;
  if (name == "polyp") return Task::polyp;
  throw ConfigError("task", "unknown task '" + std::string(name) + "' (camouflage, shadow, polyp)");
}

std::string to_string(Task task) {
  switch (task) {
    case Task::camouflage: return "camouflage";
    case Task::shadow: return "shadow";
    case Task::polyp: return "polyp";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("split", "unknown split '" + std::string(name) + "'");
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "balanced_bce") return LossKind::balanced_bce;
  if (name == "bce_plus_iou") return LossKind::bce_plus_iou;
  throw ConfigError("train.loss.kind", "unknown loss kind '" + std::string(name) + "'");
}

std::string to_string(LossKind kind) { return kind == LossKind::balanced_bce ? "balanced_bce" : "bce_plus_iou"; }

void LossConfig::validate() const {
  if (kind != LossKind::balanced_bce && kind != LossKind::bce_plus_iou) {
    throw ConfigError("train.loss.kind", "unknown loss kind");
  }
  if (!(iou_weight >= 0.0)) throw ConfigError("train.loss.iou_weight", "must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("train.loss.epsilon", "must be > 0");
}

LossConfig LossConfig::for_task(Task task) {
  LossConfig c;
  c.kind = task == Task::shadow ? LossKind::balanced_bce : LossKind::bce_plus_iou;
  return c;
}

namespace {

void check_shapes(const SoftPrediction& pred, const BinaryMask& gt) {
  if (pred.values.rows() != gt.values.rows() || pred.values.cols() != gt.values.cols()) {
    throw ValidationError("prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                          " does not match mask " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  if (pred.values.size() == 0) throw ValidationError("empty prediction");
}

// Weighted BCE with per-class weights; shared by the plain and balanced forms.
LossValue weighted_bce(const SoftPrediction& pred, const BinaryMask& gt, double eps, double w_pos, double w_neg,
                       bool want_grad) {
  check_shapes(pred, gt);
  const auto n = static_cast<double>(pred.values.size());
  LossValue out;
  if (want_grad) out.grad = Mat::Zero(pred.values.rows(), pred.values.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.values.size(); ++i) {
    const double p = pred.values.data()[i];
    const double g = gt.values.data()[i];
    const double pc = std::clamp(p, eps, 1.0 - eps);
    total -= w_pos * g * std::log(pc) + w_neg * (1.0 - g) * std::log(1.0 - pc);
    if (want_grad && p > eps && p < 1.0 - eps) {
      out.grad.data()[i] = (-w_pos * g / pc + w_neg * (1.0 - g) / (1.0 - pc)) / n;
    }
  }
  out.value = total / n;
  return out;
}

std::pair<double, double> balance_weights(const BinaryMask& gt) {
  const auto n = static_cast<double>(gt.values.size());
  const double pos = gt.values.sum();
  const double neg = n - pos;
  if (pos == 0.0 || neg == 0.0) return {1.0, 1.0};
  return {neg / n, pos / n};
}

LossValue iou_impl(const SoftPrediction& pred, const BinaryMask& gt, double eps, bool want_grad) {
  check_shapes(pred, gt);
  const double inter = (pred.values.array() * gt.values.array()).sum() + eps;
  const double uni = pred.values.sum() + gt.values.sum() - (inter - eps) + eps;
  LossValue out;
  out.value = 1.0 - inter / uni;
  if (want_grad) {
    // d/dp [1 - I/U] with dI/dp = g, dU/dp = 1 - g.
    out.grad = (-(gt.values.array() * uni - inter * (1.0 - gt.values.array())) / (uni * uni)).matrix();
  }
  return out;
}

}  // namespace

double bce_loss(const SoftPrediction& pred, const BinaryMask& gt, double eps) {
  return weighted_bce(pred, gt, eps, 1.0, 1.0, false).value;
}

LossValue bce_loss_grad(const SoftPrediction& pred, const BinaryMask& gt, double eps) {
  return weighted_bce(pred, gt, eps, 1.0, 1.0, true);
}

double balanced_bce_loss(const SoftPrediction& pred, const BinaryMask& gt, double eps) {
  check_shapes(pred, gt);
  const auto [w_pos, w_neg] = balance_weights(gt);
  return weighted_bce(pred, gt, eps, w_pos, w_neg, false).value;
}

LossValue balanced_bce_loss_grad(const SoftPrediction& pred, const BinaryMask& gt, double eps) {
  check_shapes(pred, gt);
  const auto [w_pos, w_neg] = balance_weights(gt);
  return weighted_bce(pred, gt, eps, w_pos, w_neg, true);
}

double iou_loss(const SoftPrediction& pred, const BinaryMask& gt, double eps) {
  return iou_impl(pred, gt, eps, false).value;
}

LossValue iou_loss_grad(const SoftPrediction& pred, const BinaryMask& gt, double eps) {
  return iou_impl(pred, gt, eps, true);
}

double task_loss(const LossConfig& config, const SoftPrediction& pred, const BinaryMask& gt) {
  config.validate();
  if (config.kind == LossKind::balanced_bce) return balanced_bce_loss(pred, gt, config.epsilon);
  return bce_loss(pred, gt, config.epsilon) + config.iou_weight * iou_loss(pred, gt, config.epsilon);
}

LossValue task_loss_grad(const LossConfig& config, const SoftPrediction& pred, const BinaryMask& gt) {
  config.validate();
  if (config.kind == LossKind::balanced_bce) return balanced_bce_loss_grad(pred, gt, config.epsilon);
  LossValue bce = bce_loss_grad(pred, gt, config.epsilon);
  const LossValue iou = iou_loss_grad(pred, gt, config.epsilon);
  bce.value += config.iou_weight * iou.value;
  bce.grad += config.iou_weight * iou.grad;
  return bce;
}

}  // namespace samadapter
