#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "samadapter/error.hpp"
#include "samadapter/files.hpp"
#include "samadapter/metrics.hpp"

namespace samadapter {

namespace fs = std::filesystem;

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, fs::path> out;
  for (const auto& f : files) {
    const std::string stem = f.stem().string();
    auto it = out.find(stem);
    if (it == out.end()) {
      out.emplace(stem, f);
    } else if (f.extension() == ".png" && it->second.extension() != ".png") {
      it->second = f;
    }
  }
  return out;
}

namespace {

nlohmann::ordered_json metrics_json(const ImageMetrics& m) {
  return {{"stem", m.stem},       {"s_alpha", m.s_alpha}, {"e_phi", m.e_phi}, {"f_beta_w", m.f_beta_w},
          {"mae", m.mae},         {"ber", m.ber},         {"mdice", m.mdice}, {"miou", m.miou},
          {"tp", m.counts.tp},    {"fp", m.counts.fp},    {"tn", m.counts.tn}, {"fn", m.counts.fn}};
}

}  // namespace

std::string MetricReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["count"] = per_image.size();
  j["s_alpha"] = s_alpha;
  j["e_phi"] = e_phi;
  j["f_beta_w"] = f_beta_w;
  j["mae"] = mae;
  j["ber"] = ber;
  j["mdice"] = mdice;
  j["miou"] = miou;
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& m : per_image) j["per_image"].push_back(metrics_json(m));
  return j.dump(indent);
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "stem,s_alpha,e_phi,f_beta_w,mae,ber,mdice,miou\n";
  for (const auto& m : per_image) {
    out << m.stem << ',' << m.s_alpha << ',' << m.e_phi << ',' << m.f_beta_w << ',' << m.mae << ',' << m.ber << ','
        << m.mdice << ',' << m.miou << '\n';
  }
  return out.str();
}

MetricReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir, Task task, const EvalOptions& options) {
  const auto gts = images_by_stem(gt_dir);
  const auto preds = images_by_stem(pred_dir);
  if (gts.empty()) throw UnmatchedFilesError("no ground-truth masks found in " + gt_dir.string(), {});

  std::vector<std::string> unmatched;
  for (const auto& [stem, _] : gts)
    if (!preds.contains(stem)) unmatched.push_back(stem);
  for (const auto& [stem, _] : preds)
    if (!gts.contains(stem)) unmatched.push_back(stem);
  if (!unmatched.empty()) {
    if (!options.allow_missing) {
      std::string msg = "unmatched prediction/GT stems:";
      for (const auto& s : unmatched) msg += " " + s;
      throw UnmatchedFilesError(msg, unmatched);
    }
    spdlog::warn("skipping {} unmatched stems", unmatched.size());
  }

  std::vector<ImageMetrics> rows;
  for (const auto& [stem, gt_path] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) continue;
    const BinaryMask gt = read_mask(gt_path);
    Mat pred = read_gray(it->second);
    if (pred.rows() != gt.values.rows() || pred.cols() != gt.values.cols()) {
      pred = resize_bilinear(pred, gt.height(), gt.width());
    }
    const SoftPrediction soft(std::move(pred));
    ImageMetrics m = evaluate_image(stem, soft, gt);
    if (options.threshold != 0.5) {
      m.counts = confusion(soft, gt, options.threshold);
      m.ber = ber(m.counts);
      const DiceIou di = dice_iou(soft, gt, options.threshold);
      m.mdice = di.dice;
      m.miou = di.iou;
    }
    rows.push_back(std::move(m));
  }
  if (rows.empty()) throw UnmatchedFilesError("no matched prediction/GT pairs", unmatched);
  return aggregate_metrics(to_string(task), std::move(rows));
}

}  // namespace samadapter
