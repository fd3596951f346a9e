#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>

#include "cli/commands.hpp"
#include "samadapter/error.hpp"

namespace samadapter::cli {

namespace fs = std::filesystem;

namespace {

struct Series {
  std::string name;
  std::string x_label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void plot(const Series& s, const fs::path& path) {
  const int w = 480, h = 320, left = 64, right = 16, top = 32, bottom = 40;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar ink(40, 40, 40), line(180, 90, 30);
  cv::rectangle(img, {left, top}, {w - right, h - bottom}, ink, 1);
  cv::putText(img, s.name, {left, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, ink, 1, cv::LINE_AA);
  cv::putText(img, s.x_label, {w / 2 - 16, h - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink, 1, cv::LINE_AA);

  double x0 = *std::min_element(s.x.begin(), s.x.end()), x1 = *std::max_element(s.x.begin(), s.x.end());
  double y0 = *std::min_element(s.y.begin(), s.y.end()), y1 = *std::max_element(s.y.begin(), s.y.end());
  if (x1 - x0 <= 0) x0 -= 1, x1 += 1;
  if (y1 - y0 <= 0) y0 -= 0.5 * (std::abs(y0) + 1e-3), y1 += 0.5 * (std::abs(y1) + 1e-3);
  cv::putText(img, fmt(y1), {4, top + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1, cv::LINE_AA);
  cv::putText(img, fmt(y0), {4, h - bottom}, cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1, cv::LINE_AA);
  cv::putText(img, fmt(x0), {left, h - bottom + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1, cv::LINE_AA);
  cv::putText(img, fmt(x1), {w - right - 40, h - bottom + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.35, ink, 1,
              cv::LINE_AA);

  std::vector<cv::Point> pts;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    const double fx = (s.x[i] - x0) / (x1 - x0), fy = (s.y[i] - y0) / (y1 - y0);
    pts.emplace_back(left + static_cast<int>(fx * (w - left - right)),
                     h - bottom - static_cast<int>(fy * (h - top - bottom)));
  }
  if (pts.size() > 1) cv::polylines(img, pts, false, line, 1, cv::LINE_AA);
  if (pts.size() <= 64) {
    for (const auto& p : pts) cv::circle(img, p, 3, line, cv::FILLED, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw IoError(path, "cannot write plot");
}

}  // namespace

int cmd_report(const ReportArgs& args) {
  using json = nlohmann::json;
  std::ifstream in(args.log);
  if (!in) {
    std::cerr << "error: cannot read " << args.log.string() << '\n';
    return kRuntimeError;
  }
  Series loss{"loss", "step", {}, {}}, lr{"lr", "step", {}, {}};
  const std::vector<std::string> metric_names{"s_alpha", "e_phi", "f_beta_w", "mae", "ber", "mdice", "miou"};
  std::map<std::string, Series> metrics;
  for (const auto& m : metric_names) metrics[m] = Series{m, "epoch", {}, {}};

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      const std::string type = j.at("type").get<std::string>();
      if (type == "step") {
        const double step = j.at("step").get<double>();
        loss.x.push_back(step);
        loss.y.push_back(j.at("loss").get<double>());
        lr.x.push_back(step);
        lr.y.push_back(j.at("lr").get<double>());
      } else if (type == "eval") {
        const double epoch = j.at("epoch").get<double>();
        for (const auto& m : metric_names) {
          metrics[m].x.push_back(epoch);
          metrics[m].y.push_back(j.at(m).get<double>());
        }
      } else {
        throw std::runtime_error("unknown record type '" + type + "'");
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << args.log.string() << " line " << line_no << ": malformed record: " << e.what() << '\n';
      return kRuntimeError;
    }
  }
  if (loss.x.empty() && metrics["s_alpha"].x.empty()) {
    std::cerr << "error: " << args.log.string() << ": log contains no records\n";
    return kRuntimeError;
  }

  try {
    fs::create_directories(args.out_dir);
    std::vector<const Series*> all;
    if (!loss.x.empty()) all.insert(all.end(), {&loss, &lr});
    for (const auto& m : metric_names) {
      if (!metrics[m].x.empty()) all.push_back(&metrics[m]);
    }
    const fs::path summary = args.out_dir / "summary.csv";
    if (fs::exists(summary) && !args.overwrite) throw IoError(summary, "output exists; pass --overwrite to replace it");

    std::string csv = "series,count,min,max,final\n";
    std::string table = "| series | count | min | max | final |\n|---|---|---|---|---|\n";
    for (const Series* s : all) {
      plot(*s, args.out_dir / (s->name + ".png"));
      const double lo = *std::min_element(s->y.begin(), s->y.end());
      const double hi = *std::max_element(s->y.begin(), s->y.end());
      char row[256];
      std::snprintf(row, sizeof row, "%s,%zu,%.17g,%.17g,%.17g\n", s->name.c_str(), s->y.size(), lo, hi, s->y.back());
      csv += row;
      std::snprintf(row, sizeof row, "| %s | %zu | %.6g | %.6g | %.6g |\n", s->name.c_str(), s->y.size(), lo, hi,
                    s->y.back());
      table += row;
    }
    std::ofstream(summary, std::ios::binary | std::ios::trunc) << csv;
    std::ofstream(args.out_dir / "summary.md", std::ios::binary | std::ios::trunc) << table;
    std::cout << table;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace samadapter::cli
