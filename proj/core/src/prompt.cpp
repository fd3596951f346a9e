#include "samadapter/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <opencv2/core.hpp>

#include "samadapter/backbone.hpp"
#include "samadapter/error.hpp"

namespace samadapter {

void FrequencyMaskSpec::validate() const {
  if (!std::isfinite(mask_ratio) || mask_ratio < 0.0 || mask_ratio >= 1.0) {
    throw ValidationError("mask_ratio must lie in [0, 1), got " + std::to_string(mask_ratio));
  }
}

void PromptFeature::validate() const {
  if (!tokens.allFinite()) throw ValidationError("prompt feature contains non-finite values");
}

int masked_extent(double mask_ratio, int n) {
  // Guard against products like 0.3 * 10 = 3.0000000000000004.
  const double raw = mask_ratio * n;
  const double nearest = std::round(raw);
  const double exact = std::abs(raw - nearest) < 1e-9 * std::max(1.0, raw) ? nearest : raw;
  return std::clamp(static_cast<int>(std::ceil(exact)), 0, n);
}

ImageTensor hfc_residual(const ImageTensor& image, const FrequencyMaskSpec& spec) {
  spec.validate();
  image.validate(false);
  const int h = image.height();
  const int w = image.width();
  if (h < 2 || w < 2) throw ValidationError("HFC extraction needs at least a 2x2 image");

  const int mh = masked_extent(spec.mask_ratio, h);
  const int mw = masked_extent(spec.mask_ratio, w);
  const int r0 = h / 2 - mh / 2;
  const int c0 = w / 2 - mw / 2;

  ImageTensor out(h, w, image.channels());
  cv::Mat spatial(h, w, CV_64FC2);
  cv::Mat spectrum;
  cv::Mat restored;
  for (int ch = 0; ch < image.channels(); ++ch) {
    for (int y = 0; y < h; ++y) {
      auto* row = spatial.ptr<cv::Vec2d>(y);
      for (int x = 0; x < w; ++x) row[x] = cv::Vec2d(image.at(y, x, ch), 0.0);
    }
    cv::dft(spatial, spectrum, cv::DFT_COMPLEX_OUTPUT);
    // Shifted index s holds unshifted frequency (s - n/2) mod n.
    for (int sy = r0; sy < r0 + mh; ++sy) {
      const int fy = ((sy - h / 2) % h + h) % h;
      auto* row = spectrum.ptr<cv::Vec2d>(fy);
      for (int sx = c0; sx < c0 + mw; ++sx) {
        const int fx = ((sx - w / 2) % w + w) % w;
        row[fx] = cv::Vec2d(0.0, 0.0);
      }
    }
    cv::dft(spectrum, restored, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);
    for (int y = 0; y < h; ++y) {
      const auto* row = restored.ptr<cv::Vec2d>(y);
      for (int x = 0; x < w; ++x) out.at(y, x, ch) = row[x][0];
    }
  }
  return out;
}

ImageTensor extract_hfc(const ImageTensor& image, const FrequencyMaskSpec& spec) {
  ImageTensor residual = hfc_residual(image, spec);
  auto& v = residual.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  // Round-off from the transform pair leaves ~1e-17 ripple on flat inputs.
  constexpr double kFlatRange = 1e-10;
  if (range <= kFlatRange) {
    std::fill(v.begin(), v.end(), 0.0);
  } else {
    for (double& x : v) x = std::clamp((x - lo) / range, 0.0, 1.0);
  }
  return residual;
}

Mat patchify(const ImageTensor& image, int patch_size) {
  if (patch_size <= 0) throw ValidationError("patch_size must be positive");
  if (image.height() % patch_size != 0 || image.width() % patch_size != 0) {
    throw ValidationError("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                          " is not divisible by patch size " + std::to_string(patch_size));
  }
  const int gh = image.height() / patch_size;
  const int gw = image.width() / patch_size;
  const int c = image.channels();
  Mat patches(gh * gw, c * patch_size * patch_size);
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      const int row = py * gw + px;
      for (int ch = 0; ch < c; ++ch)
        for (int dy = 0; dy < patch_size; ++dy)
          for (int dx = 0; dx < patch_size; ++dx)
            patches(row, (ch * patch_size + dy) * patch_size + dx) =
                image.at(py * patch_size + dy, px * patch_size + dx, ch);
    }
  }
  return patches;
}

HfcProjection::HfcProjection(int channels, int patch_size, int embed_dim)
    : proj_("prompt.hfc_embed", channels * patch_size * patch_size, embed_dim, true), patch_size_(patch_size) {}

PromptFeature HfcProjection::embed(const ImageTensor& hfc_image) const {
  const Mat patches = patchify(hfc_image, patch_size_);
  if (patches.cols() != proj_.in_features()) {
    throw ValidationError("HFC projection expects " + std::to_string(proj_.in_features()) +
                          " values per patch, image provides " + std::to_string(patches.cols()));
  }
  return PromptFeature(proj_.forward(patches));
}

void HfcProjection::backward(const Mat& patches, const Mat& d_tokens) { proj_.backward(patches, d_tokens); }

void HfcProjection::init(Rng& rng) { proj_.init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(proj_.in_features()))); }

PromptFeature embed_hfc(const HfcProjection& projection, const ImageTensor& hfc_image) {
  hfc_image.validate(false);
  return projection.embed(hfc_image);
}

PromptFeature extract_patch_embedding(const ImageTensor& image, const Encoder& encoder) {
  const auto& cfg = encoder.config();
  if (image.height() != cfg.image_size || image.width() != cfg.image_size || image.channels() != cfg.in_channels) {
    throw ValidationError("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) + "x" +
                          std::to_string(image.channels()) + " does not match encoder input " +
                          std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size) + "x" +
                          std::to_string(cfg.in_channels));
  }
  return PromptFeature(encoder.patch_embed(image));
}

PromptFeature compose_prompts(std::span<const PromptFeature> features, const CompositionWeights& weights) {
  if (features.empty()) throw ValidationError("compose_prompts needs at least one feature");
  if (weights.weights.size() != features.size()) {
    throw ValidationError("composition weight count " + std::to_string(weights.weights.size()) +
                          " != feature count " + std::to_string(features.size()));
  }
  const auto rows = features.front().tokens.rows();
  const auto cols = features.front().tokens.cols();
  Mat sum = Mat::Zero(rows, cols);
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].tokens.rows() != rows || features[j].tokens.cols() != cols) {
      throw ValidationError("prompt feature " + std::to_string(j) + " shape mismatch");
    }
    sum += weights.weights[j] * features[j].tokens;
  }
  return PromptFeature(std::move(sum));
}

}  // namespace samadapter
