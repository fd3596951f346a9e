#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "oracles/grid.hpp"
#include "samadapter/config.hpp"
#include "samadapter/model.hpp"
#include "samadapter/tensor.hpp"

namespace testsupport {

using namespace samadapter;

inline std::filesystem::path fixture_dir() { return SAMADAPTER_FIXTURE_DIR; }
inline std::filesystem::path toy_dir() { return fixture_dir() / "toy"; }

/// Scratch directory under the build tree, emptied on creation.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::path(SAMADAPTER_SCRATCH_DIR) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// 16 px images, 4 px patches, 4x4 token grid, width 8: small enough for
/// exhaustive finite differences.
inline EncoderConfig micro_encoder() {
  EncoderConfig c;
  c.name = "micro";
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.depth = 2;
  c.num_heads = 2;
  c.window_size = 3;  // forces zero padding on the 4x4 grid
  c.global_attn_indices = {1};
  return c;
}

inline SamAdapterModel make_model(const EncoderConfig& enc, AdapterInit init, std::uint64_t seed, int mid_dim = 4,
                                  bool adapters_enabled = true) {
  Encoder e(enc);
  e.init_random(seed);
  DecoderConfig dc = DecoderConfig::for_encoder(enc);
  Decoder d(dc);
  d.init_random(seed + 1);
  AdapterConfig ac;
  ac.num_layers = enc.depth;
  ac.input_dim = enc.embed_dim;
  ac.out_dim = enc.embed_dim;
  ac.mid_dim = mid_dim;
  ac.init_scheme = init;
  HfcProjection proj(enc.in_channels, enc.patch_size, enc.embed_dim);
  Rng rng(seed + 2);
  proj.init(rng);
  return SamAdapterModel(std::move(e), std::move(d), init_adapters(ac, seed + 3), std::move(proj), PromptSettings{},
                         adapters_enabled);
}

inline ImageTensor random_image(Rng& rng, int size, int channels = 3) {
  ImageTensor img(size, size, channels);
  for (double& v : img.values()) v = rng.uniform();
  return img;
}

/// Blob-shaped binary mask with both classes present.
inline BinaryMask random_mask(Rng& rng, int h, int w) {
  Mat m = Mat::Zero(h, w);
  const double cy = rng.uniform(0.3, 0.7) * h, cx = rng.uniform(0.3, 0.7) * w;
  const double r = rng.uniform(0.15, 0.3) * std::min(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m(y, x) = 1.0;
  m(0, 0) = 0.0;
  m(static_cast<int>(cy), static_cast<int>(cx)) = 1.0;
  return BinaryMask(m);
}

inline oracle::Grid to_grid(const Mat& m) {
  oracle::Grid g(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) g(y, x) = m(y, x);
  return g;
}

struct GradCheck {
  std::string name;
  double rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences of `loss` with respect to every entry of `param`
/// (or an evenly spaced subset of at most max_entries), compared against
/// param.grad as ||a - n|| / max(||a||, ||n||, 1e-12).
inline GradCheck finite_difference(Param& param, const std::function<double()>& loss, double step = 1e-5,
                                   std::size_t max_entries = 4096) {
  const auto n = static_cast<std::size_t>(param.value.size());
  const std::size_t stride = std::max<std::size_t>(1, n / max_entries);
  double diff2 = 0, a2 = 0, n2 = 0;
  GradCheck out{param.name, 0.0, 0};
  for (std::size_t i = 0; i < n; i += stride) {
    double& v = param.value.data()[i];
    const double saved = v;
    v = saved + step;
    const double up = loss();
    v = saved - step;
    const double down = loss();
    v = saved;
    const double numeric = (up - down) / (2 * step);
    const double analytic = param.grad.data()[i];
    diff2 += (numeric - analytic) * (numeric - analytic);
    a2 += analytic * analytic;
    n2 += numeric * numeric;
    ++out.checked;
  }
  out.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return out;
}

}  // namespace testsupport
