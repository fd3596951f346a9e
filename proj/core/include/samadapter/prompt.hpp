#pragma once

#include <span>
#include <vector>

#include "samadapter/image.hpp"
#include "samadapter/nn.hpp"
#include "samadapter/tensor.hpp"

namespace samadapter {

class Encoder;

/// Fraction of the centred spectrum (per axis) removed before inversion.
struct FrequencyMaskSpec {
  double mask_ratio = 0.25;

  void validate() const;
};

/// N x D token-aligned feature map.
struct PromptFeature {
  Mat tokens;

  PromptFeature() = default;
  explicit PromptFeature(Mat t) : tokens(std::move(t)) {}

  int num_tokens() const { return static_cast<int>(tokens.rows()); }
  int dim() const { return static_cast<int>(tokens.cols()); }
  /// Throws ValidationError on NaN/Inf.
  void validate() const;
};

struct CompositionWeights {
  std::vector<double> weights;
};

/// Size of the zeroed low-frequency rectangle for an axis of length n.
int masked_extent(double mask_ratio, int n);

/// High-pass residual before renormalization: real part of the inverse DFT
/// after zeroing the centred ceil(tau*H) x ceil(tau*W) block of each
/// channel's shifted spectrum. Linear in the image.
ImageTensor hfc_residual(const ImageTensor& image, const FrequencyMaskSpec& spec);

/// hfc_residual followed by per-image min-max scaling to [0, 1]; a constant
/// residual maps to all zeros.
ImageTensor extract_hfc(const ImageTensor& image, const FrequencyMaskSpec& spec);

/// Non-overlapping patch_size x patch_size patches, one row per patch in
/// row-major patch order, each flattened channel-major as (c, py, px).
Mat patchify(const ImageTensor& image, int patch_size);

/// Trainable linear map from flattened HFC patches into token space.
class HfcProjection {
 public:
  HfcProjection() = default;
  HfcProjection(int channels, int patch_size, int embed_dim);

  int patch_size() const { return patch_size_; }
  int embed_dim() const { return proj_.out_features(); }

  PromptFeature embed(const ImageTensor& hfc_image) const;
  /// Accumulates parameter gradients given the patches used in embed().
  void backward(const Mat& patches, const Mat& d_tokens);

  void init(Rng& rng);
  nn::Linear& linear() { return proj_; }
  const nn::Linear& linear() const { return proj_; }
  void visit(const ParamVisitor& fn) { proj_.visit(fn); }
  void visit(const ConstParamVisitor& fn) const { proj_.visit(fn); }

 private:
  nn::Linear proj_;
  int patch_size_ = 0;
};

/// F_hfc: patch-wise projection of an HFC image.
PromptFeature embed_hfc(const HfcProjection& projection, const ImageTensor& hfc_image);

/// F_pe: the frozen encoder's own patch embedding (no positional term).
PromptFeature extract_patch_embedding(const ImageTensor& image, const Encoder& encoder);

/// Elementwise sum_j w_j F_j.
PromptFeature compose_prompts(std::span<const PromptFeature> features, const CompositionWeights& weights);

}  // namespace samadapter
