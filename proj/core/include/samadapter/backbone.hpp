#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samadapter/image.hpp"
#include "samadapter/nn.hpp"
#include "samadapter/prompt.hpp"
#include "samadapter/tensor.hpp"

namespace samadapter {

struct EncoderConfig {
  std::string name = "custom";
  int image_size = 64;
  int patch_size = 16;
  int in_channels = 3;
  int embed_dim = 32;
  int depth = 4;
  int num_heads = 2;
  int mlp_ratio = 4;
  int window_size = 2;
  std::vector<int> global_attn_indices{1, 3};
  bool use_rel_pos = false;
  std::array<double, 3> pixel_mean{0.0, 0.0, 0.0};
  std::array<double, 3> pixel_std{1.0, 1.0, 1.0};

  int grid_size() const { return image_size / patch_size; }
  int num_tokens() const { return grid_size() * grid_size(); }
  bool is_global(int block) const;
  void validate() const;
};

/// Named presets: toy_tiny, toy_small, vit_b_sam, vit_l_sam, vit_h_sam.
EncoderConfig encoder_preset(const std::string& name);
std::vector<std::string> encoder_preset_names();

/// Name and archive shape of every encoder tensor, without allocating.
struct TensorSpec {
  std::string name;
  Shape shape;
};
std::vector<TensorSpec> encoder_tensor_manifest(const EncoderConfig& config);

struct EncoderCache {
  Mat patches;
  std::vector<nn::BlockCache> blocks;
  /// Output of every block; block_outputs[i] = Block_i(x_i + P^i).
  std::vector<Mat> block_outputs;
};

/// Frozen ViT image encoder. Every parameter is non-trainable; backward()
/// only propagates token gradients so prompts can be trained through it.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }

  /// Deterministic stand-in for pretrained weights, rounded to float.
  void init_random(std::uint64_t seed);

  /// Patch embedding of the (pixel-normalized) image, N x D, no positions.
  Mat patch_embed(const ImageTensor& image) const;

  /// x_0 = patch_embed + pos; x_{i+1} = Block_i(x_i + P^i); returns x_L.
  Mat encode(const ImageTensor& image, std::span<const PromptFeature> prompts, EncoderCache* cache = nullptr) const;
  /// Same pipeline with no prompt term at all.
  Mat encode_plain(const ImageTensor& image) const;

  /// Given dL/dx_L returns dL/dP^i for every block.
  std::vector<Mat> backward(const Mat& d_out, const EncoderCache& cache);

  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;
  std::string checksum() const;

  std::vector<nn::Block>& blocks() { return blocks_; }
  Param& patch_weight() { return patch_weight_; }
  Param& patch_bias() { return patch_bias_; }
  Param& pos_embed() { return pos_embed_; }

 private:
  Mat normalized_patches(const ImageTensor& image) const;
  Mat pos_tokens() const;

  EncoderConfig config_;
  Param patch_weight_;
  Param patch_bias_;
  Param pos_embed_;
  std::vector<nn::Block> blocks_;
};

struct DecoderConfig {
  int embed_dim = 32;
  int grid_size = 4;
  int image_size = 64;
  int upscale = 4;
  int mask_dim = 16;
  int mlp_dim = 64;

  static DecoderConfig for_encoder(const EncoderConfig& enc);
  void validate() const;
};

struct DecoderCache {
  Mat embedding;
  nn::LayerNormCache ln_in;
  Mat ep;
  Mat q, k, v;
  Mat attn;
  Mat ctx;
  Mat t1_pre;
  nn::LayerNormCache ln1;
  Mat t1;
  Mat tok_hidden;
  nn::LayerNormCache ln2;
  Mat t2;
  Mat hyper_hidden;
  Mat wvec;
  Mat img_hidden;
  Mat g;
  Mat up_pre;
  Mat u;
  Mat pred;
};

/// Trainable mask decoder: one learned query token cross-attends to the image
/// embedding, an MLP hypernetwork turns it into dynamic mask weights, and the
/// image tokens are upscaled by `upscale` (kernel = stride) into per-subpixel
/// features that those weights score. Logits are bilinearly resized to the
/// input resolution and squashed with a sigmoid.
class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(const DecoderConfig& config);

  const DecoderConfig& config() const { return config_; }
  void init_random(std::uint64_t seed);

  SoftPrediction forward(const Mat& embedding, DecoderCache* cache = nullptr) const;
  /// Returns dL/d(embedding); accumulates decoder parameter gradients.
  Mat backward(const Mat& d_pred, const DecoderCache& cache);

  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;
  std::string checksum() const;

 private:
  DecoderConfig config_;
  nn::LayerNorm norm_in_;
  Param output_token_;
  nn::Linear q_proj_, k_proj_, v_proj_, out_proj_;
  nn::LayerNorm norm1_;
  nn::Linear token_lin1_, token_lin2_;
  nn::LayerNorm norm2_;
  nn::Linear hyper_lin1_, hyper_lin2_;
  nn::Linear image_lin1_, image_lin2_;
  nn::Linear upscale_;
  Param mask_bias_;
  Mat resize_rows_;
  Mat resize_cols_;
};

/// decode() from the component contract.
SoftPrediction decode(const Decoder& decoder, const Mat& embedding);

}  // namespace samadapter
