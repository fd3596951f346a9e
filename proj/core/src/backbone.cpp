#include "samadapter/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "samadapter/error.hpp"

namespace samadapter {

namespace {

std::uint32_t u32(int v) { return static_cast<std::uint32_t>(v); }

// Every block input sees the same image grid.
std::string block_name(int i) { return "encoder.blocks." + std::to_string(i); }

int rel_size_for(const EncoderConfig& c, int block) { return c.is_global(block) ? c.grid_size() : c.window_size; }

}  // namespace

// -- EncoderConfig -------------------------------------------------------------------

bool EncoderConfig::is_global(int block) const {
  return window_size <= 0 ||
         std::find(global_attn_indices.begin(), global_attn_indices.end(), block) != global_attn_indices.end();
}

void EncoderConfig::validate() const {
  if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) {
    throw ValidationError("image_size must be a positive multiple of patch_size");
  }
  if (in_channels != 1 && in_channels != 3) throw ValidationError("in_channels must be 1 or 3");
  if (embed_dim <= 0 || depth <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ValidationError("embed_dim must be positive and divisible by num_heads; depth must be positive");
  }
  if (mlp_ratio <= 0) throw ValidationError("mlp_ratio must be positive");
  if (window_size < 0) throw ValidationError("window_size must be >= 0");
  for (int g : global_attn_indices) {
    if (g < 0 || g >= depth) throw ValidationError("global attention index " + std::to_string(g) + " outside [0, depth)");
  }
  for (double s : pixel_std) {
    if (!(s > 0.0)) throw ValidationError("pixel_std entries must be positive");
  }
}

EncoderConfig encoder_preset(const std::string& name) {
  EncoderConfig c;
  c.name = name;
  if (name == "toy_tiny") {
    return c;  // 64 px, patch 16, D 32, depth 4, window 2, globals {1, 3}
  }
  if (name == "toy_small") {
    c.patch_size = 4;
    c.embed_dim = 32;
    c.depth = 4;
    c.num_heads = 2;
    c.window_size = 4;
    c.global_attn_indices = {1, 3};
    return c;
  }
  const std::array<double, 3> sam_mean{123.675 / 255.0, 116.28 / 255.0, 103.53 / 255.0};
  const std::array<double, 3> sam_std{58.395 / 255.0, 57.12 / 255.0, 57.375 / 255.0};
  c.image_size = 1024;
  c.patch_size = 16;
  c.window_size = 14;
  c.use_rel_pos = true;
  c.pixel_mean = sam_mean;
  c.pixel_std = sam_std;
  if (name == "vit_b_sam") {
    c.embed_dim = 768;
    c.depth = 12;
    c.num_heads = 12;
    c.global_attn_indices = {2, 5, 8, 11};
  } else if (name == "vit_l_sam") {
    c.embed_dim = 1024;
    c.depth = 24;
    c.num_heads = 16;
    c.global_attn_indices = {5, 11, 17, 23};
  } else if (name == "vit_h_sam") {
    c.embed_dim = 1280;
    c.depth = 32;
    c.num_heads = 16;
    c.global_attn_indices = {7, 15, 23, 31};
  } else {
    throw ConfigError("model.preset", "unknown preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> encoder_preset_names() { return {"toy_tiny", "toy_small", "vit_b_sam", "vit_l_sam", "vit_h_sam"}; }

std::vector<TensorSpec> encoder_tensor_manifest(const EncoderConfig& c) {
  c.validate();
  const auto d = u32(c.embed_dim);
  const auto p = u32(c.patch_size);
  const auto g = u32(c.grid_size());
  const auto mlp = u32(c.embed_dim * c.mlp_ratio);
  std::vector<TensorSpec> out{
      {"encoder.patch_embed.proj.weight", {d, u32(c.in_channels), p, p}},
      {"encoder.patch_embed.proj.bias", {d}},
      {"encoder.pos_embed", {1, g, g, d}},
  };
  for (int i = 0; i < c.depth; ++i) {
    const auto b = block_name(i);
    out.push_back({b + ".norm1.weight", {d}});
    out.push_back({b + ".norm1.bias", {d}});
    out.push_back({b + ".attn.qkv.weight", {3 * d, d}});
    out.push_back({b + ".attn.qkv.bias", {3 * d}});
    out.push_back({b + ".attn.proj.weight", {d, d}});
    out.push_back({b + ".attn.proj.bias", {d}});
    if (c.use_rel_pos) {
      const auto rows = u32(2 * rel_size_for(c, i) - 1);
      out.push_back({b + ".attn.rel_pos_h", {rows, d / u32(c.num_heads)}});
      out.push_back({b + ".attn.rel_pos_w", {rows, d / u32(c.num_heads)}});
    }
    out.push_back({b + ".norm2.weight", {d}});
    out.push_back({b + ".norm2.bias", {d}});
    out.push_back({b + ".mlp.lin1.weight", {mlp, d}});
    out.push_back({b + ".mlp.lin1.bias", {mlp}});
    out.push_back({b + ".mlp.lin2.weight", {d, mlp}});
    out.push_back({b + ".mlp.lin2.bias", {d}});
  }
  return out;
}

// -- Encoder -------------------------------------------------------------------------

Encoder::Encoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  const auto d = u32(config_.embed_dim);
  const auto p = u32(config_.patch_size);
  const auto g = u32(config_.grid_size());
  patch_weight_ = Param("encoder.patch_embed.proj.weight", {d, u32(config_.in_channels), p, p}, false);
  patch_bias_ = Param("encoder.patch_embed.proj.bias", {d}, false);
  pos_embed_ = Param("encoder.pos_embed", {1, g, g, d}, false);
  blocks_.reserve(config_.depth);
  for (int i = 0; i < config_.depth; ++i) {
    const int window = config_.is_global(i) ? 0 : config_.window_size;
    blocks_.emplace_back(block_name(i), config_.embed_dim, config_.num_heads, config_.embed_dim * config_.mlp_ratio,
                         window, false, config_.use_rel_pos, rel_size_for(config_, i));
  }
}

void Encoder::init_random(std::uint64_t seed) {
  Rng rng(seed);
  const double patch_bound = 1.0 / std::sqrt(static_cast<double>(patch_weight_.value.cols()));
  fill_uniform(patch_weight_.value, rng, patch_bound);
  fill_uniform(patch_bias_.value, rng, patch_bound);
  for (Eigen::Index i = 0; i < pos_embed_.value.size(); ++i) pos_embed_.value.data()[i] = 0.02 * rng.normal();
  for (auto& block : blocks_) {
    block.visit([&](Param& p) {
      if (p.name.ends_with("norm1.weight") || p.name.ends_with("norm2.weight")) {
        p.value.setOnes();
      } else if (p.name.ends_with("norm1.bias") || p.name.ends_with("norm2.bias")) {
        p.value.setZero();
      } else if (p.name.ends_with(".weight")) {
        fill_uniform(p.value, rng, 1.0 / std::sqrt(static_cast<double>(p.value.cols())));
      } else if (p.name.ends_with("rel_pos_h") || p.name.ends_with("rel_pos_w")) {
        fill_uniform(p.value, rng, 0.02);
      } else {
        fill_uniform(p.value, rng, 0.02);
      }
    });
  }
  visit([](Param& p) { round_to_float(p.value); });
}

Mat Encoder::normalized_patches(const ImageTensor& image) const {
  if (image.height() != config_.image_size || image.width() != config_.image_size ||
      image.channels() != config_.in_channels) {
    throw ValidationError("encoder expects " + std::to_string(config_.image_size) + "x" +
                          std::to_string(config_.image_size) + "x" + std::to_string(config_.in_channels) +
                          " input, got " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                          "x" + std::to_string(image.channels()));
  }
  image.validate(false);
  ImageTensor normalized = image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        normalized.at(y, x, c) = (image.at(y, x, c) - config_.pixel_mean[c]) / config_.pixel_std[c];
  return patchify(normalized, config_.patch_size);
}

Mat Encoder::pos_tokens() const {
  return Eigen::Map<const Mat>(pos_embed_.value.data(), config_.num_tokens(), config_.embed_dim);
}

Mat Encoder::patch_embed(const ImageTensor& image) const {
  Mat tokens = normalized_patches(image) * patch_weight_.value.transpose();
  tokens.rowwise() += patch_bias_.value.row(0);
  return tokens;
}

Mat Encoder::encode(const ImageTensor& image, std::span<const PromptFeature> prompts, EncoderCache* cache) const {
  if (static_cast<int>(prompts.size()) != config_.depth) {
    throw ValidationError("encode expects " + std::to_string(config_.depth) + " prompts, got " +
                          std::to_string(prompts.size()));
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].num_tokens() != config_.num_tokens() || prompts[i].dim() != config_.embed_dim) {
      throw ValidationError("prompt " + std::to_string(i) + " has shape " + std::to_string(prompts[i].num_tokens()) +
                            "x" + std::to_string(prompts[i].dim()) + ", expected " +
                            std::to_string(config_.num_tokens()) + "x" + std::to_string(config_.embed_dim));
    }
  }
  const int g = config_.grid_size();
  Mat x = patch_embed(image) + pos_tokens();
  if (cache) {
    cache->blocks.assign(blocks_.size(), {});
    cache->block_outputs.clear();
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i].forward(x + prompts[i].tokens, g, g, cache ? &cache->blocks[i] : nullptr);
    if (cache) cache->block_outputs.push_back(x);
  }
  return x;
}

Mat Encoder::encode_plain(const ImageTensor& image) const {
  const int g = config_.grid_size();
  Mat x = patch_embed(image) + pos_tokens();
  for (const auto& block : blocks_) x = block.forward(x, g, g);
  return x;
}

std::vector<Mat> Encoder::backward(const Mat& d_out, const EncoderCache& cache) {
  const int g = config_.grid_size();
  std::vector<Mat> d_prompts(blocks_.size());
  Mat d = d_out;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    d = blocks_[i].backward(d, g, g, cache.blocks[i]);
    d_prompts[i] = d;
  }
  return d_prompts;
}

void Encoder::visit(const ParamVisitor& fn) {
  fn(patch_weight_);
  fn(patch_bias_);
  fn(pos_embed_);
  for (auto& b : blocks_) b.visit(fn);
}

void Encoder::visit(const ConstParamVisitor& fn) const {
  fn(patch_weight_);
  fn(patch_bias_);
  fn(pos_embed_);
  for (const auto& b : blocks_) b.visit(fn);
}

std::string Encoder::checksum() const {
  Checksum sum;
  visit([&](const Param& p) { sum.add(p); });
  return sum.hex();
}

// -- Decoder -------------------------------------------------------------------------

DecoderConfig DecoderConfig::for_encoder(const EncoderConfig& enc) {
  DecoderConfig c;
  c.embed_dim = enc.embed_dim;
  c.grid_size = enc.grid_size();
  c.image_size = enc.image_size;
  c.upscale = 4;
  c.mask_dim = std::max(8, enc.embed_dim / 8);
  c.mlp_dim = 2 * enc.embed_dim;
  return c;
}

void DecoderConfig::validate() const {
  if (embed_dim <= 0 || grid_size <= 0 || image_size <= 0 || upscale <= 0 || mask_dim <= 0 || mlp_dim <= 0) {
    throw ValidationError("decoder dimensions must be positive");
  }
}

Decoder::Decoder(const DecoderConfig& config) : config_(config) {
  config_.validate();
  const int d = config_.embed_dim;
  const int s2 = config_.upscale * config_.upscale;
  norm_in_ = nn::LayerNorm("decoder.norm_in", d, true);
  output_token_ = Param("decoder.output_token", {1, u32(d)}, true);
  q_proj_ = nn::Linear("decoder.cross_attn.q_proj", d, d, true);
  k_proj_ = nn::Linear("decoder.cross_attn.k_proj", d, d, true);
  v_proj_ = nn::Linear("decoder.cross_attn.v_proj", d, d, true);
  out_proj_ = nn::Linear("decoder.cross_attn.out_proj", d, d, true);
  norm1_ = nn::LayerNorm("decoder.norm1", d, true);
  token_lin1_ = nn::Linear("decoder.token_mlp.lin1", d, config_.mlp_dim, true);
  token_lin2_ = nn::Linear("decoder.token_mlp.lin2", config_.mlp_dim, d, true);
  norm2_ = nn::LayerNorm("decoder.norm2", d, true);
  hyper_lin1_ = nn::Linear("decoder.hyper_mlp.lin1", d, d, true);
  hyper_lin2_ = nn::Linear("decoder.hyper_mlp.lin2", d, config_.mask_dim, true);
  image_lin1_ = nn::Linear("decoder.image_mlp.lin1", d, config_.mlp_dim, true);
  image_lin2_ = nn::Linear("decoder.image_mlp.lin2", config_.mlp_dim, d, true);
  upscale_ = nn::Linear("decoder.output_upscaling", d, s2 * config_.mask_dim, true);
  mask_bias_ = Param("decoder.mask_bias", {1}, true);
  const int sub = config_.grid_size * config_.upscale;
  resize_rows_ = bilinear_matrix(config_.image_size, sub);
  resize_cols_ = bilinear_matrix(config_.image_size, sub);
}

void Decoder::init_random(std::uint64_t seed) {
  Rng rng(seed);
  visit([&](Param& p) {
    if (p.name.find("norm") != std::string::npos) {
      if (p.name.ends_with(".weight")) p.value.setOnes();
      else p.value.setZero();
    } else if (p.name == "decoder.output_token") {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.normal();
    } else if (p.name.ends_with(".weight")) {
      fill_uniform(p.value, rng, 1.0 / std::sqrt(static_cast<double>(p.value.cols())));
    } else {
      p.value.setZero();
    }
  });
  visit([](Param& p) { round_to_float(p.value); });
}

SoftPrediction Decoder::forward(const Mat& embedding, DecoderCache* cache) const {
  const int d = config_.embed_dim;
  const int g = config_.grid_size;
  const int s = config_.upscale;
  const int m = config_.mask_dim;
  if (embedding.cols() != d || embedding.rows() != static_cast<Eigen::Index>(g) * g) {
    throw ValidationError("decoder expects a " + std::to_string(g * g) + "x" + std::to_string(d) +
                          " embedding, got " + std::to_string(embedding.rows()) + "x" +
                          std::to_string(embedding.cols()));
  }
  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  c.embedding = embedding;
  c.ep = norm_in_.forward(embedding, &c.ln_in);

  // Query token cross-attends to the image tokens.
  c.q = q_proj_.forward(output_token_.value);
  c.k = k_proj_.forward(c.ep);
  c.v = v_proj_.forward(c.ep);
  c.attn = nn::softmax_rows((c.q * c.k.transpose()) / std::sqrt(static_cast<double>(d)));
  c.ctx = c.attn * c.v;
  c.t1_pre = output_token_.value + out_proj_.forward(c.ctx);
  c.t1 = norm1_.forward(c.t1_pre, &c.ln1);
  c.tok_hidden = token_lin1_.forward(c.t1);
  const Mat t2_pre = c.t1 + token_lin2_.forward(nn::gelu(c.tok_hidden));
  c.t2 = norm2_.forward(t2_pre, &c.ln2);
  c.hyper_hidden = hyper_lin1_.forward(c.t2);
  c.wvec = hyper_lin2_.forward(nn::gelu(c.hyper_hidden));

  // Image tokens: pointwise residual MLP, then kernel=stride upscaling.
  c.img_hidden = image_lin1_.forward(c.ep);
  c.g = c.ep + image_lin2_.forward(nn::gelu(c.img_hidden));
  c.up_pre = upscale_.forward(c.g);
  c.u = nn::gelu(c.up_pre);

  const int sub = g * s;
  Mat sub_logits(sub, sub);
  const double bias = mask_bias_.value(0, 0);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const int n = gy * g + gx;
      for (int ky = 0; ky < s; ++ky)
        for (int kx = 0; kx < s; ++kx) {
          const int k = ky * s + kx;
          sub_logits(gy * s + ky, gx * s + kx) = c.u.row(n).segment(k * m, m).dot(c.wvec.row(0)) + bias;
        }
    }
  const Mat logits = resize_rows_ * sub_logits * resize_cols_.transpose();
  c.pred = logits.unaryExpr([](double z) { return nn::sigmoid(z); });
  return SoftPrediction(c.pred);
}

Mat Decoder::backward(const Mat& d_pred, const DecoderCache& c) {
  const int d = config_.embed_dim;
  const int g = config_.grid_size;
  const int s = config_.upscale;
  const int m = config_.mask_dim;
  if (d_pred.rows() != c.pred.rows() || d_pred.cols() != c.pred.cols()) {
    throw ValidationError("decoder backward: gradient shape mismatch");
  }
  const Mat d_logits = (d_pred.array() * c.pred.array() * (1.0 - c.pred.array())).matrix();
  const Mat d_sub = resize_rows_.transpose() * d_logits * resize_cols_;
  if (mask_bias_.trainable) mask_bias_.grad(0, 0) += d_sub.sum();

  Mat d_u = Mat::Zero(c.u.rows(), c.u.cols());
  Mat d_wvec = Mat::Zero(1, m);
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      const int n = gy * g + gx;
      for (int ky = 0; ky < s; ++ky)
        for (int kx = 0; kx < s; ++kx) {
          const int k = ky * s + kx;
          const double ds = d_sub(gy * s + ky, gx * s + kx);
          d_u.row(n).segment(k * m, m) += ds * c.wvec.row(0);
          d_wvec.row(0) += ds * c.u.row(n).segment(k * m, m);
        }
    }

  // Image path.
  const Mat d_up_pre = nn::gelu_backward(c.up_pre, d_u);
  const Mat d_g = upscale_.backward(c.g, d_up_pre);
  Mat d_ep = d_g;
  const Mat d_img_act = image_lin2_.backward(nn::gelu(c.img_hidden), d_g);
  d_ep += image_lin1_.backward(c.ep, nn::gelu_backward(c.img_hidden, d_img_act));

  // Token path.
  const Mat d_hyper_act = hyper_lin2_.backward(nn::gelu(c.hyper_hidden), d_wvec);
  const Mat d_t2 = hyper_lin1_.backward(c.t2, nn::gelu_backward(c.hyper_hidden, d_hyper_act));
  const Mat d_t2_pre = norm2_.backward(d_t2, c.ln2);
  const Mat d_tok_act = token_lin2_.backward(nn::gelu(c.tok_hidden), d_t2_pre);
  const Mat d_t1 = d_t2_pre + token_lin1_.backward(c.t1, nn::gelu_backward(c.tok_hidden, d_tok_act));
  const Mat d_t1_pre = norm1_.backward(d_t1, c.ln1);
  Mat d_token = d_t1_pre;
  const Mat d_ctx = out_proj_.backward(c.ctx, d_t1_pre);
  const Mat d_attn = d_ctx * c.v.transpose();
  const Mat d_v = c.attn.transpose() * d_ctx;
  const double row_dot = (d_attn.array() * c.attn.array()).sum();
  const Mat d_scores = (c.attn.array() * (d_attn.array() - row_dot)).matrix() / std::sqrt(static_cast<double>(d));
  const Mat d_q = d_scores * c.k;
  const Mat d_k = d_scores.transpose() * c.q;
  d_token += q_proj_.backward(output_token_.value, d_q);
  d_ep += k_proj_.backward(c.ep, d_k);
  d_ep += v_proj_.backward(c.ep, d_v);
  if (output_token_.trainable) output_token_.grad += d_token;

  return norm_in_.backward(d_ep, c.ln_in);
}

void Decoder::visit(const ParamVisitor& fn) {
  norm_in_.visit(fn);
  fn(output_token_);
  q_proj_.visit(fn);
  k_proj_.visit(fn);
  v_proj_.visit(fn);
  out_proj_.visit(fn);
  norm1_.visit(fn);
  token_lin1_.visit(fn);
  token_lin2_.visit(fn);
  norm2_.visit(fn);
  hyper_lin1_.visit(fn);
  hyper_lin2_.visit(fn);
  image_lin1_.visit(fn);
  image_lin2_.visit(fn);
  upscale_.visit(fn);
  fn(mask_bias_);
}

void Decoder::visit(const ConstParamVisitor& fn) const {
  norm_in_.visit(fn);
  fn(output_token_);
  q_proj_.visit(fn);
  k_proj_.visit(fn);
  v_proj_.visit(fn);
  out_proj_.visit(fn);
  norm1_.visit(fn);
  token_lin1_.visit(fn);
  token_lin2_.visit(fn);
  norm2_.visit(fn);
  hyper_lin1_.visit(fn);
  hyper_lin2_.visit(fn);
  image_lin1_.visit(fn);
  image_lin2_.visit(fn);
  upscale_.visit(fn);
  fn(mask_bias_);
}

std::string Decoder::checksum() const {
  Checksum sum;
  visit([&](const Param& p) { sum.add(p); });
  return sum.hex();
}

SoftPrediction decode(const Decoder& decoder, const Mat& embedding) { return decoder.forward(embedding); }

}  // namespace samadapter
