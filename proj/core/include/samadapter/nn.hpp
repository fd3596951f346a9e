#pragma once

#include <string>
#include <vector>

#include "samadapter/tensor.hpp"

namespace samadapter::nn {

// Layers store PyTorch-layout parameters and expose explicit forward /
// backward passes. backward() always returns the input gradient and
// accumulates parameter gradients only into trainable params.

/// Exact (erf) GELU.
double gelu(double x);
double gelu_derivative(double x);
Mat gelu(const Mat& x);
/// dL/dx given pre-activation x and upstream dL/dy.
Mat gelu_backward(const Mat& x, const Mat& dy);

Mat softmax_rows(const Mat& logits);
double sigmoid(double x);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features, bool trainable, bool with_bias = true);

  int in_features() const { return static_cast<int>(weight_.value.cols()); }
  int out_features() const { return static_cast<int>(weight_.value.rows()); }

  Mat forward(const Mat& x) const;
  Mat backward(const Mat& x, const Mat& dy);

  /// Uniform(-bound, bound) weights, zero bias.
  void init_uniform(Rng& rng, double bound);
  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;

  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  Param& bias() { return bias_; }
  const Param& bias() const { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  Param weight_;
  Param bias_;
  bool has_bias_ = true;
};

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd rstd;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim, bool trainable, double eps = 1e-6);

  Mat forward(const Mat& x, LayerNormCache* cache = nullptr) const;
  Mat backward(const Mat& dy, const LayerNormCache& cache);

  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;
  Param bias_;
  double eps_ = 1e-6;
};

struct AttentionCache {
  Mat x;
  Mat qkv;
  std::vector<Mat> probs;  // one T x T matrix per head
  Mat merged;              // T x D, heads concatenated, before proj
};

/// Multi-head self-attention over a th x tw token grid, optionally with
/// decomposed relative position terms.
class Attention {
 public:
  Attention() = default;
  Attention(const std::string& name, int dim, int num_heads, bool trainable, bool use_rel_pos = false,
            int rel_size = 0);

  Mat forward(const Mat& x, int grid_h, int grid_w, AttentionCache* cache = nullptr) const;
  Mat backward(const Mat& dy, int grid_h, int grid_w, const AttentionCache& cache);

  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;

  Linear& qkv() { return qkv_; }
  Linear& proj() { return proj_; }
  bool use_rel_pos() const { return use_rel_pos_; }
  Param& rel_pos_h() { return rel_pos_h_; }
  Param& rel_pos_w() { return rel_pos_w_; }

 private:
  Linear qkv_;
  Linear proj_;
  int num_heads_ = 1;
  int dim_ = 0;
  bool use_rel_pos_ = false;
  Param rel_pos_h_;
  Param rel_pos_w_;
};

/// Row-major window partition of a grid_h x grid_w token grid, zero padded
/// up to multiples of `window`.
std::vector<Mat> window_partition(const Mat& tokens, int grid_h, int grid_w, int window);
Mat window_unpartition(const std::vector<Mat>& windows, int grid_h, int grid_w, int window);

struct BlockCache {
  Mat x;
  LayerNormCache ln1;
  std::vector<AttentionCache> attn;
  Mat x_mid;
  LayerNormCache ln2;
  Mat ln2_out;
  Mat hidden_pre;
};

/// Pre-norm ViT block: x + Attn(LN(x)), then + MLP(LN(.)). window == 0
/// means global attention.
class Block {
 public:
  Block() = default;
  Block(const std::string& name, int dim, int num_heads, int mlp_dim, int window, bool trainable,
        bool use_rel_pos, int rel_size);

  Mat forward(const Mat& x, int grid_h, int grid_w, BlockCache* cache = nullptr) const;
  Mat backward(const Mat& dy, int grid_h, int grid_w, const BlockCache& cache);

  int window() const { return window_; }
  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;

  LayerNorm& norm1() { return norm1_; }
  LayerNorm& norm2() { return norm2_; }
  Attention& attn() { return attn_; }
  Linear& lin1() { return lin1_; }
  Linear& lin2() { return lin2_; }

 private:
  LayerNorm norm1_;
  Attention attn_;
  LayerNorm norm2_;
  Linear lin1_;
  Linear lin2_;
  int window_ = 0;
};

}  // namespace samadapter::nn
