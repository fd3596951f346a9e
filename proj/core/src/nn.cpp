#include "samadapter/nn.hpp"

#include <cmath>
#include <numbers>

#include "samadapter/error.hpp"

namespace samadapter::nn {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Mat gelu(const Mat& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

Mat gelu_backward(const Mat& x, const Mat& dy) {
  return (x.unaryExpr([](double v) { return gelu_derivative(v); }).array() * dy.array()).matrix();
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits(r, c) - m);
      out(r, c) = e;
      sum += e;
    }
    out.row(r) /= sum;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -- Linear -------------------------------------------------------------------

Linear::Linear(const std::string& name, int in_features, int out_features, bool trainable, bool with_bias)
    : weight_(name + ".weight", {static_cast<std::uint32_t>(out_features), static_cast<std::uint32_t>(in_features)},
              trainable),
      has_bias_(with_bias) {
  if (with_bias) bias_ = Param(name + ".bias", {static_cast<std::uint32_t>(out_features)}, trainable);
}

Mat Linear::forward(const Mat& x) const {
  if (x.cols() != weight_.value.cols()) {
    throw ValidationError(weight_.name + ": input width " + std::to_string(x.cols()) + " != " +
                          std::to_string(weight_.value.cols()));
  }
  Mat y = x * weight_.value.transpose();
  if (has_bias_) y.rowwise() += bias_.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  if (weight_.trainable) {
    weight_.grad.noalias() += dy.transpose() * x;
    if (has_bias_) bias_.grad.row(0) += dy.colwise().sum();
  }
  return dy * weight_.value;
}

void Linear::init_uniform(Rng& rng, double bound) {
  fill_uniform(weight_.value, rng, bound);
  if (has_bias_) bias_.value.setZero();
}

void Linear::visit(const ParamVisitor& fn) {
  fn(weight_);
  if (has_bias_) fn(bias_);
}

void Linear::visit(const ConstParamVisitor& fn) const {
  fn(weight_);
  if (has_bias_) fn(bias_);
}

// -- LayerNorm ----------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, int dim, bool trainable, double eps)
    : weight_(name + ".weight", {static_cast<std::uint32_t>(dim)}, trainable),
      bias_(name + ".bias", {static_cast<std::uint32_t>(dim)}, trainable),
      eps_(eps) {
  weight_.value.setOnes();
}

Mat LayerNorm::forward(const Mat& x, LayerNormCache* cache) const {
  const auto rows = x.rows();
  const auto dim = static_cast<double>(x.cols());
  Mat xhat(rows, x.cols());
  Eigen::VectorXd rstd(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / dim;
    const double var = (x.row(r).array() - mean).square().sum() / dim;
    rstd(r) = 1.0 / std::sqrt(var + eps_);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  Mat y = (xhat.array().rowwise() * weight_.value.row(0).array()).matrix();
  y.rowwise() += bias_.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const LayerNormCache& cache) {
  if (weight_.trainable) {
    weight_.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    bias_.grad.row(0) += dy.colwise().sum();
  }
  const Mat dxhat = (dy.array().rowwise() * weight_.value.row(0).array()).matrix();
  const double dim = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / dim;
    const double mean_dx = (dxhat.row(r).array() * cache.xhat.row(r).array()).sum() / dim;
    dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

void LayerNorm::visit(const ParamVisitor& fn) {
  fn(weight_);
  fn(bias_);
}

void LayerNorm::visit(const ConstParamVisitor& fn) const {
  fn(weight_);
  fn(bias_);
}

// -- Attention ----------------------------------------------------------------

Attention::Attention(const std::string& name, int dim, int num_heads, bool trainable, bool use_rel_pos,
                     int rel_size)
    : qkv_(name + ".qkv", dim, 3 * dim, trainable),
      proj_(name + ".proj", dim, dim, trainable),
      num_heads_(num_heads),
      dim_(dim),
      use_rel_pos_(use_rel_pos) {
  if (num_heads <= 0 || dim % num_heads != 0) {
    throw ValidationError("attention dim must be divisible by num_heads");
  }
  if (use_rel_pos) {
    if (rel_size <= 0) throw ValidationError("relative positions need a positive input size");
    const auto rows = static_cast<std::uint32_t>(2 * rel_size - 1);
    const auto head_dim = static_cast<std::uint32_t>(dim / num_heads);
    rel_pos_h_ = Param(name + ".rel_pos_h", {rows, head_dim}, trainable);
    rel_pos_w_ = Param(name + ".rel_pos_w", {rows, head_dim}, trainable);
  }
}

Mat Attention::forward(const Mat& x, int grid_h, int grid_w, AttentionCache* cache) const {
  const int tokens = static_cast<int>(x.rows());
  const int head_dim = dim_ / num_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (use_rel_pos_ && (2 * grid_h - 1 != rel_pos_h_.value.rows() || 2 * grid_w - 1 != rel_pos_w_.value.rows())) {
    throw ValidationError(rel_pos_h_.name + ": relative position table does not match the attention grid");
  }

  Mat qkv = qkv_.forward(x);
  Mat merged(tokens, dim_);
  std::vector<Mat> probs;
  probs.reserve(num_heads_);
  for (int h = 0; h < num_heads_; ++h) {
    const auto q = qkv.middleCols(h * head_dim, head_dim);
    const auto k = qkv.middleCols(dim_ + h * head_dim, head_dim);
    const auto v = qkv.middleCols(2 * dim_ + h * head_dim, head_dim);
    Mat scores = (q * scale) * k.transpose();
    if (use_rel_pos_) {
      for (int tq = 0; tq < tokens; ++tq) {
        const int qr = tq / grid_w;
        const int qc = tq % grid_w;
        RowVec rel_h(grid_h);
        RowVec rel_w(grid_w);
        for (int kr = 0; kr < grid_h; ++kr) rel_h(kr) = q.row(tq).dot(rel_pos_h_.value.row(qr - kr + grid_h - 1));
        for (int kc = 0; kc < grid_w; ++kc) rel_w(kc) = q.row(tq).dot(rel_pos_w_.value.row(qc - kc + grid_w - 1));
        for (int tk = 0; tk < tokens; ++tk) scores(tq, tk) += rel_h(tk / grid_w) + rel_w(tk % grid_w);
      }
    }
    Mat p = softmax_rows(scores);
    merged.middleCols(h * head_dim, head_dim) = p * v;
    probs.push_back(std::move(p));
  }
  Mat out = proj_.forward(merged);
  if (cache) {
    cache->x = x;
    cache->qkv = std::move(qkv);
    cache->probs = std::move(probs);
    cache->merged = std::move(merged);
  }
  return out;
}

Mat Attention::backward(const Mat& dy, int grid_h, int grid_w, const AttentionCache& cache) {
  const int tokens = static_cast<int>(dy.rows());
  const int head_dim = dim_ / num_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  if (use_rel_pos_ && rel_pos_h_.trainable) {
    throw ValidationError(rel_pos_h_.name + ": trainable relative positions are not supported");
  }

  const Mat dmerged = proj_.backward(cache.merged, dy);
  Mat dqkv = Mat::Zero(tokens, 3 * dim_);
  for (int h = 0; h < num_heads_; ++h) {
    const auto q = cache.qkv.middleCols(h * head_dim, head_dim);
    const auto k = cache.qkv.middleCols(dim_ + h * head_dim, head_dim);
    const auto v = cache.qkv.middleCols(2 * dim_ + h * head_dim, head_dim);
    const Mat& p = cache.probs[h];
    const auto dout = dmerged.middleCols(h * head_dim, head_dim);

    const Mat dp = dout * v.transpose();
    dqkv.middleCols(2 * dim_ + h * head_dim, head_dim) += p.transpose() * dout;
    const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    const Mat dscores = (p.array() * (dp.array().colwise() - row_dot.array())).matrix();

    dqkv.middleCols(h * head_dim, head_dim) += (dscores * k) * scale;
    dqkv.middleCols(dim_ + h * head_dim, head_dim) += (dscores.transpose() * q) * scale;
    if (use_rel_pos_) {
      for (int tq = 0; tq < tokens; ++tq) {
        const int qr = tq / grid_w;
        const int qc = tq % grid_w;
        RowVec drel_h = RowVec::Zero(grid_h);
        RowVec drel_w = RowVec::Zero(grid_w);
        for (int tk = 0; tk < tokens; ++tk) {
          drel_h(tk / grid_w) += dscores(tq, tk);
          drel_w(tk % grid_w) += dscores(tq, tk);
        }
        auto dq = dqkv.block(tq, h * head_dim, 1, head_dim);
        for (int kr = 0; kr < grid_h; ++kr) dq += drel_h(kr) * rel_pos_h_.value.row(qr - kr + grid_h - 1);
        for (int kc = 0; kc < grid_w; ++kc) dq += drel_w(kc) * rel_pos_w_.value.row(qc - kc + grid_w - 1);
      }
    }
  }
  return qkv_.backward(cache.x, dqkv);
}

void Attention::visit(const ParamVisitor& fn) {
  qkv_.visit(fn);
  proj_.visit(fn);
  if (use_rel_pos_) {
    fn(rel_pos_h_);
    fn(rel_pos_w_);
  }
}

void Attention::visit(const ConstParamVisitor& fn) const {
  qkv_.visit(fn);
  proj_.visit(fn);
  if (use_rel_pos_) {
    fn(rel_pos_h_);
    fn(rel_pos_w_);
  }
}

// -- windows --------------------------------------------------------------------

std::vector<Mat> window_partition(const Mat& tokens, int grid_h, int grid_w, int window) {
  const int win_rows = (grid_h + window - 1) / window;
  const int win_cols = (grid_w + window - 1) / window;
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(win_rows) * win_cols);
  for (int wr = 0; wr < win_rows; ++wr) {
    for (int wc = 0; wc < win_cols; ++wc) {
      Mat w = Mat::Zero(window * window, tokens.cols());
      for (int r = 0; r < window; ++r) {
        const int y = wr * window + r;
        if (y >= grid_h) break;
        for (int c = 0; c < window; ++c) {
          const int x = wc * window + c;
          if (x >= grid_w) break;
          w.row(r * window + c) = tokens.row(y * grid_w + x);
        }
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

Mat window_unpartition(const std::vector<Mat>& windows, int grid_h, int grid_w, int window) {
  const int win_cols = (grid_w + window - 1) / window;
  Mat out(static_cast<Eigen::Index>(grid_h) * grid_w, windows.front().cols());
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      const auto& w = windows[static_cast<std::size_t>((y / window) * win_cols + x / window)];
      out.row(y * grid_w + x) = w.row((y % window) * window + x % window);
    }
  }
  return out;
}

// -- Block ----------------------------------------------------------------------

Block::Block(const std::string& name, int dim, int num_heads, int mlp_dim, int window, bool trainable,
             bool use_rel_pos, int rel_size)
    : norm1_(name + ".norm1", dim, trainable),
      attn_(name + ".attn", dim, num_heads, trainable, use_rel_pos, rel_size),
      norm2_(name + ".norm2", dim, trainable),
      lin1_(name + ".mlp.lin1", dim, mlp_dim, trainable),
      lin2_(name + ".mlp.lin2", mlp_dim, dim, trainable),
      window_(window) {}

Mat Block::forward(const Mat& x, int grid_h, int grid_w, BlockCache* cache) const {
  LayerNormCache ln1;
  Mat h = norm1_.forward(x, cache ? &ln1 : nullptr);
  Mat attn_out;
  std::vector<AttentionCache> attn_caches;
  if (window_ > 0) {
    auto windows = window_partition(h, grid_h, grid_w, window_);
    if (cache) attn_caches.resize(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      windows[i] = attn_.forward(windows[i], window_, window_, cache ? &attn_caches[i] : nullptr);
    }
    attn_out = window_unpartition(windows, grid_h, grid_w, window_);
  } else {
    if (cache) attn_caches.resize(1);
    attn_out = attn_.forward(h, grid_h, grid_w, cache ? &attn_caches[0] : nullptr);
  }
  Mat x_mid = x + attn_out;
  LayerNormCache ln2;
  Mat ln2_out = norm2_.forward(x_mid, cache ? &ln2 : nullptr);
  Mat hidden_pre = lin1_.forward(ln2_out);
  Mat out = x_mid + lin2_.forward(gelu(hidden_pre));
  if (cache) {
    cache->x = x;
    cache->ln1 = std::move(ln1);
    cache->attn = std::move(attn_caches);
    cache->x_mid = std::move(x_mid);
    cache->ln2 = std::move(ln2);
    cache->ln2_out = std::move(ln2_out);
    cache->hidden_pre = std::move(hidden_pre);
  }
  return out;
}

Mat Block::backward(const Mat& dy, int grid_h, int grid_w, const BlockCache& cache) {
  // out = x_mid + lin2(gelu(lin1(ln2(x_mid))))
  const Mat dact = lin2_.backward(gelu(cache.hidden_pre), dy);
  const Mat dhidden = gelu_backward(cache.hidden_pre, dact);
  const Mat dln2 = lin1_.backward(cache.ln2_out, dhidden);
  Mat dx_mid = dy + norm2_.backward(dln2, cache.ln2);

  // x_mid = x + attn(ln1(x))
  Mat dh;
  if (window_ > 0) {
    auto dwindows = window_partition(dx_mid, grid_h, grid_w, window_);
    for (std::size_t i = 0; i < dwindows.size(); ++i) {
      dwindows[i] = attn_.backward(dwindows[i], window_, window_, cache.attn[i]);
    }
    dh = window_unpartition(dwindows, grid_h, grid_w, window_);
  } else {
    dh = attn_.backward(dx_mid, grid_h, grid_w, cache.attn[0]);
  }
  return dx_mid + norm1_.backward(dh, cache.ln1);
}

void Block::visit(const ParamVisitor& fn) {
  norm1_.visit(fn);
  attn_.visit(fn);
  norm2_.visit(fn);
  lin1_.visit(fn);
  lin2_.visit(fn);
}

void Block::visit(const ConstParamVisitor& fn) const {
  norm1_.visit(fn);
  attn_.visit(fn);
  norm2_.visit(fn);
  lin1_.visit(fn);
  lin2_.visit(fn);
}

}  // namespace samadapter::nn
