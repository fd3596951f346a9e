#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace samadapter {

/// Dense row-major double matrix; tokens are rows, channels are columns.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using Shape = std::vector<std::uint32_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// A named tensor owned by a layer. `shape` follows the archive (PyTorch)
/// convention; `value` stores it as shape[0] x prod(shape[1:]) (1 x n for
/// vectors).
struct Param {
  std::string name;
  Shape shape;
  Mat value;
  Mat grad;
  bool trainable = true;

  Param() = default;
  Param(std::string name, Shape shape, bool trainable = true);

  std::size_t numel() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad();
};

using ParamVisitor = std::function<void(Param&)>;
using ConstParamVisitor = std::function<void(const Param&)>;

/// FNV-1a over names, shapes and raw value bytes of every visited param.
class Checksum {
 public:
  void add(const Param& p);
  void add_bytes(const void* data, std::size_t n);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

/// Deterministic generator with portable uniform/normal draws (std
/// distributions are implementation-defined, so they are avoided).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9E3779B97F4A7C15ull) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::uint64_t state_;
};

void fill_uniform(Mat& m, Rng& rng, double bound);
/// Rounds every entry to the nearest float so the value survives a 32-bit
/// archive round trip unchanged.
void round_to_float(Mat& m);

}  // namespace samadapter
