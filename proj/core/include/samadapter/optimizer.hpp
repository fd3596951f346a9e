#pragma once

#include <map>
#include <string>
#include <vector>

#include "samadapter/archive.hpp"
#include "samadapter/tensor.hpp"

namespace samadapter {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  void validate() const;
};

/// AdamW with decoupled weight decay. Moments are keyed by parameter name so
/// they survive a checkpoint round trip.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<Param*> params, AdamWConfig config = {});

  void step(double lr);
  long long steps_taken() const { return t_; }
  const std::vector<Param*>& params() const { return params_; }
  const AdamWConfig& config() const { return config_; }

  /// Stores moments as "optim.m.<name>" / "optim.v.<name>" (f64).
  void save_state(TensorArchive& archive) const;
  void load_state(const TensorArchive& archive, long long step);

 private:
  struct Moments {
    Mat m;
    Mat v;
  };
  std::vector<Param*> params_;
  AdamWConfig config_;
  std::map<std::string, Moments> state_;
  long long t_ = 0;
};

}  // namespace samadapter
