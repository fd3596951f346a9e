#pragma once

#include <cstdint>
#include <vector>

#include "samadapter/nn.hpp"
#include "samadapter/prompt.hpp"

namespace samadapter {

enum class AdapterInit { zero_up, small_random };

struct AdapterConfig {
  int num_layers = 4;
  int input_dim = 32;
  int mid_dim = 32;
  int out_dim = 32;
  AdapterInit init_scheme = AdapterInit::zero_up;

  void validate() const;
};

struct AdapterCache {
  Mat tune_pre;  // MLP_tune^i(F_i)
};

/// One tune layer per backbone block plus a single up-projection shared by
/// every layer: P^i = MLP_up(GELU(MLP_tune^i(F_i))).
class AdapterStack {
 public:
  AdapterStack() = default;
  explicit AdapterStack(const AdapterConfig& config);

  const AdapterConfig& config() const { return config_; }
  int num_layers() const { return static_cast<int>(tune_.size()); }

  PromptFeature forward(const PromptFeature& features, int layer, AdapterCache* cache = nullptr) const;
  /// Accumulates gradients for tune^layer and the shared up-projection and
  /// returns dL/dF_i.
  Mat backward(const PromptFeature& features, int layer, const Mat& d_prompt, const AdapterCache& cache);

  /// Every adapter parameter exactly once (shared_up is not repeated).
  std::vector<Param*> trainable_parameters();
  std::vector<const Param*> trainable_parameters() const;
  std::size_t parameter_count() const;

  nn::Linear& tune(int layer) { return tune_.at(static_cast<std::size_t>(layer)); }
  const nn::Linear& tune(int layer) const { return tune_.at(static_cast<std::size_t>(layer)); }
  nn::Linear& shared_up() { return up_; }
  const nn::Linear& shared_up() const { return up_; }

  void visit(const ParamVisitor& fn);
  void visit(const ConstParamVisitor& fn) const;
  std::string checksum() const;

 private:
  void check_layer(int layer) const;

  AdapterConfig config_;
  std::vector<nn::Linear> tune_;
  nn::Linear up_;
};

/// Tune layers get uniform(-1/sqrt(in), 1/sqrt(in)) keyed by seed; the
/// shared up-projection is zero under zero_up so every P^i starts at 0.
AdapterStack init_adapters(const AdapterConfig& config, std::uint64_t seed);

PromptFeature adapter_forward(const AdapterStack& stack, const PromptFeature& features, int layer);

}  // namespace samadapter
