#include "samadapter/adapter.hpp"

#include <cmath>

#include "samadapter/error.hpp"

namespace samadapter {

void AdapterConfig::validate() const {
  if (num_layers < 1) throw ValidationError("adapter num_layers must be >= 1");
  if (input_dim < 1 || mid_dim < 1 || out_dim < 1) throw ValidationError("adapter dimensions must be >= 1");
}

AdapterStack::AdapterStack(const AdapterConfig& config) : config_(config) {
  config_.validate();
  tune_.reserve(config_.num_layers);
  for (int i = 0; i < config_.num_layers; ++i) {
    tune_.emplace_back("adapter.tune." + std::to_string(i), config_.input_dim, config_.mid_dim, true);
  }
  up_ = nn::Linear("adapter.shared_up", config_.mid_dim, config_.out_dim, true);
}

void AdapterStack::check_layer(int layer) const {
  if (layer < 0 || layer >= num_layers()) {
    throw ValidationError("adapter layer " + std::to_string(layer) + " outside [0, " + std::to_string(num_layers()) +
                          ")");
  }
}

PromptFeature AdapterStack::forward(const PromptFeature& features, int layer, AdapterCache* cache) const {
  check_layer(layer);
  if (features.dim() != config_.input_dim) {
    throw ValidationError("adapter input width " + std::to_string(features.dim()) + " != " +
                          std::to_string(config_.input_dim));
  }
  Mat pre = tune_[static_cast<std::size_t>(layer)].forward(features.tokens);
  PromptFeature out(up_.forward(nn::gelu(pre)));
  if (cache) cache->tune_pre = std::move(pre);
  return out;
}

Mat AdapterStack::backward(const PromptFeature& features, int layer, const Mat& d_prompt, const AdapterCache& cache) {
  check_layer(layer);
  const Mat d_act = up_.backward(nn::gelu(cache.tune_pre), d_prompt);
  return tune_[static_cast<std::size_t>(layer)].backward(features.tokens, nn::gelu_backward(cache.tune_pre, d_act));
}

std::vector<Param*> AdapterStack::trainable_parameters() {
  std::vector<Param*> out;
  visit([&](Param& p) { out.push_back(&p); });
  return out;
}

std::vector<const Param*> AdapterStack::trainable_parameters() const {
  std::vector<const Param*> out;
  visit([&](const Param& p) { out.push_back(&p); });
  return out;
}

std::size_t AdapterStack::parameter_count() const {
  std::size_t n = 0;
  visit([&](const Param& p) { n += p.numel(); });
  return n;
}

void AdapterStack::visit(const ParamVisitor& fn) {
  for (auto& t : tune_) t.visit(fn);
  up_.visit(fn);
}

void AdapterStack::visit(const ConstParamVisitor& fn) const {
  for (const auto& t : tune_) t.visit(fn);
  up_.visit(fn);
}

std::string AdapterStack::checksum() const {
  Checksum sum;
  visit([&](const Param& p) { sum.add(p); });
  return sum.hex();
}

AdapterStack init_adapters(const AdapterConfig& config, std::uint64_t seed) {
  AdapterStack stack(config);
  Rng rng(seed);
  const double tune_bound = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  for (int i = 0; i < stack.num_layers(); ++i) stack.tune(i).init_uniform(rng, tune_bound);
  if (config.init_scheme == AdapterInit::zero_up) {
    stack.shared_up().weight().value.setZero();
    stack.shared_up().bias().value.setZero();
  } else {
    stack.shared_up().init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(config.mid_dim)));
  }
  stack.visit([](Param& p) { round_to_float(p.value); });
  return stack;
}

PromptFeature adapter_forward(const AdapterStack& stack, const PromptFeature& features, int layer) {
  return stack.forward(features, layer);
}

}  // namespace samadapter
