#pragma once

#include <vector>

#include "samadapter/adapter.hpp"
#include "samadapter/backbone.hpp"
#include "samadapter/prompt.hpp"

namespace samadapter {

struct PromptSettings {
  FrequencyMaskSpec hfc;
  /// Weights for [F_hfc, F_pe].
  CompositionWeights weights{{1.0, 1.0}};
};

struct ForwardCache {
  Mat hfc_patches;
  PromptFeature composed;
  std::vector<AdapterCache> adapters;
  EncoderCache encoder;
  DecoderCache decoder;
};

/// Frozen encoder + prompt extractors + adapters + trainable decoder.
///
///   F_i   = w_hfc * embed_hfc(extract_hfc(image)) + w_pe * patch_embed(image)
///   P^i   = adapter_i(F_i)                 for every block i
///   pred  = decode(encode(image, P))
///
/// With adapters disabled every P^i is zero and only the decoder trains.
class SamAdapterModel {
 public:
  SamAdapterModel(Encoder encoder, Decoder decoder, AdapterStack adapters, HfcProjection hfc_projection,
                  PromptSettings prompt, bool adapters_enabled = true);

  SoftPrediction forward(const ImageTensor& image, ForwardCache* cache = nullptr) const;
  /// Decoder on the plain encoder output (no prompt branch at all).
  SoftPrediction forward_baseline(const ImageTensor& image) const;
  /// Per-block prompts P^i for an image.
  std::vector<PromptFeature> prompts(const ImageTensor& image) const;
  PromptFeature composed_prompt(const ImageTensor& image) const;

  /// Back-propagates dL/dpred into adapter, projection and decoder grads.
  void backward(const Mat& d_pred, const ForwardCache& cache);

  /// Adapter params, HFC projection and decoder (decoder only when adapters
  /// are disabled). Never contains an encoder param.
  std::vector<Param*> trainable_parameters();
  void zero_grad();

  bool adapters_enabled() const { return adapters_enabled_; }
  const PromptSettings& prompt_settings() const { return prompt_; }

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  AdapterStack& adapters() { return adapters_; }
  const AdapterStack& adapters() const { return adapters_; }
  HfcProjection& hfc_projection() { return hfc_projection_; }
  const HfcProjection& hfc_projection() const { return hfc_projection_; }

 private:
  Encoder encoder_;
  Decoder decoder_;
  AdapterStack adapters_;
  HfcProjection hfc_projection_;
  PromptSettings prompt_;
  bool adapters_enabled_ = true;
};

}  // namespace samadapter
