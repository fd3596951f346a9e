#include "samadapter/model.hpp"

#include "samadapter/error.hpp"

namespace samadapter {

SamAdapterModel::SamAdapterModel(Encoder encoder, Decoder decoder, AdapterStack adapters, HfcProjection hfc_projection,
                                 PromptSettings prompt, bool adapters_enabled)
    : encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      adapters_(std::move(adapters)),
      hfc_projection_(std::move(hfc_projection)),
      prompt_(std::move(prompt)),
      adapters_enabled_(adapters_enabled) {
  const auto& enc = encoder_.config();
  prompt_.hfc.validate();
  if (prompt_.weights.weights.size() != 2) {
    throw ValidationError("composition weights must list [w_hfc, w_pe]");
  }
  if (adapters_.num_layers() != enc.depth) {
    throw ValidationError("adapter stack has " + std::to_string(adapters_.num_layers()) + " layers, encoder depth is " +
                          std::to_string(enc.depth));
  }
  if (adapters_.config().input_dim != enc.embed_dim || adapters_.config().out_dim != enc.embed_dim) {
    throw ValidationError("adapter input/output dims must equal the encoder embedding width");
  }
  if (hfc_projection_.embed_dim() != enc.embed_dim || hfc_projection_.patch_size() != enc.patch_size) {
    throw ValidationError("HFC projection does not match the encoder patch grid");
  }
  if (decoder_.config().embed_dim != enc.embed_dim || decoder_.config().grid_size != enc.grid_size()) {
    throw ValidationError("decoder does not match the encoder embedding");
  }
}

PromptFeature SamAdapterModel::composed_prompt(const ImageTensor& image) const {
  const ImageTensor hfc = extract_hfc(image, prompt_.hfc);
  const std::vector<PromptFeature> features{hfc_projection_.embed(hfc), extract_patch_embedding(image, encoder_)};
  return compose_prompts(features, prompt_.weights);
}

std::vector<PromptFeature> SamAdapterModel::prompts(const ImageTensor& image) const {
  const int depth = encoder_.config().depth;
  std::vector<PromptFeature> out;
  out.reserve(depth);
  if (!adapters_enabled_) {
    for (int i = 0; i < depth; ++i) {
      out.emplace_back(Mat::Zero(encoder_.config().num_tokens(), encoder_.config().embed_dim));
    }
    return out;
  }
  const PromptFeature f = composed_prompt(image);
  for (int i = 0; i < depth; ++i) out.push_back(adapters_.forward(f, i));
  return out;
}

SoftPrediction SamAdapterModel::forward(const ImageTensor& image, ForwardCache* cache) const {
  const int depth = encoder_.config().depth;
  std::vector<PromptFeature> p;
  p.reserve(depth);
  if (adapters_enabled_) {
    const ImageTensor hfc = extract_hfc(image, prompt_.hfc);
    Mat patches = patchify(hfc, hfc_projection_.patch_size());
    const std::vector<PromptFeature> features{hfc_projection_.embed(hfc), extract_patch_embedding(image, encoder_)};
    PromptFeature composed = compose_prompts(features, prompt_.weights);
    if (cache) cache->adapters.assign(depth, {});
    for (int i = 0; i < depth; ++i) p.push_back(adapters_.forward(composed, i, cache ? &cache->adapters[i] : nullptr));
    if (cache) {
      cache->hfc_patches = std::move(patches);
      cache->composed = std::move(composed);
    }
  } else {
    p = prompts(image);
  }
  const Mat embedding = encoder_.encode(image, p, cache ? &cache->encoder : nullptr);
  return decoder_.forward(embedding, cache ? &cache->decoder : nullptr);
}

SoftPrediction SamAdapterModel::forward_baseline(const ImageTensor& image) const {
  return decoder_.forward(encoder_.encode_plain(image));
}

void SamAdapterModel::backward(const Mat& d_pred, const ForwardCache& cache) {
  const Mat d_embedding = decoder_.backward(d_pred, cache.decoder);
  if (!adapters_enabled_) return;
  const std::vector<Mat> d_prompts = encoder_.backward(d_embedding, cache.encoder);
  Mat d_composed = Mat::Zero(cache.composed.tokens.rows(), cache.composed.tokens.cols());
  for (int i = 0; i < adapters_.num_layers(); ++i) {
    d_composed += adapters_.backward(cache.composed, i, d_prompts[static_cast<std::size_t>(i)], cache.adapters[i]);
  }
  hfc_projection_.backward(cache.hfc_patches, prompt_.weights.weights[0] * d_composed);
}

std::vector<Param*> SamAdapterModel::trainable_parameters() {
  std::vector<Param*> out;
  if (adapters_enabled_) {
    out = adapters_.trainable_parameters();
    hfc_projection_.visit([&](Param& p) { out.push_back(&p); });
  }
  decoder_.visit([&](Param& p) { out.push_back(&p); });
  return out;
}

void SamAdapterModel::zero_grad() {
  for (Param* p : trainable_parameters()) p->zero_grad();
}

}  // namespace samadapter
