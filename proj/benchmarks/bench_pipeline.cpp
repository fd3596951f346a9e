#include <benchmark/benchmark.h>

#include "samadapter/config.hpp"
#include "samadapter/losses.hpp"
#include "samadapter/prompt.hpp"
#include "samadapter/trainer.hpp"

using namespace samadapter;

namespace {

ImageTensor noise_image(int n) {
  Rng rng(3);
  ImageTensor img(n, n, 3);
  for (double& v : img.values()) v = rng.uniform();
  return img;
}

BinaryMask disc_mask(int n) {
  Mat g = Mat::Zero(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) g(y, x) = std::hypot(y - n / 2.0, x - n / 2.0) < n / 4.0 ? 1.0 : 0.0;
  return BinaryMask(g);
}

RunConfig preset_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  c.resize_to = encoder_preset(preset).image_size;
  return c;
}

void BM_ExtractHfc(benchmark::State& state) {
  const ImageTensor img = noise_image(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(extract_hfc(img, {0.25}));
}

void BM_Forward(benchmark::State& state, const std::string& preset) {
  const RunConfig cfg = preset_config(preset);
  const SamAdapterModel model = build_model(cfg);
  const ImageTensor img = noise_image(cfg.resize_to);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(img));
}

void BM_TrainStep(benchmark::State& state, const std::string& preset) {
  const RunConfig cfg = preset_config(preset);
  SamAdapterModel model = build_model(cfg);
  TrainConfig tc = TrainConfig::for_task(Task::camouflage);
  Trainer trainer(model, tc, 1LL << 40);
  const std::vector<Sample> batch{{"a", noise_image(cfg.resize_to), disc_mask(cfg.resize_to)},
                                  {"b", noise_image(cfg.resize_to), disc_mask(cfg.resize_to)}};
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch));
}

}  // namespace

BENCHMARK(BM_ExtractHfc)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Forward, toy_tiny, std::string("toy_tiny"));
BENCHMARK_CAPTURE(BM_Forward, toy_small, std::string("toy_small"));
BENCHMARK_CAPTURE(BM_TrainStep, toy_tiny, std::string("toy_tiny"));
BENCHMARK_CAPTURE(BM_TrainStep, toy_small, std::string("toy_small"));
