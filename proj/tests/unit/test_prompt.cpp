#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles/dense_oracles.hpp"
#include "samadapter/error.hpp"
#include "samadapter/prompt.hpp"
#include "support.hpp"

using namespace samadapter;
using testsupport::random_image;

namespace {

std::vector<oracle::Grid> channels_of(const ImageTensor& img) {
  std::vector<oracle::Grid> out;
  for (int c = 0; c < img.channels(); ++c) out.push_back(testsupport::to_grid(img.channel(c)));
  return out;
}

double max_diff(const ImageTensor& a, const std::vector<oracle::Grid>& b) {
  double m = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) m = std::max(m, std::abs(a.at(y, x, c) - b[c](y, x)));
  return m;
}

double energy(const ImageTensor& img) {
  double s = 0;
  for (double v : img.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("extract_hfc of a constant image is exactly zero") {
  ImageTensor img(16, 16, 3, 0.5);
  for (double tau : {0.05, 0.25, 0.5, 0.9}) {
    const ImageTensor out = extract_hfc(img, {tau});
    for (double v : out.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("extract_hfc with tau 0 is the min-max renormalised input") {
  Rng rng(3);
  const ImageTensor img = random_image(rng, 12, 3);
  const ImageTensor out = extract_hfc(img, {0.0});
  CHECK(max_diff(out, oracle::minmax(channels_of(img))) < 1e-12);
}

TEST_CASE("extract_hfc matches a brute-force DFT on a 4x4 sinusoid") {
  ImageTensor img(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(y, x, 0) = 0.5 + 0.4 * std::cos(2 * std::numbers::pi * x / 4.0);
  const auto expected = oracle::minmax(oracle::hfc_unnormalised(channels_of(img), 0.5));
  CHECK(max_diff(extract_hfc(img, {0.5}), expected) < 1e-9);
}

TEST_CASE("extract_hfc matches the DFT oracle on random non-square images") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int h = 2 + static_cast<int>(rng.below(7)), w = 2 + static_cast<int>(rng.below(7));
    ImageTensor img(h, w, trial % 2 ? 3 : 1);
    for (double& v : img.values()) v = rng.uniform();
    const double tau = rng.uniform(0.0, 0.95);
    const auto residual = oracle::hfc_unnormalised(channels_of(img), tau);
    CHECK(max_diff(hfc_residual(img, {tau}), residual) < 1e-9);
    CHECK(max_diff(extract_hfc(img, {tau}), oracle::minmax(residual)) < 1e-9);
  }
}

TEST_CASE("hfc residual is linear before renormalisation") {
  Rng rng(5);
  const ImageTensor img = random_image(rng, 8, 3);
  ImageTensor scaled = img;
  for (double& v : scaled.values()) v *= 0.37;
  const ImageTensor a = hfc_residual(img, {0.25});
  const ImageTensor b = hfc_residual(scaled, {0.25});
  for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(b.values()[i] == doctest::Approx(0.37 * a.values()[i]).epsilon(1e-12));
}

TEST_CASE("hfc energy is non-increasing in tau") {
  Rng rng(8);
  const ImageTensor img = random_image(rng, 16, 3);
  double prev = INFINITY;
  for (int i = 0; i < 10; ++i) {
    const double e = energy(hfc_residual(img, {i / 10.0}));
    CHECK(e <= prev + 1e-12);
    prev = e;
  }
}

TEST_CASE("extract_hfc rejects bad inputs") {
  ImageTensor img(4, 4, 1, 0.2);
  CHECK_THROWS_AS(extract_hfc(img, {1.0}), ValidationError);
  CHECK_THROWS_AS(extract_hfc(img, {-0.1}), ValidationError);
  img.at(1, 1, 0) = std::nan("");
  CHECK_THROWS_AS(extract_hfc(img, {0.25}), ValidationError);
}

TEST_CASE("masked_extent rounds products that land on integers") {
  CHECK(masked_extent(0.3, 10) == 3);
  CHECK(masked_extent(0.25, 64) == 16);
  CHECK(masked_extent(0.26, 10) == 3);
  CHECK(masked_extent(0.0, 10) == 0);
}

TEST_CASE("embed_hfc") {
  SUBCASE("zero image and zero bias give zero tokens") {
    HfcProjection proj(3, 4, 8);
    Rng rng(1);
    proj.init(rng);
    proj.linear().bias().value.setZero();
    const PromptFeature f = embed_hfc(proj, ImageTensor(8, 8, 3, 0.0));
    CHECK(f.tokens.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("patch size 1 scales pixels by the weight") {
    HfcProjection proj(1, 1, 3);
    proj.linear().weight().value << 2.0, -1.0, 0.5;
    proj.linear().bias().value.setZero();
    ImageTensor img(2, 2, 1);
    img.at(0, 0, 0) = 0.1;
    img.at(0, 1, 0) = 0.2;
    img.at(1, 0, 0) = 0.3;
    img.at(1, 1, 0) = 0.4;
    const PromptFeature f = embed_hfc(proj, img);
    REQUIRE(f.num_tokens() == 4);
    const double px[4] = {0.1, 0.2, 0.3, 0.4};
    for (int t = 0; t < 4; ++t) {
      CHECK(f.tokens(t, 0) == doctest::Approx(2.0 * px[t]));
      CHECK(f.tokens(t, 1) == doctest::Approx(-1.0 * px[t]));
      CHECK(f.tokens(t, 2) == doctest::Approx(0.5 * px[t]));
    }
  }
  SUBCASE("64x64 with 16 px patches gives 16 tokens") {
    HfcProjection proj(3, 16, 32);
    CHECK(embed_hfc(proj, ImageTensor(64, 64, 3, 0.1)).num_tokens() == 16);
  }
  SUBCASE("indivisible size is rejected") {
    HfcProjection proj(3, 16, 32);
    CHECK_THROWS_AS(embed_hfc(proj, ImageTensor(60, 64, 3, 0.1)), ValidationError);
  }
  SUBCASE("projection equals the dense-loop oracle") {
    HfcProjection proj(3, 4, 5);
    Rng rng(2);
    proj.init(rng);
    fill_uniform(proj.linear().bias().value, rng, 0.1);
    const ImageTensor img = random_image(rng, 8, 3);
    const PromptFeature f = embed_hfc(proj, img);
    const double zero_mean[3] = {0, 0, 0}, unit_std[3] = {1, 1, 1};
    const auto& w = proj.linear().weight().value;
    const auto& b = proj.linear().bias().value;
    const auto expected = oracle::patch_embed(img.values(), 8, 3, 4, {w.data(), w.data() + w.size()},
                                              {b.data(), b.data() + b.size()}, 5, zero_mean, unit_std);
    for (int t = 0; t < f.num_tokens(); ++t)
      for (int d = 0; d < 5; ++d) CHECK(f.tokens(t, d) == doctest::Approx(expected[t][d]).epsilon(1e-12));
  }
}

TEST_CASE("extract_patch_embedding") {
  const EncoderConfig cfg = testsupport::micro_encoder();
  Encoder enc(cfg);
  enc.init_random(4);
  Rng rng(9);
  const ImageTensor img = random_image(rng, cfg.image_size);

  SUBCASE("matches the convolution oracle") {
    Param* w = nullptr;
    Param* b = nullptr;
    enc.visit([&](Param& p) {
      if (p.name == "encoder.patch_embed.proj.weight") w = &p;
      if (p.name == "encoder.patch_embed.proj.bias") b = &p;
    });
    REQUIRE(w);
    REQUIRE(b);
    const auto expected = oracle::patch_embed(img.values(), cfg.image_size, 3, cfg.patch_size,
                                              {w->value.data(), w->value.data() + w->value.size()},
                                              {b->value.data(), b->value.data() + b->value.size()}, cfg.embed_dim,
                                              cfg.pixel_mean.data(), cfg.pixel_std.data());
    const PromptFeature f = extract_patch_embedding(img, enc);
    for (int t = 0; t < f.num_tokens(); ++t)
      for (int d = 0; d < f.dim(); ++d) CHECK(f.tokens(t, d) == doctest::Approx(expected[t][d]).epsilon(1e-12));
  }
  SUBCASE("zero image through a zero-bias embed is zero") {
    enc.visit([](Param& p) {
      if (p.name == "encoder.patch_embed.proj.bias") p.value.setZero();
    });
    CHECK(extract_patch_embedding(ImageTensor(16, 16, 3, 0.0), enc).tokens.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("deterministic and size-checked") {
    CHECK(extract_patch_embedding(img, enc).tokens == extract_patch_embedding(img, enc).tokens);
    CHECK_THROWS_AS(extract_patch_embedding(ImageTensor(32, 32, 3, 0.1), enc), ValidationError);
  }
}

TEST_CASE("compose_prompts") {
  Rng rng(12);
  Mat a(4, 3), b(4, 3);
  fill_uniform(a, rng, 1.0);
  fill_uniform(b, rng, 1.0);
  const PromptFeature fa(a), fb(b);
  const std::vector<PromptFeature> both{fa, fb};
  CHECK(compose_prompts(both, {{1.0, 1.0}}).tokens == a + b);
  CHECK(compose_prompts(std::vector<PromptFeature>{fa}, {{1.0}}).tokens == a);
  CHECK(compose_prompts(std::vector<PromptFeature>{fa, fa}, {{1.0, -1.0}}).tokens.cwiseAbs().maxCoeff() == 0.0);
  const std::vector<PromptFeature> swapped{fb, fa};
  CHECK((compose_prompts(both, {{0.3, 0.7}}).tokens - compose_prompts(swapped, {{0.7, 0.3}}).tokens).cwiseAbs().maxCoeff() <
        1e-15);
  CHECK_THROWS_AS(compose_prompts(both, {{1.0}}), ValidationError);
  const std::vector<PromptFeature> mismatched{fa, PromptFeature(Mat::Zero(3, 3))};
  CHECK_THROWS_AS(compose_prompts(mismatched, {{1.0, 1.0}}), ValidationError);
}

TEST_CASE("prompt backward leaves encoder parameters untouched") {
  SamAdapterModel model = testsupport::make_model(testsupport::micro_encoder(), AdapterInit::small_random, 3);
  Rng rng(4);
  const ImageTensor img = random_image(rng, 16);
  const std::string before = model.encoder().checksum();
  ForwardCache cache;
  const SoftPrediction pred = model.forward(img, &cache);
  model.zero_grad();
  model.backward(Mat::Ones(pred.height(), pred.width()), cache);
  CHECK(model.encoder().checksum() == before);
  model.encoder().visit([](const Param& p) { CHECK_FALSE(p.trainable); });
}
