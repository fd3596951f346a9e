#include <doctest.h>

#include "oracles/dense_oracles.hpp"
#include "samadapter/adapter.hpp"
#include "samadapter/error.hpp"
#include "support.hpp"

using namespace samadapter;

namespace {

AdapterConfig config(int layers, int din, int dmid, int dout, AdapterInit init) {
  AdapterConfig c;
  c.num_layers = layers;
  c.input_dim = din;
  c.mid_dim = dmid;
  c.out_dim = dout;
  c.init_scheme = init;
  return c;
}

PromptFeature random_feature(Rng& rng, int n, int d) {
  Mat m(n, d);
  fill_uniform(m, rng, 1.0);
  return PromptFeature(m);
}

oracle::Vec flat(const Mat& m) { return {m.data(), m.data() + m.size()}; }

}  // namespace

TEST_CASE("zero_up adapters emit zero prompts") {
  Rng rng(1);
  for (std::uint64_t seed : {0u, 7u, 99u}) {
    const AdapterStack stack = init_adapters(config(4, 8, 32, 8, AdapterInit::zero_up), seed);
    for (int i = 0; i < 4; ++i) CHECK(adapter_forward(stack, random_feature(rng, 5, 8), i).tokens.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("zero features with zero biases give zero prompts") {
  AdapterStack stack = init_adapters(config(2, 4, 3, 4, AdapterInit::small_random), 2);
  stack.visit([](Param& p) {
    if (p.name.ends_with(".bias")) p.value.setZero();
  });
  CHECK(adapter_forward(stack, PromptFeature(Mat::Zero(3, 4)), 1).tokens.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adapter_forward matches the dense-algebra oracle") {
  AdapterStack stack = init_adapters(config(2, 3, 2, 3, AdapterInit::small_random), 0);
  stack.tune(1).weight().value << 0.5, -0.25, 1.0, 0.75, 0.1, -0.6;
  stack.tune(1).bias().value << 0.05, -0.1;
  stack.shared_up().weight().value << 1.0, -1.0, 0.2, 0.3, -0.4, 0.9;
  stack.shared_up().bias().value << 0.01, 0.02, 0.03;
  Mat f(2, 3);
  f << 0.3, -0.7, 1.2, -0.5, 0.25, 0.8;
  const PromptFeature p = adapter_forward(stack, PromptFeature(f), 1);
  const auto expected = oracle::adapter({{0.3, -0.7, 1.2}, {-0.5, 0.25, 0.8}}, flat(stack.tune(1).weight().value),
                                        flat(stack.tune(1).bias().value), flat(stack.shared_up().weight().value),
                                        flat(stack.shared_up().bias().value), 3, 2, 3);
  for (int t = 0; t < 2; ++t)
    for (int d = 0; d < 3; ++d) CHECK(p.tokens(t, d) == doctest::Approx(expected[t][d]).epsilon(1e-14));
}

TEST_CASE("adapter_forward validates its inputs") {
  const AdapterStack stack = init_adapters(config(2, 4, 3, 4, AdapterInit::zero_up), 0);
  CHECK_THROWS_AS(adapter_forward(stack, PromptFeature(Mat::Zero(2, 4)), 2), ValidationError);
  CHECK_THROWS_AS(adapter_forward(stack, PromptFeature(Mat::Zero(2, 4)), -1), ValidationError);
  CHECK_THROWS_AS(adapter_forward(stack, PromptFeature(Mat::Zero(2, 5)), 0), ValidationError);
}

TEST_CASE("init_adapters is seeded") {
  const auto a = init_adapters(config(3, 8, 16, 8, AdapterInit::small_random), 7);
  const auto b = init_adapters(config(3, 8, 16, 8, AdapterInit::small_random), 7);
  const auto c = init_adapters(config(3, 8, 16, 8, AdapterInit::small_random), 8);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.tune(0).weight().value != c.tune(0).weight().value);
}

TEST_CASE("trainable_parameters lists the shared up-projection once") {
  const auto stack = init_adapters(config(4, 8, 32, 8, AdapterInit::zero_up), 0);
  CHECK(stack.parameter_count() == 4u * (8 * 32 + 32) + (32 * 8 + 8));
  const auto bigger = init_adapters(config(5, 8, 32, 8, AdapterInit::zero_up), 0);
  CHECK(bigger.parameter_count() - stack.parameter_count() == 8u * 32 + 32);
  const auto params = stack.trainable_parameters();
  int up = 0;
  for (const Param* p : params) {
    CHECK(p->trainable);
    CHECK_FALSE(p->name.starts_with("encoder."));
    if (p->name.starts_with("adapter.shared_up")) {
      ++up;
      CHECK(p->value.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK(up == 2);  // weight and bias
}

TEST_CASE("shared up-projection couples every layer, tune layers do not") {
  Rng rng(3);
  AdapterStack stack = init_adapters(config(3, 4, 5, 4, AdapterInit::small_random), 1);
  const PromptFeature f = random_feature(rng, 3, 4);
  std::vector<Mat> base;
  for (int i = 0; i < 3; ++i) base.push_back(adapter_forward(stack, f, i).tokens);

  const double saved = stack.shared_up().weight().value(0, 0);
  stack.shared_up().weight().value(0, 0) += 0.1;
  for (int i = 0; i < 3; ++i) CHECK(adapter_forward(stack, f, i).tokens != base[i]);
  stack.shared_up().weight().value(0, 0) = saved;

  stack.tune(1).weight().value(0, 0) += 0.1;
  CHECK(adapter_forward(stack, f, 0).tokens == base[0]);
  CHECK(adapter_forward(stack, f, 1).tokens != base[1]);
  CHECK(adapter_forward(stack, f, 2).tokens == base[2]);
}

TEST_CASE("adapter gradients match central differences") {
  Rng rng(21);
  AdapterStack stack = init_adapters(config(3, 6, 5, 6, AdapterInit::small_random), 4);
  PromptFeature f = random_feature(rng, 4, 6);
  std::vector<Mat> weights;
  for (int i = 0; i < 3; ++i) {
    Mat r(4, 6);
    fill_uniform(r, rng, 1.0);
    weights.push_back(r);
  }
  auto loss = [&] {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += adapter_forward(stack, f, i).tokens.cwiseProduct(weights[i]).sum();
    return s;
  };
  for (Param* p : stack.trainable_parameters()) p->zero_grad();
  Mat df = Mat::Zero(4, 6);
  for (int i = 0; i < 3; ++i) {
    AdapterCache cache;
    stack.forward(f, i, &cache);
    df += stack.backward(f, i, weights[i], cache);
  }
  for (Param* p : stack.trainable_parameters()) {
    const auto r = testsupport::finite_difference(*p, loss);
    INFO(r.name);
    CHECK(r.rel_error < 1e-6);
  }
  // Input gradient.
  Param input("input", {4, 6});
  input.value = f.tokens;
  input.grad = df;
  const auto r = testsupport::finite_difference(input, [&] {
    f.tokens = input.value;
    return loss();
  });
  CHECK(r.rel_error < 1e-6);
}
