#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "gradcheck.hpp"
#include "support.hpp"
#include "vseg/error.hpp"
#include "vseg/loss.hpp"
#include "vseg/nn.hpp"

using namespace vseg;

namespace {

template <typename T>
Tensor3<T> random_input(int channels, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor3<T> x{channels, h, w, std::vector<T>(static_cast<std::size_t>(channels) * h * w)};
  for (auto& v : x.data) v = static_cast<T>(unit(rng));
  return x;
}

std::vector<float> random_labels(std::size_t n, std::uint64_t seed, double rate = 0.3) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(rate);
  std::vector<float> out(n);
  for (auto& l : out) l = coin(rng) ? 1.0f : 0.0f;
  return out;
}

// Parameter count by enumerating the node grid directly.
std::size_t count_oracle(int depth, int base, int cap, int in) {
  auto ch = [&](int i) { return std::min(base << i, cap); };
  std::size_t total = 0;
  for (int i = 0; i < depth; ++i)
    for (int j = 0; i + j < depth; ++j) {
      int inputs = 0;
      if (j == 0) inputs = i == 0 ? in : ch(i - 1);
      else inputs = ch(i + 1) + j * ch(i);
      const std::size_t c = ch(i);
      total += inputs * c * 9 + c + c * c * 9 + c;
    }
  return total + 2 * static_cast<std::size_t>(ch(0)) + 2;
}

template <typename T>
std::size_t total_values(const NestedUNet<T>& m) {
  std::size_t n = 0;
  for (const auto& p : m.parameters()) n += p.value.size();
  return n;
}

}  // namespace

TEST_CASE("forward output shape and normalization") {
  const ModelConfig cfg;
  const NestedUNet<float> model(cfg, 1);
  const auto prob = model.infer(random_input<float>(9, 16, 16, 2));
  CHECK(prob.height == 16);
  CHECK(prob.width == 16);
  REQUIRE(prob.data.size() == 2 * 256);
  for (std::size_t p = 0; p < prob.pixels(); ++p) {
    REQUIRE(std::abs(prob.background(p) + prob.foreground(p) - 1.0f) <= 1e-6f);
    REQUIRE(prob.foreground(p) > 0.0f);
    REQUIRE(prob.foreground(p) < 1.0f);
  }
}

TEST_CASE("zero head gives exactly one half") {
  NestedUNet<float> model(ModelConfig{}, 3);
  for (auto& v : model.parameter("head.weight").value) v = 0.0f;
  for (auto& v : model.parameter("head.bias").value) v = 0.0f;
  const auto prob = model.infer(random_input<float>(9, 8, 12, 4));
  for (float v : prob.data) REQUIRE(v == 0.5f);
}

TEST_CASE("shape violations name the node") {
  NestedUNet<float> model(ModelConfig{}, 1);
  try {
    model.forward(random_input<float>(7, 16, 16, 1));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("x0_0") != std::string::npos);
  }
  try {
    model.forward(random_input<float>(9, 16, 10, 1));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("x2_0") != std::string::npos);
  }
}

TEST_CASE("backward before forward is a state error") {
  NestedUNet<float> model(ModelConfig{}, 1);
  ProbMap<float> g{4, 4, std::vector<float>(32)};
  CHECK_THROWS_AS(model.backward(g), StateError);
  CHECK_THROWS_AS(sgd_step(model, 0.1), StateError);
}

TEST_CASE("parameter count matches the formula and construction") {
  CHECK(parameter_count(ModelConfig{}) == 33098);
  CHECK(count_oracle(3, 8, 64, 9) == 33098);
  for (int depth = 1; depth <= 4; ++depth)
    for (int base : {2, 4, 8}) {
      ModelConfig c;
      c.depth = depth;
      c.base_channels = base;
      c.max_channels = 16;
      CHECK(parameter_count(c) == count_oracle(depth, base, 16, 9));
      CHECK(total_values(NestedUNet<float>(c, 0)) == parameter_count(c));
    }
  CHECK(parameter_count(testing::tiny_model()) <= 5000);
}

TEST_CASE("config invariants") {
  ModelConfig c;
  c.in_channels = 7;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = ModelConfig{};
  c.depth = 0;
  CHECK_THROWS_AS(NestedUNet<float>(c, 0), ArgumentError);
  c = ModelConfig{};
  c.out_channels = 3;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("gradients match central differences") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto r = testing::gradient_check(seed);
    INFO("seed " << seed << ": compared " << r.compared << ", kink crossings "
                 << r.kink_crossings << ", max rel err " << r.max_relative_error);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.compared > r.parameters / 3);
  }
}

TEST_CASE("finite difference error shrinks quadratically with the step") {
  // Seed 11 holds a 3e-7 weight gradient whose h = 1e-3 quotient is off by
  // 2e-4 relative. The h^2 scaling shows that is truncation, not a wrong
  // analytic gradient.
  const auto coarse = testing::gradient_check(11, 1e-3);
  const auto fine = testing::gradient_check(11, 2.5e-4);
  INFO("h=1e-3: " << coarse.max_relative_error << ", h=2.5e-4: " << fine.max_relative_error);
  CHECK(fine.max_relative_error < coarse.max_relative_error / 8);
  CHECK(fine.max_relative_error < 1e-4);
}

TEST_CASE("backward is linear in the upstream gradient") {
  NestedUNet<double> model(testing::tiny_model(), 5);
  const auto x = random_input<double>(3, 8, 8, 6);
  const auto prob = model.forward(x);
  ProbMap<double> g{8, 8, std::vector<double>(128)};
  model.backward(g);
  for (const auto& p : model.parameters())
    for (double v : p.grad) REQUIRE(v == 0.0);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (auto& v : g.data) v = n01(rng);
  model.zero_grad();
  model.backward(g);
  std::vector<std::vector<double>> once;
  for (const auto& p : model.parameters()) once.push_back(p.grad);
  for (auto& v : g.data) v *= 2.0;
  model.zero_grad();
  model.backward(g);
  for (std::size_t k = 0; k < once.size(); ++k)
    for (std::size_t i = 0; i < once[k].size(); ++i)
      REQUIRE(model.parameters()[k].grad[i] == 2.0 * once[k][i]);
}

TEST_CASE("logit gradient path agrees with the probability path") {
  NestedUNet<double> a(testing::tiny_model(), 8), b(testing::tiny_model(), 8);
  const auto x = random_input<double>(3, 8, 8, 9);
  const auto labels = random_labels(64, 10);
  const auto la = nll_loss(a.forward(x), labels);
  a.backward(la.grad);
  const auto lb = nll_loss(b.forward(x), labels);
  b.backward_logits(lb.logit_grad);
  for (std::size_t k = 0; k < a.parameters().size(); ++k)
    for (std::size_t i = 0; i < a.parameters()[k].grad.size(); ++i)
      REQUIRE(std::abs(a.parameters()[k].grad[i] - b.parameters()[k].grad[i]) <= 1e-12);
}

TEST_CASE("sgd update rule") {
  // Exercise one scalar of a double model; everything else has zero gradient.
  NestedUNet<double> model(testing::tiny_model(), 1);
  model.forward(random_input<double>(3, 8, 8, 1));
  model.backward(ProbMap<double>{8, 8, std::vector<double>(128)});
  auto& p = model.parameter("head.bias");
  p.value[0] = 1.0;
  p.grad[0] = 0.5;
  sgd_step(model, 0.1, 0.99, 1e-8);
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * (0.5 + 1e-8 * 1.0)).epsilon(1e-15));
  CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-7));
  CHECK(p.grad[0] == 0.0);  // cleared

  // Second identical gradient: step = lr * (0.99 * g + g) = 1.99 * lr * g.
  model.forward(random_input<double>(3, 8, 8, 1));
  model.backward(ProbMap<double>{8, 8, std::vector<double>(128)});
  const double before = p.value[0];
  p.grad[0] = 0.5;
  sgd_step(model, 0.1, 0.99, 0.0);
  CHECK(before - p.value[0] ==
        doctest::Approx(0.1 * (0.99 * (0.5 + 1e-8) + 0.5)).epsilon(1e-12));
  CHECK(before - p.value[0] == doctest::Approx(1.99 * 0.1 * 0.5).epsilon(1e-7));
}

TEST_CASE("sgd with zero gradient only decays") {
  NestedUNet<double> model(testing::tiny_model(), 2);
  std::vector<std::vector<double>> before;
  for (const auto& p : model.parameters()) before.push_back(p.value);
  model.forward(random_input<double>(3, 8, 8, 1));
  model.backward(ProbMap<double>{8, 8, std::vector<double>(128)});
  sgd_step(model, 0.1, 0.99, 1e-8);
  for (std::size_t k = 0; k < before.size(); ++k)
    for (std::size_t i = 0; i < before[k].size(); ++i) {
      const double w = before[k][i];
      REQUIRE(model.parameters()[k].value[i] == doctest::Approx(w - 0.1 * 1e-8 * w).epsilon(1e-15));
    }
}

TEST_CASE("stepped learning rate") {
  CHECK(step_lr(0) == 0.001);
  CHECK(step_lr(19, 0.001, 0.1, 20) == 0.001);
  CHECK(step_lr(20, 0.001, 0.1, 20) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(step_lr(40, 0.001, 0.1, 20) == doctest::Approx(0.00001).epsilon(1e-12));
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto run = [] {
    NestedUNet<float> m(ModelConfig{}, 42);
    const auto x = random_input<float>(9, 16, 16, 1);
    const auto labels = random_labels(256, 2);
    for (int s = 0; s < 5; ++s) {
      const auto l = nll_loss(m.forward(x), labels);
      m.backward(l.grad);
      sgd_step(m, 0.001);
    }
    return m;
  };
  const auto a = run(), b = run();
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    const auto& pa = a.parameters()[k].value;
    const auto& pb = b.parameters()[k].value;
    REQUIRE(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("loss decreases on a fixed batch") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    NestedUNet<float> m(ModelConfig{}, seed);
    const auto x = random_input<float>(9, 16, 16, seed);
    const auto labels = random_labels(256, seed + 100);
    double previous = 0.0;
    int decreases = 0;
    for (int s = 0; s <= 50; ++s) {
      const auto l = nll_loss(m.forward(x), labels);
      if (s > 0 && l.loss < previous) ++decreases;
      previous = l.loss;
      m.backward_logits(l.logit_grad);
      // Momentum 0.99 (the training default) oscillates on a single batch
      // by design, so the smoke test uses 0.9.
      sgd_step(m, 0.001, 0.9, 1e-8);
    }
    INFO("seed " << seed << ": " << decreases << " decreases");
    CHECK(decreases >= 45);
  }
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir;
  ModelConfig cfg;
  cfg.base_channels = 4;
  NestedUNet<float> m(cfg, 9);
  const auto x = random_input<float>(9, 8, 8, 3);
  const auto l = nll_loss(m.forward(x), random_labels(64, 4));
  m.backward(l.grad);
  sgd_step(m, 0.001);
  save_checkpoint(dir / "m.ckpt", m, {12, 2});
  const Checkpoint c = load_checkpoint(dir / "m.ckpt");
  CHECK(c.meta.epoch == 12);
  CHECK(c.meta.stage == 2);
  CHECK(c.model.config() == cfg);
  REQUIRE(c.model.parameters().size() == m.parameters().size());
  for (std::size_t k = 0; k < m.parameters().size(); ++k) {
    const auto& a = m.parameters()[k];
    const auto& b = c.model.parameters()[k];
    CHECK(a.name == b.name);
    CHECK(a.shape == b.shape);
    REQUIRE(std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)) == 0);
    REQUIRE(std::memcmp(a.momentum.data(), b.momentum.data(), a.momentum.size() * sizeof(float)) == 0);
  }
  const auto p1 = m.infer(x), p2 = c.model.infer(x);
  CHECK(std::memcmp(p1.data.data(), p2.data.data(), p1.data.size() * sizeof(float)) == 0);
}

TEST_CASE("corrupt checkpoints are rejected") {
  testing::TempDir dir;
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << "NOTACKPT";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ParseError);
  save_checkpoint(dir / "m.ckpt", NestedUNet<float>(ModelConfig{}, 1), {1, 1});
  std::filesystem::resize_file(dir / "m.ckpt", 200);
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}
