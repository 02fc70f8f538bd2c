// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "acmp/checkpoint.hpp"
#include "acmp/model.hpp"
#include "acmp/ops.hpp"
#include "acmp/tensor.hpp"

using namespace acmp;

namespace {

// Closed-form accounting, written out independently of the library's
// per-layer bookkeeping.
int64_t oracle_full_block(int64_t d) {
  int64_t ln1 = 2 * d;
  int64_t qkv = d * 3 * d + 3 * d;
  int64_t attn_out = d * d + d;
  int64_t ln2 = 2 * d;
  int64_t fc = d * 4 * d + 4 * d;
  int64_t proj = 4 * d * d + d;
  return ln1 + qkv + attn_out + ln2 + fc + proj;
}

int64_t oracle_small_block(int64_t b) {
  return (b * (b / 2) + b / 2) + ((b / 2) * b + b) + 2 * b;
}

int64_t oracle_proj(int64_t in, int64_t out) { return in * out + out; }

}  // namespace

TEST_CASE("teacher_medium parameter count reproduces 354.8M") {
  const int64_t v = 50257, ctx = 1024, d = 1024;
  int64_t oracle = v * d + ctx * d + 24 * oracle_full_block(d) + 2 * d;
  CHECK(oracle == 354'823'168);

  ParamBreakdown got = parameter_count(make_preset("teacher_medium"));
  CHECK(got.total == oracle);
  CHECK(got.lm_head == 0);  // tied
  // Rounds to the published 354.8M.
  CHECK(std::round(static_cast<double>(got.total) / 1e5) / 10.0 ==
        doctest::Approx(354.8));
}

TEST_CASE("cli_medium parameter count reproduces 143.8M with untied head") {
  const int64_t v = 50257, ctx = 1024, d = 1024, b = 768;
  int64_t oracle = v * d + ctx * d + 2 * oracle_full_block(d) +
                   oracle_proj(d, b) + 22 * oracle_small_block(b) +
                   oracle_proj(b, d) + 2 * d + d * v;
  CHECK(oracle == 143'779'328);

  ParamBreakdown got = parameter_count(make_preset("cli_medium"));
  CHECK(got.total == oracle);
  CHECK(got.lm_head == d * v);
  CHECK(std::round(static_cast<double>(got.total) / 1e5) / 10.0 ==
        doctest::Approx(143.8));
}

TEST_CASE("uniform_medium literal recipe lands near 113.9M, not 139.8M") {
  const int64_t v = 50257, ctx = 1024, d = 1024, b = 600;
  int64_t oracle = v * d + ctx * d + oracle_proj(d, b) +
                   24 * oracle_small_block(b) + oracle_proj(b, d) + 2 * d +
                   d * v;
  CHECK(oracle == 113'897'784);
  CHECK(parameter_count(make_preset("uniform_medium")).total == oracle);
}

TEST_CASE("hand-counted degenerate config") {
  ModelConfig c;
  c.vocab_size = 2;
  c.context_length = 1;
  c.d_model = 2;
  c.n_heads = 1;
  c.tie_lm_head = true;
  // tok 2*2 + pos 1*2 + final norm 4 = 10
  CHECK(parameter_count(c).total == 10);
}

TEST_CASE("compression ratio matches published table") {
  auto stats = compression_ratio(354'823'168, 143'779'328);
  CHECK(stats.ratio == doctest::Approx(2.47).epsilon(0.002));
  CHECK(stats.reduction == doctest::Approx(0.595).epsilon(0.001));

  auto eq = compression_ratio(100, 100);
  CHECK(eq.ratio == 1.0);
  CHECK(eq.reduction == 0.0);
  auto half = compression_ratio(100, 50);
  CHECK(half.ratio == 2.0);
  CHECK(half.reduction == 0.5);
  CHECK_THROWS_AS(compression_ratio(100, 0), std::invalid_argument);
}

TEST_CASE("presets validate; unknown preset lists valid names") {
  for (const auto& name : preset_names()) CHECK_NOTHROW(make_preset(name));
  CHECK_THROWS_WITH_AS(make_preset("bogus"),
                       doctest::Contains("teacher_medium"),
                       std::invalid_argument);

  ModelConfig cli = make_preset("cli_tiny");
  REQUIRE(cli.plan.size() == 8);
  CHECK(std::holds_alternative<FullBlockSpec>(cli.plan.front()));
  CHECK(std::holds_alternative<CompressSpec>(cli.plan[1]));
  for (int i = 2; i < 6; ++i)
    CHECK(std::holds_alternative<SmallBlockSpec>(cli.plan[static_cast<size_t>(i)]));
  CHECK(std::holds_alternative<ExpandSpec>(cli.plan[6]));
  CHECK(std::holds_alternative<FullBlockSpec>(cli.plan.back()));
  CHECK(std::get<CompressSpec>(cli.plan[1]).out_dim == 64);
}

TEST_CASE("incompatible layer plans are rejected naming the pair") {
  ModelConfig c = make_preset("cli_tiny");
  c.plan[3] = SmallBlockSpec{40};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("layer 3"),
                       std::invalid_argument);
  CHECK_THROWS_AS(Model::build(c), std::invalid_argument);

  ModelConfig odd = make_preset("cli_tiny");
  odd.plan[3] = SmallBlockSpec{63};
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
}

TEST_CASE("built model parameter count equals config accounting") {
  for (const auto& name : {"teacher_tiny", "cli_tiny", "uniform_tiny"}) {
    ModelConfig c = make_preset(name);
    Model m = Model::build(c);
    CHECK(m.parameter_count() == parameter_count(c).total);
  }

  // Random small valid configs.
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c;
    c.vocab_size = 7 + static_cast<int64_t>(rng() % 50);
    c.context_length = 8 + static_cast<int64_t>(rng() % 24);
    c.n_heads = 2;
    c.d_model = 2 * c.n_heads * static_cast<int64_t>(1 + rng() % 4);
    c.tie_lm_head = rng() % 2 == 0;
    c.seed = trial;
    int64_t b = 2 * (1 + static_cast<int64_t>(rng() % 4));
    int n_small = static_cast<int>(rng() % 4);
    c.plan.push_back(FullBlockSpec{c.d_model});
    c.plan.push_back(CompressSpec{c.d_model, b});
    for (int i = 0; i < n_small; ++i) c.plan.push_back(SmallBlockSpec{b});
    c.plan.push_back(ExpandSpec{b, c.d_model});
    c.plan.push_back(FullBlockSpec{c.d_model});
    Model m = Model::build(c);
    CHECK(m.parameter_count() == parameter_count(c).total);
  }
}

TEST_CASE("forward shape, input validation, determinism") {
  Model m = Model::build(make_preset("cli_tiny"));
  std::vector<int> tokens = {10, 200, 37, 5};
  Tensor logits = m.forward(tokens);
  REQUIRE(logits.rank() == 2);
  CHECK(logits.dim(0) == 4);
  CHECK(logits.dim(1) == 256);
  for (double x : logits.data()) CHECK(std::isfinite(x));

  Tensor again = m.forward(tokens);
  for (int64_t i = 0; i < logits.size(); ++i)
    CHECK(logits.data()[i] == again.data()[i]);

  CHECK_THROWS_AS(m.forward({}), std::invalid_argument);
  CHECK_THROWS_AS(m.forward({256}), std::out_of_range);
  CHECK_THROWS_AS(m.forward(std::vector<int>(300, 1)), std::invalid_argument);
}

TEST_CASE("forward is causal for every architecture") {
  for (const auto& name : {"teacher_tiny", "cli_tiny", "uniform_tiny"}) {
    ModelConfig c = make_preset(name);
    c.seed = 5;
    Model m = Model::build(c);
    std::vector<int> tokens = {3, 19, 7, 101, 42, 66};
    Tensor base = m.forward(tokens);
    int64_t v = c.vocab_size;
    for (size_t j = 0; j < tokens.size(); ++j) {
      auto perturbed = tokens;
      perturbed[j] = (perturbed[j] + 13) % static_cast<int>(v);
      Tensor out = m.forward(perturbed);
      for (size_t i = 0; i < j; ++i) {
        for (int64_t k = 0; k < v; ++k) {
          CHECK(out.data()[static_cast<int64_t>(i) * v + k] ==
                base.data()[static_cast<int64_t>(i) * v + k]);
        }
      }
    }
  }
}

TEST_CASE("ablating a zero-weight small block is a no-op") {
  ModelConfig c = make_preset("cli_tiny");
  Model m = Model::build(c);
  // Zero layer 2's up projection: its residual branch contributes nothing.
  for (auto& p : m.parameters()) {
    if (p.name == "layer2.w_up" || p.name == "layer2.b_up") {
      Tensor t = p.tensor;
      for (double& x : t.data()) x = 0.0;
    }
  }
  std::vector<int> tokens = {1, 2, 3, 4, 5};
  Tensor full = m.forward(tokens);
  Tensor ablated = m.forward_ablated(tokens, 2);
  for (int64_t i = 0; i < full.size(); ++i)
    CHECK(full.data()[i] == ablated.data()[i]);
}

TEST_CASE("ablating random-weight blocks changes the output") {
  ModelConfig c = make_preset("teacher_tiny");
  c.plan.resize(4);
  c.seed = 11;
  Model m = Model::build(c);
  std::vector<int> tokens = {9, 8, 7, 6};
  Tensor base = m.forward(tokens);
  for (int l = 0; l < 4; ++l) {
    Tensor abl = m.forward_ablated(tokens, l);
    double delta = 0.0;
    for (int64_t i = 0; i < base.size(); ++i) {
      double d = base.data()[i] - abl.data()[i];
      delta += d * d;
    }
    CHECK(delta > 0.0);
  }
}

TEST_CASE("ablation errors") {
  Model m = Model::build(make_preset("cli_tiny"));
  CHECK_THROWS_AS(m.forward_ablated({1, 2}, -1), std::out_of_range);
  CHECK_THROWS_AS(m.forward_ablated({1, 2}, 8), std::out_of_range);
  // Layer 1 is the compress projection: no residual, not ablatable.
  CHECK_THROWS_WITH_AS(m.forward_ablated({1, 2}, 1),
                       doctest::Contains("projection"), std::invalid_argument);
}

TEST_CASE("gradients flow to every parameter") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig c = make_preset("cli_tiny");
    c.seed = seed;
    Model m = Model::build(c);
    m.set_trainable(true);
    Tape tape;
    std::vector<int> tokens = {5, 90, 7, 33, 210, 56, 14, 250};
    std::vector<int> labels = {90, 7, 33, 210, 56, 14, 250, 3};
    Tensor logits = m.forward(tokens, &tape);
    Tensor loss = ops::cross_entropy(&tape, logits, labels);
    tape.backward(loss);
    for (const auto& p : m.parameters()) {
      double norm = 0.0;
      for (double g : p.tensor.grad()) norm += g * g;
      INFO("parameter ", p.name);
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("checkpoint round trip is exact") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "acmp_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "m.ckpt").string();

  ModelConfig c = make_preset("cli_tiny");
  c.seed = 99;
  Model m = Model::build(c);
  save_checkpoint(m, path);
  Model loaded = load_checkpoint(path);

  REQUIRE(loaded.parameters().size() == m.parameters().size());
  for (size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& a = m.parameters()[i];
    const auto& b = loaded.parameters()[i];
    CHECK(a.name == b.name);
    REQUIRE(a.tensor.size() == b.tensor.size());
    for (int64_t j = 0; j < a.tensor.size(); ++j)
      CHECK(a.tensor.data()[j] == b.tensor.data()[j]);
  }

  // Same forward behavior.
  std::vector<int> tokens = {1, 2, 3};
  Tensor x = m.forward(tokens);
  Tensor y = loaded.forward(tokens);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(x.data()[i] == y.data()[i]);

  // Corruption is rejected.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("truncated checkpoint fails the size validation") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "acmp_ckpt_trunc";
  fs::create_directories(dir);
  std::string path = (dir / "m.ckpt").string();
  Model m = Model::build(make_preset("cli_tiny"));
  save_checkpoint(m, path);
  fs::resize_file(path, fs::file_size(path) - 128);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("size"),
                       std::runtime_error);
  fs::remove_all(dir);
}
