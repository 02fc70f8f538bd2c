// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "acmp/importance.hpp"
#include "acmp/model.hpp"

using namespace acmp;

namespace {

Model small_model(int n_blocks, uint64_t seed) {
  ModelConfig c = make_preset("teacher_tiny");
  c.plan.resize(static_cast<size_t>(n_blocks), FullBlockSpec{96});
  c.seed = seed;
  return Model::build(c);
}

CalibrationSet fixed_calib(int n_seq, int len, uint64_t seed) {
  std::mt19937_64 rng(seed);
  CalibrationSet calib;
  for (int i = 0; i < n_seq; ++i) {
    std::vector<int> seq(static_cast<size_t>(len));
    for (auto& t : seq) t = static_cast<int>(rng() % 256);
    calib.push_back(std::move(seq));
  }
  return calib;
}

ImportanceReport hand_report(const std::vector<double>& scores) {
  ImportanceReport r;
  for (size_t i = 0; i < scores.size(); ++i)
    r.layers.push_back({static_cast<int>(i), scores[i], true,
                        1});
  return r;
}

}  // namespace

TEST_CASE("zero-branch layer scores exactly zero; live layers do not") {
  ModelConfig c = make_preset("cli_tiny");
  c.seed = 3;
  Model m = Model::build(c);
  // Kill layer 3's residual branch.
  for (const auto& p : m.parameters()) {
    if (p.name == "layer3.w_up" || p.name == "layer3.b_up") {
      Tensor t = p.tensor;
      for (double& x : t.data()) x = 0.0;
    }
  }
  auto report = layer_importance(m, fixed_calib(4, 6, 10));
  CHECK(report.layers[3].score == 0.0);
  for (int l : {0, 2, 4, 5, 7}) {
    INFO("layer ", l);
    CHECK(report.layers[static_cast<size_t>(l)].score > 0.0);
  }
  // Projections are listed but not scored.
  CHECK_FALSE(report.layers[1].ablatable);
  CHECK_FALSE(report.layers[6].ablatable);
}

TEST_CASE("report equals the naive double-loop oracle") {
  Model m = small_model(4, 17);
  CalibrationSet calib = fixed_calib(8, 5, 21);
  auto report = layer_importance(m, calib);

  // Independent recomputation with explicit loops, sequence by sequence.
  int64_t v = m.config().vocab_size;
  for (int l = 0; l < 4; ++l) {
    double total = 0.0;
    int64_t positions = 0;
    for (const auto& seq : calib) {
      Tensor base = m.forward(seq);
      Tensor abl = m.forward_ablated(seq, l);
      for (size_t pos = 0; pos < seq.size(); ++pos) {
        double norm2 = 0.0;
        for (int64_t k = 0; k < v; ++k) {
          double d = base.data()[static_cast<int64_t>(pos) * v + k] -
                     abl.data()[static_cast<int64_t>(pos) * v + k];
          norm2 += d * d;
        }
        total += norm2;
        ++positions;
      }
    }
    double oracle = total / static_cast<double>(positions);
    CHECK(std::abs(report.layers[static_cast<size_t>(l)].score - oracle) <=
          1e-10);
  }
}

TEST_CASE("scores are invariant under calibration permutation") {
  Model m = small_model(3, 23);
  CalibrationSet calib = fixed_calib(6, 4, 31);
  auto r1 = layer_importance(m, calib);
  CalibrationSet shuffled = calib;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto r2 = layer_importance(m, shuffled);
  for (size_t l = 0; l < r1.layers.size(); ++l)
    CHECK(r1.layers[l].score == doctest::Approx(r2.layers[l].score).epsilon(1e-12));
}

TEST_CASE("probability output space differs from logits but ranks sanely") {
  Model m = small_model(2, 29);
  CalibrationSet calib = fixed_calib(3, 4, 37);
  auto logits_report = layer_importance(m, calib, OutputSpace::kLogits);
  auto prob_report = layer_importance(m, calib, OutputSpace::kProbabilities);
  for (const auto& ls : prob_report.layers) CHECK(ls.score >= 0.0);
  CHECK(logits_report.layers[0].score != prob_report.layers[0].score);
}

TEST_CASE("rank_layers ordering and tie-breaks") {
  auto order = rank_layers(hand_report({3.6, 0.05, 0.02}));
  REQUIRE(order.size() == 3);
  CHECK(order[0].first == 0);
  CHECK(order[1].first == 1);
  CHECK(order[2].first == 2);

  auto ties = rank_layers(hand_report({1.0, 1.0, 1.0, 1.0}));
  for (size_t i = 0; i < ties.size(); ++i)
    CHECK(ties[i].first == static_cast<int>(i));

  auto single = rank_layers(hand_report({2.5}));
  REQUIRE(single.size() == 1);
  CHECK(single[0].first == 0);
  CHECK(single[0].second == 2.5);
}

TEST_CASE("gap ratio closed forms") {
  CHECK(gap_ratio(hand_report({3.6, 0.054})) ==
        doctest::Approx(66.67).epsilon(0.001));
  CHECK(gap_ratio(hand_report({3.6, 0.263})) ==
        doctest::Approx(13.69).epsilon(0.001));
  CHECK(gap_ratio(hand_report({1.0, 1.0})) == 1.0);
  CHECK(std::isinf(gap_ratio(hand_report({2.0, 0.0}))));
  CHECK_THROWS_AS(gap_ratio(hand_report({1.0})), std::invalid_argument);
}

TEST_CASE("errors: empty calibration, no ablatable layers") {
  Model m = small_model(2, 41);
  CHECK_THROWS_AS(layer_importance(m, {}), std::invalid_argument);

  ModelConfig c = make_preset("teacher_tiny");
  c.plan = {CompressSpec{96, 64}, ExpandSpec{64, 96}};
  Model proj_only = Model::build(c);
  CHECK_THROWS_AS(layer_importance(proj_only, fixed_calib(2, 3, 43)),
                  std::invalid_argument);
}

TEST_CASE("report serialization shape") {
  Model m = small_model(3, 47);
  auto report = layer_importance(m, fixed_calib(4, 4, 53));
  auto j = report_to_json(report);
  CHECK(j.at("layers").size() == 3);
  CHECK(j.at("layers")[0].contains("index"));
  CHECK(j.at("layers")[0].contains("score"));
  CHECK(j.at("layers")[0].contains("ablatable"));
  CHECK(j.contains("argmax"));
  CHECK(j.contains("gap_ratio"));
  CHECK(j.at("n_sequences") == 4);
  CHECK(j.at("output_space") == "logits");

  std::string csv = report_to_csv(report);
  CHECK(csv.find("index,score,ablatable") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
}

TEST_CASE("make_calibration draws seeded in-range sequences") {
  TokenStream s;
  s.ids.resize(500);
  for (size_t i = 0; i < 500; ++i) s.ids[i] = static_cast<uint16_t>(i % 256);
  auto a = make_calibration(s, 8, 16, 7);
  auto b = make_calibration(s, 8, 16, 7);
  CHECK(a == b);
  REQUIRE(a.size() == 8);
  for (const auto& seq : a) CHECK(seq.size() == 16);
  CHECK_THROWS_AS(make_calibration(s, 0, 16, 7), std::invalid_argument);
}
