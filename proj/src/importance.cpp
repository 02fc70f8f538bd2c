// SPDX-License-Identifier: Apache-2.0
#include "acmp/importance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "acmp/ops.hpp"

namespace acmp {

CalibrationSet make_calibration(const TokenStream& stream, int64_t count,
                                int64_t sequence_length, uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("calibration size must be positive");
  int64_t n_offsets = stream.size() - sequence_length + 1;
  if (n_offsets <= 0) {
    throw std::invalid_argument("stream too short for calibration sequences of length " +
                                std::to_string(sequence_length));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, n_offsets - 1);
  CalibrationSet calib;
  calib.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    int64_t o = pick(rng);
    std::vector<int> seq(static_cast<size_t>(sequence_length));
    for (int64_t j = 0; j < sequence_length; ++j)
      seq[static_cast<size_t>(j)] = stream.ids[static_cast<size_t>(o + j)];
    calib.push_back(std::move(seq));
  }
  return calib;
}

ImportanceReport layer_importance(const Model& model,
                                  const CalibrationSet& calib,
                                  OutputSpace space) {
  if (calib.empty()) throw std::invalid_argument("calibration set is empty");
  for (const auto& seq : calib) {
    if (seq.empty())
      throw std::invalid_argument("calibration set contains an empty sequence");
  }
  int n_layers = static_cast<int>(model.num_layers());
  std::vector<int> ablatable;
  for (int l = 0; l < n_layers; ++l)
    if (layer_is_ablatable(model.layer_spec(l))) ablatable.push_back(l);
  if (ablatable.empty()) {
    throw std::invalid_argument("model has no ablatable layers to score");
  }

  auto project = [space](const Tensor& logits) {
    if (space == OutputSpace::kProbabilities)
      return ops::softmax(nullptr, logits);
    return logits;
  };

  std::vector<double> sums(static_cast<size_t>(n_layers), 0.0);
  int64_t total_positions = 0;
  for (const auto& seq : calib) {
    Tensor base = project(model.forward(seq));
    total_positions += static_cast<int64_t>(seq.size());
    for (int l : ablatable) {
      Tensor abl = project(model.forward_ablated(seq, l));
      double s = 0.0;
      for (int64_t i = 0; i < base.size(); ++i) {
        double d = base.data()[i] - abl.data()[i];
        s += d * d;
      }
      sums[static_cast<size_t>(l)] += s;
    }
  }

  ImportanceReport report;
  report.n_sequences = static_cast<int64_t>(calib.size());
  report.output_space = space;
  for (int l = 0; l < n_layers; ++l) {
    LayerScore ls;
    ls.index = l;
    ls.ablatable = layer_is_ablatable(model.layer_spec(l));
    ls.n_sequences = report.n_sequences;
    ls.score = ls.ablatable
                   ? sums[static_cast<size_t>(l)] /
                         static_cast<double>(total_positions)
                   : 0.0;
    report.layers.push_back(ls);
  }

  double best = -1.0;
  for (int l : ablatable) {
    double s = report.layers[static_cast<size_t>(l)].score;
    if (s > best) {
      best = s;
      report.argmax = l;
    }
  }
  report.max_score = best;
  if (ablatable.size() >= 2) {
    double second = -1.0;
    for (int l : ablatable) {
      if (l == report.argmax) continue;
      second = std::max(second, report.layers[static_cast<size_t>(l)].score);
    }
    report.gap_defined = true;
    report.gap_ratio = second == 0.0
                           ? std::numeric_limits<double>::infinity()
                           : best / second;
  }
  return report;
}

std::vector<std::pair<int, double>> rank_layers(const ImportanceReport& report) {
  std::vector<std::pair<int, double>> out;
  for (const auto& ls : report.layers)
    if (ls.ablatable) out.emplace_back(ls.index, ls.score);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

double gap_ratio(const ImportanceReport& report) {
  std::vector<double> scores;
  for (const auto& ls : report.layers)
    if (ls.ablatable) scores.push_back(ls.score);
  if (scores.size() < 2) {
    throw std::invalid_argument("gap ratio needs at least two ablatable layers");
  }
  std::sort(scores.begin(), scores.end(), std::greater<>());
  if (scores[1] == 0.0) return std::numeric_limits<double>::infinity();
  return scores[0] / scores[1];
}

nlohmann::json report_to_json(const ImportanceReport& report) {
  nlohmann::json j;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& ls : report.layers) {
    layers.push_back({{"index", ls.index},
                      {"score", ls.score},
                      {"ablatable", ls.ablatable}});
  }
  j["layers"] = layers;
  j["argmax"] = report.argmax;
  if (report.gap_defined && std::isinf(report.gap_ratio)) {
    j["gap_ratio"] = "inf";
    j["gap_ratio_flag"] = "runner-up score is zero";
  } else if (report.gap_defined) {
    j["gap_ratio"] = report.gap_ratio;
  } else {
    j["gap_ratio"] = nullptr;
  }
  j["n_sequences"] = report.n_sequences;
  j["output_space"] =
      report.output_space == OutputSpace::kLogits ? "logits" : "probabilities";
  return j;
}

std::string report_to_csv(const ImportanceReport& report) {
  std::ostringstream os;
  os << "index,score,ablatable\n";
  os.precision(17);
  for (const auto& ls : report.layers) {
    os << ls.index << "," << ls.score << "," << (ls.ablatable ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace acmp
