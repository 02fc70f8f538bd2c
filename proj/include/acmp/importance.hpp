// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "acmp/data.hpp"
#include "acmp/model.hpp"

namespace acmp {

enum class OutputSpace { kLogits, kProbabilities };

struct LayerScore {
  int index = 0;
  double score = 0.0;  // mean squared output deviation under ablation
  bool ablatable = false;
  int64_t n_sequences = 0;
};

struct ImportanceReport {
  std::vector<LayerScore> layers;  // one entry per plan layer
  int argmax = -1;
  double max_score = 0.0;
  // max score / best remaining score; +inf when the runner-up is 0.
  double gap_ratio = 0.0;
  bool gap_defined = false;
  int64_t n_sequences = 0;
  OutputSpace output_space = OutputSpace::kLogits;
};

using CalibrationSet = std::vector<std::vector<int>>;

// Draws `count` seeded sequences of `sequence_length` tokens from the stream.
CalibrationSet make_calibration(const TokenStream& stream, int64_t count,
                                int64_t sequence_length, uint64_t seed);

// I(l): mean over sequences and positions of the squared norm of the output
// change when layer l's residual contribution is zeroed. Projection layers
// are listed but not scored.
ImportanceReport layer_importance(const Model& model,
                                  const CalibrationSet& calib,
                                  OutputSpace space = OutputSpace::kLogits);

// Descending by score, ties broken by ascending layer index. Ablatable
// layers only.
std::vector<std::pair<int, double>> rank_layers(const ImportanceReport& report);

double gap_ratio(const ImportanceReport& report);

nlohmann::json report_to_json(const ImportanceReport& report);
std::string report_to_csv(const ImportanceReport& report);

}  // namespace acmp
