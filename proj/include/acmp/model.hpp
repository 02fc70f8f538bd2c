// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "acmp/tensor.hpp"

namespace acmp {

// ---------------------------------------------------------------- layer plan

struct FullBlockSpec {
  int64_t dim;
};
// Dimension-changing affine map, no residual; not ablatable.
struct CompressSpec {
  int64_t in_dim;
  int64_t out_dim;
};
// Attention-free bottleneck block: down b->b/2, GELU, up b/2->b,
// pre-LayerNorm, residual.
struct SmallBlockSpec {
  int64_t dim;  // must be even
};
struct ExpandSpec {
  int64_t in_dim;
  int64_t out_dim;
};

using LayerSpec =
    std::variant<FullBlockSpec, CompressSpec, SmallBlockSpec, ExpandSpec>;
using LayerPlan = std::vector<LayerSpec>;

int64_t layer_in_dim(const LayerSpec& spec);
int64_t layer_out_dim(const LayerSpec& spec);
bool layer_is_ablatable(const LayerSpec& spec);
std::string layer_type_name(const LayerSpec& spec);
int64_t layer_param_count(const LayerSpec& spec);

// --------------------------------------------------------------------- config

struct ModelConfig {
  int64_t vocab_size = 0;
  int64_t context_length = 0;
  int64_t d_model = 0;
  int64_t n_heads = 1;
  LayerPlan plan;
  bool tie_lm_head = true;
  uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field or layer pair.
  void validate() const;
};

struct ParamBreakdown {
  int64_t embeddings = 0;  // token + position
  std::vector<int64_t> per_layer;
  int64_t final_norm = 0;
  int64_t lm_head = 0;  // 0 when tied
  int64_t total = 0;
};

// Closed-form accounting from the config alone (no model built).
ParamBreakdown parameter_count(const ModelConfig& config);

struct CompressionStats {
  double ratio;      // teacher / student
  double reduction;  // 1 - student / teacher
};
CompressionStats compression_ratio(int64_t teacher_params,
                                   int64_t student_params);

ModelConfig make_preset(const std::string& name);
const std::vector<std::string>& preset_names();

// ---------------------------------------------------------------------- model

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct FullBlockParams {
  Tensor ln1_g, ln1_b;
  Tensor w_qkv, b_qkv;  // fused [d x 3d]
  Tensor w_o, b_o;
  Tensor ln2_g, ln2_b;
  Tensor w_fc, b_fc;    // [d x 4d]
  Tensor w_proj, b_proj;
};

struct SmallBlockParams {
  Tensor ln_g, ln_b;
  Tensor w_down, b_down;  // [b x b/2]
  Tensor w_up, b_up;      // [b/2 x b]
};

struct ProjParams {
  Tensor w, b;
};

using LayerParams = std::variant<FullBlockParams, SmallBlockParams, ProjParams>;

class Model {
 public:
  static Model build(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Logits [L x V]. Records on tape when given (training); tape == nullptr is
  // the frozen / evaluation path.
  Tensor forward(const std::vector<int>& tokens, Tape* tape = nullptr) const;

  // forward with layer_index's residual contribution zeroed (the layer acts
  // as identity). Projection layers have no residual; ablating one throws.
  Tensor forward_ablated(const std::vector<int>& tokens, int layer_index,
                         Tape* tape = nullptr) const;

  // Plan-ordered, deterministic; tied models expose the embedding once.
  const std::vector<NamedParam>& parameters() const { return params_; }

  int64_t parameter_count() const;
  int64_t num_layers() const { return static_cast<int64_t>(layers_.size()); }
  const LayerSpec& layer_spec(int i) const {
    return config_.plan[static_cast<size_t>(i)];
  }

  void set_trainable(bool trainable);
  void zero_grads();

 private:
  Tensor forward_impl(const std::vector<int>& tokens, Tape* tape,
                      int ablate_layer) const;

  ModelConfig config_;
  Tensor tok_emb_;  // [V x d]
  Tensor pos_emb_;  // [ctx x d]
  std::vector<LayerParams> layers_;
  Tensor lnf_g_, lnf_b_;
  Tensor lm_head_;  // [d x V], only when untied
  std::vector<NamedParam> params_;
};

}  // namespace acmp
