// SPDX-License-Identifier: Apache-2.0
#include "acmp/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "acmp/ops.hpp"

namespace acmp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

int64_t layer_in_dim(const LayerSpec& spec) {
  return std::visit(overloaded{[](const FullBlockSpec& s) { return s.dim; },
                               [](const CompressSpec& s) { return s.in_dim; },
                               [](const SmallBlockSpec& s) { return s.dim; },
                               [](const ExpandSpec& s) { return s.in_dim; }},
                    spec);
}

int64_t layer_out_dim(const LayerSpec& spec) {
  return std::visit(overloaded{[](const FullBlockSpec& s) { return s.dim; },
                               [](const CompressSpec& s) { return s.out_dim; },
                               [](const SmallBlockSpec& s) { return s.dim; },
                               [](const ExpandSpec& s) { return s.out_dim; }},
                    spec);
}

bool layer_is_ablatable(const LayerSpec& spec) {
  return std::holds_alternative<FullBlockSpec>(spec) ||
         std::holds_alternative<SmallBlockSpec>(spec);
}

std::string layer_type_name(const LayerSpec& spec) {
  return std::visit(
      overloaded{[](const FullBlockSpec&) { return std::string("full"); },
                 [](const CompressSpec&) { return std::string("compress"); },
                 [](const SmallBlockSpec&) { return std::string("small"); },
                 [](const ExpandSpec&) { return std::string("expand"); }},
      spec);
}

int64_t layer_param_count(const LayerSpec& spec) {
  return std::visit(
      overloaded{[](const FullBlockSpec& s) {
                   // 2 norms, fused qkv, out proj, 2-layer MLP at 4x.
                   return 12 * s.dim * s.dim + 13 * s.dim;
                 },
                 [](const CompressSpec& s) {
                   return s.in_dim * s.out_dim + s.out_dim;
                 },
                 [](const SmallBlockSpec& s) {
                   int64_t h = s.dim / 2;
                   return s.dim * h + h + h * s.dim + s.dim + 2 * s.dim;
                 },
                 [](const ExpandSpec& s) {
                   return s.in_dim * s.out_dim + s.out_dim;
                 }},
      spec);
}

void ModelConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
  if (context_length <= 0)
    throw std::invalid_argument("context_length must be positive");
  if (d_model <= 0) throw std::invalid_argument("d_model must be positive");
  if (n_heads <= 0) throw std::invalid_argument("n_heads must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " +
                                std::to_string(n_heads));
  for (const auto& spec : plan) {
    if (const auto* s = std::get_if<SmallBlockSpec>(&spec)) {
      if (s->dim % 2 != 0)
        throw std::invalid_argument("small block dim " +
                                    std::to_string(s->dim) + " must be even");
    }
  }
  if (!plan.empty()) {
    if (layer_in_dim(plan.front()) != d_model)
      throw std::invalid_argument(
          "layer 0 input dim " + std::to_string(layer_in_dim(plan.front())) +
          " != d_model " + std::to_string(d_model));
    if (layer_out_dim(plan.back()) != d_model)
      throw std::invalid_argument(
          "last layer output dim " +
          std::to_string(layer_out_dim(plan.back())) + " != d_model " +
          std::to_string(d_model));
    for (size_t i = 0; i + 1 < plan.size(); ++i) {
      int64_t out = layer_out_dim(plan[i]);
      int64_t in = layer_in_dim(plan[i + 1]);
      if (out != in) {
        throw std::invalid_argument(
            "layer plan mismatch between layer " + std::to_string(i) + " (" +
            layer_type_name(plan[i]) + ", out " + std::to_string(out) +
            ") and layer " + std::to_string(i + 1) + " (" +
            layer_type_name(plan[i + 1]) + ", in " + std::to_string(in) + ")");
      }
    }
  }
}

ParamBreakdown parameter_count(const ModelConfig& config) {
  config.validate();
  ParamBreakdown b;
  b.embeddings = config.vocab_size * config.d_model +
                 config.context_length * config.d_model;
  for (const auto& spec : config.plan)
    b.per_layer.push_back(layer_param_count(spec));
  b.final_norm = 2 * config.d_model;
  b.lm_head = config.tie_lm_head ? 0 : config.d_model * config.vocab_size;
  b.total = b.embeddings + b.final_norm + b.lm_head;
  for (int64_t c : b.per_layer) b.total += c;
  return b;
}

CompressionStats compression_ratio(int64_t teacher_params,
                                   int64_t student_params) {
  if (teacher_params <= 0 || student_params <= 0) {
    throw std::invalid_argument("compression_ratio: parameter counts must be positive");
  }
  double t = static_cast<double>(teacher_params);
  double s = static_cast<double>(student_params);
  return {t / s, 1.0 - s / t};
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "teacher_medium", "cli_medium",  "uniform_medium",
      "teacher_tiny",   "cli_tiny",    "uniform_tiny"};
  return names;
}

ModelConfig make_preset(const std::string& name) {
  ModelConfig c;
  auto full_stack = [](int n, int64_t d) {
    LayerPlan p;
    for (int i = 0; i < n; ++i) p.push_back(FullBlockSpec{d});
    return p;
  };
  auto bottleneck = [](int64_t d, int64_t b, int n_small, bool protect) {
    LayerPlan p;
    if (protect) p.push_back(FullBlockSpec{d});
    p.push_back(CompressSpec{d, b});
    for (int i = 0; i < n_small; ++i) p.push_back(SmallBlockSpec{b});
    p.push_back(ExpandSpec{b, d});
    if (protect) p.push_back(FullBlockSpec{d});
    return p;
  };

  if (name == "teacher_medium") {
    c = {50257, 1024, 1024, 16, full_stack(24, 1024), true, 0};
  } else if (name == "cli_medium") {
    c = {50257, 1024, 1024, 16, bottleneck(1024, 768, 22, true), false, 0};
  } else if (name == "uniform_medium") {
    c = {50257, 1024, 1024, 16, bottleneck(1024, 600, 24, false), false, 0};
  } else if (name == "teacher_tiny") {
    c = {256, 256, 96, 4, full_stack(6, 96), true, 0};
  } else if (name == "cli_tiny") {
    c = {256, 256, 96, 4, bottleneck(96, 64, 4, true), false, 0};
  } else if (name == "uniform_tiny") {
    c = {256, 256, 96, 4, bottleneck(96, 56, 6, false), false, 0};
  } else {
    std::string msg = "unknown preset '" + name + "'; valid presets:";
    for (const auto& p : preset_names()) msg += " " + p;
    throw std::invalid_argument(msg);
  }
  c.validate();
  return c;
}

// ----------------------------------------------------------------- building

Model Model::build(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config_ = config;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> dist(0.0, 0.02);

  int64_t n_residual = 0;
  for (const auto& spec : config.plan)
    if (layer_is_ablatable(spec)) ++n_residual;
  // GPT-2 style: residual-feeding projections start smaller so the stream
  // variance stays bounded with depth.
  double resid_scale =
      n_residual > 0 ? 1.0 / std::sqrt(2.0 * static_cast<double>(n_residual))
                     : 1.0;

  auto normal = [&](std::vector<int64_t> shape, double std_scale = 1.0) {
    Tensor t(std::move(shape), true);
    for (double& v : t.data()) v = dist(rng) * std_scale;
    return t;
  };
  auto zeros = [](std::vector<int64_t> shape) {
    return Tensor(std::move(shape), true);
  };
  auto ones = [](std::vector<int64_t> shape) {
    return Tensor::full(std::move(shape), 1.0, true);
  };
  auto reg = [&m](const std::string& name, const Tensor& t) {
    m.params_.push_back({name, t});
  };

  int64_t v = config.vocab_size, d = config.d_model,
          ctx = config.context_length;
  m.tok_emb_ = normal({v, d});
  reg("tok_emb", m.tok_emb_);
  m.pos_emb_ = normal({ctx, d});
  reg("pos_emb", m.pos_emb_);

  int idx = 0;
  for (const auto& spec : config.plan) {
    std::string pfx = "layer" + std::to_string(idx) + ".";
    std::visit(
        overloaded{
            [&](const FullBlockSpec& s) {
              int64_t bd = s.dim;
              FullBlockParams p;
              p.ln1_g = ones({bd});
              p.ln1_b = zeros({bd});
              p.w_qkv = normal({bd, 3 * bd});
              p.b_qkv = zeros({3 * bd});
              p.w_o = normal({bd, bd}, resid_scale);
              p.b_o = zeros({bd});
              p.ln2_g = ones({bd});
              p.ln2_b = zeros({bd});
              p.w_fc = normal({bd, 4 * bd});
              p.b_fc = zeros({4 * bd});
              p.w_proj = normal({4 * bd, bd}, resid_scale);
              p.b_proj = zeros({bd});
              reg(pfx + "ln1.g", p.ln1_g);
              reg(pfx + "ln1.b", p.ln1_b);
              reg(pfx + "attn.w_qkv", p.w_qkv);
              reg(pfx + "attn.b_qkv", p.b_qkv);
              reg(pfx + "attn.w_o", p.w_o);
              reg(pfx + "attn.b_o", p.b_o);
              reg(pfx + "ln2.g", p.ln2_g);
              reg(pfx + "ln2.b", p.ln2_b);
              reg(pfx + "mlp.w_fc", p.w_fc);
              reg(pfx + "mlp.b_fc", p.b_fc);
              reg(pfx + "mlp.w_proj", p.w_proj);
              reg(pfx + "mlp.b_proj", p.b_proj);
              m.layers_.push_back(std::move(p));
            },
            [&](const SmallBlockSpec& s) {
              int64_t bd = s.dim, h = s.dim / 2;
              SmallBlockParams p;
              p.ln_g = ones({bd});
              p.ln_b = zeros({bd});
              p.w_down = normal({bd, h});
              p.b_down = zeros({h});
              p.w_up = normal({h, bd}, resid_scale);
              p.b_up = zeros({bd});
              reg(pfx + "ln.g", p.ln_g);
              reg(pfx + "ln.b", p.ln_b);
              reg(pfx + "w_down", p.w_down);
              reg(pfx + "b_down", p.b_down);
              reg(pfx + "w_up", p.w_up);
              reg(pfx + "b_up", p.b_up);
              m.layers_.push_back(std::move(p));
            },
            [&](const CompressSpec& s) {
              ProjParams p;
              p.w = normal({s.in_dim, s.out_dim});
              p.b = zeros({s.out_dim});
              reg(pfx + "w", p.w);
              reg(pfx + "b", p.b);
              m.layers_.push_back(std::move(p));
            },
            [&](const ExpandSpec& s) {
              ProjParams p;
              p.w = normal({s.in_dim, s.out_dim});
              p.b = zeros({s.out_dim});
              reg(pfx + "w", p.w);
              reg(pfx + "b", p.b);
              m.layers_.push_back(std::move(p));
            }},
        spec);
    ++idx;
  }

  m.lnf_g_ = ones({d});
  m.lnf_b_ = zeros({d});
  reg("final_norm.g", m.lnf_g_);
  reg("final_norm.b", m.lnf_b_);
  if (!config.tie_lm_head) {
    m.lm_head_ = normal({d, v});
    reg("lm_head", m.lm_head_);
  }
  return m;
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void Model::set_trainable(bool trainable) {
  for (auto& p : params_) p.tensor.set_requires_grad(trainable);
}

void Model::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ----------------------------------------------------------------- forward

Tensor Model::forward(const std::vector<int>& tokens, Tape* tape) const {
  return forward_impl(tokens, tape, -1);
}

Tensor Model::forward_ablated(const std::vector<int>& tokens, int layer_index,
                              Tape* tape) const {
  if (layer_index < 0 || layer_index >= num_layers()) {
    throw std::out_of_range("layer index " + std::to_string(layer_index) +
                            " outside [0, " + std::to_string(num_layers()) +
                            ")");
  }
  if (!layer_is_ablatable(config_.plan[static_cast<size_t>(layer_index)])) {
    throw std::invalid_argument(
        "layer " + std::to_string(layer_index) + " (" +
        layer_type_name(config_.plan[static_cast<size_t>(layer_index)]) +
        ") is a dimension-changing projection with no residual path; "
        "ablation is undefined for it");
  }
  return forward_impl(tokens, tape, layer_index);
}

Tensor Model::forward_impl(const std::vector<int>& tokens, Tape* tape,
                           int ablate_layer) const {
  int64_t l = static_cast<int64_t>(tokens.size());
  if (l == 0) throw std::invalid_argument("empty token sequence");
  if (l > config_.context_length) {
    throw std::invalid_argument("sequence length " + std::to_string(l) +
                                " exceeds context length " +
                                std::to_string(config_.context_length));
  }
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(t) +
                              " outside vocabulary of size " +
                              std::to_string(config_.vocab_size));
    }
  }

  using namespace ops;
  Tensor x = add(tape, embedding_rows(tape, tok_emb_, tokens),
                 slice_rows(tape, pos_emb_, 0, l));

  int idx = 0;
  for (const auto& layer : layers_) {
    if (idx == ablate_layer) {
      // Residual branch zeroed: the layer passes x through unchanged.
      ++idx;
      continue;
    }
    std::visit(
        overloaded{
            [&](const FullBlockParams& p) {
              int64_t d = p.ln1_g.size();
              int64_t heads = config_.n_heads;
              int64_t hd = d / heads;
              double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

              Tensor h = layer_norm(tape, x, p.ln1_g, p.ln1_b);
              Tensor qkv = add_bias(tape, matmul(tape, h, p.w_qkv), p.b_qkv);
              std::vector<Tensor> head_outs;
              head_outs.reserve(static_cast<size_t>(heads));
              for (int64_t hh = 0; hh < heads; ++hh) {
                Tensor q = slice_cols(tape, qkv, hh * hd, hd);
                Tensor k = slice_cols(tape, qkv, d + hh * hd, hd);
                Tensor vv = slice_cols(tape, qkv, 2 * d + hh * hd, hd);
                Tensor scores = scale(
                    tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_hd);
                Tensor att = softmax(tape, causal_mask(tape, scores));
                head_outs.push_back(matmul(tape, att, vv));
              }
              Tensor attn_out = add_bias(
                  tape, matmul(tape, concat_cols(tape, head_outs), p.w_o),
                  p.b_o);
              x = add(tape, x, attn_out);

              Tensor h2 = layer_norm(tape, x, p.ln2_g, p.ln2_b);
              Tensor f = gelu(
                  tape, add_bias(tape, matmul(tape, h2, p.w_fc), p.b_fc));
              Tensor mlp_out =
                  add_bias(tape, matmul(tape, f, p.w_proj), p.b_proj);
              x = add(tape, x, mlp_out);
            },
            [&](const SmallBlockParams& p) {
              Tensor h = layer_norm(tape, x, p.ln_g, p.ln_b);
              Tensor down = gelu(
                  tape, add_bias(tape, matmul(tape, h, p.w_down), p.b_down));
              Tensor up =
                  add_bias(tape, matmul(tape, down, p.w_up), p.b_up);
              x = add(tape, x, up);
            },
            [&](const ProjParams& p) {
              x = add_bias(tape, matmul(tape, x, p.w), p.b);
            }},
        layer);
    ++idx;
  }

  x = ops::layer_norm(tape, x, lnf_g_, lnf_b_);
  if (config_.tie_lm_head) {
    return ops::matmul(tape, x, ops::transpose(tape, tok_emb_));
  }
  return ops::matmul(tape, x, lm_head_);
}

}  // namespace acmp
