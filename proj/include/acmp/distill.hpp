// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "acmp/data.hpp"
#include "acmp/model.hpp"

namespace acmp {

struct DistillConfig {
  double alpha = 0.5;
  double temperature = 2.0;
  double peak_lr = 3e-4;
  // < 0 means the defaults: warmup 5% of total_steps, min_lr = peak / 10.
  int64_t warmup_steps = -1;
  int64_t total_steps = 2000;
  double min_lr = -1.0;
  double weight_decay = 0.01;
  int64_t accumulation_steps = 16;
  int64_t sequence_length = 128;
  int64_t eval_every = 250;
  // Swaps the KL arguments to teacher || student (conventional distillation
  // order) instead of the student || teacher default.
  bool swap_kl = false;
  uint64_t seed = 0;

  int64_t effective_warmup() const {
    return warmup_steps >= 0 ? warmup_steps : total_steps / 20;
  }
  double effective_min_lr() const {
    return min_lr >= 0.0 ? min_lr : peak_lr / 10.0;
  }
  void validate() const;
};

struct LossBreakdown {
  Tensor total;     // scalar, on the tape
  double ce_part;   // L_CE
  double kl_part;   // T^2 * KL, before weighting
  double alpha;
  double temperature;
};

// total = alpha * CE(student, labels) + (1-alpha) * T^2 * KL(softened
// student || softened teacher). Differentiable w.r.t. student logits only;
// teacher logits must be detached (no requires_grad).
LossBreakdown distill_loss(Tape* tape, const Tensor& student_logits,
                           const Tensor& teacher_logits,
                           const std::vector<int>& labels, double alpha,
                           double temperature, bool swap_kl = false);

// Linear warmup to peak_lr, then half-cosine decay to min_lr.
double lr_at(int64_t step, const DistillConfig& config);

// Decoupled weight decay; beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected
// moments. Reads each parameter's accumulated grad.
class AdamW {
 public:
  explicit AdamW(std::vector<Tensor> params, double weight_decay);

  // Throws (before mutating anything) if any grad is non-finite.
  void step(double lr);

  int64_t timestep() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double weight_decay_;
  int64_t t_ = 0;
};

struct TrainRow {
  int64_t step;
  double lr;
  double loss_total, loss_ce, loss_kl;
  int64_t tokens;
  double ppl = std::nan("");  // set on eval steps
};

struct TrainReport {
  std::vector<TrainRow> rows;
  std::vector<std::pair<int64_t, double>> evals;  // (step, validation PPL)
  double final_ppl = std::nan("");
  double best_ppl = std::nan("");
  int64_t steps = 0;
  double wall_seconds = 0.0;
};

// Knowledge distillation of `student` against a frozen `teacher`; pass
// teacher == nullptr for plain cross-entropy pretraining. When out_dir is
// non-empty, writes best.ckpt / latest.ckpt at every evaluation.
TrainReport train(const Model* teacher, Model& student,
                  const TokenStream& train_stream,
                  const TokenStream& val_stream, const DistillConfig& config,
                  const std::string& out_dir = "", bool progress = false);

// exp(mean NLL) over non-overlapping windows of sequence_length tokens.
double perplexity(const Model& model, const TokenStream& eval_set,
                  int64_t sequence_length);

std::string train_report_to_csv(const TrainReport& report);
nlohmann::json train_report_summary(const TrainReport& report);

}  // namespace acmp
