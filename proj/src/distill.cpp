// SPDX-License-Identifier: Apache-2.0
#include "acmp/distill.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "acmp/checkpoint.hpp"
#include "acmp/ops.hpp"

namespace acmp {

void DistillConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("alpha must be in [0, 1]");
  if (temperature <= 0.0)
    throw std::invalid_argument("temperature must be positive");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (effective_warmup() > total_steps)
    throw std::invalid_argument("warmup_steps exceeds total_steps");
  if (accumulation_steps < 1)
    throw std::invalid_argument("accumulation_steps must be >= 1");
  if (sequence_length < 1)
    throw std::invalid_argument("sequence_length must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (peak_lr <= 0.0) throw std::invalid_argument("peak_lr must be positive");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be >= 0");
}

LossBreakdown distill_loss(Tape* tape, const Tensor& student_logits,
                           const Tensor& teacher_logits,
                           const std::vector<int>& labels, double alpha,
                           double temperature, bool swap_kl) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw std::invalid_argument("distill_loss: logit shape mismatch " +
                                shape_str(student_logits.shape()) + " vs " +
                                shape_str(teacher_logits.shape()));
  }
  if (teacher_logits.requires_grad()) {
    throw std::invalid_argument("distill_loss: teacher logits must be detached");
  }
  using namespace ops;
  double t = temperature;
  Tensor ce = cross_entropy(tape, student_logits, labels);
  Tensor p_student = softmax(tape, scale(tape, student_logits, 1.0 / t));
  Tensor p_teacher = softmax(nullptr, scale(nullptr, teacher_logits, 1.0 / t));
  Tensor kl = swap_kl ? kl_divergence(tape, p_teacher, p_student)
                      : kl_divergence(tape, p_student, p_teacher);
  Tensor kl_scaled = scale(tape, kl, t * t);
  Tensor total = add(tape, scale(tape, ce, alpha),
                     scale(tape, kl_scaled, 1.0 - alpha));
  return {total, ce.item(), kl_scaled.item(), alpha, temperature};
}

double lr_at(int64_t step, const DistillConfig& config) {
  int64_t warmup = config.effective_warmup();
  double peak = config.peak_lr;
  double lo = config.effective_min_lr();
  if (step < warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  int64_t span = config.total_steps - warmup;
  double progress =
      span > 0 ? static_cast<double>(step - warmup) / static_cast<double>(span)
               : 1.0;
  progress = std::clamp(progress, 0.0, 1.0);
  return lo + (peak - lo) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(std::vector<Tensor> params, double weight_decay)
    : params_(std::move(params)), weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void AdamW::step(double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  for (size_t k = 0; k < params_.size(); ++k) {
    for (double g : params_[k].grad()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error(
            "AdamW: non-finite gradient in parameter tensor " +
            std::to_string(k) + " at timestep " + std::to_string(t_ + 1) +
            "; step aborted");
      }
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k].data();
    const auto& g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < p.size(); ++i) {
      // Decoupled decay, applied separately from the adaptive update.
      p[i] -= lr * weight_decay_ * p[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double perplexity(const Model& model, const TokenStream& eval_set,
                  int64_t sequence_length) {
  if (eval_set.size() < sequence_length + 1) {
    throw std::invalid_argument("evaluation set too short for windows of " +
                                std::to_string(sequence_length) + " tokens");
  }
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  for (int64_t o = 0; o + sequence_length < eval_set.size();
       o += sequence_length) {
    std::vector<int> inputs(static_cast<size_t>(sequence_length));
    std::vector<int> targets(static_cast<size_t>(sequence_length));
    for (int64_t i = 0; i < sequence_length; ++i) {
      inputs[static_cast<size_t>(i)] =
          eval_set.ids[static_cast<size_t>(o + i)];
      targets[static_cast<size_t>(i)] =
          eval_set.ids[static_cast<size_t>(o + i + 1)];
    }
    Tensor logits = model.forward(inputs);
    double ce = ops::cross_entropy(nullptr, logits, targets).item();
    total_nll += ce * static_cast<double>(sequence_length);
    total_tokens += sequence_length;
  }
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

TrainReport train(const Model* teacher, Model& student,
                  const TokenStream& train_stream,
                  const TokenStream& val_stream, const DistillConfig& config,
                  const std::string& out_dir, bool progress) {
  config.validate();
  if (train_stream.size() == 0)
    throw std::invalid_argument("training corpus is empty");
  if (train_stream.size() < config.sequence_length + 1) {
    throw std::invalid_argument("training corpus too short for sequence length " +
                                std::to_string(config.sequence_length));
  }
  if (teacher &&
      teacher->config().vocab_size != student.config().vocab_size) {
    throw std::invalid_argument(
        "teacher vocabulary (" +
        std::to_string(teacher->config().vocab_size) +
        ") does not match student vocabulary (" +
        std::to_string(student.config().vocab_size) + ")");
  }

  auto t_start = std::chrono::steady_clock::now();
  student.set_trainable(true);
  student.zero_grads();

  std::vector<Tensor> params;
  for (const auto& np : student.parameters()) params.push_back(np.tensor);
  AdamW opt(params, config.weight_decay);
  BatchPlan plan(config.sequence_length, config.seed);

  TrainReport report;
  auto evaluate = [&](int64_t step) {
    double ppl = perplexity(student, val_stream, config.sequence_length);
    report.evals.emplace_back(step, ppl);
    if (std::isnan(report.best_ppl) || ppl < report.best_ppl) {
      report.best_ppl = ppl;
      if (!out_dir.empty())
        save_checkpoint(student, out_dir + "/best.ckpt");
    }
    if (!out_dir.empty()) save_checkpoint(student, out_dir + "/latest.ckpt");
    return ppl;
  };

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  double ppl0 = evaluate(0);
  if (progress) std::cerr << "step 0  ppl " << ppl0 << "\n";

  std::vector<int> inputs, targets;
  double inv_accum = 1.0 / static_cast<double>(config.accumulation_steps);
  for (int64_t step = 0; step < config.total_steps; ++step) {
    double sum_total = 0.0, sum_ce = 0.0, sum_kl = 0.0;
    for (int64_t micro = 0; micro < config.accumulation_steps; ++micro) {
      plan.next_batch(train_stream, inputs, targets);
      Tape tape;
      Tensor s_logits = student.forward(inputs, &tape);
      LossBreakdown loss;
      if (teacher) {
        Tensor t_logits = teacher->forward(inputs);
        loss = distill_loss(&tape, s_logits, t_logits, targets, config.alpha,
                            config.temperature, config.swap_kl);
      } else {
        Tensor ce = ops::cross_entropy(&tape, s_logits, targets);
        loss = {ce, ce.item(), 0.0, 1.0, config.temperature};
      }
      if (!std::isfinite(loss.total.item())) {
        throw std::runtime_error(
            "non-finite loss at step " + std::to_string(step) +
            "; training aborted, last checkpoints retained");
      }
      tape.backward(loss.total);
      sum_total += loss.total.item();
      sum_ce += loss.ce_part;
      sum_kl += loss.kl_part;
    }
    // Average the accumulated grads so the update matches one large batch.
    for (auto& p : params) {
      for (double& g : p.grad()) g *= inv_accum;
    }
    double lr = lr_at(step, config);
    opt.step(lr);
    student.zero_grads();

    TrainRow row;
    row.step = step + 1;
    row.lr = lr;
    row.loss_total = sum_total * inv_accum;
    row.loss_ce = sum_ce * inv_accum;
    row.loss_kl = sum_kl * inv_accum;
    row.tokens = (step + 1) * config.accumulation_steps *
                 config.sequence_length;
    if ((step + 1) % config.eval_every == 0 ||
        step + 1 == config.total_steps) {
      row.ppl = evaluate(step + 1);
    }
    report.rows.push_back(row);
    if (progress) {
      std::cerr << "\rstep " << step + 1 << "/" << config.total_steps
                << "  loss " << row.loss_total;
      if (!std::isnan(row.ppl)) std::cerr << "  ppl " << row.ppl;
      if ((step + 1) % config.eval_every == 0 ||
          step + 1 == config.total_steps)
        std::cerr << "\n";
      std::cerr << std::flush;
    }
  }

  report.steps = config.total_steps;
  report.final_ppl =
      report.evals.empty() ? std::nan("") : report.evals.back().second;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

std::string train_report_to_csv(const TrainReport& report) {
  std::ostringstream os;
  os.precision(12);
  os << "step,lr,loss_total,loss_ce,loss_kl,ppl_if_eval\n";
  for (const auto& r : report.rows) {
    os << r.step << "," << r.lr << "," << r.loss_total << "," << r.loss_ce
       << "," << r.loss_kl << ",";
    if (!std::isnan(r.ppl)) os << r.ppl;
    os << "\n";
  }
  return os.str();
}

nlohmann::json train_report_summary(const TrainReport& report) {
  nlohmann::json j;
  j["steps"] = report.steps;
  j["final_ppl"] = report.final_ppl;
  j["best_ppl"] = report.best_ppl;
  j["wall_seconds"] = report.wall_seconds;
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& [step, ppl] : report.evals)
    evals.push_back({{"step", step}, {"ppl", ppl}});
  j["evals"] = evals;
  return j;
}

}  // namespace acmp
