// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace acmp {

// Dense row-major f64 tensor. Copies share storage (shared_ptr semantics),
// so gradients written during backward are visible through every handle.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}

  explicit Tensor(std::vector<int64_t> shape, bool requires_grad = false);
  Tensor(std::vector<int64_t> shape, std::vector<double> data,
         bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }
  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }
  static Tensor full(std::vector<int64_t> shape, double v,
                     bool requires_grad = false);

  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  // Persistent gradient buffer. Allocated (zeroed) on first access;
  // accumulates across backward passes until zero_grad.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;

  // True when both handles refer to the same storage.
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Per-backward-pass adjoint buffers, keyed by tensor storage identity.
// Keeping pass-local adjoints separate from Tensor::grad makes repeated
// backward calls from the same loss purely additive.
class GradStore {
 public:
  std::vector<double>& adj(const Tensor& t);

  // Adds every requires_grad adjoint into its tensor's persistent grad.
  void flush();

 private:
  std::unordered_map<const void*, std::pair<Tensor, std::vector<double>>> m_;
};

// Reverse-mode tape. Forward ops that receive a non-null tape push one
// backward closure each; backward() replays them in reverse.
class Tape {
 public:
  void push(std::function<void(GradStore&)> vjp) {
    nodes_.push_back(std::move(vjp));
  }

  // Seeds d(loss)/d(loss) = 1, runs every recorded VJP in reverse order,
  // then accumulates the resulting adjoints into persistent grads.
  // loss must be a scalar (size 1).
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void(GradStore&)>> nodes_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace acmp
