// SPDX-License-Identifier: Apache-2.0
#include "acmp/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace acmp {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  int64_t n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<size_t>(n), 0.0);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data,
               bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::full(std::vector<int64_t> shape, double v, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  for (double& x : t.data()) x = v;
  return t;
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw std::logic_error("item() on non-scalar tensor " +
                           shape_str(impl_->shape));
  }
  return impl_->data[0];
}

std::vector<double>& GradStore::adj(const Tensor& t) {
  auto it = m_.find(t.id());
  if (it == m_.end()) {
    it = m_.emplace(t.id(),
                    std::make_pair(t, std::vector<double>(
                                          static_cast<size_t>(t.size()), 0.0)))
             .first;
  }
  return it->second.second;
}

void GradStore::flush() {
  for (auto& [id, entry] : m_) {
    auto& [tensor, adjoint] = entry;
    if (!tensor.requires_grad()) continue;
    auto& g = tensor.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += adjoint[i];
  }
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::logic_error("backward requires a scalar loss, got " +
                           shape_str(loss.shape()));
  }
  GradStore store;
  store.adj(loss)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(store);
  store.flush();
}

}  // namespace acmp
