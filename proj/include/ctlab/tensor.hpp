#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace ctlab {

class TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One value in the computation graph. Holds data, the accumulated gradient,
// and the recipe to push gradients into its inputs.
class TensorNode {
 public:
  std::vector<std::int64_t> dims;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // this node or an ancestor requires grad
  std::vector<NodePtr> inputs;
  std::function<void(TensorNode&)> backward_fn;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(static_cast<std::size_t>(numel()), 0.0);
  }
};

// Shared handle to a TensorNode; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<std::int64_t> dims, bool requires_grad = false);
  static Tensor full(std::vector<std::int64_t> dims, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<std::int64_t> dims,
                          std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::int64_t>& dims() const { return node_->dims; }
  std::int64_t numel() const { return node_->numel(); }
  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v);
  void zero_grad() { node_->grad.clear(); }
  double item() const;
  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Suspends graph recording for the scope (inference forward passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool grad_enabled();

 private:
  bool prev_;
};

// Creates an op result; records inputs and the backward recipe only when
// grads are enabled and some input needs them.
Tensor make_op(std::vector<std::int64_t> dims, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backward_fn);

// Propagates d(loss)/d(tensor) into every requires_grad tensor reachable
// from `loss`, accumulating into existing gradients.
void backward(const Tensor& loss);

}  // namespace ctlab
