#include "ctlab/tensor.hpp"

#include <atomic>
#include <stdexcept>
#include <unordered_set>

#include "ctlab/parallel.hpp"

namespace ctlab {

namespace {
std::atomic<int> g_threads{1};
thread_local bool g_grad_enabled = true;
}  // namespace

int num_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_num_threads(int n) {
  g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

Tensor Tensor::zeros(std::vector<std::int64_t> dims, bool requires_grad) {
  return full(std::move(dims), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::int64_t> dims, double value,
                    bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->dims = std::move(dims);
  node->data.assign(static_cast<std::size_t>(node->numel()), value);
  node->requires_grad = requires_grad;
  node->needs_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<std::int64_t> dims,
                         std::vector<double> values, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->dims = std::move(dims);
  if (static_cast<std::int64_t>(values.size()) != node->numel())
    throw std::invalid_argument("from_data: value count does not match dims");
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->needs_grad = requires_grad;
  return Tensor(std::move(node));
}

std::vector<double>& Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  node_->needs_grad = v || node_->needs_grad;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item(): tensor is not scalar");
  return node_->data[0];
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

Tensor make_op(std::vector<std::int64_t> dims, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backward_fn) {
  auto node = std::make_shared<TensorNode>();
  node->dims = std::move(dims);
  node->data = std::move(data);
  if (static_cast<std::int64_t>(node->data.size()) != node->numel())
    throw std::logic_error("make_op: data size does not match dims");
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.node()->needs_grad;
  if (NoGradGuard::grad_enabled() && needs) {
    node->needs_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");
  TensorNode* root = loss.node().get();
  if (!root->needs_grad) return;  // nothing requires gradients

  // Iterative post-order DFS over the needs_grad subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    std::size_t next;
  };
  std::vector<Frame> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->inputs.size()) {
      TensorNode* child = f.node->inputs[f.next++].get();
      if (child->needs_grad && visited.insert(child).second)
        stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace ctlab
