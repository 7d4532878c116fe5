#include "dfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "dfnet/errors.hpp"

namespace dfnet {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  Tensor::BackwardFn backward;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

namespace {
thread_local bool g_recording = true;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape.numel(), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (values.size() != shape.numel()) {
    throw ConfigError("tensor of shape " + shape.str() + " needs " +
                      std::to_string(shape.numel()) + " values, got " +
                      std::to_string(values.size()));
  }
  node_->shape = shape;
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape.numel(), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1, 1, 1, 1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(shape, std::move(values));
  out.node_->leaf = false;
  if (!g_recording) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->inputs.reserve(inputs.size());
  for (auto& t : inputs) {
    if (t.requires_grad()) out.node_->inputs.push_back(std::move(t.node_));
  }
  return out;
}

const Shape& Tensor::shape() const {
  static const Shape empty{};
  return node_ ? node_->shape : empty;
}

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) return {};
  return node_->data;
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const Shape& s = shape();
  if (n >= s.n || c >= s.c || h >= s.h || w >= s.w) {
    throw UsageError("index out of range for tensor of shape " + s.str());
  }
  return node_->data[s.index(n, c, h, w)];
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape().str());
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!node_ || !node_->leaf) throw UsageError("requires_grad can only be set on a leaf");
  node_->requires_grad = value;
}

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::grad_buffer() {
  if (!node_) throw UsageError("grad_buffer() on undefined tensor");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->data, false);
}

Tensor Tensor::clone() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->data, node_->requires_grad && node_->leaf);
}

void Tensor::validate_finite(std::string_view what) const {
  if (!node_) return;
  const auto& d = node_->data;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << d[i] << " at flat index " << i
         << " of shape " << node_->shape.str();
      throw NumericError(os.str());
    }
  }
}

void Tensor::backward() const {
  if (!node_) throw UsageError("backward() on undefined tensor");
  if (numel() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " + shape().str());
  }
  if (!node_->requires_grad) {
    throw UsageError("backward() root is not on a gradient tape");
  }
  Tape::record(*this).backward();
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  // Iterative post-order DFS.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node_, 0);
  visited.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      tape.order_.push_back(Tensor(node));
      stack.pop_back();
    }
  }
  return tape;
}

std::vector<Tensor> Tape::inputs_of(std::size_t index) const {
  std::vector<Tensor> result;
  for (const auto& in : order_.at(index).node_->inputs) result.push_back(Tensor(in));
  return result;
}

void Tape::backward() const {
  if (order_.empty()) return;
  // Intermediate gradients are per-pass; only leaves accumulate across calls.
  for (const auto& t : order_) {
    if (!t.node_->leaf) std::fill(t.node_->grad.begin(), t.node_->grad.end(), 0.0);
  }
  order_.back().node_->grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node& node = *it->node_;
    if (node.leaf || !node.backward) continue;
    node.backward(node.data, node.grad_buffer());
  }
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool NoGradGuard::recording() { return g_recording; }

}  // namespace dfnet
