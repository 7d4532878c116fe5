#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dfnet {

/// Extents of a rank-4 tensor laid out as (batch, channels, height, width).
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t index(std::size_t in, std::size_t ic, std::size_t ih,
                              std::size_t iw) const {
    return ((in * c + ic) * h + ih) * w + iw;
  }
  std::string str() const;

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

namespace detail {
struct Node;
}

class Tape;

/// Dense rank-4 array of doubles that can take part in reverse-mode
/// differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Results of differentiable operations remember their inputs and a backward
/// closure; calling backward() on a scalar result walks that graph in reverse
/// topological order. Leaf tensors with requires_grad() accumulate gradients
/// across backward calls until zero_grad().
class Tensor {
 public:
  /// Receives the output's data and gradient and accumulates into the inputs.
  using BackwardFn = std::function<void(std::span<const double> out_data,
                                        std::span<const double> out_grad)>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Builds the result of a differentiable operation. The backward closure is
  /// only kept when at least one input requires a gradient and gradient
  /// recording is enabled.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const double> data() const;
  /// Direct write access. Mutating a tensor that already feeds a recorded
  /// graph invalidates that graph's gradients.
  std::span<double> mutable_data();
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  /// Only valid on leaves.
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  /// Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  /// Gradient buffer, allocated (zero-filled) on first use.
  std::span<double> grad_buffer();
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;
  /// Deep copy preserving requires_grad but not the graph.
  Tensor clone() const;

  /// Throws NumericError naming `what` if any value is NaN or infinite.
  void validate_finite(std::string_view what = "tensor") const;

  /// Propagates d(this)/d(leaf) into every reachable leaf that requires a
  /// gradient. The receiver must hold exactly one element.
  void backward() const;

  friend bool same_node(const Tensor& a, const Tensor& b) { return a.node_ == b.node_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

/// A trainable tensor and its stable name (used by checkpoints).
struct NamedParameter {
  std::string name;
  Tensor value;
};

/// Topologically ordered record of the operations reachable from a root.
class Tape {
 public:
  /// Every node appears after all of its inputs.
  static Tape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  std::span<const Tensor> order() const { return order_; }
  /// Inputs of the node at `index` in recording order.
  std::vector<Tensor> inputs_of(std::size_t index) const;

  /// Runs every backward closure once, in reverse recording order, seeding
  /// the root gradient with one.
  void backward() const;

 private:
  std::vector<Tensor> order_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool recording();

 private:
  bool previous_;
};

}  // namespace dfnet
