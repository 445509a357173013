#pragma once

// Minimal tape-free reverse-mode autodiff over jras::Tensor.
//
// Every op result holds shared references to its inputs plus a closure that
// pushes the output gradient back into them. backward() orders the reachable
// subgraph topologically and runs the closures once. Nothing is recorded
// while a NoGradGuard is alive on the current thread, which is how gallery
// embeddings end up with no linkage to the retrieval parameters.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "jras/tensor.hpp"

namespace jras::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node& self)> backward_fn;

  // Zero-initialised on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  // In-place access for optimizers and checkpoint loading only.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  // Empty tensor when no gradient has reached this node.
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  void zero_grad();

  // Scalar value of a {1} tensor.
  double item() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  bool same_node(const Var& other) const noexcept { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var parameter(Tensor value);
Var constant(Tensor value);

bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. When gradients are enabled and any input requires
// them, the result records `inputs` and `backward_fn`; otherwise it is a
// constant. Custom fused ops (losses) use this directly.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node& self)> backward_fn);

// Root must be a {1} scalar unless a seed gradient is supplied.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// Number of backward() calls issued on this thread since start.
std::uint64_t backward_call_count() noexcept;

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var detach(const Var& a);

// Forward value is `values`; the gradient passes to `a` only where
// `passthrough` is nonzero. Used for noise models whose output is an affine
// function of the input on a known pixel subset.
Var pointwise_override(const Var& a, Tensor values, Tensor passthrough);

// ---- reductions ------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var global_avg_pool(const Var& x);  // {C,H,W} -> {C}

// ---- shape -----------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
Var transpose(const Var& a);                     // 2-D only
Var concat(const std::vector<Var>& parts);       // along axis 0
Var slice(const Var& a, std::int64_t begin, std::int64_t end);  // along axis 0
Var gather(const Var& a, const std::vector<std::int64_t>& indices);  // 1-D

// ---- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);  // {n,m} x {m,p}
// x: {in} or {n,in}; weight: {out,in}; bias: {out} (may be undefined).
Var linear(const Var& x, const Var& weight, const Var& bias);

// ---- normalisation ---------------------------------------------------------
Var l2_normalize(const Var& x);  // 1-D
Var softmax(const Var& x);       // 1-D
Var softmax_rows(const Var& x);  // 2-D, per row
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// ---- image ops (x is {C,H,W}) ----------------------------------------------
// weight {Cout,Cin,k,k}; bias {Cout} or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);
Var upsample_nearest(const Var& x, int factor);
Var avg_pool(const Var& x, int factor);
// x {C,H,W} times m {1,H,W} broadcast over channels.
Var mul_channels(const Var& x, const Var& m);
// sum_i weights[i] * items[i]; items are constants of identical shape.
Var weighted_sum(const Var& weights, std::vector<Tensor> items);

}  // namespace jras::ag
