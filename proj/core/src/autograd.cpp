#include "jras/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "jras/errors.hpp"
#include "eigen_maps.hpp"

namespace jras::ag {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_backward_calls = 0;

void require(bool condition, const char* op, const std::string& detail) {
  if (!condition) throw ArgumentError(std::string(op) + ": " + detail);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
}

// Adds `scale * g` into the input's gradient if it participates.
void accumulate(Node& input, const Tensor& g, double factor = 1.0) {
  if (!input.requires_grad) return;
  Tensor& buf = input.grad_buffer();
  double* dst = buf.data();
  const double* src = g.data();
  const std::int64_t n = g.numel();
  if (factor == 1.0) {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += factor * src[i];
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.numel() > 0) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

double Var::item() const {
  require(numel() == 1, "item", "tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

Var parameter(Tensor value) { return Var(std::move(value), true); }
Var constant(Tensor value) { return Var(std::move(value), false); }

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node& self)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Var& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& v : inputs) {
        // Undefined optional inputs keep their slot so indices stay stable.
        node->inputs.push_back(v.defined() ? v.node() : std::make_shared<Node>());
      }
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  require(root.numel() == 1, "backward", "root must be scalar, got " + shape_to_string(root.shape()));
  backward(root, Tensor(root.shape(), 1.0));
}

void backward(const Var& root, const Tensor& seed) {
  ++t_backward_calls;
  if (!root.requires_grad()) return;
  require(seed.shape() == root.shape(), "backward", "seed shape mismatch");

  // Iterative post-order DFS -> reverse gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

std::uint64_t backward_call_count() noexcept { return t_backward_calls; }

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const std::int64_t n = self.grad.numel();
    if (na.requires_grad) {
      Tensor& ga = na.grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      Tensor& gb = nb.grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) gb[i] += self.grad[i] * na.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  out *= factor;
  return make_op(std::move(out), {a},
                 [factor](Node& self) { accumulate(*self.inputs[0], self.grad, factor); });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      if (in.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var detach(const Var& a) { return constant(a.value()); }

Var pointwise_override(const Var& a, Tensor values, Tensor passthrough) {
  require(values.shape() == a.shape() && passthrough.shape() == a.shape(), "pointwise_override",
          "shape mismatch");
  return make_op(std::move(values), {a}, [pass = std::move(passthrough)](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      if (pass[i] != 0.0) g[i] += self.grad[i];
    }
  });
}

// ---- reductions ------------------------------------------------------------

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return make_op(Tensor({1}, total), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    const double s = self.grad[0];
    for (auto& v : g.values()) v += s;
  });
}

Var mean(const Var& a) {
  require(a.numel() > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var global_avg_pool(const Var& x) {
  require(x.value().rank() == 3, "global_avg_pool", "expects {C,H,W}");
  const auto c = x.shape()[0];
  const auto hw = x.shape()[1] * x.shape()[2];
  Tensor out({c}, 0.0);
  const double* src = x.value().data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) s += src[ch * hw + i];
    out[ch] = s / static_cast<double>(hw);
  }
  return make_op(std::move(out), {x}, [c, hw](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* g = in.grad_buffer().data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double v = self.grad[ch] / static_cast<double>(hw);
      for (std::int64_t i = 0; i < hw; ++i) g[ch * hw + i] += v;
    }
  });
}

// ---- shape -----------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var transpose(const Var& a) {
  require(a.value().rank() == 2, "transpose", "expects 2-D");
  const auto rows = a.shape()[0];
  const auto cols = a.shape()[1];
  Tensor out({cols, rows});
  MatMap(out.data(), cols, rows) = ConstMatMap(a.value().data(), rows, cols).transpose();
  return make_op(std::move(out), {a}, [rows, cols](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    MatMap(in.grad_buffer().data(), rows, cols) +=
        ConstMatMap(self.grad.data(), cols, rows).transpose();
  });
}

Var concat(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat", "no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::int64_t lead = 0;
  for (const auto& p : parts) {
    require(p.value().rank() >= 1 && Shape(p.shape().begin() + 1, p.shape().end()) == tail,
            "concat", "trailing dimensions differ: " + shape_to_string(p.shape()));
    lead += p.shape()[0];
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor out(shape);
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data(), p.value().data() + p.numel(), out.data() + off);
    off += p.numel();
  }
  return make_op(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      Tensor& g = in.grad_buffer();
      const double* src = self.grad.data() + offsets[k];
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += src[i];
    }
  });
}

Var slice(const Var& a, std::int64_t begin, std::int64_t end) {
  require(a.value().rank() >= 1 && 0 <= begin && begin < end && end <= a.shape()[0], "slice",
          "range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of bounds");
  const std::int64_t stride = a.numel() / a.shape()[0];
  Shape shape = a.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy(a.value().data() + begin * stride, a.value().data() + end * stride, out.data());
  return make_op(std::move(out), {a}, [begin, stride](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* g = in.grad_buffer().data() + begin * stride;
    for (std::int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
  });
}

Var gather(const Var& a, const std::vector<std::int64_t>& indices) {
  require(a.value().rank() == 1, "gather", "expects 1-D");
  Tensor out({static_cast<std::int64_t>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < a.numel(), "gather", "index out of range");
    out[static_cast<std::int64_t>(i)] = a.value()[indices[i]];
  }
  return make_op(std::move(out), {a}, [indices](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      g[indices[i]] += self.grad[static_cast<std::int64_t>(i)];
    }
  });
}

// ---- linear algebra --------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[1] == b.shape()[0],
          "matmul", shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  const auto n = a.shape()[0], m = a.shape()[1], p = b.shape()[1];
  Tensor out({n, p});
  MatMap(out.data(), n, p).noalias() =
      ConstMatMap(a.value().data(), n, m) * ConstMatMap(b.value().data(), m, p);
  return make_op(std::move(out), {a, b}, [n, m, p](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    auto g = ConstMatMap(self.grad.data(), n, p);
    if (na.requires_grad) {
      MatMap(na.grad_buffer().data(), n, m).noalias() +=
          g * ConstMatMap(nb.value.data(), m, p).transpose();
    }
    if (nb.requires_grad) {
      MatMap(nb.grad_buffer().data(), m, p).noalias() +=
          ConstMatMap(na.value.data(), n, m).transpose() * g;
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(weight.value().rank() == 2, "linear", "weight must be {out,in}");
  const auto out_f = weight.shape()[0], in_f = weight.shape()[1];
  const bool vector_input = x.value().rank() == 1;
  require((vector_input && x.shape()[0] == in_f) ||
              (x.value().rank() == 2 && x.shape()[1] == in_f),
          "linear", "input " + shape_to_string(x.shape()) + " vs weight " +
                        shape_to_string(weight.shape()));
  if (bias.defined()) {
    require(bias.value().rank() == 1 && bias.shape()[0] == out_f, "linear", "bias must be {out}");
  }
  const std::int64_t rows = vector_input ? 1 : x.shape()[0];
  Tensor out(vector_input ? Shape{out_f} : Shape{rows, out_f});
  auto y = MatMap(out.data(), rows, out_f);
  y.noalias() = ConstMatMap(x.value().data(), rows, in_f) *
                ConstMatMap(weight.value().data(), out_f, in_f).transpose();
  if (bias.defined()) y.rowwise() += ConstRowVecMap(bias.value().data(), out_f);
  return make_op(std::move(out), {x, weight, bias}, [rows, in_f, out_f](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    Node& nb = *self.inputs[2];
    auto g = ConstMatMap(self.grad.data(), rows, out_f);
    if (nx.requires_grad) {
      MatMap(nx.grad_buffer().data(), rows, in_f).noalias() +=
          g * ConstMatMap(nw.value.data(), out_f, in_f);
    }
    if (nw.requires_grad) {
      MatMap(nw.grad_buffer().data(), out_f, in_f).noalias() +=
          g.transpose() * ConstMatMap(nx.value.data(), rows, in_f);
    }
    if (nb.requires_grad) {
      RowVecMap(nb.grad_buffer().data(), out_f) += g.colwise().sum();
    }
  });
}

// ---- normalisation ---------------------------------------------------------

Var l2_normalize(const Var& x) {
  require(x.value().rank() == 1, "l2_normalize", "expects 1-D");
  const double norm = std::max(std::sqrt(dot(x.value(), x.value())), 1e-12);
  Tensor out = x.value();
  out *= 1.0 / norm;
  return make_op(std::move(out), {x}, [norm](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    // y = x/|x|; dx = (g - y (y.g)) / |x|; y is recovered from the output.
    Tensor y = in.value;
    y *= 1.0 / norm;
    const double yg = dot(y, self.grad);
    Tensor& g = in.grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += (self.grad[i] - y[i] * yg) / norm;
  });
}

namespace {

void softmax_inplace(double* v, std::int64_t n) {
  double mx = v[0];
  for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    s += v[i];
  }
  for (std::int64_t i = 0; i < n; ++i) v[i] /= s;
}

void softmax_backward_row(const double* y, const double* gy, double* gx, std::int64_t n) {
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += gy[i] * y[i];
  for (std::int64_t i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - s);
}

}  // namespace

Var softmax(const Var& x) {
  require(x.value().rank() == 1 && x.numel() > 0, "softmax", "expects non-empty 1-D");
  Tensor out = x.value();
  softmax_inplace(out.data(), out.numel());
  Tensor y = out;
  return make_op(std::move(out), {x}, [y = std::move(y)](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    softmax_backward_row(y.data(), self.grad.data(), in.grad_buffer().data(), y.numel());
  });
}

Var softmax_rows(const Var& x) {
  require(x.value().rank() == 2 && x.shape()[1] > 0, "softmax_rows", "expects 2-D");
  const auto rows = x.shape()[0], cols = x.shape()[1];
  Tensor out = x.value();
  for (std::int64_t r = 0; r < rows; ++r) softmax_inplace(out.data() + r * cols, cols);
  Tensor y = out;
  return make_op(std::move(out), {x}, [y = std::move(y), rows, cols](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* g = in.grad_buffer().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      softmax_backward_row(y.data() + r * cols, self.grad.data() + r * cols, g + r * cols, cols);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  require(x.value().rank() == 2, "layer_norm_rows", "expects 2-D");
  const auto rows = x.shape()[0], cols = x.shape()[1];
  require(gain.numel() == cols && bias.numel() == cols, "layer_norm_rows", "affine size mismatch");
  Tensor xhat({rows, cols});
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  Tensor out({rows, cols});
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = x.value().data() + r * cols;
    double mu = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (std::int64_t c = 0; c < cols; ++c) {
      const double h = (row[c] - mu) * is;
      xhat.at(r, c) = h;
      out.at(r, c) = h * gain.value()[c] + bias.value()[c];
    }
  }
  return make_op(std::move(out), {x, gain, bias},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Node& self) {
    Node& nx = *self.inputs[0];
    Node& ng = *self.inputs[1];
    Node& nb = *self.inputs[2];
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * cols;
      const double* h = xhat.data() + r * cols;
      if (ng.requires_grad) {
        double* gg = ng.grad_buffer().data();
        for (std::int64_t c = 0; c < cols; ++c) gg[c] += g[c] * h[c];
      }
      if (nb.requires_grad) {
        double* gb = nb.grad_buffer().data();
        for (std::int64_t c = 0; c < cols; ++c) gb[c] += g[c];
      }
      if (nx.requires_grad) {
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
          const double gh = g[c] * ng.value[c];
          m1 += gh;
          m2 += gh * h[c];
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        double* gx = nx.grad_buffer().data() + r * cols;
        const double is = inv_std[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < cols; ++c) {
          gx[c] += is * (g[c] * ng.value[c] - m1 - h[c] * m2);
        }
      }
    }
  });
}

}  // namespace jras::ag
