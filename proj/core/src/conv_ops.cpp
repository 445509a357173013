#include <algorithm>
#include <memory>

#include "eigen_maps.hpp"
#include "jras/autograd.hpp"
#include "jras/errors.hpp"

namespace jras::ag {

namespace {

struct ConvGeometry {
  std::int64_t cin, h, w, k, stride, pad, hout, wout;
  std::int64_t patch() const { return cin * k * k; }
  std::int64_t out_pixels() const { return hout * wout; }
};

// col is {cin*k*k, hout*wout}; rows ordered (channel, ky, kx).
void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::int64_t np = g.out_pixels();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * np;
        for (std::int64_t oy = 0; oy < g.hout; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          double* dst = row + oy * g.wout;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wout, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wout; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  const std::int64_t np = g.out_pixels();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * np;
        for (std::int64_t oy = 0; oy < g.hout; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = x + (c * g.h + iy) * g.w;
          const double* src = row + oy * g.wout;
          for (std::int64_t ox = 0; ox < g.wout; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  if (x.value().rank() != 3 || weight.value().rank() != 4) {
    throw ArgumentError("conv2d: expects x {C,H,W} and weight {Cout,Cin,k,k}, got " +
                        shape_to_string(x.shape()) + " and " + shape_to_string(weight.shape()));
  }
  const auto cout = weight.shape()[0];
  ConvGeometry g{};
  g.cin = x.shape()[0];
  g.h = x.shape()[1];
  g.w = x.shape()[2];
  g.k = weight.shape()[2];
  g.stride = stride;
  g.pad = padding;
  if (weight.shape()[1] != g.cin || weight.shape()[3] != g.k || stride < 1 || padding < 0) {
    throw ArgumentError("conv2d: channel/kernel mismatch " + shape_to_string(x.shape()) + " vs " +
                        shape_to_string(weight.shape()));
  }
  g.hout = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wout = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.hout <= 0 || g.wout <= 0) throw ArgumentError("conv2d: input smaller than kernel");
  if (bias.defined() && bias.numel() != cout) throw ArgumentError("conv2d: bias size mismatch");

  const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
  // For 1x1 convolutions the input already is the column matrix.
  std::shared_ptr<Tensor> col;
  const double* col_data = x.value().data();
  if (!pointwise) {
    col = std::make_shared<Tensor>(Shape{g.patch(), g.out_pixels()});
    im2col(x.value().data(), g, col->data());
    col_data = col->data();
  }

  Tensor out({cout, g.hout, g.wout});
  auto y = MatMap(out.data(), cout, g.out_pixels());
  y.noalias() = ConstMatMap(weight.value().data(), cout, g.patch()) *
                ConstMatMap(col_data, g.patch(), g.out_pixels());
  if (bias.defined()) y.colwise() += ConstRowVecMap(bias.value().data(), cout).transpose();

  return make_op(std::move(out), {x, weight, bias}, [g, cout, pointwise, col](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    Node& nb = *self.inputs[2];
    auto gy = ConstMatMap(self.grad.data(), cout, g.out_pixels());
    const double* col_data = pointwise ? nx.value.data() : col->data();
    if (nw.requires_grad) {
      MatMap(nw.grad_buffer().data(), cout, g.patch()).noalias() +=
          gy * ConstMatMap(col_data, g.patch(), g.out_pixels()).transpose();
    }
    if (nb.requires_grad) {
      RowVecMap(nb.grad_buffer().data(), cout) += gy.rowwise().sum().transpose();
    }
    if (nx.requires_grad) {
      auto w = ConstMatMap(nw.value.data(), cout, g.patch());
      if (pointwise) {
        MatMap(nx.grad_buffer().data(), g.patch(), g.out_pixels()).noalias() += w.transpose() * gy;
      } else {
        RowMatrix gcol = w.transpose() * gy;
        col2im_add(gcol.data(), g, nx.grad_buffer().data());
      }
    }
  });
}

Var upsample_nearest(const Var& x, int factor) {
  if (x.value().rank() != 3 || factor < 1) throw ArgumentError("upsample_nearest: bad input");
  const auto c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::int64_t f = factor;
  Tensor out({c, h * f, w * f});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h * f; ++y)
      for (std::int64_t xx = 0; xx < w * f; ++xx) out.at(ch, y, xx) = x.value().at(ch, y / f, xx / f);
  return make_op(std::move(out), {x}, [c, h, w, f](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h * f; ++y)
        for (std::int64_t xx = 0; xx < w * f; ++xx)
          g.at(ch, y / f, xx / f) += self.grad.at(ch, y, xx);
  });
}

Var avg_pool(const Var& x, int factor) {
  if (x.value().rank() != 3 || factor < 1) throw ArgumentError("avg_pool: bad input");
  const auto c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::int64_t f = factor;
  if (h % f != 0 || w % f != 0) {
    throw ArgumentError("avg_pool: " + shape_to_string(x.shape()) + " not divisible by " +
                        std::to_string(factor));
  }
  const double inv = 1.0 / static_cast<double>(f * f);
  Tensor out({c, h / f, w / f});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) out.at(ch, y / f, xx / f) += inv * x.value().at(ch, y, xx);
  return make_op(std::move(out), {x}, [c, h, w, f, inv](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) g.at(ch, y, xx) += inv * self.grad.at(ch, y / f, xx / f);
  });
}

Var mul_channels(const Var& x, const Var& m) {
  if (x.value().rank() != 3 || m.value().rank() != 3 || m.shape()[0] != 1 ||
      m.shape()[1] != x.shape()[1] || m.shape()[2] != x.shape()[2]) {
    throw ArgumentError("mul_channels: " + shape_to_string(x.shape()) + " vs mask " +
                        shape_to_string(m.shape()));
  }
  const auto c = x.shape()[0];
  const auto hw = x.shape()[1] * x.shape()[2];
  Tensor out = x.value();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < hw; ++i) out[ch * hw + i] *= m.value()[i];
  return make_op(std::move(out), {x, m}, [c, hw](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nm = *self.inputs[1];
    if (nx.requires_grad) {
      Tensor& g = nx.grad_buffer();
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) g[ch * hw + i] += self.grad[ch * hw + i] * nm.value[i];
    }
    if (nm.requires_grad) {
      Tensor& g = nm.grad_buffer();
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) g[i] += self.grad[ch * hw + i] * nx.value[ch * hw + i];
    }
  });
}

Var weighted_sum(const Var& weights, std::vector<Tensor> items) {
  if (weights.value().rank() != 1 || weights.numel() != static_cast<std::int64_t>(items.size()) ||
      items.empty()) {
    throw ArgumentError("weighted_sum: need one weight per item");
  }
  for (const auto& it : items) {
    if (it.shape() != items.front().shape()) {
      throw ArgumentError("weighted_sum: item shapes differ " + shape_to_string(it.shape()) +
                          " vs " + shape_to_string(items.front().shape()));
    }
  }
  Tensor out(items.front().shape(), 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double wi = weights.value()[static_cast<std::int64_t>(i)];
    for (std::int64_t p = 0; p < out.numel(); ++p) out[p] += wi * items[i][p];
  }
  auto shared = std::make_shared<std::vector<Tensor>>(std::move(items));
  return make_op(std::move(out), {weights}, [shared](Node& self) {
    Node& nw = *self.inputs[0];
    if (!nw.requires_grad) return;
    Tensor& g = nw.grad_buffer();
    for (std::size_t i = 0; i < shared->size(); ++i) {
      g[static_cast<std::int64_t>(i)] += dot((*shared)[i], self.grad);
    }
  });
}

}  // namespace jras::ag
