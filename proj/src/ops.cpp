#include "sgsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "sgsr/kernels.hpp"

namespace sgsr {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

constexpr int64_t kParallelMin = 1 << 14;

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* op) {
  if (!x.defined()) fail(op, "undefined input");
  if (x.ndim() != rank) {
    fail(op, "expected a rank-" + std::to_string(rank) + " tensor, got shape " + shape_str(x.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// y = f(x) elementwise; dydx(x, y) gives the local derivative.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dydx, const char* op) {
  const auto in = x.data();
  const int64_t n = x.numel();
  std::vector<T> out(n);
#pragma omp parallel for if (n > kParallelMin)
  for (int64_t i = 0; i < n; ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [dydx](Node<T>& self) {
                          auto& px = *self.parents[0];
                          if (!px.requires_grad) return;
                          auto gx = px.ensure_grad();
                          const int64_t m = static_cast<int64_t>(self.data.size());
#pragma omp parallel for if (m > kParallelMin)
                          for (int64_t i = 0; i < m; ++i) gx[i] += self.grad[i] * dydx(px.data[i], self.data[i]);
                        },
                        op);
}

template <typename T>
Tensor<T> reduce_to_scalar(const Tensor<T>& x, T value, std::function<void(Node<T>&)> back, const char* op) {
  return make_result<T>({1}, {value}, {x.node()}, std::move(back), op);
}

}  // namespace

// --- convolution and resampling -------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (kernel.dim(1) != input.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    fail("conv2d", "input " + shape_str(input.shape()) + " incompatible with kernel " + shape_str(kernel.shape()));
  }
  if (stride < 1 || padding < 0) fail("conv2d", "stride must be >= 1 and padding >= 0");
  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.out_channels = kernel.dim(0);
  g.kernel = kernel.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) {
    fail("conv2d", "input " + shape_str(input.shape()) + " smaller than kernel " + shape_str(kernel.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{g.out_channels}) {
    fail("conv2d", "bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(kernel.shape()));
  }
  const Shape out_shape{g.batch, g.out_channels, g.out_height(), g.out_width()};
  std::vector<T> out(shape_numel(out_shape));
  kernels::conv2d_forward(g, input.data().data(), kernel.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.data());

  std::vector<NodePtr<T>> parents{input.node(), kernel.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return make_result<T>(out_shape, std::move(out), std::move(parents),
                        [g](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          Node<T>* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
                          std::vector<T> gx(px.requires_grad ? px.data.size() : 0);
                          std::vector<T> gw(pw.requires_grad ? pw.data.size() : 0);
                          std::vector<T> gb(pb && pb->requires_grad ? pb->data.size() : 0);
                          kernels::conv2d_backward(g, px.data.data(), pw.data.data(), self.grad.data(),
                                                   gx.empty() ? nullptr : gx.data(),
                                                   gw.empty() ? nullptr : gw.data(),
                                                   gb.empty() ? nullptr : gb.data());
                          if (!gx.empty()) px.accumulate(gx);
                          if (!gw.empty()) pw.accumulate(gw);
                          if (!gb.empty()) pb->accumulate(gb);
                        },
                        "conv2d");
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor) {
  require_rank(input, 4, "upsample_nearest");
  if (factor < 1) fail("upsample_nearest", "factor must be >= 1");
  const int64_t planes = input.dim(0) * input.dim(1);
  const int64_t h = input.dim(2), w = input.dim(3);
  const int64_t oh = h * factor, ow = w * factor;
  std::vector<T> out(planes * oh * ow);
  const auto in = input.data();
#pragma omp parallel for if (planes * oh * ow > kParallelMin)
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t x = 0; x < ow; ++x) out[(p * oh + y) * ow + x] = in[(p * h + y / factor) * w + x / factor];
  return make_result<T>({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input.node()},
                        [=](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto gx = px.ensure_grad();
#pragma omp parallel for if (planes * oh * ow > kParallelMin)
                          for (int64_t p = 0; p < planes; ++p)
                            for (int64_t y = 0; y < oh; ++y)
                              for (int64_t x = 0; x < ow; ++x)
                                gx[(p * h + y / factor) * w + x / factor] += self.grad[(p * oh + y) * ow + x];
                        },
                        "upsample_nearest");
}

namespace {

// Index of the (n, c*f*f + dy*f + dx, y, x) element of the deep layout and of
// its (n, c, f*y + dy, f*x + dx) counterpart in the shallow layout.
struct ShuffleMap {
  int64_t n, c, h, w, f;  // shallow layout (N, C, H, W)
  template <typename Fn>
  void for_each(Fn fn) const {
    const int64_t dh = h / f, dw = w / f, dc = c * f * f;
#pragma omp parallel for collapse(2) if (n * c * h * w > kParallelMin)
    for (int64_t b = 0; b < n; ++b)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < f; ++dy)
          for (int64_t dx = 0; dx < f; ++dx)
            for (int64_t y = 0; y < dh; ++y)
              for (int64_t x = 0; x < dw; ++x) {
                const int64_t deep = ((b * dc + ch * f * f + dy * f + dx) * dh + y) * dw + x;
                const int64_t shallow = ((b * c + ch) * h + f * y + dy) * w + f * x + dx;
                fn(deep, shallow);
              }
  }
};

}  // namespace

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& input, int factor) {
  require_rank(input, 4, "space_to_depth");
  if (factor < 1) fail("space_to_depth", "factor must be >= 1");
  if (input.dim(2) % factor || input.dim(3) % factor) {
    fail("space_to_depth", "spatial dims of " + shape_str(input.shape()) + " not divisible by " + std::to_string(factor));
  }
  const ShuffleMap map{input.dim(0), input.dim(1), input.dim(2), input.dim(3), factor};
  std::vector<T> out(input.numel());
  const auto in = input.data();
  map.for_each([&](int64_t deep, int64_t shallow) { out[deep] = in[shallow]; });
  return make_result<T>({map.n, map.c * factor * factor, map.h / factor, map.w / factor}, std::move(out),
                        {input.node()},
                        [map](Node<T>& self) {
                          auto gx = self.parents[0]->ensure_grad();
                          map.for_each([&](int64_t deep, int64_t shallow) { gx[shallow] += self.grad[deep]; });
                        },
                        "space_to_depth");
}

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& input, int factor) {
  require_rank(input, 4, "depth_to_space");
  if (factor < 1) fail("depth_to_space", "factor must be >= 1");
  if (input.dim(1) % (factor * factor)) {
    fail("depth_to_space", "channels of " + shape_str(input.shape()) + " not divisible by " +
                               std::to_string(factor * factor));
  }
  const ShuffleMap map{input.dim(0), input.dim(1) / (factor * factor), input.dim(2) * factor, input.dim(3) * factor,
                       factor};
  std::vector<T> out(input.numel());
  const auto in = input.data();
  map.for_each([&](int64_t deep, int64_t shallow) { out[shallow] = in[deep]; });
  return make_result<T>({map.n, map.c, map.h, map.w}, std::move(out), {input.node()},
                        [map](Node<T>& self) {
                          auto gx = self.parents[0]->ensure_grad();
                          map.for_each([&](int64_t deep, int64_t shallow) { gx[deep] += self.grad[shallow]; });
                        },
                        "depth_to_space");
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int kernel, int stride) {
  require_rank(input, 4, "max_pool2d");
  if (kernel < 1 || stride < 1) fail("max_pool2d", "kernel and stride must be >= 1");
  const int64_t planes = input.dim(0) * input.dim(1);
  const int64_t h = input.dim(2), w = input.dim(3);
  if (h < kernel || w < kernel) fail("max_pool2d", "input " + shape_str(input.shape()) + " smaller than window");
  const int64_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  std::vector<T> out(planes * oh * ow);
  std::vector<int64_t> argmax(out.size());
  const auto in = input.data();
#pragma omp parallel for if (planes * oh * ow > kParallelMin)
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t x = 0; x < ow; ++x) {
        int64_t best = (p * h + y * stride) * w + x * stride;
        for (int64_t ky = 0; ky < kernel; ++ky)
          for (int64_t kx = 0; kx < kernel; ++kx) {
            const int64_t idx = (p * h + y * stride + ky) * w + x * stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        const int64_t o = (p * oh + y) * ow + x;
        out[o] = in[best];
        argmax[o] = best;
      }
  return make_result<T>({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input.node()},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto gx = self.parents[0]->ensure_grad();
                          for (size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
                        },
                        "max_pool2d");
}

// --- activations ----------------------------------------------------------

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
  if (!(slope >= T(0) && slope < T(1))) fail("leaky_relu", "slope must lie in [0, 1)");
  return unary(
      input, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; }, "leaky_relu");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  return leaky_relu(input, T(0));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  return unary(
      input,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> log_sigmoid(const Tensor<T>& input) {
  return unary(
      input, [](T x) { return std::min(x, T(0)) - std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) {
        // 1 - sigmoid(x) = sigmoid(-x)
        if (x >= T(0)) {
          const T e = std::exp(-x);
          return e / (T(1) + e);
        }
        return T(1) / (T(1) + std::exp(x));
      },
      "log_sigmoid");
}

// --- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()},
                        [](Node<T>& self) {
                          self.parents[0]->accumulate(self.grad);
                          self.parents[1]->accumulate(self.grad);
                        },
                        "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()},
                        [](Node<T>& self) {
                          self.parents[0]->accumulate(self.grad);
                          auto& pb = *self.parents[1];
                          if (!pb.requires_grad) return;
                          auto gb = pb.ensure_grad();
                          for (size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
                        },
                        "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()},
                        [](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          if (pa.requires_grad) {
                            auto g = pa.ensure_grad();
                            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
                          }
                          if (pb.requires_grad) {
                            auto g = pb.ensure_grad();
                            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
                          }
                        },
                        "mul");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(x, [value](T v) { return v + value; }, [](T, T) { return T(1); }, "add_scalar");
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value) {
  return unary(x, [value](T v) { return v * value; }, [value](T, T) { return value; }, "mul_scalar");
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); },
      "abs");
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; }, "square");
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (T v : x.data())
    if (v < T(0)) fail("sqrt", "negative input");
  return unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; }, "sqrt");
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data())
    if (!(v > T(0))) fail("log", "non-positive input");
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; }, "log");
}

// --- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return reduce_to_scalar<T>(x, acc,
                             [](Node<T>& self) {
                               auto g = self.parents[0]->ensure_grad();
                               for (auto& v : g) v += self.grad[0];
                             },
                             "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return reduce_to_scalar<T>(x, acc * inv,
                             [inv](Node<T>& self) {
                               auto g = self.parents[0]->ensure_grad();
                               for (auto& v : g) v += self.grad[0] * inv;
                             },
                             "mean");
}

template <typename T>
Tensor<T> abs_sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += std::abs(v);
  return reduce_to_scalar<T>(x, acc,
                             [](Node<T>& self) {
                               auto& px = *self.parents[0];
                               auto g = px.ensure_grad();
                               for (size_t i = 0; i < g.size(); ++i) {
                                 const T v = px.data[i];
                                 g[i] += self.grad[0] * (v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)));
                               }
                             },
                             "abs_sum");
}

template <typename T>
Tensor<T> square_sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v * v;
  return reduce_to_scalar<T>(x, acc,
                             [](Node<T>& self) {
                               auto& px = *self.parents[0];
                               auto g = px.ensure_grad();
                               for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * T(2) * px.data[i];
                             },
                             "square_sum");
}

template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l1_mean");
  const auto x = a.data(), y = b.data();
  T acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(x[i] - y[i]);
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>({1}, {acc * inv}, {a.node(), b.node()},
                        [inv](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          const T scale = self.grad[0] * inv;
                          auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
                          if (pa.requires_grad) {
                            auto g = pa.ensure_grad();
                            for (size_t i = 0; i < g.size(); ++i) g[i] += scale * sign(pa.data[i] - pb.data[i]);
                          }
                          if (pb.requires_grad) {
                            auto g = pb.ensure_grad();
                            for (size_t i = 0; i < g.size(); ++i) g[i] -= scale * sign(pa.data[i] - pb.data[i]);
                          }
                        },
                        "l1_mean");
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mse");
  const auto x = a.data(), y = b.data();
  T acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>({1}, {acc * inv}, {a.node(), b.node()},
                        [inv](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          const T scale = T(2) * self.grad[0] * inv;
                          if (pa.requires_grad) {
                            auto g = pa.ensure_grad();
                            for (size_t i = 0; i < g.size(); ++i) g[i] += scale * (pa.data[i] - pb.data[i]);
                          }
                          if (pb.requires_grad) {
                            auto g = pb.ensure_grad();
                            for (size_t i = 0; i < g.size(); ++i) g[i] -= scale * (pa.data[i] - pb.data[i]);
                          }
                        },
                        "mse");
}

template <typename T>
Tensor<T> sum_spatial(const Tensor<T>& x) {
  require_rank(x, 4, "sum_spatial");
  const int64_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(planes, T(0));
  const auto in = x.data();
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < hw; ++i) out[p] += in[p * hw + i];
  return make_result<T>({x.dim(0), x.dim(1)}, std::move(out), {x.node()},
                        [planes, hw](Node<T>& self) {
                          auto g = self.parents[0]->ensure_grad();
                          for (int64_t p = 0; p < planes; ++p)
                            for (int64_t i = 0; i < hw; ++i) g[p * hw + i] += self.grad[p];
                        },
                        "sum_spatial");
}

namespace {

template <typename T>
Tensor<T> weighted_channel_sum(const Tensor<T>& x, T weight, const char* op) {
  require_rank(x, 4, op);
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(n * hw, T(0));
  const auto in = x.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) out[b * hw + i] += in[(b * c + ch) * hw + i];
  for (auto& v : out) v *= weight;
  return make_result<T>({n, 1, x.dim(2), x.dim(3)}, std::move(out), {x.node()},
                        [n, c, hw, weight](Node<T>& self) {
                          auto g = self.parents[0]->ensure_grad();
                          for (int64_t b = 0; b < n; ++b)
                            for (int64_t ch = 0; ch < c; ++ch)
                              for (int64_t i = 0; i < hw; ++i) g[(b * c + ch) * hw + i] += weight * self.grad[b * hw + i];
                        },
                        op);
}

}  // namespace

template <typename T>
Tensor<T> sum_channels(const Tensor<T>& x) {
  return weighted_channel_sum(x, T(1), "sum_channels");
}

template <typename T>
Tensor<T> mean_channels(const Tensor<T>& x) {
  require_rank(x, 4, "mean_channels");
  return weighted_channel_sum(x, T(1) / static_cast<T>(x.dim(1)), "mean_channels");
}

// --- layout ---------------------------------------------------------------

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, int axis) {
  if (inputs.empty()) fail("concat", "no inputs");
  const Shape& first = inputs[0].shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) fail("concat", "axis out of range for shape " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    bool ok = static_cast<int>(s.size()) == rank;
    for (int d = 0; ok && d < rank; ++d) ok = d == axis || s[d] == first[d];
    if (!ok) fail("concat", "shape " + shape_str(s) + " incompatible with " + shape_str(first) + " on axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first[d];
  for (int d = axis + 1; d < rank; ++d) inner *= first[d];
  const int64_t out_block = out_shape[axis] * inner;
  std::vector<T> out(shape_numel(out_shape));
  std::vector<int64_t> offsets;
  std::vector<NodePtr<T>> parents;
  int64_t offset = 0;
  for (const auto& t : inputs) {
    const int64_t block = t.dim(axis) * inner;
    const auto in = t.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(in.begin() + o * block, block, out.begin() + o * out_block + offset);
    offsets.push_back(offset);
    parents.push_back(t.node());
    offset += block;
  }
  return make_result<T>(out_shape, std::move(out), std::move(parents),
                        [offsets, outer, out_block](Node<T>& self) {
                          for (size_t k = 0; k < self.parents.size(); ++k) {
                            auto& p = *self.parents[k];
                            if (!p.requires_grad) continue;
                            auto g = p.ensure_grad();
                            const int64_t block = static_cast<int64_t>(g.size()) / outer;
                            for (int64_t o = 0; o < outer; ++o)
                              for (int64_t i = 0; i < block; ++i) g[o * block + i] += self.grad[o * out_block + offsets[k] + i];
                          }
                        },
                        "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t length) {
  const int rank = x.ndim();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) fail("slice", "axis out of range for shape " + shape_str(x.shape()));
  if (start < 0 || length < 1 || start + length > x.dim(axis)) {
    fail("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") out of bounds for " +
                      shape_str(x.shape()));
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const int64_t in_block = x.dim(axis) * inner, out_block = length * inner, skip = start * inner;
  std::vector<T> out(outer * out_block);
  const auto in = x.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(in.begin() + o * in_block + skip, out_block, out.begin() + o * out_block);
  return make_result<T>(out_shape, std::move(out), {x.node()},
                        [=](Node<T>& self) {
                          auto g = self.parents[0]->ensure_grad();
                          for (int64_t o = 0; o < outer; ++o)
                            for (int64_t i = 0; i < out_block; ++i) g[o * in_block + skip + i] += self.grad[o * out_block + i];
                        },
                        "slice");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x.node()},
                        [](Node<T>& self) { self.parents[0]->accumulate(self.grad); }, "reshape");
}

// --- layers ---------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int64_t n = x.dim(0), k = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != k) fail("linear", "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
  if (bias.defined() && bias.shape() != Shape{o}) fail("linear", "bias " + shape_str(bias.shape()) + " does not match weight");
  std::vector<T> out(n * o);
  const auto in = x.data(), w = weight.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t j = 0; j < o; ++j) {
      T acc = bias.defined() ? bias.data()[j] : T(0);
      for (int64_t i = 0; i < k; ++i) acc += in[b * k + i] * w[j * k + i];
      out[b * o + j] = acc;
    }
  std::vector<NodePtr<T>> parents{x.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return make_result<T>({n, o}, std::move(out), std::move(parents),
                        [n, k, o](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          if (px.requires_grad) {
                            auto g = px.ensure_grad();
                            for (int64_t b = 0; b < n; ++b)
                              for (int64_t j = 0; j < o; ++j)
                                for (int64_t i = 0; i < k; ++i) g[b * k + i] += self.grad[b * o + j] * pw.data[j * k + i];
                          }
                          if (pw.requires_grad) {
                            auto g = pw.ensure_grad();
                            for (int64_t b = 0; b < n; ++b)
                              for (int64_t j = 0; j < o; ++j)
                                for (int64_t i = 0; i < k; ++i) g[j * k + i] += self.grad[b * o + j] * px.data[b * k + i];
                          }
                          if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                            auto g = self.parents[2]->ensure_grad();
                            for (int64_t b = 0; b < n; ++b)
                              for (int64_t j = 0; j < o; ++j) g[j] += self.grad[b * o + j];
                          }
                        },
                        "linear");
}

template <typename T>
Tensor<T> mul_channels(const Tensor<T>& x, const Tensor<T>& weights) {
  require_rank(x, 4, "mul_channels");
  if (weights.shape() != Shape{x.dim(1)}) {
    fail("mul_channels", "weights " + shape_str(weights.shape()) + " do not match input " + shape_str(x.shape()));
  }
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel());
  const auto in = x.data(), w = weights.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) out[(b * c + ch) * hw + i] = in[(b * c + ch) * hw + i] * w[ch];
  return make_result<T>(x.shape(), std::move(out), {x.node(), weights.node()},
                        [n, c, hw](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          if (px.requires_grad) {
                            auto g = px.ensure_grad();
                            for (int64_t b = 0; b < n; ++b)
                              for (int64_t ch = 0; ch < c; ++ch)
                                for (int64_t i = 0; i < hw; ++i) {
                                  const int64_t idx = (b * c + ch) * hw + i;
                                  g[idx] += self.grad[idx] * pw.data[ch];
                                }
                          }
                          if (pw.requires_grad) {
                            auto g = pw.ensure_grad();
                            for (int64_t b = 0; b < n; ++b)
                              for (int64_t ch = 0; ch < c; ++ch)
                                for (int64_t i = 0; i < hw; ++i) {
                                  const int64_t idx = (b * c + ch) * hw + i;
                                  g[ch] += self.grad[idx] * px.data[idx];
                                }
                          }
                        },
                        "mul_channels");
}

template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& x, T eps) {
  require_rank(x, 4, "normalize_channels");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> norms(n * hw, T(0));
  const auto in = x.data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) {
        const T v = in[(b * c + ch) * hw + i];
        norms[b * hw + i] += v * v;
      }
  }
  for (auto& v : norms) v = std::sqrt(v);
  std::vector<T> out(x.numel());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t idx = (b * c + ch) * hw + i;
        out[idx] = in[idx] / (norms[b * hw + i] + eps);
      }
  return make_result<T>(x.shape(), std::move(out), {x.node()},
                        [n, c, hw, eps, norms = std::move(norms)](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto g = px.ensure_grad();
                          for (int64_t b = 0; b < n; ++b)
                            for (int64_t i = 0; i < hw; ++i) {
                              const T norm = norms[b * hw + i];
                              const T d = norm + eps;
                              T dot = 0;
                              for (int64_t ch = 0; ch < c; ++ch) {
                                const int64_t idx = (b * c + ch) * hw + i;
                                dot += self.grad[idx] * px.data[idx];
                              }
                              const T coupling = norm > T(0) ? dot / (norm * d * d) : T(0);
                              for (int64_t ch = 0; ch < c; ++ch) {
                                const int64_t idx = (b * c + ch) * hw + i;
                                g[idx] += self.grad[idx] / d - px.data[idx] * coupling;
                              }
                            }
                        },
                        "normalize_channels");
}

template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, const std::vector<T>& u, const std::vector<T>& v) {
  const int64_t rows = weight.dim(0), cols = weight.numel() / rows;
  if (static_cast<int64_t>(u.size()) != rows || static_cast<int64_t>(v.size()) != cols) {
    fail("spectral_normalize", "power-iteration vectors do not match weight " + shape_str(weight.shape()));
  }
  const auto w = weight.data();
  T sigma = 0;
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t k = 0; k < cols; ++k) acc += w[r * cols + k] * v[k];
    sigma += u[r] * acc;
  }
  if (!(sigma > T(0))) fail("spectral_normalize", "non-positive singular value estimate");
  std::vector<T> out(weight.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = w[i] / sigma;
  return make_result<T>(weight.shape(), std::move(out), {weight.node()},
                        [u, v, sigma, rows, cols](Node<T>& self) {
                          auto& pw = *self.parents[0];
                          auto g = pw.ensure_grad();
                          T dot = 0;
                          for (size_t i = 0; i < g.size(); ++i) dot += self.grad[i] * pw.data[i];
                          const T coupling = dot / (sigma * sigma);
                          for (int64_t r = 0; r < rows; ++r)
                            for (int64_t k = 0; k < cols; ++k) {
                              const int64_t idx = r * cols + k;
                              g[idx] += self.grad[idx] / sigma - coupling * u[r] * v[k];
                            }
                        },
                        "spectral_normalize");
}

#define SGSR_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);          \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int);                                         \
  template Tensor<T> space_to_depth(const Tensor<T>&, int);                                           \
  template Tensor<T> depth_to_space(const Tensor<T>&, int);                                           \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int);                                          \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> log_sigmoid(const Tensor<T>&);                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                 \
  template Tensor<T> abs(const Tensor<T>&);                                                           \
  template Tensor<T> square(const Tensor<T>&);                                                        \
  template Tensor<T> sqrt(const Tensor<T>&);                                                          \
  template Tensor<T> log(const Tensor<T>&);                                                           \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mean(const Tensor<T>&);                                                          \
  template Tensor<T> abs_sum(const Tensor<T>&);                                                       \
  template Tensor<T> square_sum(const Tensor<T>&);                                                    \
  template Tensor<T> l1_mean(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sum_spatial(const Tensor<T>&);                                                   \
  template Tensor<T> sum_channels(const Tensor<T>&);                                                  \
  template Tensor<T> mean_channels(const Tensor<T>&);                                                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                      \
  template Tensor<T> slice(const Tensor<T>&, int, int64_t, int64_t);                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> mul_channels(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> normalize_channels(const Tensor<T>&, T);                                         \
  template Tensor<T> spectral_normalize(const Tensor<T>&, const std::vector<T>&, const std::vector<T>&);

SGSR_INSTANTIATE_OPS(float)
SGSR_INSTANTIATE_OPS(double)

}  // namespace sgsr
