#pragma once

// Differentiable tensor operations. Every op records a backward rule on the
// tape when any input requires a gradient. Image tensors are NCHW.

#include <vector>

#include "sgsr/tensor.hpp"

namespace sgsr {

// --- convolution and resampling -------------------------------------------

// Output spatial size floor((H + 2p - k) / s) + 1. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor);

// Desubpixel: (N, C, H, W) -> (N, C*f*f, H/f, W/f). Output channel
// c*f*f + dy*f + dx holds input pixel (f*y + dy, f*x + dx) of channel c.
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& input, int factor);

// Sub-pixel shuffle, the exact inverse of space_to_depth.
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& input, int factor);

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int kernel, int stride);

// --- activations ----------------------------------------------------------

// max(x, slope*x); the derivative at exactly 0 is taken to be `slope`.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope);
template <typename T>
Tensor<T> relu(const Tensor<T>& input);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);
// log(sigmoid(x)) evaluated without overflow for large |x|.
template <typename T>
Tensor<T> log_sigmoid(const Tensor<T>& input);

// --- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x);
template <typename T>
Tensor<T> log(const Tensor<T>& x);

// --- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
template <typename T>
Tensor<T> abs_sum(const Tensor<T>& x);
template <typename T>
Tensor<T> square_sum(const Tensor<T>& x);
// Element-mean of |a - b| and (a - b)^2.
template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);
// (N, C, H, W) -> (N, C)
template <typename T>
Tensor<T> sum_spatial(const Tensor<T>& x);
// (N, C, H, W) -> (N, 1, H, W)
template <typename T>
Tensor<T> sum_channels(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_channels(const Tensor<T>& x);

// --- layout ---------------------------------------------------------------

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t length);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// --- layers ---------------------------------------------------------------

// (N, K) x (O, K)^T + b -> (N, O). `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// x (N, C, H, W) scaled by a per-channel weight vector of length C.
template <typename T>
Tensor<T> mul_channels(const Tensor<T>& x, const Tensor<T>& weights);

// Each pixel's channel vector divided by (its L2 norm + eps).
template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& x, T eps);

// weight / sigma with sigma = u^T W v, W the weight viewed as (O, rest).
// u and v are held constant under differentiation.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, const std::vector<T>& u, const std::vector<T>& v);

// --- operators ------------------------------------------------------------

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& x) { return mul_scalar(x, s); }

}  // namespace sgsr
