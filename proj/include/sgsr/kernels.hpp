#pragma once

// Raw compute kernels behind the differentiable ops. The parallel versions use
// OpenMP over independent output elements and Eigen for the GEMM core; the
// `reference` namespace holds direct serial loops kept for testing and
// benchmarking. Both must agree to rounding.

#include <cstdint>

namespace sgsr::kernels {

struct ConvGeometry {
  int64_t batch = 1;
  int64_t in_channels = 1;
  int64_t height = 1;
  int64_t width = 1;
  int64_t out_channels = 1;
  int64_t kernel = 1;
  int64_t stride = 1;
  int64_t padding = 0;

  int64_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int64_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
  int64_t patch_size() const { return in_channels * kernel * kernel; }
};

// col has shape (C*k*k) x (Ho*Wo) for a single image.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col);

// Scatters (adds) col back into a zeroed image; the adjoint of im2col.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image);

// y = conv(x, w) + b. bias may be null. All buffers NCHW / OIkk.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

// Overwrites whichever of grad_x / grad_w / grad_b is non-null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* grad_y,
                     T* grad_x, T* grad_w, T* grad_b);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* grad_y,
                     T* grad_x, T* grad_w, T* grad_b);

}  // namespace reference

}  // namespace sgsr::kernels
