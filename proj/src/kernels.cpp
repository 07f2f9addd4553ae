#include "sgsr/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <memory>
#include <vector>

namespace sgsr::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

// Output columns [lo, hi) whose input column ox * stride - padding + kx is in range.
void valid_span(const ConvGeometry& g, int64_t kx, int64_t wo, int64_t& lo, int64_t& hi) {
  const int64_t s = g.stride, off = g.padding - kx;
  lo = off > 0 ? (off + s - 1) / s : 0;
  hi = std::min<int64_t>(wo, off + g.width - 1 >= 0 ? (off + g.width - 1) / s + 1 : 0);
  if (hi < lo) hi = lo;
}

// Reusable per-thread scratch; contents are not initialized.
template <typename T>
T* scratch(size_t n) {
  thread_local std::unique_ptr<T[]> buffer;
  thread_local size_t capacity = 0;
  if (n > capacity) {
    buffer.reset(new T[n]);
    capacity = n;
  }
  return buffer.get();
}

}  // namespace

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const int64_t ho = g.out_height(), wo = g.out_width();
  const int64_t k = g.kernel, s = g.stride;
  const int64_t rows = g.patch_size();
#pragma omp parallel for if (rows * ho * wo > 32768)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t c = r / (k * k);
    const int64_t ky = (r / k) % k;
    const int64_t kx = r % k;
    int64_t lo, hi;
    valid_span(g, kx, wo, lo, hi);
    const T* plane = image + c * g.height * g.width;
    T* out = col + r * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy) {
      const int64_t iy = oy * s - g.padding + ky;
      T* row = out + oy * wo;
      if (iy < 0 || iy >= g.height) {
        std::fill(row, row + wo, T(0));
        continue;
      }
      const T* src = plane + iy * g.width - g.padding + kx;
      std::fill(row, row + lo, T(0));
      if (s == 1) {
        std::copy(src + lo, src + hi, row + lo);
      } else {
        for (int64_t ox = lo; ox < hi; ++ox) row[ox] = src[ox * s];
      }
      std::fill(row + hi, row + wo, T(0));
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image) {
  const int64_t ho = g.out_height(), wo = g.out_width();
  const int64_t k = g.kernel, s = g.stride;
  // One thread per input channel: the k*k rows of a channel write only that plane.
#pragma omp parallel for if (g.patch_size() * ho * wo > 32768)
  for (int64_t c = 0; c < g.in_channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        int64_t lo, hi;
        valid_span(g, kx, wo, lo, hi);
        const T* src = col + ((c * k + ky) * k + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * s - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + iy * g.width - g.padding + kx;
          const T* row = src + oy * wo;
          if (s == 1) {
            for (int64_t ox = lo; ox < hi; ++ox) dst[ox] += row[ox];
          } else {
            for (int64_t ox = lo; ox < hi; ++ox) dst[ox * s] += row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const int64_t pixels = g.out_height() * g.out_width();
  const int64_t patch = g.patch_size();
  const int64_t in_plane = g.in_channels * g.height * g.width;
  const int64_t out_plane = g.out_channels * pixels;
  ConstMapMat<T> weight(w, g.out_channels, patch);
  T* col = is_pointwise(g) ? nullptr : scratch<T>(patch * pixels);
  for (int64_t n = 0; n < g.batch; ++n) {
    const T* cols = x + n * in_plane;
    if (col) {
      im2col(g, cols, col);
      cols = col;
    }
    MapMat<T> out(y + n * out_plane, g.out_channels, pixels);
    out.noalias() = weight * ConstMapMat<T>(cols, patch, pixels);
    if (bias) {
      for (int64_t o = 0; o < g.out_channels; ++o) out.row(o).array() += bias[o];
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* grad_y,
                     T* grad_x, T* grad_w, T* grad_b) {
  const int64_t pixels = g.out_height() * g.out_width();
  const int64_t patch = g.patch_size();
  const int64_t in_plane = g.in_channels * g.height * g.width;
  const int64_t out_plane = g.out_channels * pixels;
  ConstMapMat<T> weight(w, g.out_channels, patch);

  if (grad_b) {
    std::fill(grad_b, grad_b + g.out_channels, T(0));
    for (int64_t n = 0; n < g.batch; ++n) {
      for (int64_t o = 0; o < g.out_channels; ++o) {
        const T* gy = grad_y + n * out_plane + o * pixels;
        T acc = 0;
        for (int64_t p = 0; p < pixels; ++p) acc += gy[p];
        grad_b[o] += acc;
      }
    }
  }
  if (grad_w) std::fill(grad_w, grad_w + g.out_channels * patch, T(0));
  if (grad_x) std::fill(grad_x, grad_x + g.batch * in_plane, T(0));

  T* col = is_pointwise(g) ? nullptr : scratch<T>(patch * pixels);
  for (int64_t n = 0; n < g.batch; ++n) {
    ConstMapMat<T> gy(grad_y + n * out_plane, g.out_channels, pixels);
    if (grad_w) {
      const T* cols = x + n * in_plane;
      if (col) {
        im2col(g, cols, col);
        cols = col;
      }
      MapMat<T>(grad_w, g.out_channels, patch).noalias() +=
          gy * ConstMapMat<T>(cols, patch, pixels).transpose();
    }
    if (grad_x) {
      if (is_pointwise(g)) {
        MapMat<T>(grad_x + n * in_plane, patch, pixels).noalias() = weight.transpose() * gy;
      } else {
        MapMat<T>(col, patch, pixels).noalias() = weight.transpose() * gy;
        col2im(g, col, grad_x + n * in_plane);
      }
    }
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const int64_t ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t o = 0; o < g.out_channels; ++o)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          T acc = bias ? bias[o] : T(0);
          for (int64_t c = 0; c < g.in_channels; ++c)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * g.stride - g.padding + ky;
                const int64_t ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += x[((n * g.in_channels + c) * g.height + iy) * g.width + ix] *
                       w[((o * g.in_channels + c) * k + ky) * k + kx];
              }
          y[((n * g.out_channels + o) * ho + oy) * wo + ox] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* grad_y,
                     T* grad_x, T* grad_w, T* grad_b) {
  const int64_t ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  if (grad_x) std::fill(grad_x, grad_x + g.batch * g.in_channels * g.height * g.width, T(0));
  if (grad_w) std::fill(grad_w, grad_w + g.out_channels * g.patch_size(), T(0));
  if (grad_b) std::fill(grad_b, grad_b + g.out_channels, T(0));
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t o = 0; o < g.out_channels; ++o)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          const T gy = grad_y[((n * g.out_channels + o) * ho + oy) * wo + ox];
          if (grad_b) grad_b[o] += gy;
          for (int64_t c = 0; c < g.in_channels; ++c)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = oy * g.stride - g.padding + ky;
                const int64_t ix = ox * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                const int64_t xi = ((n * g.in_channels + c) * g.height + iy) * g.width + ix;
                const int64_t wi = ((o * g.in_channels + c) * k + ky) * k + kx;
                if (grad_x) grad_x[xi] += gy * w[wi];
                if (grad_w) grad_w[wi] += gy * x[xi];
              }
        }
}

template void conv2d_forward(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward(const ConvGeometry&, const float*, const float*, const float*, float*, float*, float*);
template void conv2d_backward(const ConvGeometry&, const double*, const double*, const double*, double*, double*,
                              double*);

}  // namespace reference

template void im2col(const ConvGeometry&, const float*, float*);
template void im2col(const ConvGeometry&, const double*, double*);
template void col2im(const ConvGeometry&, const float*, float*);
template void col2im(const ConvGeometry&, const double*, double*);
template void conv2d_forward(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward(const ConvGeometry&, const float*, const float*, const float*, float*, float*, float*);
template void conv2d_backward(const ConvGeometry&, const double*, const double*, const double*, double*, double*,
                              double*);

}  // namespace sgsr::kernels
