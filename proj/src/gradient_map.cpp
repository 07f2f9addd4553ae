#include "sgsr/gradient_map.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgsr {

template <typename T>
Tensor<T> extract_gradient(const Tensor<T>& images, const GradientMapOptions& options) {
  if (images.ndim() != 4) throw std::invalid_argument("extract_gradient: expected NCHW, got " + shape_str(images.shape()));
  const int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (h < 3 || w < 3) throw std::invalid_argument("extract_gradient: image " + shape_str(images.shape()) + " smaller than 3x3");
  const int64_t maps = options.per_channel ? c : 1;
  const int64_t hw = h * w;
  const T eps2 = static_cast<T>(options.eps * options.eps);

  // Source planes: the channel mean, or each channel on its own.
  std::vector<T> source(n * maps * hw, T(0));
  const auto in = images.data();
  if (options.per_channel) {
    std::copy(in.begin(), in.end(), source.begin());
  } else {
    const T inv = T(1) / static_cast<T>(c);
    for (int64_t b = 0; b < n; ++b)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) source[b * hw + i] += in[(b * c + ch) * hw + i] * inv;
  }

  std::vector<T> gx(source.size()), gy(source.size()), out(source.size());
  const int64_t planes = n * maps;
#pragma omp parallel for if (planes * hw > 16384)
  for (int64_t p = 0; p < planes; ++p) {
    const T* src = source.data() + p * hw;
    for (int64_t y = 0; y < h; ++y) {
      const int64_t up = std::max<int64_t>(y - 1, 0), down = std::min<int64_t>(y + 1, h - 1);
      for (int64_t x = 0; x < w; ++x) {
        const int64_t left = std::max<int64_t>(x - 1, 0), right = std::min<int64_t>(x + 1, w - 1);
        const T dx = src[y * w + right] - src[y * w + left];
        const T dy = src[down * w + x] - src[up * w + x];
        const int64_t o = p * hw + y * w + x;
        gx[o] = dx;
        gy[o] = dy;
        out[o] = std::sqrt(dx * dx + dy * dy + eps2);
      }
    }
  }

  const bool per_channel = options.per_channel;
  return make_result<T>({n, maps, h, w}, std::move(out), {images.node()},
                        [=, gx = std::move(gx), gy = std::move(gy)](Node<T>& self) {
                          std::vector<T> gsrc(planes * hw, T(0));
                          for (int64_t p = 0; p < planes; ++p) {
                            T* gs = gsrc.data() + p * hw;
                            for (int64_t y = 0; y < h; ++y) {
                              const int64_t up = std::max<int64_t>(y - 1, 0), down = std::min<int64_t>(y + 1, h - 1);
                              for (int64_t x = 0; x < w; ++x) {
                                const int64_t left = std::max<int64_t>(x - 1, 0), right = std::min<int64_t>(x + 1, w - 1);
                                const int64_t o = p * hw + y * w + x;
                                const T g = self.grad[o] / self.data[o];
                                gs[y * w + right] += g * gx[o];
                                gs[y * w + left] -= g * gx[o];
                                gs[down * w + x] += g * gy[o];
                                gs[up * w + x] -= g * gy[o];
                              }
                            }
                          }
                          auto gin = self.parents[0]->ensure_grad();
                          if (per_channel) {
                            for (size_t i = 0; i < gin.size(); ++i) gin[i] += gsrc[i];
                          } else {
                            const T inv = T(1) / static_cast<T>(c);
                            for (int64_t b = 0; b < n; ++b)
                              for (int64_t ch = 0; ch < c; ++ch)
                                for (int64_t i = 0; i < hw; ++i) gin[(b * c + ch) * hw + i] += gsrc[b * hw + i] * inv;
                          }
                        },
                        "gradient_map");
}

Image gradient_map_image(const Image& image, const GradientMapOptions& options) {
  const Tensor<double> map = extract_gradient(image_to_tensor<double>(image), options);
  double peak = 0.0;
  for (double v : map.data()) peak = std::max(peak, v);
  const bool flat = peak <= 2.0 * options.eps;
  Image out(image.height, image.width);
  const int maps = static_cast<int>(map.dim(1));
  const auto data = map.data();
  const size_t hw = static_cast<size_t>(image.height) * image.width;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = data[(maps == 1 ? 0 : c) * hw + static_cast<size_t>(y) * image.width + x];
        out.at(y, x, c) = flat ? v : v / peak;
      }
  return out;
}

template Tensor<float> extract_gradient(const Tensor<float>&, const GradientMapOptions&);
template Tensor<double> extract_gradient(const Tensor<double>&, const GradientMapOptions&);

}  // namespace sgsr
