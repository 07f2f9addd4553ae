#pragma once

#include "sgsr/image.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr {

struct GradientMapOptions {
  // Smoothing inside the magnitude: sqrt(gx^2 + gy^2 + eps^2).
  double eps = 1e-6;
  // One map per RGB channel instead of one map of the channel mean.
  bool per_channel = false;
};

// Fixed gradient-magnitude operator. Central differences [-1, 0, 1] along x
// and y with replicate padding at the borders, applied to the channel mean
// (or to each channel). Input (N, C, H, W) with H, W >= 3; output
// (N, 1, H, W), or (N, C, H, W) in per-channel mode. Differentiable.
template <typename T>
Tensor<T> extract_gradient(const Tensor<T>& images, const GradientMapOptions& options = {});

// Convenience for inspection: the map of a single image, scaled so its
// maximum is 1 (or left as is when the image is flat).
Image gradient_map_image(const Image& image, const GradientMapOptions& options = {});

}  // namespace sgsr
