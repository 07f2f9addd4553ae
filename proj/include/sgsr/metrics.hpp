#pragma once

#include <vector>

#include "sgsr/image.hpp"

namespace sgsr {

struct EvalProtocol {
  bool convert_to_y = true;
  int border_crop = 4;
};

constexpr double kPsnrCap = 100.0;

// One H x W plane per evaluated channel, border already removed.
struct Planes {
  int height = 0;
  int width = 0;
  std::vector<std::vector<double>> channels;
};

// Luma as in ITU-R BT.601 studio range, scaled back to [0, 1]:
// (65.481 R + 128.553 G + 24.966 B + 16) / 255 for R, G, B in [0, 1].
std::vector<double> to_y(const Image& image);
Planes eval_planes(const Image& image, const EvalProtocol& proto);

double psnr(const Image& a, const Image& b, const EvalProtocol& proto = {});
// Gaussian-window SSIM (11x11, sigma 1.5) over the valid region, averaged over channels.
double ssim(const Image& a, const Image& b, const EvalProtocol& proto = {});

}  // namespace sgsr
