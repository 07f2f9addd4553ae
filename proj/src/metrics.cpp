#include "sgsr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace sgsr {

namespace {

void check_pair(const Image& a, const Image& b, const EvalProtocol& proto, int min_side, const char* what) {
  if (!a.same_dims(b)) {
    throw std::invalid_argument(std::string(what) + ": dims differ " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width));
  }
  if (proto.border_crop < 0 || 2 * proto.border_crop >= a.height || 2 * proto.border_crop >= a.width) {
    throw std::invalid_argument(std::string(what) + ": border crop " + std::to_string(proto.border_crop) +
                                " too large for the image");
  }
  if (a.height - 2 * proto.border_crop < min_side || a.width - 2 * proto.border_crop < min_side) {
    throw std::invalid_argument(std::string(what) + ": image too small after crop (need " + std::to_string(min_side) +
                                "x" + std::to_string(min_side) + ")");
  }
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable 'valid' filtering.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto g = gaussian_window();
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * src[static_cast<size_t>(y) * w + x + k];
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w), mu_b = filter_valid(b, h, w);
  const auto s_aa = filter_valid(aa, h, w), s_bb = filter_valid(bb, h, w), s_ab = filter_valid(ab, h, w);
  double total = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace

std::vector<double> to_y(const Image& image) {
  std::vector<double> y(static_cast<size_t>(image.height) * image.width);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c) {
      y[static_cast<size_t>(r) * image.width + c] =
          (65.481 * image.at(r, c, 0) + 128.553 * image.at(r, c, 1) + 24.966 * image.at(r, c, 2) + 16.0) / 255.0;
    }
  return y;
}

Planes eval_planes(const Image& image, const EvalProtocol& proto) {
  const int b = proto.border_crop;
  Planes p;
  p.height = image.height - 2 * b;
  p.width = image.width - 2 * b;
  std::vector<std::vector<double>> full;
  if (proto.convert_to_y) {
    full.push_back(to_y(image));
  } else {
    for (int c = 0; c < 3; ++c) {
      std::vector<double> plane(static_cast<size_t>(image.height) * image.width);
      for (int r = 0; r < image.height; ++r)
        for (int x = 0; x < image.width; ++x) plane[static_cast<size_t>(r) * image.width + x] = image.at(r, x, c);
      full.push_back(std::move(plane));
    }
  }
  for (const auto& plane : full) {
    std::vector<double> cropped;
    cropped.reserve(static_cast<size_t>(p.height) * p.width);
    for (int r = b; r < image.height - b; ++r)
      for (int x = b; x < image.width - b; ++x) cropped.push_back(plane[static_cast<size_t>(r) * image.width + x]);
    p.channels.push_back(std::move(cropped));
  }
  return p;
}

double psnr(const Image& a, const Image& b, const EvalProtocol& proto) {
  check_pair(a, b, proto, 1, "psnr");
  const Planes pa = eval_planes(a, proto), pb = eval_planes(b, proto);
  double se = 0.0;
  size_t count = 0;
  for (size_t c = 0; c < pa.channels.size(); ++c)
    for (size_t i = 0; i < pa.channels[c].size(); ++i) {
      const double d = pa.channels[c][i] - pb.channels[c][i];
      se += d * d;
      ++count;
    }
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, const EvalProtocol& proto) {
  check_pair(a, b, proto, kWindow, "ssim");
  const Planes pa = eval_planes(a, proto), pb = eval_planes(b, proto);
  double total = 0.0;
  for (size_t c = 0; c < pa.channels.size(); ++c) total += ssim_plane(pa.channels[c], pb.channels[c], pa.height, pa.width);
  return total / static_cast<double>(pa.channels.size());
}

}  // namespace sgsr
