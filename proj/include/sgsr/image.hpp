#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sgsr/tensor.hpp"

namespace sgsr {

// H x W x 3 image, values nominally in [0, 1], interleaved row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  bool same_dims(const Image& other) const { return height == other.height && width == other.width; }
};

// Reads an 8- or 16-bit PNG. Grayscale is replicated to RGB and alpha is
// dropped. Throws std::runtime_error naming the path on any failure.
Image load_png(const std::filesystem::path& path);

// Writes an RGB PNG (8 or 16 bit) through a temporary file renamed on success.
void save_png(const Image& image, const std::filesystem::path& path, int bit_depth = 8);

// Rounds every value to the nearest multiple of 1/255 (what an 8-bit PNG holds).
Image quantize8(const Image& image);

Image crop(const Image& image, int y, int x, int height, int width);

// Crops the bottom/right edges so both dims are multiples of `multiple`.
Image mod_crop(const Image& image, int multiple);

// --- bicubic resampling ---------------------------------------------------

// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

// Per-output-sample taps along one dimension, MATLAB imresize convention.
struct ResizeTaps {
  int out_length = 0;
  int taps = 0;                // entries per output sample
  std::vector<int> indices;    // out_length * taps, 0-based, mirrored at borders
  std::vector<double> weights; // out_length * taps, each row sums to 1
};

ResizeTaps bicubic_taps(int in_length, int out_length, bool antialias = true);

struct ResizeOptions {
  // Widen the kernel by 1/scale when shrinking.
  bool antialias = true;
};

// Separable bicubic resize (height pass then width pass), clamped to [0, 1].
Image bicubic_resize(const Image& image, int out_height, int out_width, ResizeOptions options = {});

// --- paired data ----------------------------------------------------------

struct PairedSample {
  Image hr;
  Image lr;
  int scale = 4;
};

// Crops hr to a multiple of scale and derives lr by bicubic downscaling,
// quantized to 8 bits as a stored LR image would be.
PairedSample make_paired_sample(const Image& hr, int scale = 4);

struct PatchPair {
  Image hr;
  Image lr;
  int hr_y = 0;
  int hr_x = 0;
};

struct PatchOptions {
  int hr_patch = 128;
  // Random horizontal/vertical flips and transposition, applied to both patches.
  bool geometric_augment = false;
};

// Aligned random crop: the LR origin is the HR origin divided by the scale.
PatchPair sample_patch_pair(const PairedSample& sample, const PatchOptions& options, std::mt19937_64& rng);
PatchPair crop_patch_pair(const PairedSample& sample, int hr_patch, int hr_y, int hr_x);

// Directory of HR PNGs; LR counterparts come from a sibling LRx4/ directory
// with matching file names when present, otherwise from bicubic_resize.
struct Dataset {
  std::vector<std::string> names;
  std::vector<PairedSample> samples;
};

Dataset load_dataset(const std::filesystem::path& hr_dir, int scale = 4);
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

// --- CutMix ---------------------------------------------------------------

// Binary rectangle mask; 1 marks pixels taken from the real image.
struct CutMixMask {
  int height = 0;
  int width = 0;
  int top = 0;
  int left = 0;
  int box_height = 0;
  int box_width = 0;
  double lambda_mix = 1.0;
  std::vector<uint8_t> mask;  // height * width

  uint8_t at(int y, int x) const { return mask[static_cast<size_t>(y) * width + x]; }
  int64_t area() const;
};

// lambda_mix ~ U(0, 1); a box of (h, w) * sqrt(1 - lambda_mix) placed
// uniformly so that it lies fully inside the image.
CutMixMask make_cutmix_mask(int height, int width, std::mt19937_64& rng);
CutMixMask make_cutmix_mask(int height, int width, double lambda_mix, double pos_y, double pos_x);
CutMixMask full_mask(int height, int width, bool value);

// mask * real + (1 - mask) * fake
Image cutmix(const Image& real, const Image& fake, const CutMixMask& mask);

// Same mixing on NCHW tensors; the mask broadcasts over batch and channels.
template <typename T>
Tensor<T> cutmix(const Tensor<T>& real, const Tensor<T>& fake, const CutMixMask& mask);

// --- tensor conversion ----------------------------------------------------

template <typename T>
Tensor<T> images_to_tensor(const std::vector<Image>& images);
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

// Batch item `index` of an (N, 3, H, W) or (N, 1, H, W) tensor, clamped to
// [0, 1]. Single-channel tensors are replicated to RGB.
template <typename T>
Image tensor_to_image(const Tensor<T>& tensor, int index = 0);

}  // namespace sgsr
