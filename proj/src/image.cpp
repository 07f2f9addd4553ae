#include "sgsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "sgsr/ops.hpp"

namespace sgsr {

namespace fs = std::filesystem;

Image::Image(int h, int w, double fill) : height(h), width(w) {
  if (h < 1 || w < 1) throw std::invalid_argument("image dims must be positive");
  pixels.assign(static_cast<size_t>(h) * w * 3, fill);
}

// --- PNG ------------------------------------------------------------------

namespace {

struct PngError {
  std::string message = "libpng error";
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  if (err) err->message = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Image load_png(const fs::path& path) {
  std::unique_ptr<FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error(path.string() + ": cannot open file");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw std::runtime_error(path.string() + ": not a PNG file");
  }

  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  if (!png) throw std::runtime_error(path.string() + ": cannot allocate PNG reader");
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int depth = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path.string() + ": " + err.message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image image(static_cast<int>(height), static_cast<int>(width));
  const size_t count = image.pixels.size();
  if (depth == 16) {
    for (size_t i = 0; i < count; ++i) {
      uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      image.pixels[i] = v / 65535.0;
    }
  } else {
    for (size_t i = 0; i < count; ++i) image.pixels[i] = buffer[i] / 255.0;
  }
  return image;
}

void save_png(const Image& image, const fs::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("save_png: bit depth must be 8 or 16");
  if (image.height < 1 || image.width < 1) throw std::invalid_argument("save_png: empty image");
  const double levels = bit_depth == 8 ? 255.0 : 65535.0;
  const size_t bytes = bit_depth / 8;
  const size_t row_bytes = static_cast<size_t>(image.width) * 3 * bytes;
  std::vector<png_byte> buffer(row_bytes * image.height);
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    const double v = std::clamp(image.pixels[i], 0.0, 1.0);
    const auto q = static_cast<uint32_t>(std::lround(v * levels));
    if (bit_depth == 8) {
      buffer[i] = static_cast<png_byte>(q);
    } else {
      buffer[2 * i] = static_cast<png_byte>(q >> 8);  // PNG stores big-endian samples
      buffer[2 * i + 1] = static_cast<png_byte>(q & 0xff);
    }
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * row_bytes;

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::unique_ptr<FILE, FileCloser> file(std::fopen(tmp.c_str(), "wb"));
    if (!file) throw std::runtime_error(path.string() + ": cannot open for writing");
    PngError err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
    if (!png) throw std::runtime_error(path.string() + ": cannot allocate PNG writer");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      file.reset();
      fs::remove(tmp);
      throw std::runtime_error(path.string() + ": " + err.message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width, image.height, bit_depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  fs::rename(tmp, path);
}

Image quantize8(const Image& image) {
  Image out = image;
  for (auto& v : out.pixels) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

Image crop(const Image& image, int y, int x, int height, int width) {
  if (y < 0 || x < 0 || height < 1 || width < 1 || y + height > image.height || x + width > image.width) {
    throw std::invalid_argument("crop: window exceeds " + std::to_string(image.height) + "x" +
                                std::to_string(image.width) + " image");
  }
  Image out(height, width);
  for (int r = 0; r < height; ++r) {
    const auto* src = &image.pixels[(static_cast<size_t>(y + r) * image.width + x) * 3];
    std::copy_n(src, static_cast<size_t>(width) * 3, &out.pixels[static_cast<size_t>(r) * width * 3]);
  }
  return out;
}

Image mod_crop(const Image& image, int multiple) {
  const int h = image.height - image.height % multiple;
  const int w = image.width - image.width % multiple;
  if (h < 1 || w < 1) throw std::invalid_argument("mod_crop: image smaller than the scale factor");
  return (h == image.height && w == image.width) ? image : crop(image, 0, 0, h, w);
}

// --- bicubic --------------------------------------------------------------

double cubic_kernel(double x) {
  const double ax = std::abs(x);
  const double ax2 = ax * ax, ax3 = ax2 * ax;
  if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

ResizeTaps bicubic_taps(int in_length, int out_length, bool antialias) {
  if (in_length < 1 || out_length < 1) throw std::invalid_argument("bicubic_taps: lengths must be positive");
  const double scale = static_cast<double>(out_length) / in_length;
  double kernel_width = 4.0;
  const bool widen = antialias && scale < 1.0;
  if (widen) kernel_width /= scale;

  ResizeTaps taps;
  taps.out_length = out_length;
  taps.taps = static_cast<int>(std::ceil(kernel_width)) + 2;
  taps.indices.resize(static_cast<size_t>(out_length) * taps.taps);
  taps.weights.resize(taps.indices.size());
  const int period = 2 * in_length;
  for (int i = 0; i < out_length; ++i) {
    // 1-based MATLAB coordinates: output x maps to input u.
    const double u = (i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const double left = std::floor(u - kernel_width / 2.0);
    double total = 0.0;
    for (int t = 0; t < taps.taps; ++t) {
      const double index = left + t;
      const double w = widen ? scale * cubic_kernel(scale * (u - index)) : cubic_kernel(u - index);
      taps.weights[static_cast<size_t>(i) * taps.taps + t] = w;
      total += w;
      // Symmetric (mirror) extension: 1..L, L..1, repeating.
      int m = static_cast<int>(index) - 1;
      m = ((m % period) + period) % period;
      taps.indices[static_cast<size_t>(i) * taps.taps + t] = m < in_length ? m : period - 1 - m;
    }
    for (int t = 0; t < taps.taps; ++t) taps.weights[static_cast<size_t>(i) * taps.taps + t] /= total;
  }
  return taps;
}

namespace {

// Resamples along rows (axis 0) or columns (axis 1) without clamping.
Image resize_axis(const Image& in, int out_length, int axis, bool antialias) {
  const int in_length = axis == 0 ? in.height : in.width;
  const ResizeTaps taps = bicubic_taps(in_length, out_length, antialias);
  Image out(axis == 0 ? out_length : in.height, axis == 0 ? in.width : out_length);
#pragma omp parallel for if (out.pixels.size() > 65536)
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const int i = axis == 0 ? y : x;
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int t = 0; t < taps.taps; ++t) {
          const size_t k = static_cast<size_t>(i) * taps.taps + t;
          const int src = taps.indices[k];
          acc += taps.weights[k] * (axis == 0 ? in.at(src, x, c) : in.at(y, src, c));
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

}  // namespace

Image bicubic_resize(const Image& image, int out_height, int out_width, ResizeOptions options) {
  if (out_height < 1 || out_width < 1) throw std::invalid_argument("bicubic_resize: output dims must be >= 1");
  const double scale_h = static_cast<double>(out_height) / image.height;
  const double scale_w = static_cast<double>(out_width) / image.width;
  Image out;
  // The dimension with the smaller scale goes first; ties go rows-first.
  if (scale_w < scale_h) {
    out = resize_axis(resize_axis(image, out_width, 1, options.antialias), out_height, 0, options.antialias);
  } else {
    out = resize_axis(resize_axis(image, out_height, 0, options.antialias), out_width, 1, options.antialias);
  }
  for (auto& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// --- paired data ----------------------------------------------------------

PairedSample make_paired_sample(const Image& hr, int scale) {
  if (scale < 1) throw std::invalid_argument("make_paired_sample: scale must be >= 1");
  PairedSample sample;
  sample.scale = scale;
  sample.hr = mod_crop(hr, scale);
  sample.lr = quantize8(bicubic_resize(sample.hr, sample.hr.height / scale, sample.hr.width / scale));
  return sample;
}

PatchPair crop_patch_pair(const PairedSample& sample, int hr_patch, int hr_y, int hr_x) {
  const int s = sample.scale;
  if (hr_patch % s != 0) {
    throw std::invalid_argument("patch size " + std::to_string(hr_patch) + " not divisible by scale " + std::to_string(s));
  }
  if (sample.hr.height < hr_patch || sample.hr.width < hr_patch) {
    throw std::invalid_argument("sample " + std::to_string(sample.hr.height) + "x" + std::to_string(sample.hr.width) +
                                " smaller than patch " + std::to_string(hr_patch));
  }
  if (hr_y % s || hr_x % s) throw std::invalid_argument("patch origin not aligned to the scale grid");
  PatchPair p;
  p.hr_y = hr_y;
  p.hr_x = hr_x;
  p.hr = crop(sample.hr, hr_y, hr_x, hr_patch, hr_patch);
  p.lr = crop(sample.lr, hr_y / s, hr_x / s, hr_patch / s, hr_patch / s);
  return p;
}

namespace {

Image flip_horizontal(const Image& im) {
  Image out(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = im.at(y, im.width - 1 - x, c);
  return out;
}

Image flip_vertical(const Image& im) {
  Image out(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = im.at(im.height - 1 - y, x, c);
  return out;
}

Image transpose(const Image& im) {
  Image out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = im.at(y, x, c);
  return out;
}

}  // namespace

PatchPair sample_patch_pair(const PairedSample& sample, const PatchOptions& options, std::mt19937_64& rng) {
  const int s = sample.scale;
  const int lr_patch = options.hr_patch / s;
  if (options.hr_patch % s != 0 || lr_patch < 1) {
    throw std::invalid_argument("patch size " + std::to_string(options.hr_patch) + " not divisible by scale " +
                                std::to_string(s));
  }
  if (sample.lr.height < lr_patch || sample.lr.width < lr_patch) {
    throw std::invalid_argument("sample " + std::to_string(sample.hr.height) + "x" + std::to_string(sample.hr.width) +
                                " smaller than patch " + std::to_string(options.hr_patch));
  }
  std::uniform_int_distribution<int> pick_y(0, sample.lr.height - lr_patch);
  std::uniform_int_distribution<int> pick_x(0, sample.lr.width - lr_patch);
  const int ly = pick_y(rng);
  const int lx = pick_x(rng);
  PatchPair p = crop_patch_pair(sample, options.hr_patch, ly * s, lx * s);
  if (options.geometric_augment) {
    const auto bits = rng();
    if (bits & 1) {
      p.hr = flip_horizontal(p.hr);
      p.lr = flip_horizontal(p.lr);
    }
    if (bits & 2) {
      p.hr = flip_vertical(p.hr);
      p.lr = flip_vertical(p.lr);
    }
    if (bits & 4) {
      p.hr = transpose(p.hr);
      p.lr = transpose(p.lr);
    }
  }
  return p;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Dataset load_dataset(const fs::path& hr_dir, int scale) {
  Dataset data;
  const fs::path lr_dir = hr_dir.parent_path() / ("LRx" + std::to_string(scale));
  for (const auto& file : list_pngs(hr_dir)) {
    const Image hr = load_png(file);
    PairedSample sample;
    const fs::path lr_file = lr_dir / file.filename();
    if (fs::exists(lr_file)) {
      sample.scale = scale;
      sample.hr = mod_crop(hr, scale);
      sample.lr = load_png(lr_file);
      if (sample.lr.height * scale != sample.hr.height || sample.lr.width * scale != sample.hr.width) {
        throw std::runtime_error(lr_file.string() + ": LR dims are not HR dims / " + std::to_string(scale));
      }
    } else {
      sample = make_paired_sample(hr, scale);
    }
    data.names.push_back(file.filename().string());
    data.samples.push_back(std::move(sample));
  }
  return data;
}

// --- CutMix ---------------------------------------------------------------

int64_t CutMixMask::area() const {
  int64_t n = 0;
  for (auto v : mask) n += v;
  return n;
}

CutMixMask make_cutmix_mask(int height, int width, double lambda_mix, double pos_y, double pos_x) {
  if (height < 2 || width < 2) throw std::invalid_argument("make_cutmix_mask: image must be at least 2x2");
  CutMixMask m;
  m.height = height;
  m.width = width;
  m.lambda_mix = lambda_mix;
  const double side = std::sqrt(std::clamp(1.0 - lambda_mix, 0.0, 1.0));
  m.box_height = std::clamp(static_cast<int>(std::lround(height * side)), 0, height);
  m.box_width = std::clamp(static_cast<int>(std::lround(width * side)), 0, width);
  if (m.box_height == 0 || m.box_width == 0) m.box_height = m.box_width = 0;
  // pos_* in [0, 1) selects the origin among the positions that keep the box inside.
  m.top = std::min(static_cast<int>(pos_y * (height - m.box_height + 1)), height - m.box_height);
  m.left = std::min(static_cast<int>(pos_x * (width - m.box_width + 1)), width - m.box_width);
  m.mask.assign(static_cast<size_t>(height) * width, 0);
  for (int y = m.top; y < m.top + m.box_height; ++y)
    for (int x = m.left; x < m.left + m.box_width; ++x) m.mask[static_cast<size_t>(y) * width + x] = 1;
  return m;
}

CutMixMask make_cutmix_mask(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lambda_mix = unit(rng);
  const double pos_y = unit(rng);
  const double pos_x = unit(rng);
  return make_cutmix_mask(height, width, lambda_mix, pos_y, pos_x);
}

CutMixMask full_mask(int height, int width, bool value) {
  CutMixMask m;
  m.height = height;
  m.width = width;
  m.box_height = value ? height : 0;
  m.box_width = value ? width : 0;
  m.lambda_mix = value ? 0.0 : 1.0;
  m.mask.assign(static_cast<size_t>(height) * width, value ? 1 : 0);
  return m;
}

Image cutmix(const Image& real, const Image& fake, const CutMixMask& mask) {
  if (!real.same_dims(fake) || real.height != mask.height || real.width != mask.width) {
    throw std::invalid_argument("cutmix: real, fake and mask dims differ");
  }
  Image out = fake;
  for (int y = 0; y < real.height; ++y)
    for (int x = 0; x < real.width; ++x)
      if (mask.at(y, x))
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = real.at(y, x, c);
  return out;
}

template <typename T>
Tensor<T> cutmix(const Tensor<T>& real, const Tensor<T>& fake, const CutMixMask& mask) {
  if (real.shape() != fake.shape() || real.ndim() != 4 || real.dim(2) != mask.height || real.dim(3) != mask.width) {
    throw std::invalid_argument("cutmix: tensors " + shape_str(real.shape()) + " / " + shape_str(fake.shape()) +
                                " do not match a " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                                " mask");
  }
  const int64_t planes = real.dim(0) * real.dim(1), hw = real.dim(2) * real.dim(3);
  std::vector<T> keep(real.numel()), drop(real.numel());
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < hw; ++i) {
      keep[p * hw + i] = mask.mask[i] ? T(1) : T(0);
      drop[p * hw + i] = mask.mask[i] ? T(0) : T(1);
    }
  const Tensor<T> keep_t(real.shape(), std::move(keep));
  const Tensor<T> drop_t(real.shape(), std::move(drop));
  return add(mul(real, keep_t), mul(fake, drop_t));
}

// --- tensor conversion ----------------------------------------------------

template <typename T>
Tensor<T> images_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int h = images[0].height, w = images[0].width;
  std::vector<T> data(images.size() * 3 * static_cast<size_t>(h) * w);
  for (size_t n = 0; n < images.size(); ++n) {
    if (images[n].height != h || images[n].width != w) throw std::invalid_argument("images_to_tensor: ragged batch");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          data[((n * 3 + c) * h + y) * w + x] = static_cast<T>(images[n].at(y, x, c));
  }
  return Tensor<T>({static_cast<int64_t>(images.size()), 3, h, w}, std::move(data));
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  return images_to_tensor<T>(std::vector<Image>{image});
}

template <typename T>
Image tensor_to_image(const Tensor<T>& tensor, int index) {
  if (tensor.ndim() != 4 || (tensor.dim(1) != 3 && tensor.dim(1) != 1) || index < 0 || index >= tensor.dim(0)) {
    throw std::invalid_argument("tensor_to_image: cannot read item " + std::to_string(index) + " of " +
                                shape_str(tensor.shape()));
  }
  const int channels = static_cast<int>(tensor.dim(1));
  const int h = static_cast<int>(tensor.dim(2)), w = static_cast<int>(tensor.dim(3));
  Image out(h, w);
  const auto data = tensor.data();
  for (int c = 0; c < 3; ++c) {
    const int src_c = channels == 1 ? 0 : c;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = static_cast<double>(data[((static_cast<int64_t>(index) * channels + src_c) * h + y) * w + x]);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
  }
  return out;
}

template Tensor<float> cutmix(const Tensor<float>&, const Tensor<float>&, const CutMixMask&);
template Tensor<double> cutmix(const Tensor<double>&, const Tensor<double>&, const CutMixMask&);
template Tensor<float> images_to_tensor(const std::vector<Image>&);
template Tensor<double> images_to_tensor(const std::vector<Image>&);
template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);
template Image tensor_to_image(const Tensor<float>&, int);
template Image tensor_to_image(const Tensor<double>&, int);

}  // namespace sgsr
