#include "sgsr/discriminators.hpp"

#include <algorithm>
#include <stdexcept>

namespace sgsr {

void DiscConfig::validate() const {
  if (n_down < 1) throw std::invalid_argument("disc config: n_down must be >= 1");
  if (base_channels < 1 || max_channels < base_channels) throw std::invalid_argument("disc config: bad channel widths");
}

DiscConfig DiscConfig::tiny() {
  DiscConfig c;
  c.n_down = 2;
  c.base_channels = 8;
  c.max_channels = 32;
  return c;
}

template <typename T>
int UNetDiscriminator<T>::channels_at(int stage) const {
  return std::min(config_.base_channels << stage, config_.max_channels);
}

template <typename T>
UNetDiscriminator<T>::UNetDiscriminator(DiscConfig config, uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const bool sn = config_.spectral_norm;
  conv_in_ = SNConv2d<T>(store_, "enc.conv_in", {3, channels_at(0)}, rng, sn);
  for (int i = 1; i <= config_.n_down; ++i) {
    ConvSpec spec{channels_at(i - 1), channels_at(i)};
    spec.stride = 2;
    down_.emplace_back(store_, "enc.down" + std::to_string(i), spec, rng, sn);
  }
  head_ = make_linear(store_, "enc.head", channels_at(config_.n_down), 1, rng);
  if (config_.use_decoder) {
    // up_[0] restores stage n_down-1 from n_down, ..., up_.back() restores stage 0.
    for (int i = config_.n_down; i >= 1; --i) {
      ConvSpec spec{channels_at(i) + channels_at(i - 1), channels_at(i - 1)};
      up_.emplace_back(store_, "dec.up" + std::to_string(i), spec, rng, sn);
    }
    conv_out_ = SNConv2d<T>(store_, "dec.conv_out", {channels_at(0), 1, 1}, rng, sn);
  }
}

template <typename T>
UNetDiscOutput<T> UNetDiscriminator<T>::forward(const Tensor<T>& image) const {
  if (image.ndim() != 4 || image.dim(1) != 3) {
    throw std::invalid_argument("unet discriminator: expected (N, 3, H, W), got " + shape_str(image.shape()));
  }
  const int64_t factor = int64_t{1} << config_.n_down;
  if (image.dim(2) % factor || image.dim(3) % factor) {
    throw std::invalid_argument("unet discriminator: input " + shape_str(image.shape()) + " not divisible by " +
                                std::to_string(factor));
  }
  UNetDiscOutput<T> out;
  std::vector<Tensor<T>> skips{lrelu(conv_in_(image))};
  for (const auto& conv : down_) {
    skips.push_back(lrelu(conv(skips.back())));
    out.features.push_back(skips.back());
  }
  out.enc_logit = head_(sum_spatial(skips.back()));

  if (config_.identity_probe) {
    out.dec_logits = slice(image, 1, 0, 1);
  } else if (config_.use_decoder) {
    Tensor<T> d = skips.back();
    for (size_t k = 0; k < up_.size(); ++k) {
      const Tensor<T>& skip = skips[skips.size() - 2 - k];
      d = lrelu(up_[k](concat(std::vector<Tensor<T>>{upsample_nearest(d, 2), skip}, 1)));
    }
    out.dec_logits = conv_out_(d);
  }
  return out;
}

template <typename T>
void UNetDiscriminator<T>::update_spectral_norm() {
  conv_in_.power_iteration();
  for (auto& c : down_) c.power_iteration();
  for (auto& c : up_) c.power_iteration();
  if (config_.use_decoder) conv_out_.power_iteration();
}

template <typename T>
std::vector<const SNConv2d<T>*> UNetDiscriminator<T>::sn_layers() const {
  std::vector<const SNConv2d<T>*> layers{&conv_in_};
  for (const auto& c : down_) layers.push_back(&c);
  for (const auto& c : up_) layers.push_back(&c);
  if (config_.use_decoder) layers.push_back(&conv_out_);
  return layers;
}

// --- gradient-map discriminator -------------------------------------------

void GMDiscConfig::validate() const {
  if (n_stages < 1 || base_channels < 1 || hidden < 1 || in_channels < 1) {
    throw std::invalid_argument("gm disc config: sizes must be positive");
  }
  if (input_size % (1 << n_stages) != 0) {
    throw std::invalid_argument("gm disc config: input size " + std::to_string(input_size) + " not divisible by 2^" +
                                std::to_string(n_stages));
  }
}

GMDiscConfig GMDiscConfig::tiny() {
  GMDiscConfig c;
  c.input_size = 32;
  c.n_stages = 3;
  c.base_channels = 8;
  c.max_channels = 32;
  c.hidden = 16;
  return c;
}

template <typename T>
GradientMapDiscriminator<T>::GradientMapDiscriminator(GMDiscConfig config, uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  int in = config_.in_channels;
  for (int s = 0; s < config_.n_stages; ++s) {
    const int ch = std::min(config_.base_channels << s, config_.max_channels);
    const std::string id = std::to_string(s + 1);
    convs_.push_back(make_conv(store_, "stage" + id + ".conv", {in, ch}, rng));
    ConvSpec down{ch, ch};
    down.stride = 2;
    convs_.push_back(make_conv(store_, "stage" + id + ".down", down, rng));
    in = ch;
  }
  const int side = config_.input_size >> config_.n_stages;
  dense1_ = make_linear(store_, "dense1", static_cast<int64_t>(in) * side * side, config_.hidden, rng);
  dense2_ = make_linear(store_, "dense2", config_.hidden, 1, rng);
}

template <typename T>
Tensor<T> GradientMapDiscriminator<T>::forward(const Tensor<T>& gmap) const {
  if (gmap.ndim() != 4 || gmap.dim(1) != config_.in_channels || gmap.dim(2) != config_.input_size ||
      gmap.dim(3) != config_.input_size) {
    throw std::invalid_argument("gradient-map discriminator: expected (N, " + std::to_string(config_.in_channels) +
                                ", " + std::to_string(config_.input_size) + ", " + std::to_string(config_.input_size) +
                                "), got " + shape_str(gmap.shape()));
  }
  Tensor<T> x = gmap;
  for (const auto& conv : convs_) x = lrelu(conv(x));
  x = reshape(x, {x.dim(0), x.numel() / x.dim(0)});
  return dense2_(lrelu(dense1_(x)));
}

template class UNetDiscriminator<float>;
template class UNetDiscriminator<double>;
template class GradientMapDiscriminator<float>;
template class GradientMapDiscriminator<double>;

}  // namespace sgsr
