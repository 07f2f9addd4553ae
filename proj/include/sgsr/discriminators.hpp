#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sgsr/nn.hpp"

namespace sgsr {

struct DiscConfig {
  int n_down = 4;
  int base_channels = 64;
  int max_channels = 512;
  bool spectral_norm = true;
  // Off gives a plain encoder discriminator (no per-pixel decision map).
  bool use_decoder = true;
  // Test probe: dec_logits become the input's first channel.
  bool identity_probe = false;

  void validate() const;
  static DiscConfig tiny();
};

template <typename T>
struct UNetDiscOutput {
  Tensor<T> enc_logit;               // (N, 1)
  Tensor<T> dec_logits;              // (N, 1, H, W); undefined without a decoder
  std::vector<Tensor<T>> features;   // one per encoder block, for feature matching
};

// Encoder of stride-2 conv blocks ending in global sum pooling plus an affine
// head; decoder of nearest-upsample + conv blocks with skip concatenation from
// the matching encoder stage, ending in a 1x1 conv to one logit per pixel.
template <typename T>
class UNetDiscriminator {
 public:
  explicit UNetDiscriminator(DiscConfig config, uint64_t seed = 0);

  // image: (N, 3, H, W) with H, W divisible by 2^n_down.
  UNetDiscOutput<T> forward(const Tensor<T>& image) const;
  // Decoder logits only (used by the CutMix consistency term).
  Tensor<T> decode(const Tensor<T>& image) const { return forward(image).dec_logits; }

  // One power-iteration refinement for every spectrally normalized conv.
  void update_spectral_norm();
  std::vector<const SNConv2d<T>*> sn_layers() const;

  const DiscConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

 private:
  int channels_at(int stage) const;

  DiscConfig config_;
  ParamStore<T> store_;
  SNConv2d<T> conv_in_;
  std::vector<SNConv2d<T>> down_;
  Linear<T> head_;
  std::vector<SNConv2d<T>> up_;
  SNConv2d<T> conv_out_;
};

struct GMDiscConfig {
  int input_size = 128;
  int n_stages = 5;
  int base_channels = 64;
  int max_channels = 512;
  int hidden = 100;
  int in_channels = 1;

  void validate() const;
  static GMDiscConfig tiny();
};

// VGG-style critic for gradient maps: per stage a stride-1 and a stride-2
// 3x3 conv with channel doubling, then two dense layers to one logit.
template <typename T>
class GradientMapDiscriminator {
 public:
  explicit GradientMapDiscriminator(GMDiscConfig config, uint64_t seed = 0);

  // gmap: (N, C, S, S), S = config.input_size. Returns (N, 1) logits.
  Tensor<T> forward(const Tensor<T>& gmap) const;

  const GMDiscConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

 private:
  GMDiscConfig config_;
  ParamStore<T> store_;
  std::vector<Conv2d<T>> convs_;
  Linear<T> dense1_;
  Linear<T> dense2_;
};

}  // namespace sgsr
