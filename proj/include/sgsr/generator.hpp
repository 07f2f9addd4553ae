#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sgsr/gradient_map.hpp"
#include "sgsr/nn.hpp"

namespace sgsr {

enum class UpsampleMode { kNearestConv, kSubpixel };
enum class TapInjection { kConcat, kAdd };

struct GeneratorConfig {
  int n_rrdb_sr = 23;
  int n_rrdb_gb = 4;
  std::vector<int> tap_indices{5, 10, 15, 20};  // 1-based SR-branch RRDB positions
  int base_channels = 64;
  int growth_channels = 32;
  int gradient_channels = 32;
  // Fusion block widths at HR scale; 0 inherits base/growth channels.
  int fuse_channels = 0;
  int fuse_growth_channels = 0;
  double residual_scale = 0.2;
  int scale = 4;
  bool use_desubpixel_head = true;
  UpsampleMode upsample = UpsampleMode::kNearestConv;
  TapInjection tap_injection = TapInjection::kConcat;
  // Off reproduces the "without gradient branch" ablation: the branch still
  // emits its map but its features are not fused into the SR path.
  bool fuse_gradient_branch = true;
  GradientMapOptions gradient_map;

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  static GeneratorConfig paper();
  static GeneratorConfig tiny();
};

// Dense block of five 3x3 convs; conv k sees the concat of the input and all
// earlier outputs. Output = x + residual_scale * conv5(...).
template <typename T>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(ParamStore<T>& store, const std::string& name, int channels, int growth, double residual_scale,
             std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  const Conv2d<T>& last() const { return convs_.back(); }

 private:
  std::vector<Conv2d<T>> convs_;
  T residual_scale_ = T(0.2);
};

// Residual-in-residual dense block: three dense blocks in sequence, wrapped
// in an outer residual scaled by residual_scale.
template <typename T>
class RRDB {
 public:
  RRDB() = default;
  RRDB(ParamStore<T>& store, const std::string& name, int channels, int growth, double residual_scale,
       std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  int channels() const { return channels_; }

 private:
  std::vector<DenseBlock<T>> blocks_;
  T residual_scale_ = T(0.2);
  int channels_ = 0;
};

template <typename T>
struct GeneratorOutput {
  Tensor<T> sr;      // (N, 3, sH, sW), unclamped
  Tensor<T> gb_map;  // (N, 1, sH, sW) restored gradient map from the gradient branch
};

template <typename T>
class Generator {
 public:
  explicit Generator(GeneratorConfig config, uint64_t seed = 0);

  // lr: (N, 3, H, W) with H, W >= 8.
  GeneratorOutput<T> forward(const Tensor<T>& lr) const;

  const GeneratorConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  static constexpr int kMinInput = 8;

 private:
  struct Upsampler {
    std::vector<Conv2d<T>> convs;
  };
  Upsampler make_upsampler(const std::string& name, int channels, std::mt19937_64& rng);
  Tensor<T> upsample(const Upsampler& up, const Tensor<T>& x) const;

  GeneratorConfig config_;
  ParamStore<T> store_;

  Conv2d<T> conv_first_;
  std::vector<RRDB<T>> trunk_;
  Conv2d<T> trunk_conv_;
  Upsampler sr_up_;
  Conv2d<T> sr_hr_conv_;

  Conv2d<T> grad_first_;
  std::vector<Conv2d<T>> tap_adapters_;
  std::vector<Conv2d<T>> tap_merges_;
  std::vector<RRDB<T>> grad_blocks_;
  Upsampler grad_up_;
  Conv2d<T> grad_hr_conv_;
  Conv2d<T> grad_map_head_;
  Conv2d<T> grad_feature_head_;

  Conv2d<T> fuse_in_;
  RRDB<T> fuse_block_;
  Conv2d<T> fuse_out_;
  Conv2d<T> conv_last_;
};

}  // namespace sgsr
