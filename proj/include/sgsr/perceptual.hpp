#pragma once

// Frozen AlexNet-shaped feature extractor with per-channel LPIPS weights.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgsr/nn.hpp"

namespace sgsr {

enum class PerceptualMode {
  kLpips,      // unit-normalized features, tau-weighted squared differences
  kFeatureL2,  // plain feature MSE on the same extractor (ablation only)
};

struct PerceptualConfig {
  std::vector<int> widths{64, 192, 384, 256, 256};
  PerceptualMode mode = PerceptualMode::kLpips;
  // Empty path: fixed-seed random weights.
  std::string weights_path;
  // When set, the weight file's SHA-256 must match.
  std::string weights_sha256;
  uint64_t seed = 20220401;

  void validate() const;
  static PerceptualConfig tiny();
};

template <typename T>
class PerceptualNet {
 public:
  static constexpr int kStages = 5;
  static constexpr int kMinInput = 31;

  explicit PerceptualNet(PerceptualConfig config);

  // x: (N, 3, H, W) in [0, 1]. One feature map per stage (after ReLU).
  std::vector<Tensor<T>> features(const Tensor<T>& x) const;
  // Scalar distance averaged over batch and spatial positions.
  Tensor<T> distance(const Tensor<T>& a, const Tensor<T>& b) const;

  const Tensor<T>& tau(int stage) const { return tau_[stage]; }
  // Replaces one stage's channel weights (values must be non-negative).
  void set_tau(int stage, const std::vector<T>& values);
  const PerceptualConfig& config() const { return config_; }
  // "file <path> sha256 <hex>" or "random seed <n>".
  const std::string& provenance() const { return provenance_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  static constexpr float kFeatureEps = 1e-10f;

 private:
  void load(const std::filesystem::path& path);

  PerceptualConfig config_;
  ParamStore<T> store_;
  std::vector<Conv2d<T>> convs_;
  std::vector<Tensor<T>> tau_;
  Tensor<T> input_scale_;
  Tensor<T> input_shift_;
  std::string provenance_;
};

// Writes a weight file in the format PerceptualNet loads. Returns its SHA-256.
template <typename T>
std::string save_perceptual_weights(const PerceptualNet<T>& net, const std::filesystem::path& path);

}  // namespace sgsr
