#pragma once

// Parameter storage and the small layer vocabulary shared by the networks.

#include <random>
#include <string>
#include <vector>

#include "sgsr/ops.hpp"

namespace sgsr {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;  // false for buffers such as power-iteration vectors
};

// Ordered, name-addressable set of a network's tensors.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add_param(const std::string& name, Shape shape, std::vector<T> values);
  Tensor<T> add_buffer(const std::string& name, Shape shape, std::vector<T> values);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<NamedTensor<T>>& entries() { return entries_; }
  const std::vector<NamedTensor<T>>& entries() const { return entries_; }

  // Trainable tensors only.
  std::vector<Tensor<T>> params() const;
  int64_t param_count() const;
  // Trainable parameter count of every tensor whose name starts with `prefix`.
  int64_t param_count(const std::string& prefix) const;
  void zero_grad();

 private:
  void check_new(const std::string& name) const;
  std::vector<NamedTensor<T>> entries_;
};

// Fan-in Kaiming normal initialization (gain for leaky ReLU 0.2), times `scale`.
template <typename T>
std::vector<T> kaiming_normal(int64_t count, int64_t fan_in, double scale, std::mt19937_64& rng);

template <typename T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct ConvSpec {
  int64_t in = 1;
  int64_t out = 1;
  int kernel = 3;
  int stride = 1;
  int padding = -1;  // -1: kernel / 2
  double init_scale = 1.0;
};

template <typename T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, const ConvSpec& spec, std::mt19937_64& rng);

// A convolution whose weight is divided by a running estimate of its largest
// singular value. The estimate's vectors live in the store as buffers.
template <typename T>
class SNConv2d {
 public:
  SNConv2d() = default;
  SNConv2d(ParamStore<T>& store, const std::string& name, const ConvSpec& spec, std::mt19937_64& rng, bool enabled);

  Tensor<T> operator()(const Tensor<T>& x) const;
  // The effective (normalized) weight used by the forward pass.
  Tensor<T> effective_weight() const;
  // One power-iteration refinement of the singular vectors.
  void power_iteration();
  bool enabled() const { return enabled_; }
  const Conv2d<T>& conv() const { return conv_; }

 private:
  Conv2d<T> conv_;
  Tensor<T> u_;
  Tensor<T> v_;
  bool enabled_ = false;
};

template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
Linear<T> make_linear(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, std::mt19937_64& rng);

constexpr double kLeakySlope = 0.2;

template <typename T>
Tensor<T> lrelu(const Tensor<T>& x) {
  return leaky_relu(x, static_cast<T>(kLeakySlope));
}

}  // namespace sgsr
