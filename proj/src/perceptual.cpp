#include "sgsr/perceptual.hpp"

#include <random>
#include <sstream>
#include <stdexcept>

#include "sgsr/serialize.hpp"

namespace sgsr {

namespace {

constexpr int kKernel[5] = {11, 5, 3, 3, 3};
constexpr int kStride[5] = {4, 1, 1, 1, 1};
constexpr int kPad[5] = {2, 2, 1, 1, 1};
// Stages preceded by a 3x3 stride-2 max pool.
constexpr bool kPoolBefore[5] = {false, true, true, false, false};
// LPIPS input scaling layer, applied after mapping [0, 1] to [-1, 1].
constexpr double kShift[3] = {-0.030, -0.088, -0.188};
constexpr double kScale[3] = {0.458, 0.448, 0.450};

std::string join(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

void PerceptualConfig::validate() const {
  if (widths.size() != 5) throw std::invalid_argument("perceptual config: need exactly 5 stage widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("perceptual config: widths must be positive");
}

PerceptualConfig PerceptualConfig::tiny() {
  PerceptualConfig c;
  c.widths = {8, 12, 16, 12, 12};
  return c;
}

template <typename T>
PerceptualNet<T>::PerceptualNet(PerceptualConfig config) : config_(std::move(config)) {
  std::string file_bytes;
  Container container;
  if (!config_.weights_path.empty()) {
    file_bytes = read_file(config_.weights_path);
    const std::string actual = sha256_hex(file_bytes);
    if (!config_.weights_sha256.empty() && actual != config_.weights_sha256) {
      throw std::runtime_error("perceptual weights " + config_.weights_path + ": sha256 mismatch, expected " +
                               config_.weights_sha256 + ", got " + actual);
    }
    container = Container::decode(file_bytes);
    for (const auto& [k, v] : decode_kv(container.get("perceptual.meta"))) {
      if (k == "widths") config_.widths = split_ints(v);
    }
    provenance_ = "file " + config_.weights_path + " sha256 " + actual;
  } else {
    provenance_ = "random seed " + std::to_string(config_.seed);
  }
  config_.validate();

  std::mt19937_64 rng(config_.seed);
  int in = 3;
  for (int k = 0; k < kStages; ++k) {
    const int out = config_.widths[k];
    const std::string id = "stage" + std::to_string(k + 1);
    const int64_t fan_in = int64_t{in} * kKernel[k] * kKernel[k];
    Conv2d<T> conv;
    conv.weight = store_.add_buffer(id + ".weight", {out, in, kKernel[k], kKernel[k]},
                                    kaiming_normal<T>(out * fan_in, fan_in, 1.0, rng));
    conv.bias = store_.add_buffer(id + ".bias", {out}, std::vector<T>(out, T(0)));
    conv.stride = kStride[k];
    conv.padding = kPad[k];
    convs_.push_back(conv);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<T> tau(out);
    for (auto& t : tau) t = static_cast<T>(uni(rng) / out);
    tau_.push_back(store_.add_buffer(id + ".tau", {out}, std::move(tau)));
    in = out;
  }
  std::vector<T> scale(3), shift(3);
  for (int c = 0; c < 3; ++c) {
    scale[c] = static_cast<T>(2.0 / kScale[c]);
    shift[c] = static_cast<T>(-(1.0 + kShift[c]) / kScale[c]);
  }
  input_scale_ = Tensor<T>({3}, scale);
  input_shift_ = Tensor<T>({3}, shift);

  if (!config_.weights_path.empty()) {
    decode_params(container.get("perceptual.weights"), store_, "perceptual weights " + config_.weights_path);
    for (const auto& t : tau_)
      for (T v : t.data())
        if (v < T(0)) throw std::runtime_error("perceptual weights " + config_.weights_path + ": negative tau");
  }
}

template <typename T>
void PerceptualNet<T>::set_tau(int stage, const std::vector<T>& values) {
  if (stage < 0 || stage >= kStages || static_cast<int64_t>(values.size()) != tau_[stage].numel()) {
    throw std::invalid_argument("set_tau: bad stage or length");
  }
  for (T v : values)
    if (v < T(0)) throw std::invalid_argument("set_tau: weights must be non-negative");
  std::copy(values.begin(), values.end(), tau_[stage].mutable_data().begin());
}

template <typename T>
std::vector<Tensor<T>> PerceptualNet<T>::features(const Tensor<T>& x) const {
  if (x.ndim() != 4 || x.dim(1) != 3) {
    throw std::invalid_argument("perceptual net: expected (N, 3, H, W), got " + shape_str(x.shape()));
  }
  if (x.dim(2) < kMinInput || x.dim(3) < kMinInput) {
    throw std::invalid_argument("perceptual net: input " + shape_str(x.shape()) + " smaller than " +
                                std::to_string(kMinInput) + "x" + std::to_string(kMinInput));
  }
  const int64_t plane = x.dim(2) * x.dim(3);
  std::vector<T> shift(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) shift[i] = input_shift_.data()[(i / plane) % 3];
  Tensor<T> h = add(mul_channels(x, input_scale_), Tensor<T>(x.shape(), std::move(shift)));

  std::vector<Tensor<T>> feats;
  for (int k = 0; k < kStages; ++k) {
    if (kPoolBefore[k]) h = max_pool2d(h, 3, 2);
    h = relu(convs_[k](h));
    feats.push_back(h);
  }
  return feats;
}

template <typename T>
Tensor<T> PerceptualNet<T>::distance(const Tensor<T>& a, const Tensor<T>& b) const {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("perceptual distance: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const auto fa = features(a);
  const auto fb = features(b);
  Tensor<T> total;
  for (int k = 0; k < kStages; ++k) {
    Tensor<T> term;
    if (config_.mode == PerceptualMode::kLpips) {
      const Tensor<T> diff = sub(normalize_channels(fa[k], T(kFeatureEps)), normalize_channels(fb[k], T(kFeatureEps)));
      term = mean(sum_channels(mul_channels(square(diff), tau_[k])));
    } else {
      term = mse(fa[k], fb[k]);
    }
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename T>
std::string save_perceptual_weights(const PerceptualNet<T>& net, const std::filesystem::path& path) {
  Container c;
  c.add("perceptual.meta", encode_kv({{"widths", join(net.config().widths)}}));
  c.add("perceptual.weights", encode_params(net.params()));
  const std::string bytes = c.encode();
  write_file_atomic(path, bytes);
  return sha256_hex(bytes);
}

template class PerceptualNet<float>;
template class PerceptualNet<double>;
template std::string save_perceptual_weights(const PerceptualNet<float>&, const std::filesystem::path&);
template std::string save_perceptual_weights(const PerceptualNet<double>&, const std::filesystem::path&);

}  // namespace sgsr
