#include "sgsr/generator.hpp"

#include <stdexcept>

namespace sgsr {

void GeneratorConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("generator config: " + what); };
  if (n_rrdb_sr < 1) bad("n_rrdb_sr must be >= 1");
  if (n_rrdb_gb < 1) bad("n_rrdb_gb must be >= 1");
  if (static_cast<int>(tap_indices.size()) != n_rrdb_gb) bad("need exactly one tap index per gradient block");
  for (size_t i = 0; i < tap_indices.size(); ++i) {
    if (tap_indices[i] < 1 || tap_indices[i] > n_rrdb_sr) bad("tap index out of range 1..n_rrdb_sr");
    if (i > 0 && tap_indices[i] <= tap_indices[i - 1]) bad("tap indices must be strictly increasing");
  }
  if (base_channels < 1 || growth_channels < 1 || gradient_channels < 1) bad("channel widths must be positive");
  if (fuse_channels < 0 || fuse_growth_channels < 0) bad("fusion widths must be non-negative");
  if (residual_scale < 0.0) bad("residual_scale must be non-negative");
  if (scale != 4) bad("only x4 upscaling is supported");
}

GeneratorConfig GeneratorConfig::paper() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::tiny() {
  GeneratorConfig c;
  c.n_rrdb_sr = 2;
  c.n_rrdb_gb = 1;
  c.tap_indices = {1};
  c.base_channels = 16;
  c.growth_channels = 8;
  c.gradient_channels = 8;
  c.use_desubpixel_head = false;
  c.fuse_channels = 8;
  c.fuse_growth_channels = 4;
  return c;
}

// --- blocks ---------------------------------------------------------------

template <typename T>
DenseBlock<T>::DenseBlock(ParamStore<T>& store, const std::string& name, int channels, int growth,
                          double residual_scale, std::mt19937_64& rng)
    : residual_scale_(static_cast<T>(residual_scale)) {
  for (int k = 0; k < 5; ++k) {
    ConvSpec spec;
    spec.in = channels + k * growth;
    spec.out = k == 4 ? channels : growth;
    spec.init_scale = k == 4 ? 0.1 : 1.0;
    convs_.push_back(make_conv(store, name + ".conv" + std::to_string(k + 1), spec, rng));
  }
}

template <typename T>
Tensor<T> DenseBlock<T>::operator()(const Tensor<T>& x) const {
  std::vector<Tensor<T>> features{x};
  for (int k = 0; k < 4; ++k) {
    const Tensor<T> in = features.size() == 1 ? x : concat(features, 1);
    features.push_back(lrelu(convs_[k](in)));
  }
  const Tensor<T> out = convs_[4](concat(features, 1));
  return add(mul_scalar(out, residual_scale_), x);
}

template <typename T>
RRDB<T>::RRDB(ParamStore<T>& store, const std::string& name, int channels, int growth, double residual_scale,
              std::mt19937_64& rng)
    : residual_scale_(static_cast<T>(residual_scale)), channels_(channels) {
  for (int k = 0; k < 3; ++k) {
    blocks_.emplace_back(store, name + ".rdb" + std::to_string(k + 1), channels, growth, residual_scale, rng);
  }
}

template <typename T>
Tensor<T> RRDB<T>::operator()(const Tensor<T>& x) const {
  if (x.ndim() != 4 || x.dim(1) != channels_) {
    throw std::invalid_argument("rrdb: expected " + std::to_string(channels_) + " channels, got " + shape_str(x.shape()));
  }
  Tensor<T> out = x;
  for (const auto& block : blocks_) out = block(out);
  return add(mul_scalar(out, residual_scale_), x);
}

// --- generator ------------------------------------------------------------

template <typename T>
typename Generator<T>::Upsampler Generator<T>::make_upsampler(const std::string& name, int channels,
                                                              std::mt19937_64& rng) {
  Upsampler up;
  for (int stage = 0; stage < 2; ++stage) {
    ConvSpec spec;
    spec.in = channels;
    spec.out = config_.upsample == UpsampleMode::kSubpixel ? channels * 4 : channels;
    up.convs.push_back(make_conv(store_, name + ".up" + std::to_string(stage + 1), spec, rng));
  }
  return up;
}

template <typename T>
Tensor<T> Generator<T>::upsample(const Upsampler& up, const Tensor<T>& x) const {
  Tensor<T> out = x;
  for (const auto& conv : up.convs) {
    if (config_.upsample == UpsampleMode::kSubpixel) {
      out = lrelu(depth_to_space(conv(out), 2));
    } else {
      out = lrelu(conv(upsample_nearest(out, 2)));
    }
  }
  return out;
}

template <typename T>
Generator<T>::Generator(GeneratorConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int nf = config_.base_channels;
  const int gc = config_.gradient_channels;
  const int growth = config_.growth_channels;
  const double beta = config_.residual_scale;
  const int in_channels = config_.use_desubpixel_head ? 3 * config_.scale * config_.scale : 3;
  const int map_channels = config_.gradient_map.per_channel ? 3 : 1;

  conv_first_ = make_conv(store_, "sr.conv_first", {in_channels, nf}, rng);
  for (int i = 0; i < config_.n_rrdb_sr; ++i) {
    trunk_.emplace_back(store_, "sr.trunk." + std::to_string(i + 1), nf, growth, beta, rng);
  }
  trunk_conv_ = make_conv(store_, "sr.trunk_conv", {nf, nf}, rng);
  sr_up_ = make_upsampler("sr", nf, rng);
  sr_hr_conv_ = make_conv(store_, "sr.hr_conv", {nf, nf}, rng);

  grad_first_ = make_conv(store_, "gb.conv_first", {map_channels, gc}, rng);
  for (int i = 0; i < config_.n_rrdb_gb; ++i) {
    const std::string id = std::to_string(i + 1);
    tap_adapters_.push_back(make_conv(store_, "gb.tap" + id, {nf, gc, 1}, rng));
    if (config_.tap_injection == TapInjection::kConcat) {
      tap_merges_.push_back(make_conv(store_, "gb.merge" + id, {2 * gc, gc}, rng));
    }
    grad_blocks_.emplace_back(store_, "gb.block." + id, gc, growth, beta, rng);
  }
  grad_up_ = make_upsampler("gb", gc, rng);
  grad_hr_conv_ = make_conv(store_, "gb.hr_conv", {gc, gc}, rng);
  grad_map_head_ = make_conv(store_, "gb.map_head", {gc, map_channels}, rng);

  if (config_.fuse_gradient_branch) {
    grad_feature_head_ = make_conv(store_, "gb.feature_head", {gc, gc}, rng);
    const int ff = config_.fuse_channels > 0 ? config_.fuse_channels : nf;
    const int fg = config_.fuse_growth_channels > 0 ? config_.fuse_growth_channels : growth;
    fuse_in_ = make_conv(store_, "fuse.conv_in", {nf + gc, ff}, rng);
    fuse_block_ = RRDB<T>(store_, "fuse.rrdb", ff, fg, beta, rng);
    fuse_out_ = make_conv(store_, "fuse.conv_out", {ff, ff}, rng);
    conv_last_ = make_conv(store_, "out.conv_last", {ff, 3}, rng);
  } else {
    conv_last_ = make_conv(store_, "out.conv_last", {nf, 3}, rng);
  }
}

template <typename T>
GeneratorOutput<T> Generator<T>::forward(const Tensor<T>& lr) const {
  if (lr.ndim() != 4 || lr.dim(1) != 3) {
    throw std::invalid_argument("generator: expected (N, 3, H, W) input, got " + shape_str(lr.shape()));
  }
  if (lr.dim(2) < kMinInput || lr.dim(3) < kMinInput) {
    throw std::invalid_argument("generator: input " + shape_str(lr.shape()) + " too small at stage 'input' (minimum " +
                                std::to_string(kMinInput) + "x" + std::to_string(kMinInput) + ")");
  }
  const int s = config_.scale;

  // SR branch.
  Tensor<T> head = lr;
  if (config_.use_desubpixel_head) head = space_to_depth(upsample_nearest(lr, s), s);
  const Tensor<T> shallow = conv_first_(head);
  std::vector<Tensor<T>> taps;
  Tensor<T> trunk = shallow;
  size_t next_tap = 0;
  for (int i = 0; i < config_.n_rrdb_sr; ++i) {
    trunk = trunk_[i](trunk);
    if (next_tap < config_.tap_indices.size() && config_.tap_indices[next_tap] == i + 1) {
      taps.push_back(trunk);
      ++next_tap;
    }
  }
  const Tensor<T> deep = add(shallow, trunk_conv_(trunk));
  const Tensor<T> sr_features = lrelu(sr_hr_conv_(upsample(sr_up_, deep)));

  // Gradient branch on M(lr), fed by the tapped SR features.
  Tensor<T> g = lrelu(grad_first_(extract_gradient(lr, config_.gradient_map)));
  for (int i = 0; i < config_.n_rrdb_gb; ++i) {
    const Tensor<T> injected = tap_adapters_[i](taps[i]);
    if (config_.tap_injection == TapInjection::kConcat) {
      g = lrelu(tap_merges_[i](concat(std::vector<Tensor<T>>{g, injected}, 1)));
    } else {
      g = add(g, injected);
    }
    g = grad_blocks_[i](g);
  }
  const Tensor<T> g_hr = lrelu(grad_hr_conv_(upsample(grad_up_, g)));

  GeneratorOutput<T> out;
  out.gb_map = grad_map_head_(g_hr);
  if (config_.fuse_gradient_branch) {
    const Tensor<T> g_features = lrelu(grad_feature_head_(g_hr));
    Tensor<T> fused = fuse_in_(concat(std::vector<Tensor<T>>{sr_features, g_features}, 1));
    fused = lrelu(fuse_out_(fuse_block_(fused)));
    out.sr = conv_last_(fused);
  } else {
    out.sr = conv_last_(sr_features);
  }
  return out;
}

template class DenseBlock<float>;
template class DenseBlock<double>;
template class RRDB<float>;
template class RRDB<double>;
template class Generator<float>;
template class Generator<double>;

}  // namespace sgsr
