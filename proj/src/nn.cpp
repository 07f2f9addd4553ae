#include "sgsr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgsr {

template <typename T>
void ParamStore<T>::check_new(const std::string& name) const {
  if (contains(name)) throw std::logic_error("duplicate parameter name " + name);
}

template <typename T>
Tensor<T> ParamStore<T>::add_param(const std::string& name, Shape shape, std::vector<T> values) {
  check_new(name);
  Tensor<T> t(std::move(shape), std::move(values), true);
  entries_.push_back({name, t, true});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_buffer(const std::string& name, Shape shape, std::vector<T> values) {
  check_new(name);
  Tensor<T> t(std::move(shape), std::move(values), false);
  entries_.push_back({name, t, false});
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::params() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

template <typename T>
int64_t ParamStore<T>::param_count() const {
  return param_count("");
}

template <typename T>
int64_t ParamStore<T>::param_count(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable && e.name.compare(0, prefix.size(), prefix) == 0) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
std::vector<T> kaiming_normal(int64_t count, int64_t fan_in, double scale, std::mt19937_64& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  std::vector<T> values(count);
  for (auto& v : values) v = static_cast<T>(normal(rng) * scale);
  return values;
}

template <typename T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, const ConvSpec& spec, std::mt19937_64& rng) {
  if (spec.in < 1 || spec.out < 1 || spec.kernel < 1) throw std::invalid_argument("make_conv: bad spec for " + name);
  Conv2d<T> conv;
  const int64_t fan_in = spec.in * spec.kernel * spec.kernel;
  conv.weight = store.add_param(name + ".weight", {spec.out, spec.in, spec.kernel, spec.kernel},
                                kaiming_normal<T>(spec.out * fan_in, fan_in, spec.init_scale, rng));
  conv.bias = store.add_param(name + ".bias", {spec.out}, std::vector<T>(spec.out, T(0)));
  conv.stride = spec.stride;
  conv.padding = spec.padding < 0 ? spec.kernel / 2 : spec.padding;
  return conv;
}

namespace {

template <typename T>
void normalize(std::vector<T>& v) {
  T norm = 0;
  for (T x : v) norm += x * x;
  norm = std::sqrt(norm);
  const T inv = T(1) / (norm + T(1e-12));
  for (T& x : v) x *= inv;
}

template <typename T>
std::vector<T> random_unit(int64_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(normal(rng));
  normalize(v);
  return v;
}

}  // namespace

template <typename T>
SNConv2d<T>::SNConv2d(ParamStore<T>& store, const std::string& name, const ConvSpec& spec, std::mt19937_64& rng,
                      bool enabled)
    : conv_(make_conv(store, name, spec, rng)), enabled_(enabled) {
  if (!enabled_) return;
  const int64_t rows = spec.out, cols = spec.in * spec.kernel * spec.kernel;
  u_ = store.add_buffer(name + ".sn_u", {rows}, random_unit<T>(rows, rng));
  v_ = store.add_buffer(name + ".sn_v", {cols}, random_unit<T>(cols, rng));
  power_iteration();
}

template <typename T>
Tensor<T> SNConv2d<T>::effective_weight() const {
  if (!enabled_) return conv_.weight;
  const auto u = u_.data(), v = v_.data();
  return spectral_normalize(conv_.weight, std::vector<T>(u.begin(), u.end()), std::vector<T>(v.begin(), v.end()));
}

template <typename T>
Tensor<T> SNConv2d<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, effective_weight(), conv_.bias, conv_.stride, conv_.padding);
}

template <typename T>
void SNConv2d<T>::power_iteration() {
  if (!enabled_) return;
  const auto w = conv_.weight.data();
  const int64_t rows = u_.numel(), cols = v_.numel();
  std::vector<T> u(u_.data().begin(), u_.data().end());
  std::vector<T> v(cols, T(0));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t k = 0; k < cols; ++k) v[k] += w[r * cols + k] * u[r];
  normalize(v);
  for (int64_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (int64_t k = 0; k < cols; ++k) acc += w[r * cols + k] * v[k];
    u[r] = acc;
  }
  normalize(u);
  std::copy(u.begin(), u.end(), u_.mutable_data().begin());
  std::copy(v.begin(), v.end(), v_.mutable_data().begin());
}

template <typename T>
Linear<T> make_linear(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, std::mt19937_64& rng) {
  Linear<T> layer;
  layer.weight = store.add_param(name + ".weight", {out, in}, kaiming_normal<T>(out * in, in, 1.0, rng));
  layer.bias = store.add_param(name + ".bias", {out}, std::vector<T>(out, T(0)));
  return layer;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class SNConv2d<float>;
template class SNConv2d<double>;
template std::vector<float> kaiming_normal(int64_t, int64_t, double, std::mt19937_64&);
template std::vector<double> kaiming_normal(int64_t, int64_t, double, std::mt19937_64&);
template Conv2d<float> make_conv(ParamStore<float>&, const std::string&, const ConvSpec&, std::mt19937_64&);
template Conv2d<double> make_conv(ParamStore<double>&, const std::string&, const ConvSpec&, std::mt19937_64&);
template Linear<float> make_linear(ParamStore<float>&, const std::string&, int64_t, int64_t, std::mt19937_64&);
template Linear<double> make_linear(ParamStore<double>&, const std::string&, int64_t, int64_t, std::mt19937_64&);

}  // namespace sgsr
