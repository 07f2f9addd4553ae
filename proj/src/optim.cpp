#include "sgsr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "sgsr/serialize.hpp"

namespace sgsr {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
bool Adam<T>::step(double lr) {
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (T g : p.grad())
      if (!std::isfinite(g)) {
        ++skipped_;
        return false;
      }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < w.size(); ++k) {
      m[k] = static_cast<T>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<T>(b2 * v[k] + (1.0 - b2) * g[k] * g[k]);
      const double m_hat = m[k] / c1, v_hat = v[k] / c2;
      w[k] = static_cast<T>(w[k] - lr * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
  return true;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
std::string Adam<T>::save_state() const {
  // Step counters travel as raw bit patterns in the first vector.
  std::vector<float> counters(4);
  std::memcpy(counters.data(), &t_, sizeof(t_));
  std::memcpy(counters.data() + 2, &skipped_, sizeof(skipped_));
  std::vector<std::vector<float>> vectors{counters};
  for (size_t i = 0; i < m_.size(); ++i) {
    vectors.emplace_back(m_[i].begin(), m_[i].end());
    vectors.emplace_back(v_[i].begin(), v_[i].end());
  }
  return encode_vectors(vectors);
}

template <typename T>
void Adam<T>::load_state(const std::string& bytes) {
  const auto vectors = decode_vectors(bytes);
  if (vectors.size() != 1 + 2 * m_.size() || vectors[0].size() != 4) {
    throw std::runtime_error("optimizer state: expected " + std::to_string(m_.size()) + " parameter moments");
  }
  std::memcpy(&t_, vectors[0].data(), sizeof(t_));
  std::memcpy(&skipped_, vectors[0].data() + 2, sizeof(skipped_));
  for (size_t i = 0; i < m_.size(); ++i) {
    const auto& m = vectors[1 + 2 * i];
    const auto& v = vectors[2 + 2 * i];
    if (m.size() != m_[i].size() || v.size() != v_[i].size()) {
      throw std::runtime_error("optimizer state: moment size mismatch for parameter " + std::to_string(i));
    }
    std::copy(m.begin(), m.end(), m_[i].begin());
    std::copy(v.begin(), v.end(), v_[i].begin());
  }
}

double lr_at_milestones(int64_t step, double base, const std::vector<int64_t>& milestones, double lr_min) {
  const auto reached = std::count_if(milestones.begin(), milestones.end(), [&](int64_t m) { return m <= step; });
  return std::max(lr_min, std::ldexp(base, -static_cast<int>(reached)));
}

double lr_every(int64_t step, double base, int64_t period, double lr_min) {
  if (period <= 0) return std::max(lr_min, base);
  const int64_t halvings = std::min<int64_t>(step / period, 1000);
  return std::max(lr_min, std::ldexp(base, -static_cast<int>(halvings)));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace sgsr
