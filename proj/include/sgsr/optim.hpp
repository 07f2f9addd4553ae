#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgsr/tensor.hpp"

namespace sgsr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Parameters without an accumulated gradient are left
// alone; a step with any non-finite gradient is skipped entirely.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  // Returns false when the step was skipped.
  bool step(double lr);
  void zero_grad();

  int64_t steps() const { return t_; }
  int64_t skipped() const { return skipped_; }

  std::string save_state() const;
  void load_state(const std::string& bytes);

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_, v_;
  int64_t t_ = 0;
  int64_t skipped_ = 0;
};

// lr halves at each milestone reached (0-based step), floored at lr_min.
double lr_at_milestones(int64_t step, double base, const std::vector<int64_t>& milestones, double lr_min);
// lr halves every `period` steps, floored at lr_min.
double lr_every(int64_t step, double base, int64_t period, double lr_min);

}  // namespace sgsr
