#pragma once

// Run configuration: a "key = value" text file with # comments. A `preset`
// line (tiny | desk | paper) is applied first wherever it appears; every
// other line overrides one field. Unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "sgsr/discriminators.hpp"
#include "sgsr/generator.hpp"
#include "sgsr/losses.hpp"
#include "sgsr/perceptual.hpp"

namespace sgsr {

struct TrainConfig {
  int batch_size = 16;
  int hr_patch = 128;
  int64_t pretrain_steps = 1000000;
  int64_t gan_steps = 400000;
  double pretrain_lr = 2e-4;
  double gan_lr = 1e-4;
  std::vector<int64_t> lr_milestones{50000, 100000, 200000, 300000};
  int64_t pretrain_halve_every = 500000;
  double lr_min = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  double cutmix_prob = 0.5;
  int64_t checkpoint_every = 5000;
  int64_t val_every = 5000;
  bool augment = true;
  // Draw a separate batch for each of the three updates in a GAN iteration.
  bool fresh_batches = false;

  void validate() const;
};

struct RunConfig {
  std::string preset = "tiny";
  GeneratorConfig g;
  DiscConfig du;
  GMDiscConfig dgm;
  PerceptualConfig per;
  LossWeights loss;
  bool gm_relativistic = false;
  TrainConfig train;

  void validate() const;
};

RunConfig make_preset(const std::string& name);
RunConfig parse_config(const std::string& text);

struct ConfigKey {
  std::string key;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace sgsr
