#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgsr/config.hpp"
#include "sgsr/discriminators.hpp"
#include "sgsr/generator.hpp"
#include "sgsr/image.hpp"
#include "sgsr/optim.hpp"
#include "sgsr/perceptual.hpp"
#include "sgsr/serialize.hpp"

namespace sgsr {

enum class Phase { kPretrain, kGan };
const char* phase_name(Phase phase);

// One row of the training log. Terms that a phase does not compute are NaN.
struct StepRecord {
  Phase phase = Phase::kPretrain;
  int64_t step = 0;  // completed steps in this phase, including this one
  double lr = 0.0;
  double d_u = NAN;
  double d_gm = NAN;
  double adv_u = NAN;
  double per = NAN;
  double fm = NAN;
  double pix = NAN;
  double gm_adv = NAN;
  double gm_pix = NAN;
  double gb_pix = NAN;
  double total = NAN;
  int64_t skipped = 0;  // cumulative optimizer steps skipped on non-finite gradients
  double wall_s = 0.0;

  // Every loss-valued field, in log-column order.
  std::vector<double> losses() const;
};

struct ValRecord {
  Phase phase = Phase::kPretrain;
  int64_t step = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainerOptions {
  // Empty: keep logs in memory only and never write checkpoints.
  std::filesystem::path out_dir;
};

// Validation metric as the CLI reproduces it: generator output clamped,
// quantized to 8 bits, Y-channel PSNR/SSIM with a 4-pixel crop.
ValRecord evaluate_generator(const Generator<float>& g, const Dataset& data);
Image super_resolve(const Generator<float>& g, const Image& lr, Image* gradient_map = nullptr);

class Trainer {
 public:
  Trainer(RunConfig config, std::string config_text, Dataset train, Dataset val = {}, TrainerOptions options = {});

  static std::unique_ptr<Trainer> from_checkpoint(const std::filesystem::path& path, Dataset train, Dataset val = {},
                                                  TrainerOptions options = {});

  // Switches a pretrained state to adversarial training at step 0.
  void begin_gan();

  StepRecord step();
  // Runs until the phase's configured step count, or at most `max_steps`
  // more steps when max_steps >= 0. Checkpoints and validates on schedule.
  std::vector<StepRecord> run(int64_t max_steps = -1);

  Container checkpoint() const;
  std::filesystem::path save(const std::filesystem::path& path);
  void restore(const Container& container);

  Phase phase() const { return phase_; }
  int64_t step_count() const { return step_; }
  int64_t target_steps() const;
  double current_lr() const;
  const std::filesystem::path& last_checkpoint() const { return last_checkpoint_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const std::vector<ValRecord>& validation() const { return val_history_; }
  ValRecord validate();

  const RunConfig& config() const { return config_; }
  const std::string& config_text() const { return config_text_; }
  Generator<float>& generator() { return *g_; }
  UNetDiscriminator<float>& disc_u() { return *du_; }
  GradientMapDiscriminator<float>& disc_gm() { return *dgm_; }
  const PerceptualNet<float>& perceptual() const;

 private:
  struct Batch {
    Tensor<float> hr;
    Tensor<float> lr;
  };
  Batch draw_batch();
  StepRecord pretrain_step();
  StepRecord gan_step();
  void append_log(const StepRecord& r) const;
  void append_val(const ValRecord& r) const;
  void reset_optimizers();
  std::string rng_state() const;

  RunConfig config_;
  std::string config_text_;
  Dataset train_;
  Dataset val_;
  TrainerOptions options_;

  std::unique_ptr<Generator<float>> g_;
  std::unique_ptr<UNetDiscriminator<float>> du_;
  std::unique_ptr<GradientMapDiscriminator<float>> dgm_;
  mutable std::unique_ptr<PerceptualNet<float>> per_;
  std::unique_ptr<Adam<float>> opt_g_, opt_du_, opt_dgm_;

  Phase phase_ = Phase::kPretrain;
  int64_t step_ = 0;
  std::mt19937_64 rng_;
  std::vector<StepRecord> history_;
  std::vector<ValRecord> val_history_;
  std::filesystem::path last_checkpoint_;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace sgsr
