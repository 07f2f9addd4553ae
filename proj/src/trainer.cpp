#include "sgsr/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgsr/losses.hpp"
#include "sgsr/metrics.hpp"

namespace sgsr {

const char* phase_name(Phase phase) { return phase == Phase::kPretrain ? "pretrain" : "gan"; }

std::vector<double> StepRecord::losses() const {
  return {d_u, d_gm, adv_u, per, fm, pix, gm_adv, gm_pix, gb_pix, total};
}

namespace {

void set_trainable(ParamStore<float>& store, bool on) {
  for (auto& e : store.entries())
    if (e.trainable) e.tensor.set_requires_grad(on);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double value(const Tensor<float>& t) { return t.defined() ? static_cast<double>(t.item()) : NAN; }

Phase parse_phase(const std::string& s) {
  if (s == "pretrain") return Phase::kPretrain;
  if (s == "gan") return Phase::kGan;
  throw std::runtime_error("checkpoint: unknown phase '" + s + "'");
}

}  // namespace

Image super_resolve(const Generator<float>& g, const Image& lr, Image* gradient_map) {
  NoGradGuard guard;
  const auto out = g.forward(image_to_tensor<float>(lr));
  if (gradient_map) *gradient_map = quantize8(tensor_to_image(out.gb_map));
  return quantize8(tensor_to_image(out.sr));
}

ValRecord evaluate_generator(const Generator<float>& g, const Dataset& data) {
  if (data.samples.empty()) throw std::invalid_argument("evaluate_generator: empty dataset");
  ValRecord r;
  for (const auto& s : data.samples) {
    const Image sr = super_resolve(g, s.lr);
    r.psnr += psnr(sr, s.hr);
    r.ssim += ssim(sr, s.hr);
  }
  r.psnr /= static_cast<double>(data.samples.size());
  r.ssim /= static_cast<double>(data.samples.size());
  return r;
}

Trainer::Trainer(RunConfig config, std::string config_text, Dataset train, Dataset val, TrainerOptions options)
    : config_(std::move(config)),
      config_text_(std::move(config_text)),
      train_(std::move(train)),
      val_(std::move(val)),
      options_(std::move(options)),
      rng_(config_.train.seed),
      started_(std::chrono::steady_clock::now()) {
  config_.validate();
  if (train_.samples.empty()) throw std::invalid_argument("trainer: empty training dataset");
  for (size_t i = 0; i < train_.samples.size(); ++i) {
    const auto& hr = train_.samples[i].hr;
    if (hr.height < config_.train.hr_patch || hr.width < config_.train.hr_patch) {
      const std::string name = i < train_.names.size() ? train_.names[i] : std::to_string(i);
      throw std::invalid_argument("trainer: training image " + name + " smaller than the " +
                                  std::to_string(config_.train.hr_patch) + "px patch");
    }
  }
  const uint64_t seed = config_.train.seed;
  g_ = std::make_unique<Generator<float>>(config_.g, seed);
  du_ = std::make_unique<UNetDiscriminator<float>>(config_.du, seed + 1);
  dgm_ = std::make_unique<GradientMapDiscriminator<float>>(config_.dgm, seed + 2);
  reset_optimizers();
}

void Trainer::reset_optimizers() {
  const AdamConfig adam{config_.train.beta1, config_.train.beta2, config_.train.adam_eps};
  opt_g_ = std::make_unique<Adam<float>>(g_->params().params(), adam);
  opt_du_ = std::make_unique<Adam<float>>(du_->params().params(), adam);
  opt_dgm_ = std::make_unique<Adam<float>>(dgm_->params().params(), adam);
}

const PerceptualNet<float>& Trainer::perceptual() const {
  if (!per_) per_ = std::make_unique<PerceptualNet<float>>(config_.per);
  return *per_;
}

void Trainer::begin_gan() {
  if (phase_ == Phase::kGan) return;
  phase_ = Phase::kGan;
  step_ = 0;
  reset_optimizers();
}

int64_t Trainer::target_steps() const {
  return phase_ == Phase::kPretrain ? config_.train.pretrain_steps : config_.train.gan_steps;
}

double Trainer::current_lr() const {
  const auto& t = config_.train;
  if (phase_ == Phase::kPretrain) return lr_every(step_, t.pretrain_lr, t.pretrain_halve_every, t.lr_min);
  return lr_at_milestones(step_, t.gan_lr, t.lr_milestones, t.lr_min);
}

Trainer::Batch Trainer::draw_batch() {
  std::uniform_int_distribution<size_t> pick(0, train_.samples.size() - 1);
  const PatchOptions opts{config_.train.hr_patch, config_.train.augment};
  std::vector<Image> hr, lr;
  for (int i = 0; i < config_.train.batch_size; ++i) {
    auto patch = sample_patch_pair(train_.samples[pick(rng_)], opts, rng_);
    hr.push_back(std::move(patch.hr));
    lr.push_back(std::move(patch.lr));
  }
  return {images_to_tensor<float>(hr), images_to_tensor<float>(lr)};
}

StepRecord Trainer::pretrain_step() {
  StepRecord r;
  r.lr = current_lr();
  const Batch b = draw_batch();
  opt_g_->zero_grad();
  const Tensor<float> pix = pixel_loss(g_->forward(b.lr).sr, b.hr);
  r.pix = r.total = value(pix);
  if (!std::isfinite(r.total)) return r;
  pix.backward();
  opt_g_->step(r.lr);
  return r;
}

StepRecord Trainer::gan_step() {
  StepRecord r;
  r.lr = current_lr();
  const auto& tc = config_.train;
  const bool decoder = config_.du.use_decoder;

  Batch b = draw_batch();
  GeneratorOutput<float> out = g_->forward(b.lr);
  Tensor<float> sr_det = out.sr.detach();

  // (1) U-Net discriminator.
  du_->update_spectral_norm();
  opt_du_->zero_grad();
  {
    const auto real = du_->forward(b.hr);
    const auto fake = du_->forward(sr_det);
    Tensor<float> loss = hinge_disc_loss(real.enc_logit, fake.enc_logit);
    if (decoder) loss = add(loss, hinge_disc_loss(real.dec_logits, fake.dec_logits));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (decoder && coin(rng_) < tc.cutmix_prob) {
      const auto mask = make_cutmix_mask(static_cast<int>(b.hr.dim(2)), static_cast<int>(b.hr.dim(3)), rng_);
      const auto mixed = du_->forward(cutmix(b.hr, sr_det, mask));
      loss = add(loss, cutmix_consistency(mixed.dec_logits, real.dec_logits, fake.dec_logits, mask));
      loss = add(loss, hinge_fake_loss(mixed.enc_logit));
    }
    r.d_u = value(loss);
    if (std::isfinite(r.d_u)) {
      loss.backward();
      opt_du_->step(r.lr);
    }
  }

  // (2) Gradient-map discriminator.
  if (tc.fresh_batches) {
    b = draw_batch();
    NoGradGuard guard;
    sr_det = g_->forward(b.lr).sr;
  }
  opt_dgm_->zero_grad();
  {
    Tensor<float> m_sr, m_hr;
    {
      NoGradGuard guard;
      m_sr = extract_gradient(sr_det, config_.g.gradient_map);
      m_hr = extract_gradient(b.hr, config_.g.gradient_map);
    }
    const Tensor<float> loss = gm_disc_loss(dgm_->forward(m_sr), dgm_->forward(m_hr), config_.gm_relativistic);
    r.d_gm = value(loss);
    if (std::isfinite(r.d_gm)) {
      loss.backward();
      opt_dgm_->step(r.lr);
    }
  }

  // (3) Generator, against the freshly updated critics.
  if (tc.fresh_batches) {
    b = draw_batch();
    out = g_->forward(b.lr);
  }
  set_trainable(du_->params(), false);
  set_trainable(dgm_->params(), false);
  opt_g_->zero_grad();
  {
    GeneratorLossParts<float> parts;
    const auto d_sr = du_->forward(out.sr);
    UNetDiscOutput<float> d_hr;
    Tensor<float> m_hr, gm_hr_logits;
    {
      NoGradGuard guard;
      d_hr = du_->forward(b.hr);
      m_hr = extract_gradient(b.hr, config_.g.gradient_map);
      gm_hr_logits = dgm_->forward(m_hr);
    }
    parts.adv_u = gen_adv_loss_u(d_sr.enc_logit, d_sr.dec_logits);
    parts.fm = feature_matching_loss(d_sr.features, d_hr.features);
    parts.per = lpips_loss(perceptual(), out.sr, b.hr);
    parts.pix = pixel_loss(out.sr, b.hr);
    const Tensor<float> m_sr = extract_gradient(out.sr, config_.g.gradient_map);
    parts.gm_adv = gm_gen_loss(dgm_->forward(m_sr), gm_hr_logits, config_.gm_relativistic);
    parts.gm_pix = l1_mean(m_sr, m_hr);
    parts.gb_pix = l1_mean(out.gb_map, m_hr);
    const Tensor<float> total = total_generator_loss(parts, config_.loss);

    r.adv_u = value(parts.adv_u);
    r.per = value(parts.per);
    r.fm = value(parts.fm);
    r.pix = value(parts.pix);
    r.gm_adv = value(parts.gm_adv);
    r.gm_pix = value(parts.gm_pix);
    r.gb_pix = value(parts.gb_pix);
    r.total = value(total);
    if (std::isfinite(r.total)) {
      total.backward();
      opt_g_->step(r.lr);
    }
  }
  set_trainable(du_->params(), true);
  set_trainable(dgm_->params(), true);
  return r;
}

StepRecord Trainer::step() {
  StepRecord r = phase_ == Phase::kPretrain ? pretrain_step() : gan_step();
  r.phase = phase_;
  ++step_;
  r.step = step_;
  r.skipped = opt_g_->skipped() + opt_du_->skipped() + opt_dgm_->skipped();
  r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  history_.push_back(r);
  append_log(r);
  const bool finite = std::isfinite(r.total) && (phase_ == Phase::kPretrain || (std::isfinite(r.d_u) &&
                                                                                 std::isfinite(r.d_gm)));
  if (!finite) {
    throw TrainingDiverged(std::string("non-finite loss at ") + phase_name(phase_) + " step " +
                           std::to_string(step_) + "; last good checkpoint: " +
                           (last_checkpoint_.empty() ? std::string("none") : last_checkpoint_.string()));
  }
  return r;
}

std::vector<StepRecord> Trainer::run(int64_t max_steps) {
  std::vector<StepRecord> records;
  const auto& tc = config_.train;
  const bool persist = !options_.out_dir.empty();
  bool validated_now = false;
  while (step_ < target_steps() && (max_steps < 0 || static_cast<int64_t>(records.size()) < max_steps)) {
    records.push_back(step());
    validated_now = false;
    if (persist && tc.checkpoint_every > 0 && step_ % tc.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%08lld.ckpt", phase_name(phase_), static_cast<long long>(step_));
      save(options_.out_dir / name);
    }
    if (!val_.samples.empty() && tc.val_every > 0 && step_ % tc.val_every == 0) {
      validate();
      validated_now = true;
    }
  }
  if (step_ >= target_steps()) {
    if (persist) save(options_.out_dir / (std::string(phase_name(phase_)) + "_final.ckpt"));
    if (!val_.samples.empty() && !validated_now) validate();
  }
  return records;
}

ValRecord Trainer::validate() {
  ValRecord r = evaluate_generator(*g_, val_);
  r.phase = phase_;
  r.step = step_;
  val_history_.push_back(r);
  append_val(r);
  return r;
}

void Trainer::append_log(const StepRecord& r) const {
  if (options_.out_dir.empty()) return;
  std::filesystem::create_directories(options_.out_dir);
  const auto path = options_.out_dir / "train.csv";
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error(path.string() + ": cannot append");
  if (fresh) out << "step,phase,lr,d_u,d_gm,adv_u,per,fm,pix,gm_adv,gm_pix,gb_pix,total,skipped,wall_s\n";
  out << r.step << ',' << phase_name(r.phase) << ',' << fmt(r.lr);
  for (double v : r.losses()) out << ',' << fmt(v);
  out << ',' << r.skipped << ',' << fmt(r.wall_s) << '\n';
}

void Trainer::append_val(const ValRecord& r) const {
  if (options_.out_dir.empty()) return;
  std::filesystem::create_directories(options_.out_dir);
  const auto path = options_.out_dir / "val.csv";
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error(path.string() + ": cannot append");
  if (fresh) out << "step,phase,psnr,ssim\n";
  out << r.step << ',' << phase_name(r.phase) << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << '\n';
}

std::string Trainer::rng_state() const {
  std::ostringstream ss;
  ss << rng_;
  return ss.str();
}

Container Trainer::checkpoint() const {
  const auto& w = config_.loss;
  Container c;
  c.add("config", config_text_);
  c.add("state", encode_kv({
                     {"phase", phase_name(phase_)},
                     {"step", std::to_string(step_)},
                     {"lr", fmt(current_lr())},
                     {"rng", rng_state()},
                     {"preset", config_.preset},
                     {"perceptual", config_.per.weights_path.empty()
                                        ? "random seed " + std::to_string(config_.per.seed)
                                        : "file " + config_.per.weights_path},
                     {"loss_weights", "adv=" + fmt(w.lambda_adv) + " per=" + fmt(w.lambda_per) +
                                          " fm=" + fmt(w.lambda_fm) + " pix=" + fmt(w.lambda_pix) +
                                          " gm=" + fmt(w.lambda_gm) + " gb=" + fmt(w.lambda_gb)},
                 }));
  c.add("generator", encode_params(g_->params()));
  c.add("disc_u", encode_params(du_->params()));
  c.add("disc_gm", encode_params(dgm_->params()));
  c.add("adam_g", opt_g_->save_state());
  c.add("adam_du", opt_du_->save_state());
  c.add("adam_dgm", opt_dgm_->save_state());
  return c;
}

std::filesystem::path Trainer::save(const std::filesystem::path& path) {
  save_container(checkpoint(), path);
  last_checkpoint_ = path;
  return path;
}

void Trainer::restore(const Container& c) {
  for (const auto& [k, v] : decode_kv(c.get("state"))) {
    if (k == "phase") phase_ = parse_phase(v);
    if (k == "step") step_ = std::stoll(v);
    if (k == "rng") {
      std::istringstream ss(v);
      ss >> rng_;
      if (!ss) throw std::runtime_error("checkpoint: unreadable rng state");
    }
  }
  decode_params(c.get("generator"), g_->params(), "generator");
  decode_params(c.get("disc_u"), du_->params(), "disc_u");
  decode_params(c.get("disc_gm"), dgm_->params(), "disc_gm");
  reset_optimizers();
  opt_g_->load_state(c.get("adam_g"));
  opt_du_->load_state(c.get("adam_du"));
  opt_dgm_->load_state(c.get("adam_dgm"));
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const std::filesystem::path& path, Dataset train, Dataset val,
                                                  TrainerOptions options) {
  const Container c = load_container(path);
  const std::string text = c.get("config");
  auto t = std::make_unique<Trainer>(parse_config(text), text, std::move(train), std::move(val), std::move(options));
  t->restore(c);
  t->last_checkpoint_ = path;
  return t;
}

}  // namespace sgsr
