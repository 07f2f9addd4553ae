#include "sgsr/config.hpp"

#include <functional>
#include <sstream>
#include <stdexcept>

namespace sgsr {

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (hr_patch < 32 || hr_patch % 4 != 0) bad("hr_patch must be a multiple of 4 and >= 32");
  if (pretrain_steps < 0 || gan_steps < 0) bad("step counts must be non-negative");
  if (!(pretrain_lr > 0) || !(gan_lr > 0) || !(lr_min > 0)) bad("learning rates must be positive");
  for (size_t i = 1; i < lr_milestones.size(); ++i)
    if (lr_milestones[i] <= lr_milestones[i - 1]) bad("lr_milestones must be strictly increasing");
  if (!(cutmix_prob >= 0 && cutmix_prob <= 1)) bad("cutmix_prob must be in [0, 1]");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) bad("bad Adam constants");
}

void RunConfig::validate() const {
  g.validate();
  du.validate();
  dgm.validate();
  per.validate();
  loss.validate();
  train.validate();
  if (dgm.input_size != train.hr_patch) {
    throw std::invalid_argument("config: dgm.input_size (" + std::to_string(dgm.input_size) +
                                ") must equal train.hr_patch (" + std::to_string(train.hr_patch) + ")");
  }
  if (train.hr_patch % (1 << du.n_down) != 0) {
    throw std::invalid_argument("config: train.hr_patch must be divisible by 2^du.n_down");
  }
  if (dgm.in_channels != (g.gradient_map.per_channel ? 3 : 1)) {
    throw std::invalid_argument("config: dgm input channels do not match the gradient map mode");
  }
}

RunConfig make_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  // Training always feeds raw LR patches, so the space-to-depth head is off.
  c.g.use_desubpixel_head = false;
  if (name == "paper") return c;
  if (name == "desk") {
    // Every step count is the paper-scale one divided by 100.
    c.g.n_rrdb_sr = 6;
    c.g.n_rrdb_gb = 2;
    c.g.tap_indices = {3, 6};
    c.g.base_channels = 32;
    c.g.growth_channels = 16;
    c.g.gradient_channels = 16;
    c.du.base_channels = 32;
    c.du.max_channels = 256;
    c.dgm.base_channels = 16;
    c.dgm.max_channels = 128;
    c.dgm.hidden = 64;
    c.train.batch_size = 4;
    c.train.pretrain_steps = 10000;
    c.train.pretrain_halve_every = 5000;
    c.train.gan_steps = 4000;
    c.train.lr_milestones = {500, 1000, 2000, 3000};
    c.train.checkpoint_every = 500;
    c.train.val_every = 500;
    return c;
  }
  if (name == "tiny") {
    c.g = GeneratorConfig::tiny();
    c.du = DiscConfig::tiny();
    c.dgm = GMDiscConfig::tiny();
    c.dgm.input_size = 128;
    c.dgm.n_stages = 4;
    c.per = PerceptualConfig::tiny();
    c.train.batch_size = 1;
    c.train.pretrain_steps = 2000;
    c.train.pretrain_halve_every = 500;
    c.train.pretrain_lr = 2e-3;
    c.train.gan_steps = 500;
    c.train.lr_milestones = {};
    c.train.checkpoint_every = 0;
    c.train.val_every = 0;
    c.train.augment = false;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected tiny, desk or paper)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument("expected a boolean");
}

int64_t to_int(const std::string& v) {
  size_t used = 0;
  const long long x = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected an integer");
  return x;
}

double to_real(const std::string& v) {
  size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected a number");
  return x;
}

std::vector<int64_t> to_ints(const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int(item));
  }
  return out;
}

template <typename Out>
std::vector<Out> narrow(const std::vector<int64_t>& v) {
  return std::vector<Out>(v.begin(), v.end());
}

struct KeyDef {
  const char* key;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define INT_KEY(name, field, help) \
  KeyDef { name, help, [](RunConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_int(v)); } }
#define REAL_KEY(name, field, help) \
  KeyDef { name, help, [](RunConfig& c, const std::string& v) { c.field = to_real(v); } }
#define BOOL_KEY(name, field, help) \
  KeyDef { name, help, [](RunConfig& c, const std::string& v) { c.field = to_bool(v); } }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {"preset", "tiny | desk | paper; applied before every other key", nullptr},
      INT_KEY("g.n_rrdb_sr", g.n_rrdb_sr, "RRDBs in the SR branch"),
      INT_KEY("g.n_rrdb_gb", g.n_rrdb_gb, "RRDBs in the gradient branch"),
      {"g.taps", "comma list of 1-based SR-branch RRDB indices feeding the gradient branch",
       [](RunConfig& c, const std::string& v) { c.g.tap_indices = narrow<int>(to_ints(v)); }},
      INT_KEY("g.base_channels", g.base_channels, "SR-branch feature width"),
      INT_KEY("g.growth_channels", g.growth_channels, "dense-block growth width"),
      INT_KEY("g.gradient_channels", g.gradient_channels, "gradient-branch feature width"),
      INT_KEY("g.fuse_channels", g.fuse_channels, "fusion-block width; 0 follows g.base_channels"),
      INT_KEY("g.fuse_growth_channels", g.fuse_growth_channels, "fusion-block growth; 0 follows g.growth_channels"),
      REAL_KEY("g.residual_scale", g.residual_scale, "residual scaling inside RRDBs"),
      BOOL_KEY("g.desubpixel_head", g.use_desubpixel_head, "space-to-depth input head"),
      {"g.upsample", "nearest_conv | subpixel",
       [](RunConfig& c, const std::string& v) {
         if (v == "nearest_conv") c.g.upsample = UpsampleMode::kNearestConv;
         else if (v == "subpixel") c.g.upsample = UpsampleMode::kSubpixel;
         else throw std::invalid_argument("expected nearest_conv or subpixel");
       }},
      {"g.tap_injection", "concat | add",
       [](RunConfig& c, const std::string& v) {
         if (v == "concat") c.g.tap_injection = TapInjection::kConcat;
         else if (v == "add") c.g.tap_injection = TapInjection::kAdd;
         else throw std::invalid_argument("expected concat or add");
       }},
      BOOL_KEY("g.gradient_branch", g.fuse_gradient_branch, "fuse gradient-branch features into the SR output"),
      {"g.gradient_per_channel", "gradient map per RGB channel instead of on the channel mean",
       [](RunConfig& c, const std::string& v) {
         c.g.gradient_map.per_channel = to_bool(v);
         c.dgm.in_channels = c.g.gradient_map.per_channel ? 3 : 1;
       }},
      INT_KEY("du.n_down", du.n_down, "U-Net discriminator downsampling blocks"),
      INT_KEY("du.base_channels", du.base_channels, "U-Net discriminator first width"),
      INT_KEY("du.max_channels", du.max_channels, "U-Net discriminator width cap"),
      BOOL_KEY("du.spectral_norm", du.spectral_norm, "spectral normalization on U-Net discriminator convs"),
      BOOL_KEY("du.decoder", du.use_decoder, "per-pixel decoder (off: encoder-only critic)"),
      INT_KEY("dgm.input_size", dgm.input_size, "gradient-map discriminator input side; must equal train.hr_patch"),
      INT_KEY("dgm.n_stages", dgm.n_stages, "gradient-map discriminator stages"),
      INT_KEY("dgm.base_channels", dgm.base_channels, "gradient-map discriminator first width"),
      INT_KEY("dgm.max_channels", dgm.max_channels, "gradient-map discriminator width cap"),
      INT_KEY("dgm.hidden", dgm.hidden, "gradient-map discriminator dense width"),
      {"per.mode", "lpips | feature_l2",
       [](RunConfig& c, const std::string& v) {
         if (v == "lpips") c.per.mode = PerceptualMode::kLpips;
         else if (v == "feature_l2") c.per.mode = PerceptualMode::kFeatureL2;
         else throw std::invalid_argument("expected lpips or feature_l2");
       }},
      {"per.widths", "five comma-separated stage widths",
       [](RunConfig& c, const std::string& v) { c.per.widths = narrow<int>(to_ints(v)); }},
      {"per.weights", "perceptual weight file (empty: seeded random weights)",
       [](RunConfig& c, const std::string& v) { c.per.weights_path = v; }},
      {"per.weights_sha256", "expected SHA-256 of the weight file",
       [](RunConfig& c, const std::string& v) { c.per.weights_sha256 = v; }},
      INT_KEY("per.seed", per.seed, "seed for random perceptual weights"),
      REAL_KEY("loss.adv", loss.lambda_adv, "weight of both adversarial generator terms"),
      REAL_KEY("loss.per", loss.lambda_per, "perceptual weight"),
      REAL_KEY("loss.pix", loss.lambda_pix, "pixel L1 weight"),
      REAL_KEY("loss.gm", loss.lambda_gm, "gradient-map L1 weight"),
      REAL_KEY("loss.gb", loss.lambda_gb, "gradient-branch L1 weight"),
      REAL_KEY("loss.fm", loss.lambda_fm, "feature-matching weight"),
      BOOL_KEY("loss.gm_relativistic", gm_relativistic, "relativistic-average gradient-map adversarial terms"),
      INT_KEY("train.batch_size", train.batch_size, "patches per batch"),
      INT_KEY("train.hr_patch", train.hr_patch, "HR patch side"),
      INT_KEY("train.pretrain_steps", train.pretrain_steps, "pixel-loss pretraining steps"),
      INT_KEY("train.gan_steps", train.gan_steps, "adversarial training iterations"),
      REAL_KEY("train.pretrain_lr", train.pretrain_lr, "pretraining learning rate"),
      REAL_KEY("train.gan_lr", train.gan_lr, "adversarial learning rate"),
      {"train.lr_milestones", "comma list of steps at which the adversarial rate halves",
       [](RunConfig& c, const std::string& v) { c.train.lr_milestones = to_ints(v); }},
      INT_KEY("train.pretrain_halve_every", train.pretrain_halve_every, "pretraining rate halving period (0: never)"),
      REAL_KEY("train.lr_min", train.lr_min, "learning-rate floor"),
      REAL_KEY("train.beta1", train.beta1, "Adam beta1"),
      REAL_KEY("train.beta2", train.beta2, "Adam beta2"),
      REAL_KEY("train.adam_eps", train.adam_eps, "Adam epsilon"),
      INT_KEY("train.seed", train.seed, "seed for initialization and sampling"),
      REAL_KEY("train.cutmix_prob", train.cutmix_prob, "probability of the CutMix term per discriminator step"),
      INT_KEY("train.checkpoint_every", train.checkpoint_every, "checkpoint period in steps (0: end only)"),
      INT_KEY("train.val_every", train.val_every, "validation period in steps (0: end only)"),
      BOOL_KEY("train.augment", train.augment, "random flips and transposes of patches"),
      BOOL_KEY("train.fresh_batches", train.fresh_batches, "separate batch per update in a GAN iteration"),
  };
  return defs;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back({d.key, d.help});
    return out;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text) {
  struct Line {
    int number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  std::string preset = "tiny";
  while (std::getline(in, raw)) {
    ++number;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    Line l{number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (l.key == "preset") preset = l.value;
    lines.push_back(std::move(l));
  }

  RunConfig config = make_preset(preset);
  for (const auto& l : lines) {
    if (l.key == "preset") continue;
    const KeyDef* def = nullptr;
    for (const auto& d : key_defs())
      if (l.key == d.key) def = &d;
    if (!def) throw std::invalid_argument("config line " + std::to_string(l.number) + ": unknown key '" + l.key + "'");
    try {
      def->set(config, l.value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(l.number) + ": " + l.key + " = '" + l.value +
                                  "': " + e.what());
    }
  }
  config.validate();
  return config;
}

}  // namespace sgsr
