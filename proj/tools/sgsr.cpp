// sgsr: command-line front end for training, inference and evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad command line or config
// (CLI11 parse errors use its own nonzero codes).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgsr/config.hpp"
#include "sgsr/gradient_map.hpp"
#include "sgsr/image.hpp"
#include "sgsr/metrics.hpp"
#include "sgsr/serialize.hpp"
#include "sgsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace sgsr;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  bool given() const { return !config_path.empty() || !overrides.empty(); }

  std::string text() const {
    std::string text = config_path.empty() ? std::string() : read_file(config_path);
    if (!overrides.empty()) {
      if (!text.empty() && text.back() != '\n') text += '\n';
      text += "# command-line overrides\n";
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE, got '" + o + "'");
        text += o.substr(0, eq) + " = " + o.substr(eq + 1) + "\n";
      }
    }
    return text;
  }
};

void add_config_options(CLI::App* app, ConfigArgs& args) {
  app->add_option("--config", args.config_path, "Run config file (key = value lines)")->check(CLI::ExistingFile);
  app->add_option("--set", args.overrides, "Override one config key, KEY=VALUE (repeatable)");
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void report(const Trainer& t) {
  const auto& h = t.history();
  if (!h.empty()) {
    const auto& r = h.back();
    std::cerr << phase_name(r.phase) << " step " << r.step << "/" << t.target_steps() << " lr " << fmt(r.lr, "%.3g")
              << " total " << fmt(r.total, "%.5g") << " skipped " << r.skipped << "\n";
  }
  if (!t.validation().empty()) {
    const auto& v = t.validation().back();
    std::cerr << "validation psnr " << fmt(v.psnr) << " ssim " << fmt(v.ssim) << "\n";
  }
  if (!t.last_checkpoint().empty()) std::cerr << "checkpoint " << t.last_checkpoint().string() << "\n";
}

Dataset maybe_dataset(const std::string& dir) { return dir.empty() ? Dataset{} : load_dataset(dir); }

// --- subcommands ----------------------------------------------------------

struct TrainArgs {
  ConfigArgs cfg;
  std::string data, val, out, resume, init;
  int64_t steps = -1;
};

int cmd_pretrain(const TrainArgs& a) {
  std::unique_ptr<Trainer> t;
  if (!a.resume.empty()) {
    if (a.cfg.given()) throw std::invalid_argument("--resume takes its config from the checkpoint");
    t = Trainer::from_checkpoint(a.resume, load_dataset(a.data), maybe_dataset(a.val), {a.out});
    if (t->phase() != Phase::kPretrain) throw std::invalid_argument(a.resume + " is not a pretraining checkpoint");
  } else {
    const std::string text = a.cfg.text();
    t = std::make_unique<Trainer>(parse_config(text), text, load_dataset(a.data), maybe_dataset(a.val),
                                  TrainerOptions{a.out});
    if (t->step_count() == 0 && a.steps == 0) t->save(fs::path(a.out) / "pretrain_00000000.ckpt");
  }
  t->run(a.steps);
  report(*t);
  return 0;
}

int cmd_train(const TrainArgs& a) {
  std::unique_ptr<Trainer> t;
  Dataset train = load_dataset(a.data);
  if (!a.init.empty()) {
    const Container c = load_container(a.init);
    const auto state = decode_kv(c.get("state"));
    const bool pretrained = std::any_of(state.begin(), state.end(),
                                        [](const auto& kv) { return kv.first == "phase" && kv.second == "pretrain"; });
    if (!pretrained && a.cfg.given()) throw std::invalid_argument("resuming a GAN checkpoint uses its own config");
    const std::string text = a.cfg.given() ? a.cfg.text() : c.get("config");
    t = std::make_unique<Trainer>(parse_config(text), text, std::move(train), maybe_dataset(a.val),
                                  TrainerOptions{a.out});
    if (pretrained) {
      decode_params(c.get("generator"), t->generator().params(), "generator");
      std::cerr << "initialized generator from " << a.init << "\n";
    } else {
      t->restore(c);
    }
  } else {
    const std::string text = a.cfg.text();
    t = std::make_unique<Trainer>(parse_config(text), text, std::move(train), maybe_dataset(a.val),
                                  TrainerOptions{a.out});
  }
  t->begin_gan();
  std::cerr << "perceptual weights: " << t->perceptual().provenance() << "\n";
  t->run(a.steps);
  report(*t);
  return 0;
}

std::unique_ptr<Generator<float>> load_generator(const std::string& checkpoint) {
  const Container c = load_container(checkpoint);
  auto g = std::make_unique<Generator<float>>(parse_config(c.get("config")).g);
  decode_params(c.get("generator"), g->params(), "generator");
  return g;
}

std::vector<fs::path> input_files(const fs::path& in) {
  if (fs::is_regular_file(in)) return {in};
  return list_pngs(in);
}

int cmd_infer(const std::string& checkpoint, const std::string& in, const std::string& out, bool emit_gradmap) {
  const auto g = load_generator(checkpoint);
  const auto files = input_files(in);
  if (files.empty()) throw std::runtime_error(in + ": no PNG files");
  fs::create_directories(out);
  int written = 0, skipped = 0;
  for (const auto& f : files) {
    const Image lr = load_png(f);
    if (lr.height < Generator<float>::kMinInput || lr.width < Generator<float>::kMinInput) {
      std::cerr << "skip " << f.string() << ": " << lr.height << "x" << lr.width << " below the generator minimum "
                << Generator<float>::kMinInput << "x" << Generator<float>::kMinInput << "\n";
      ++skipped;
      continue;
    }
    Image gmap;
    const Image sr = super_resolve(*g, lr, emit_gradmap ? &gmap : nullptr);
    save_png(sr, fs::path(out) / f.filename());
    if (emit_gradmap) save_png(gmap, fs::path(out) / (f.stem().string() + "_gb.png"));
    ++written;
  }
  std::cerr << "wrote " << written << " image(s), skipped " << skipped << "\n";
  return 0;
}

struct EvalArgs {
  std::string sr, hr, csv;
  bool bicubic = false;
  bool rgb = false;
  int crop = 4;
};

int cmd_eval(const EvalArgs& a) {
  if (a.bicubic == !a.sr.empty()) throw std::invalid_argument("eval needs exactly one of --sr DIR or --bicubic");
  const EvalProtocol proto{!a.rgb, a.crop};
  std::ostringstream csv;
  csv << "name,psnr,ssim\n";
  double sum_psnr = 0.0, sum_ssim = 0.0;
  int n = 0;
  for (const auto& hr_path : list_pngs(a.hr)) {
    const Image hr_full = load_png(hr_path);
    Image hr, sr;
    if (a.bicubic) {
      const PairedSample s = make_paired_sample(hr_full);
      hr = s.hr;
      sr = quantize8(bicubic_resize(s.lr, s.hr.height, s.hr.width));
    } else {
      const fs::path sr_path = fs::path(a.sr) / hr_path.filename();
      if (!fs::exists(sr_path)) throw std::runtime_error(sr_path.string() + ": missing SR image for " + hr_path.string());
      sr = load_png(sr_path);
      hr = sr.same_dims(hr_full) ? hr_full : mod_crop(hr_full, 4);
    }
    const double p = psnr(sr, hr, proto), s = ssim(sr, hr, proto);
    csv << hr_path.filename().string() << ',' << fmt(p, "%.6f") << ',' << fmt(s, "%.6f") << '\n';
    sum_psnr += p;
    sum_ssim += s;
    ++n;
  }
  if (n == 0) throw std::runtime_error(a.hr + ": no PNG files");
  csv << "mean," << fmt(sum_psnr / n, "%.6f") << ',' << fmt(sum_ssim / n, "%.6f") << '\n';
  if (a.csv.empty()) {
    std::cout << csv.str();
  } else {
    write_file_atomic(a.csv, csv.str());
  }
  return 0;
}

int cmd_gradmap(const std::string& in, const std::string& out, bool per_channel) {
  GradientMapOptions opts;
  opts.per_channel = per_channel;
  const Image g = gradient_map_image(load_png(in), opts);
  save_png(g, out);
  return 0;
}

void print_counts(const char* label, int64_t total, const std::map<std::string, int64_t>& parts) {
  std::cout << label << ": " << total << " parameters\n";
  for (const auto& [k, v] : parts) std::cout << "  " << k << "* " << v << "\n";
}

int cmd_describe(const std::string& checkpoint, const ConfigArgs& cfg) {
  std::string text;
  std::vector<std::pair<std::string, std::string>> state;
  Container c;
  if (!checkpoint.empty()) {
    if (cfg.given()) throw std::invalid_argument("describe takes either --checkpoint or a config");
    c = load_container(checkpoint);
    text = c.get("config");
    state = decode_kv(c.get("state"));
  } else {
    text = cfg.text();
  }
  const RunConfig config = parse_config(text);
  Generator<float> g(config.g);
  UNetDiscriminator<float> du(config.du);
  GradientMapDiscriminator<float> dgm(config.dgm);
  if (!checkpoint.empty()) {
    decode_params(c.get("generator"), g.params(), "generator");
    decode_params(c.get("disc_u"), du.params(), "disc_u");
    decode_params(c.get("disc_gm"), dgm.params(), "disc_gm");
  }

  std::cout << "# config\n" << text;
  if (!text.empty() && text.back() != '\n') std::cout << '\n';
  std::cout << "# preset " << config.preset << "\n";
  const auto& gp = g.params();
  print_counts("generator", gp.param_count(),
               {{"sr.", gp.param_count("sr.")}, {"gb.", gp.param_count("gb.")},
                {"fuse.", gp.param_count("fuse.")}, {"out.", gp.param_count("out.")}});
  print_counts("disc_u", du.params().param_count(),
               {{"enc.", du.params().param_count("enc.")}, {"dec.", du.params().param_count("dec.")}});
  std::cout << "disc_gm: " << dgm.params().param_count() << " parameters\n";
  const auto& w = config.loss;
  std::cout << "loss weights: adv " << w.lambda_adv << " per " << w.lambda_per << " fm " << w.lambda_fm << " pix "
            << w.lambda_pix << " gm " << w.lambda_gm << " gb " << w.lambda_gb << "\n";
  if (checkpoint.empty()) {
    std::cout << "phase: (fresh)\nstep: 0\n";
  } else {
    for (const auto& [k, v] : state)
      if (k != "rng" && k != "loss_weights") std::cout << k << ": " << v << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-guided x4 super-resolution GAN"};
  app.require_subcommand(1);

  TrainArgs pre;
  auto* pretrain = app.add_subcommand("pretrain", "Pixel-loss pretraining of the generator");
  add_config_options(pretrain, pre.cfg);
  pretrain->add_option("--data", pre.data, "Directory of HR training PNGs")->required()->check(CLI::ExistingDirectory);
  pretrain->add_option("--val", pre.val, "Directory of HR validation PNGs")->check(CLI::ExistingDirectory);
  pretrain->add_option("--out", pre.out, "Run directory (logs, checkpoints)")->required();
  pretrain->add_option("--steps", pre.steps, "Stop after this many steps in this invocation");
  pretrain->add_option("--resume", pre.resume, "Continue from a pretraining checkpoint")->check(CLI::ExistingFile);

  TrainArgs gan;
  auto* train = app.add_subcommand("train", "Adversarial training");
  add_config_options(train, gan.cfg);
  train->add_option("--data", gan.data, "Directory of HR training PNGs")->required()->check(CLI::ExistingDirectory);
  train->add_option("--val", gan.val, "Directory of HR validation PNGs")->check(CLI::ExistingDirectory);
  train->add_option("--out", gan.out, "Run directory (logs, checkpoints)")->required();
  train->add_option("--steps", gan.steps, "Stop after this many steps in this invocation");
  train->add_option("--init", gan.init, "Pretrained checkpoint to start from, or a GAN checkpoint to resume")
      ->check(CLI::ExistingFile);

  std::string ckpt, in, out;
  bool emit_gradmap = false;
  auto* infer = app.add_subcommand("infer", "x4 super-resolve PNGs");
  infer->add_option("--checkpoint", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--in", in, "LR PNG file or directory")->required()->check(CLI::ExistingPath);
  infer->add_option("--out", out, "Output directory")->required();
  infer->add_flag("--emit-gradmap", emit_gradmap, "Also write the gradient branch's map as <name>_gb.png");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM against HR references, as CSV");
  eval->add_option("--hr", ev.hr, "Directory of HR PNGs")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--sr", ev.sr, "Directory of SR PNGs with matching names")->check(CLI::ExistingDirectory);
  eval->add_flag("--bicubic", ev.bicubic, "Evaluate bicubic x4 restoration of the self-degraded HR set");
  eval->add_flag("--rgb", ev.rgb, "Full RGB instead of the Y channel");
  eval->add_option("--crop", ev.crop, "Border pixels excluded")->capture_default_str();
  eval->add_option("--csv", ev.csv, "Write CSV here instead of stdout");

  std::string gm_in, gm_out;
  bool per_channel = false;
  auto* gradmap = app.add_subcommand("gradmap", "Write the gradient-magnitude map of a PNG");
  gradmap->add_option("input,--in", gm_in, "Input PNG")->required()->check(CLI::ExistingFile);
  gradmap->add_option("output,--out", gm_out, "Output PNG")->required();
  gradmap->add_flag("--per-channel", per_channel, "Per-RGB-channel maps");

  std::string desc_ckpt;
  ConfigArgs desc_cfg;
  auto* describe = app.add_subcommand("describe", "Summarize a checkpoint or config");
  describe->add_option("--checkpoint", desc_ckpt, "Checkpoint")->check(CLI::ExistingFile);
  add_config_options(describe, desc_cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) return cmd_pretrain(pre);
    if (train->parsed()) return cmd_train(gan);
    if (infer->parsed()) return cmd_infer(ckpt, in, out, emit_gradmap);
    if (eval->parsed()) return cmd_eval(ev);
    if (gradmap->parsed()) return cmd_gradmap(gm_in, gm_out, per_channel);
    if (describe->parsed()) return cmd_describe(desc_ckpt, desc_cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
