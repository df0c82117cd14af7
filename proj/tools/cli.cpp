// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "rstca/checkpoint.hpp"
#include "rstca/config.hpp"
#include "rstca/data.hpp"
#include "rstca/evaluation.hpp"
#include "rstca/image_io.hpp"
#include "rstca/model.hpp"
#include "rstca/ops.hpp"
#include "rstca/training.hpp"

namespace rstca::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

const std::vector<std::string> kModelKeys = {"channels",      "blocks",      "heads",     "stls",
                                             "window",        "ca_mode",     "short_skip",
                                             "conv_in_block", "conv_in_dfe", "reduction", "mlp_ratio"};

std::string env_data_dir() {
  const char* v = std::getenv("RSTCA_DATA_DIR");
  return v ? v : "";
}

// Every option of a subcommand is a string keyed like the config file.
// Resolution order: built-in default, then config file, then explicit flags.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "key=value config file; flags override its values");
  }

  void add(const std::string& key, std::string def, const std::string& help) {
    auto& slot = values_[key];
    slot = std::move(def);
    order_.push_back(key);
    std::string flag = "--" + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    opts_[key] = app_->add_option(flag, slot, help)->capture_default_str();
  }

  void add_model_keys() {
    for (const auto& k : kModelKeys) add(k, "", "model override (default: from --variant)");
  }

  KeyValues resolve() const {
    KeyValues file;
    if (!config_path_.empty()) file = read_config_file(config_path_);
    for (const auto& [k, v] : file.entries()) {
      if (!values_.count(k)) throw ConfigError("unknown key '" + k + "' in " + config_path_);
    }
    KeyValues out;
    for (const auto& k : order_) {
      if (opts_.at(k)->count() > 0) {
        out.set(k, values_.at(k));
      } else if (auto v = file.get(k)) {
        out.set(k, *v);
      } else {
        out.set(k, values_.at(k));
      }
    }
    return out;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> opts_;
  std::vector<std::string> order_;
};

// Fills empty model keys from the preset named by `variant`.
ModelConfig resolve_model(KeyValues& kv) {
  const std::string variant = kv.get_string("variant", "B");
  ModelConfig preset;
  try {
    preset = ModelConfig::preset(variant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  KeyValues defaults;
  write_model_config(preset, defaults);
  KeyValues given;
  for (const auto& k : kModelKeys) {
    const auto v = kv.get_string(k, "");
    if (v.empty()) {
      kv.set(k, *defaults.get(k));
    } else {
      given.set(k, v);
    }
  }
  ModelConfig cfg = read_model_config(given, preset);
  cfg.validate();
  return cfg;
}

void echo_config(const KeyValues& kv) {
  std::cout << "# resolved config\n" << kv.to_text() << std::flush;
}

fs::path require_dataset(const KeyValues& kv) {
  const std::string dir = kv.get_string("dataset", "");
  if (dir.empty()) throw UsageError("no dataset given (use --dataset or set RSTCA_DATA_DIR)");
  if (!fs::is_directory(dir)) throw UsageError("dataset directory '" + dir + "' does not exist");
  if (list_images(dir).empty()) throw UsageError("dataset directory '" + dir + "' contains no images");
  return dir;
}

Dataset load_training_set(const fs::path& dir) {
  LoadReport rep = load_dataset(dir);
  for (const auto& s : rep.skipped) std::cerr << "warning: skipped " << s << "\n";
  if (rep.samples.empty()) throw UsageError("no readable images in '" + dir.string() + "'");
  return std::move(rep.samples);
}

void check_against(const ModelConfig& requested, const Checkpoint& ck) {
  RstcaNet probe = RstcaNet::build(requested, 0);
  load_parameters(probe, ck.params);
  if (!(requested == ck.config)) {
    KeyValues a, b;
    write_model_config(requested, a);
    write_model_config(ck.config, b);
    for (const auto& [k, v] : a.entries()) {
      if (b.get(k) != v) {
        throw CheckpointMismatch("model setting '" + k + "' is " + v + ", checkpoint has " + *b.get(k));
      }
    }
  }
}

// ---------------------------------------------------------------- train

struct TrainCommand {
  CLI::App* app;
  std::unique_ptr<Settings> s;

  explicit TrainCommand(CLI::App& root) {
    app = root.add_subcommand("train", "train a network on random patches of a dataset");
    s = std::make_unique<Settings>(app);
    s->add("variant", "B", "preset: B, S, L or tiny");
    s->add("dataset", env_data_dir(), "training image directory (default: $RSTCA_DATA_DIR)");
    s->add("out", "run", "output directory for checkpoint.rstca, loss.csv and config.txt");
    s->add("iters", "1000", "total training iterations");
    s->add("seed", "0", "seed for initialization and patch sampling");
    s->add("batch", "16", "patches per iteration");
    s->add("patch", "64", "patch side in pixels (even)");
    s->add("augment", "true", "random rotations and horizontal flips");
    s->add("checkpoint_every", "0", "iterations between checkpoints (0: only at the end)");
    s->add("resume", "", "checkpoint to continue from");
    s->add("lr", "1e-4", "initial learning rate");
    s->add("lr_period", "", "halving period in iterations (default: from --variant)");
    s->add("weight_decay", "0", "L2 weight decay added to gradients");
    s->add("clip_norm", "0", "global gradient norm cap (0: off)");
    s->add_model_keys();
  }

  int operator()() const {
    KeyValues kv = s->resolve();
    const ModelConfig cfg = resolve_model(kv);
    if (kv.get_string("lr_period", "").empty()) {
      kv.set("lr_period", std::to_string(LrSchedule::for_variant(kv.get_string("variant", "B")).period));
    }
    echo_config(kv);

    TrainConfig tc;
    tc.iterations = kv.get_int("iters", 1000);
    tc.batch = kv.get_int("batch", 16);
    tc.patch = kv.get_int("patch", 64);
    tc.augment = kv.get_bool("augment", true);
    tc.checkpoint_every = kv.get_int("checkpoint_every", 0);
    tc.schedule = {kv.get_double("lr", 1e-4), kv.get_int("lr_period", 40000)};
    tc.clip_norm = kv.get_double("clip_norm", 0.0);
    if (tc.iterations < 0) throw UsageError("--iters must be >= 0");
    if (tc.schedule.period < 1) throw UsageError("--lr-period must be positive");
    const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    AdamConfig adam;
    adam.weight_decay = kv.get_double("weight_decay", 0.0);

    const Dataset data = load_training_set(require_dataset(kv));
    const fs::path out = kv.get_string("out", "run");
    fs::create_directories(out);
    tc.checkpoint_path = out / "checkpoint.rstca";
    {
      std::ofstream cfg_file(out / "config.txt");
      cfg_file << kv.to_text();
    }

    TrainState state = TrainState::init(cfg, seed, adam);
    const std::string resume = kv.get_string("resume", "");
    if (!resume.empty()) {
      const Checkpoint ck = read_checkpoint(resume);
      check_against(cfg, ck);
      state = load_train_state(resume);
      std::cout << "resumed from " << resume << " at iteration " << state.iteration << "\n";
    }

    const fs::path loss_path = out / "loss.csv";
    const bool append = !resume.empty() && fs::exists(loss_path);
    std::ofstream loss(loss_path, append ? std::ios::app : std::ios::trunc);
    if (!append) write_loss_header(loss);
    const std::int64_t every = std::max<std::int64_t>(1, tc.iterations / 10);
    std::cout << "training " << tc.iterations - state.iteration << " iterations, "
              << state.net.param_count() << " parameters\n";
    train(state, data, tc, [&](const TrainRecord& r) {
      write_loss_row(loss, r);
      loss.flush();
      if ((r.iteration + 1) % every == 0) {
        std::printf("iter %lld  lr %.3g  loss %.6f\n", static_cast<long long>(r.iteration + 1), r.lr,
                    static_cast<double>(r.loss));
        std::fflush(stdout);
      }
    });
    std::cout << "wrote " << tc.checkpoint_path.string() << " and " << loss_path.string() << "\n";
    return kOk;
  }
};

// ------------------------------------------------------------- demosaic

// RGGB sampling that also accepts odd sizes (the pattern is defined per pixel).
Tensor mosaic_any(const Tensor& rgb) {
  const auto h = rgb.dim(1), w = rgb.dim(2);
  Tensor m({1, h, w});
  auto s = rgb.data();
  auto d = m.mutable_data();
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) d[y * w + x] = s[(bayer_channel(y, x) * h + y) * w + x];
  }
  return m;
}

Demosaicer make_demosaicer(const KeyValues& kv, bool architecture_given, std::shared_ptr<RstcaNet>& keep) {
  const std::string baseline = kv.get_string("baseline", "");
  const std::string ckpt = kv.get_string("checkpoint", "");
  if (!baseline.empty() && !ckpt.empty()) throw UsageError("--checkpoint and --baseline are exclusive");
  if (!baseline.empty()) {
    if (baseline != "bilinear") throw UsageError("unknown baseline '" + baseline + "' (expected bilinear)");
    return [](const Tensor& m) { return bilinear_demosaic(m); };
  }
  if (ckpt.empty()) throw UsageError("one of --checkpoint or --baseline is required");
  const Checkpoint ck = read_checkpoint(ckpt);
  ModelConfig cfg = ck.config;
  if (architecture_given) {
    KeyValues arch = kv;
    cfg = resolve_model(arch);
    check_against(cfg, ck);
  }
  keep = std::make_shared<RstcaNet>(RstcaNet::build(cfg, 0));
  load_parameters(*keep, ck.params);
  const RstcaNet* net = keep.get();
  return [net](const Tensor& m) {
    const auto h = m.dim(1), w = m.dim(2);
    return reshape(net->infer(reshape(m, {1, 1, h, w})), {3, h, w});
  };
}

struct DemosaicCommand {
  CLI::App* app;
  std::unique_ptr<Settings> s;

  explicit DemosaicCommand(CLI::App& root) {
    app = root.add_subcommand("demosaic", "demosaic one image with a checkpoint or a baseline");
    s = std::make_unique<Settings>(app);
    s->add("checkpoint", "", "trained checkpoint");
    s->add("baseline", "", "classical method instead of a checkpoint: bilinear");
    s->add("input", "", "input image (RGB, mosaiced internally, unless --raw)");
    s->add("output", "", "output PNG");
    s->add("raw", "false", "input is a single-channel RGGB mosaic");
    s->add("variant", "", "expected architecture; checked against the checkpoint");
    s->add_model_keys();
  }

  int operator()() const {
    KeyValues kv = s->resolve();
    bool arch = !kv.get_string("variant", "").empty();
    for (const auto& k : kModelKeys) arch = arch || !kv.get_string(k, "").empty();
    if (arch && kv.get_string("variant", "").empty()) kv.set("variant", "B");
    const std::string input = kv.get_string("input", ""), output = kv.get_string("output", "");
    if (input.empty() || output.empty()) throw UsageError("--input and --output are required");
    if (!fs::exists(input)) throw UsageError("input '" + input + "' does not exist");
    std::shared_ptr<RstcaNet> keep;
    const Demosaicer method = make_demosaicer(kv, arch, keep);
    const Tensor mosaic = kv.get_bool("raw", false) ? read_gray(input) : mosaic_any(read_rgb(input));
    const Tensor rgb = method(mosaic);
    Tensor clamped = rgb.clone();
    for (auto& v : clamped.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
    write_image(output, clamped);
    std::cout << "wrote " << output << " (" << mosaic.dim(2) << "x" << mosaic.dim(1) << ")\n";
    return kOk;
  }
};

// ----------------------------------------------------------------- eval

struct EvalCommand {
  CLI::App* app;
  std::unique_ptr<Settings> s;

  explicit EvalCommand(CLI::App& root) {
    app = root.add_subcommand("eval", "score a checkpoint or baseline on a directory of images");
    s = std::make_unique<Settings>(app);
    s->add("checkpoint", "", "trained checkpoint");
    s->add("baseline", "", "classical method instead of a checkpoint: bilinear");
    s->add("dataset", env_data_dir(), "evaluation image directory (default: $RSTCA_DATA_DIR)");
    s->add("report", "report.csv", "CSV report path");
    s->add("crop", "0", "border pixels excluded from metrics");
    s->add("quantize", "false", "round outputs to 8 bit before scoring");
    s->add("self_test", "false", "score the ground truth against itself");
  }

  int operator()() const {
    KeyValues kv = s->resolve();
    echo_config(kv);
    const fs::path dir = require_dataset(kv);
    EvalOptions opt;
    opt.crop = kv.get_int("crop", 0);
    opt.quantize = kv.get_bool("quantize", false);
    opt.self_test = kv.get_bool("self_test", false);
    std::shared_ptr<RstcaNet> keep;
    Demosaicer method;
    std::string label = "ground-truth";
    if (!opt.self_test) {
      method = make_demosaicer(kv, false, keep);
      label = kv.get_string("baseline", "");
      if (label.empty()) label = fs::path(kv.get_string("checkpoint", "")).filename().string();
    }
    const MetricReport rep = evaluate_dataset(method, dir, opt, label);
    for (const auto& sk : rep.skipped) std::cerr << "warning: skipped " << sk << "\n";
    if (rep.rows.empty()) throw UsageError("no image of '" + dir.string() + "' could be evaluated");
    write_report_csv(fs::path(kv.get_string("report", "report.csv")), rep);
    std::cout << rep.method << " on " << rep.dataset << ": " << rep.rows.size() << " images, mean cPSNR "
              << format_metric(rep.mean_cpsnr) << " dB, mean SSIM " << format_metric(rep.mean_ssim) << "\n";
    return kOk;
  }
};

// --------------------------------------------------------------- ablate

struct AblationVariant {
  std::string name;
  ModelConfig cfg;
};

// Table III benchmark: two RSTCABs, C=64, four heads.
ModelConfig component_benchmark() {
  ModelConfig c = ModelConfig::variant_b();
  c.channels = 64;
  c.heads = 4;
  return c;
}

std::vector<AblationVariant> ablation_grid(const std::string& grid) {
  std::vector<AblationVariant> out;
  const ModelConfig bench = component_benchmark();
  auto with = [&](std::string name, auto&& edit, ModelConfig base) {
    edit(base);
    out.push_back({std::move(name), base});
  };
  if (grid == "ca") {
    with("RSTCANet-CA0", [](ModelConfig& c) { c.ca_mode = CaMode::kNone; }, bench);
    with("RSTCANet-CA1", [](ModelConfig& c) { c.ca_mode = CaMode::kSingle; }, bench);
    with("RSTCANet", [](ModelConfig&) {}, bench);
    with("RSTCANet-CA6", [](ModelConfig& c) { c.ca_mode = CaMode::kPerLayer; }, bench);
  } else if (grid == "ssc") {
    with("RSTCANet", [](ModelConfig&) {}, bench);
    with("RSTCANet-SSC", [](ModelConfig& c) { c.short_skip = true; }, bench);
  } else if (grid == "heads") {
    with("RSTCANet", [](ModelConfig&) {}, bench);
    with("RSTCANet-h2", [](ModelConfig& c) { c.heads = 2; }, bench);
  } else if (grid == "conv") {
    const ModelConfig b = ModelConfig::variant_b();
    with("RSTCANet-B", [](ModelConfig&) {}, b);
    with("RSTCANet-1", [](ModelConfig& c) { c.conv_in_dfe = 2; }, b);
    with("RSTCANet-2", [](ModelConfig& c) { c.conv_in_block = 2; }, b);
    with("RSTCANet-3", [](ModelConfig& c) { c.conv_in_block = 0; }, b);
  } else {
    throw UsageError("unknown grid '" + grid + "' (expected ca, ssc, conv or heads)");
  }
  return out;
}

struct AblateCommand {
  CLI::App* app;
  std::unique_ptr<Settings> s;

  explicit AblateCommand(CLI::App& root) {
    app = root.add_subcommand("ablate", "construct an ablation grid and compare sizes");
    s = std::make_unique<Settings>(app);
    s->add("grid", "ca", "ca, ssc, conv or heads");
    s->add("iters", "0", "short training iterations per variant (0: construct only)");
    s->add("dataset", env_data_dir(), "training images for --iters > 0 (default: $RSTCA_DATA_DIR)");
    s->add("seed", "0", "seed for every variant");
    s->add("batch", "16", "patches per iteration");
    s->add("patch", "64", "patch side in pixels");
    s->add("report", "ablation.csv", "comparison CSV path");
  }

  int operator()() const {
    KeyValues kv = s->resolve();
    echo_config(kv);
    const auto variants = ablation_grid(kv.get_string("grid", "ca"));
    const auto iters = kv.get_int("iters", 0);
    const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    Dataset data;
    if (iters > 0) data = load_training_set(require_dataset(kv));

    std::ofstream csv(kv.get_string("report", "ablation.csv"));
    csv << "variant,ca_mode,short_skip,heads,conv_in_block,conv_in_dfe,params,param_mb,state_dict_mib,final_loss\n";
    std::printf("%-14s %-9s %-5s %5s %5s %5s %10s %9s %9s\n", "variant", "ca_mode", "ssc", "heads", "convB",
                "convD", "params", "MB", "MiB(sd)");
    for (const auto& v : variants) {
      TrainState st = TrainState::init(v.cfg, seed);
      std::string final_loss = "";
      if (iters > 0) {
        TrainConfig tc;
        tc.iterations = iters;
        tc.batch = kv.get_int("batch", 16);
        tc.patch = kv.get_int("patch", 64);
        const auto log = train(st, data, tc);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(log.back().loss));
        final_loss = buf;
      }
      const auto params = st.net.param_count();
      const double mb = params * 4 / 1e6, mib = st.net.state_dict_bytes() / 1048576.0;
      char row[256];
      std::snprintf(row, sizeof row, "%s,%s,%s,%lld,%lld,%lld,%lld,%.4f,%.4f,%s\n", v.name.c_str(),
                    std::string(to_string(v.cfg.ca_mode)).c_str(), v.cfg.short_skip ? "true" : "false",
                    static_cast<long long>(v.cfg.heads), static_cast<long long>(v.cfg.conv_in_block),
                    static_cast<long long>(v.cfg.conv_in_dfe), static_cast<long long>(params), mb, mib,
                    final_loss.c_str());
      csv << row;
      std::printf("%-14s %-9s %-5s %5lld %5lld %5lld %10lld %9.4f %9.4f %s\n", v.name.c_str(),
                  std::string(to_string(v.cfg.ca_mode)).c_str(), v.cfg.short_skip ? "on" : "off",
                  static_cast<long long>(v.cfg.heads), static_cast<long long>(v.cfg.conv_in_block),
                  static_cast<long long>(v.cfg.conv_in_dfe), static_cast<long long>(params), mb, mib,
                  final_loss.c_str());
    }
    return kOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App root{"RSTCANet demosaicing: training, inference, evaluation and ablations", "rstca"};
  root.require_subcommand(1);
  TrainCommand train_cmd(root);
  DemosaicCommand demosaic_cmd(root);
  EvalCommand eval_cmd(root);
  AblateCommand ablate_cmd(root);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    root.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = root.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train_cmd.app->parsed()) return train_cmd();
    if (demosaic_cmd.app->parsed()) return demosaic_cmd();
    if (eval_cmd.app->parsed()) return eval_cmd();
    if (ablate_cmd.app->parsed()) return ablate_cmd();
  } catch (const CheckpointMismatch& e) {
    std::cerr << "error: checkpoint mismatch: " << e.what() << "\n";
    return kCheckpointMismatch;
  } catch (const NumericalFailure& e) {
    std::cerr << "error: " << e.what() << "; last checkpoint left untouched\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace rstca::cli
