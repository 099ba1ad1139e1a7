// Command-line front end: dataset generation, training, inference,
// benchmarking and plot-data emission. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stofnet/baselines.hpp"
#include "stofnet/dataset.hpp"
#include "stofnet/detection.hpp"
#include "stofnet/errors.hpp"
#include "stofnet/rng.hpp"
#include "stofnet/evaluation.hpp"
#include "stofnet/model.hpp"
#include "stofnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

const std::vector<std::string> kBaselineTags = {"gradient", "threshold",
                                                "xcorr"};

struct IqOptions {
  int factor = 1;
  std::string mode = "magnitude";
};

void add_iq_options(CLI::App* cmd, IqOptions& opts) {
  cmd->add_option("--iq-factor", opts.factor,
                  "Interpolation factor when reading an IQ adapter directory")
      ->capture_default_str();
  cmd->add_option("--iq-mode", opts.mode, "IQ channel handling: iq|magnitude")
      ->check(CLI::IsMember({"iq", "magnitude"}))
      ->capture_default_str();
}

// Datasets come as the native container (manifest.json) or as an IQ
// adapter directory (iq_manifest.json).
stofnet::Dataset load_any_dataset(const std::string& path,
                                  const IqOptions& iq) {
  if (fs::exists(fs::path(path) / "iq_manifest.json")) {
    bool missing_truth = false;
    auto ds = stofnet::load_iq_dataset(
        path, iq.factor,
        iq.mode == "iq" ? stofnet::ChannelMode::iq
                        : stofnet::ChannelMode::magnitude,
        &missing_truth);
    if (missing_truth)
      std::cerr << "warning: " << path
                << " has no truth.json; frames loaded without labels\n";
    return ds;
  }
  return stofnet::load_dataset(path);
}

struct GenerateArgs {
  std::string out;
  stofnet::SyntheticConfig cfg;
  int upsample = 4;
  bool force = false;
  bool no_noise = false;
};

int cmd_generate(const GenerateArgs& args) {
  if (args.cfg.frame_length % 4 != 0) {
    std::cerr << "error: --length must be divisible by 4 (cropping and the "
                 "default contraction factor require it)\n";
    return kExitUsage;
  }
  fs::path dir(args.out);
  if (fs::exists(dir) && !fs::is_empty(dir) && !args.force) {
    std::cerr << "error: " << dir.string()
              << " exists and is not empty (use --force to overwrite)\n";
    return kExitRuntime;
  }

  stofnet::SyntheticConfig cfg = args.cfg;
  if (args.no_noise) cfg.snr_db = std::numeric_limits<double>::infinity();

  stofnet::Dataset ds;
  ds.frames = stofnet::generate_synthetic(cfg);
  ds.meta.upsample = args.upsample;
  ds.meta.seed = cfg.seed;
  ds.meta.sample_rate_hz = cfg.sample_rate_hz;
  ds.meta.has_generator = true;
  ds.meta.generator = cfg;
  stofnet::save_dataset(dir, ds);

  std::cout << "wrote " << ds.frames.size() << " frames (N=" << ds.length()
            << ", C=" << ds.channels() << ", R=" << ds.meta.upsample
            << ", seed=" << cfg.seed << ") to " << dir.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  IqOptions iq;
  stofnet::TrainConfig cfg;
  int features = 64;
  int contraction = 4;
  int upsample = 0;  // 0: use the dataset manifest R
};

int cmd_train(const TrainArgs& args) {
  auto ds = load_any_dataset(args.data, args.iq);

  stofnet::ModelConfig mc;
  mc.features = args.features;
  mc.contraction = args.contraction;
  mc.upsample = args.upsample > 0 ? args.upsample : ds.meta.upsample;
  mc.in_channels = ds.channels();
  if (ds.length() % mc.contraction != 0) {
    std::cerr << "error: dataset N=" << ds.length()
              << " is not divisible by the contraction factor "
              << mc.contraction << "\n";
    return kExitUsage;
  }

  std::vector<int> train_idx, val_idx;
  stofnet::split_train_val(static_cast<int>(ds.frames.size()), train_idx,
                           val_idx);
  std::vector<stofnet::LabeledFrame> train_set, val_set;
  for (int i : train_idx) train_set.push_back(ds.frames[i]);
  for (int i : val_idx) val_set.push_back(ds.frames[i]);

  auto net = stofnet::make_network<float>(
      mc, stofnet::split_seed(args.cfg.seed, 0xA11));
  std::cout << "model: " << stofnet::count_parameters(net) << " parameters, "
            << train_set.size() << " train / " << val_set.size()
            << " val frames\n";

  auto result = stofnet::train(net, train_set, val_set, args.cfg);
  for (size_t e = 0; e < result.history.size(); ++e) {
    const auto& h = result.history[e];
    std::printf("epoch %3zu  train %.4f  val %.4f  lr %.2e\n", e + 1,
                h.train_loss, h.val_loss, h.lr);
  }

  fs::create_directories(args.out);
  stofnet::save_model(result.net, args.out);
  json hist = json::array();
  for (const auto& h : result.history)
    hist.push_back(json{{"train_loss", h.train_loss},
                        {"val_loss", h.val_loss},
                        {"lr", h.lr}});
  std::ofstream hf(fs::path(args.out) / "history.json");
  hf << hist.dump(2) << "\n";
  std::cout << "saved model and history to " << args.out << "\n";
  return kExitOk;
}

// Resolves --model into a runnable detector. Baseline tags need dataset
// context (the xcorr template comes from the generator echo in the
// manifest); anything else is treated as a model directory.
std::optional<stofnet::EchoDetector> resolve_model(
    const std::string& tag, const stofnet::Dataset& ds, double rel_threshold,
    stofnet::DetectMode mode, double threshold, int window,
    std::string* error) {
  if (tag == "gradient") return stofnet::make_gradient_detector(rel_threshold);
  if (tag == "threshold")
    return stofnet::make_threshold_detector(rel_threshold);
  if (tag == "xcorr") {
    if (!ds.meta.has_generator) {
      *error = "xcorr needs the generator config echo in the dataset manifest";
      return std::nullopt;
    }
    return stofnet::make_xcorr_detector(
        stofnet::synthetic_pulse_template(ds.meta.generator));
  }
  if (!fs::exists(fs::path(tag) / "model.json")) {
    *error = "unknown model '" + tag +
             "' (known tags: gradient, threshold, xcorr, or a model directory)";
    return std::nullopt;
  }
  auto net = stofnet::load_model(tag);
  return stofnet::make_network_detector(net, mode, threshold, window);
}

struct InferArgs {
  std::string model;
  std::string input;
  IqOptions iq;
  std::string mode = "single";
  double tau = 1.0;
  std::string threshold = "auto";
  std::string val_data;
  std::string out;
  int window = 7;
  double rel_threshold = 0.5;
};

int cmd_infer(const InferArgs& args) {
  auto ds = load_any_dataset(args.input, args.iq);
  const bool is_baseline =
      std::find(kBaselineTags.begin(), kBaselineTags.end(), args.model) !=
      kBaselineTags.end();
  auto mode = args.mode == "multi" ? stofnet::DetectMode::multi
                                   : stofnet::DetectMode::single;

  double threshold = 0.0;
  if (!is_baseline && mode == stofnet::DetectMode::multi) {
    if (args.threshold == "auto") {
      if (args.val_data.empty()) {
        std::cerr << "error: multi mode needs --threshold <value> or "
                     "--val-data for the g-means sweep\n";
        return kExitUsage;
      }
      auto val = load_any_dataset(args.val_data, args.iq);
      auto net = stofnet::load_model(args.model);
      threshold =
          stofnet::auto_threshold(net, val.frames, args.tau, args.window);
      std::cerr << "g-means threshold: " << threshold << "\n";
    } else {
      threshold = std::stod(args.threshold);
    }
  }

  std::string error;
  auto detector = resolve_model(args.model, ds, args.rel_threshold, mode,
                                threshold, args.window, &error);
  if (!detector) {
    std::cerr << "error: " << error << "\n";
    return kExitUsage;
  }

  json out = json::array();
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    auto f = stofnet::normalize_amplitude(ds.frames[i].frame);
    for (const auto& d : detector->detect(f))
      out.push_back(json{{"frame_index", i},
                         {"position", d.position},
                         {"confidence", d.confidence}});
  }
  if (args.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream f(args.out);
    f << out.dump(2) << "\n";
  }
  return kExitOk;
}

struct BenchArgs {
  std::string models;
  std::string data;
  std::string val_data;
  IqOptions iq;
  std::string format = "csv";
  std::string threshold = "auto";
  std::string out;
  double tau = 1.0;
  int window = 7;
  double rel_threshold = 0.5;
};

int cmd_bench(const BenchArgs& args) {
  auto ds = load_any_dataset(args.data, args.iq);

  std::vector<std::string> tags;
  for (size_t pos = 0; pos < args.models.size();) {
    auto comma = args.models.find(',', pos);
    if (comma == std::string::npos) comma = args.models.size();
    if (comma > pos) tags.push_back(args.models.substr(pos, comma - pos));
    pos = comma + 1;
  }
  if (tags.empty()) {
    std::cerr << "error: --models is empty\n";
    return kExitUsage;
  }

  std::vector<stofnet::EchoDetector> detectors;
  for (const auto& tag : tags) {
    double threshold = 0.0;
    const bool is_baseline =
        std::find(kBaselineTags.begin(), kBaselineTags.end(), tag) !=
        kBaselineTags.end();
    if (!is_baseline && fs::exists(fs::path(tag) / "model.json")) {
      if (args.threshold == "auto") {
        auto net = stofnet::load_model(tag);
        std::vector<stofnet::LabeledFrame> val_storage;
        const auto* val_frames = &ds.frames;
        if (!args.val_data.empty()) {
          val_storage = load_any_dataset(args.val_data, args.iq).frames;
          val_frames = &val_storage;
        }
        threshold =
            stofnet::auto_threshold(net, *val_frames, args.tau, args.window);
      } else {
        threshold = std::stod(args.threshold);
      }
    }
    std::string error;
    auto det =
        resolve_model(tag, ds, args.rel_threshold, stofnet::DetectMode::multi,
                      threshold, args.window, &error);
    if (!det) {
      std::cerr << "error: " << error << "\n";
      return kExitUsage;
    }
    detectors.push_back(std::move(*det));
  }

  auto report = stofnet::benchmark(detectors, ds, args.tau);

  // console table
  for (const auto& row : report.rows) {
    if (!row.error.empty()) {
      std::fprintf(stderr, "%-12s failed: %s\n", row.model.c_str(),
                   row.error.c_str());
      continue;
    }
    std::fprintf(stderr, "%-12s RMSE %s  Jaccard %6.2f%%  weights %lld  %.3f ms\n",
                 row.model.c_str(),
                 row.rmse_mean
                     ? stofnet::format_rmse(*row.rmse_mean, *row.rmse_std).c_str()
                     : "n/a",
                 row.jaccard_percent.value_or(0.0), row.weights, row.time_ms);
  }

  std::string payload = args.format == "json"
                            ? stofnet::report_json(report).dump(2) + "\n"
                            : stofnet::report_csv(report);
  if (args.out.empty()) {
    std::cout << payload;
  } else {
    std::ofstream f(args.out);
    f << payload;
  }
  return kExitOk;
}

struct PlotArgs {
  std::string data;
  IqOptions iq;
  std::string detections;
  std::string model;
  std::string out;
  int frame = 0;
};

int cmd_plot(const PlotArgs& args) {
  auto ds = load_any_dataset(args.data, args.iq);
  if (args.frame < 0 || args.frame >= static_cast<int>(ds.frames.size())) {
    std::cerr << "error: --frame " << args.frame << " out of range [0, "
              << ds.frames.size() << ")\n";
    return kExitUsage;
  }
  const auto& lf = ds.frames[args.frame];
  const std::string prefix = args.out;

  {
    std::ofstream f(prefix + "_signal.csv");
    f << "sample";
    for (int c = 0; c < lf.frame.channels; ++c) f << ",ch" << c;
    f << "\n";
    for (int i = 0; i < lf.frame.length(); ++i) {
      f << i;
      for (int c = 0; c < lf.frame.channels; ++c)
        f << "," << lf.frame.channel(c)[i];
      f << "\n";
    }
  }
  {
    std::ofstream f(prefix + "_truth.csv");
    f << "position\n";
    for (double p : lf.truth_positions) f << p << "\n";
  }
  if (!args.model.empty()) {
    auto net = stofnet::load_model(args.model);
    auto frame = stofnet::normalize_amplitude(lf.frame);
    auto scores = stofnet::forward(net, frame);
    std::ofstream f(prefix + "_scores.csv");
    f << "upsampled_index,position,score\n";
    for (size_t i = 0; i < scores.size(); ++i)
      f << i << "," << static_cast<double>(i) / net.config.upsample << ","
        << scores[i] << "\n";
  }
  if (!args.detections.empty()) {
    std::ifstream df(args.detections);
    if (!df) {
      std::cerr << "error: cannot open " << args.detections << "\n";
      return kExitRuntime;
    }
    json dets = json::parse(df);
    std::ofstream f(prefix + "_detections.csv");
    f << "position,confidence\n";
    for (const auto& d : dets)
      if (d.at("frame_index").get<int>() == args.frame)
        f << d.at("position").get<double>() << ","
          << d.at("confidence").get<double>() << "\n";
  }
  std::cout << "wrote plot series with prefix " << prefix << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"1-D time-of-flight echo localization toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Create a synthetic pulse-echo dataset");
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--frames", gen.cfg.n_frames, "Number of frames")
      ->capture_default_str();
  g->add_option("--length", gen.cfg.frame_length, "Samples per frame")
      ->capture_default_str();
  g->add_option("--echoes-min", gen.cfg.echoes_min, "Minimum echoes per frame")
      ->capture_default_str();
  g->add_option("--echoes-max", gen.cfg.echoes_max, "Maximum echoes per frame")
      ->capture_default_str();
  g->add_option("--snr", gen.cfg.snr_db, "Signal-to-noise ratio in dB")
      ->capture_default_str();
  g->add_flag("--no-noise", gen.no_noise, "Disable additive noise");
  g->add_option("--seed", gen.cfg.seed, "Master seed")->capture_default_str();
  g->add_option("--center-freq", gen.cfg.center_freq,
                "Pulse center frequency (fraction of fs)")
      ->capture_default_str();
  g->add_option("--bandwidth", gen.cfg.bandwidth,
                "-6 dB fractional bandwidth")
      ->capture_default_str();
  g->add_option("--amp-min", gen.cfg.amp_min, "Minimum echo amplitude")
      ->capture_default_str();
  g->add_option("--amp-max", gen.cfg.amp_max, "Maximum echo amplitude")
      ->capture_default_str();
  g->add_option("--min-sep", gen.cfg.min_separation,
                "Minimum echo separation (samples)")
      ->capture_default_str();
  g->add_option("--upsample", gen.upsample,
                "Target-grid factor R recorded in the manifest")
      ->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a detection model");
  t->add_option("--data", tr.data, "Training dataset directory")->required();
  t->add_option("--out", tr.out, "Output model directory")->required();
  t->add_option("--epochs", tr.cfg.max_epochs, "Maximum epochs")
      ->capture_default_str();
  t->add_option("--batch", tr.cfg.batch_size, "Batch size")
      ->capture_default_str();
  t->add_option("--lr", tr.cfg.lr_start, "Start learning rate")
      ->capture_default_str();
  t->add_option("--lambda1", tr.cfg.lambda1, "L1 score regularization")
      ->capture_default_str();
  t->add_option("--weight-decay", tr.cfg.weight_decay, "AdamW weight decay")
      ->capture_default_str();
  t->add_option("--snr", tr.cfg.noise_snr_db,
                "Training noise augmentation SNR (dB)")
      ->capture_default_str();
  t->add_option("--sigma", tr.cfg.sigma, "Target mask smoothing sigma")
      ->capture_default_str();
  t->add_option("--patience", tr.cfg.early_stop_patience,
                "Early stopping patience")
      ->capture_default_str();
  t->add_option("--delta", tr.cfg.early_stop_delta, "Early stopping delta")
      ->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Training seed")->capture_default_str();
  t->add_option("--features", tr.features, "Feature channels F")
      ->capture_default_str();
  t->add_option("--contraction", tr.contraction, "Context contraction S")
      ->capture_default_str();
  t->add_option("--upsample", tr.upsample,
                "Upsampling factor R (0: dataset manifest value)")
      ->capture_default_str();
  add_iq_options(t, tr.iq);

  InferArgs in;
  auto* i = app.add_subcommand("infer", "Run a model over a dataset");
  i->add_option("--model", in.model,
                "Model directory or baseline tag (gradient|threshold|xcorr)")
      ->required();
  i->add_option("--input", in.input, "Input dataset directory")->required();
  i->add_option("--mode", in.mode, "single|multi")
      ->check(CLI::IsMember({"single", "multi"}))
      ->capture_default_str();
  i->add_option("--threshold", in.threshold, "NMS threshold or 'auto'")
      ->capture_default_str();
  i->add_option("--val-data", in.val_data,
                "Labeled dataset for the g-means threshold sweep");
  i->add_option("--window", in.window, "NMS window (upsampled samples)")
      ->capture_default_str();
  i->add_option("--tau", in.tau, "Match tolerance for the g-means sweep")
      ->capture_default_str();
  i->add_option("--rel-threshold", in.rel_threshold,
                "Relative threshold for baseline detectors")
      ->capture_default_str();
  i->add_option("--out", in.out, "Detections JSON path (default: stdout)");
  add_iq_options(i, in.iq);

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Benchmark models on a labeled dataset");
  b->add_option("--models", be.models, "Comma-separated tags/model dirs")
      ->required();
  b->add_option("--data", be.data, "Labeled dataset directory")->required();
  b->add_option("--tau", be.tau, "Match tolerance in samples")
      ->capture_default_str();
  b->add_option("--format", be.format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  b->add_option("--threshold", be.threshold, "Network NMS threshold or 'auto'")
      ->capture_default_str();
  b->add_option("--val-data", be.val_data,
                "Dataset for the g-means sweep (default: --data)");
  b->add_option("--window", be.window, "NMS window")->capture_default_str();
  b->add_option("--rel-threshold", be.rel_threshold,
                "Relative threshold for baseline detectors")
      ->capture_default_str();
  b->add_option("--out", be.out, "Report path (default: stdout)");
  add_iq_options(b, be.iq);

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Emit CSV series for one frame");
  p->add_option("--data", pl.data, "Dataset directory")->required();
  p->add_option("--frame", pl.frame, "Frame index")->capture_default_str();
  p->add_option("--out", pl.out, "Output file prefix")->required();
  p->add_option("--model", pl.model, "Model directory for score series");
  p->add_option("--detections", pl.detections, "Detections JSON to mark");
  add_iq_options(p, pl.iq);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (i->parsed()) return cmd_infer(in);
    if (b->parsed()) return cmd_bench(be);
    if (p->parsed()) return cmd_plot(pl);
  } catch (const stofnet::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const stofnet::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
