#include "stofnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "stofnet/errors.hpp"
#include "stofnet/rng.hpp"

namespace stofnet {

namespace {

constexpr int kDatasetFormatVersion = 1;
constexpr int kIqFormatVersion = 1;

// seed streams (see rng.hpp): echoes of frame i draw from stream i,
// its additive noise from stream (1 << 32) + i
constexpr uint64_t kNoiseStream = 1ull << 32;

void validate(const SyntheticConfig& cfg) {
  if (cfg.n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (cfg.frame_length < 1) throw ConfigError("frame_length must be >= 1");
  if (cfg.echoes_min < 0 || cfg.echoes_max < cfg.echoes_min)
    throw ConfigError("need 0 <= echoes_min <= echoes_max");
  if (!(cfg.center_freq > 0.0 && cfg.center_freq < 0.5))
    throw ConfigError("center_freq must lie in (0, 0.5)");
  if (!(cfg.bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
  if (!(cfg.amp_min > 0.0 && cfg.amp_min <= cfg.amp_max && cfg.amp_max <= 1.0))
    throw ConfigError("amplitude range must satisfy 0 < amp_min <= amp_max <= 1");
  if (!(cfg.min_separation >= 1.0))
    throw ConfigError("min_separation must be >= 1 sample");
}

double pulse_sigma(const SyntheticConfig& cfg) {
  return std::sqrt(1.0 / (2.0 * pulse_envelope_alpha(cfg)));
}

int placement_margin(const SyntheticConfig& cfg) {
  return static_cast<int>(std::ceil(4.0 * pulse_sigma(cfg))) + 2;
}

void add_pulse(std::vector<float>& s, double pos, double amp, double phase,
               double alpha, double center_freq) {
  const int n = static_cast<int>(s.size());
  const int cut = static_cast<int>(std::ceil(6.0 * std::sqrt(1.0 / (2.0 * alpha))));
  const int lo = std::max(0, static_cast<int>(std::floor(pos)) - cut);
  const int hi = std::min(n - 1, static_cast<int>(std::ceil(pos)) + cut);
  for (int i = lo; i <= hi; ++i) {
    double t = i - pos;
    double v = amp * std::exp(-alpha * t * t) *
               std::cos(2.0 * M_PI * center_freq * t + phase);
    s[i] += static_cast<float>(v);
  }
}

}  // namespace

double pulse_envelope_alpha(const SyntheticConfig& cfg) {
  // -6 dB full fractional bandwidth of the Gaussian amplitude spectrum
  const double ref = std::pow(10.0, -6.0 / 20.0);
  double fb = M_PI * cfg.center_freq * cfg.bandwidth;
  return fb * fb / (-4.0 * std::log(ref));
}

std::vector<LabeledFrame> generate_synthetic(const SyntheticConfig& cfg) {
  validate(cfg);
  const int n = cfg.frame_length;
  const int margin = placement_margin(cfg);
  const double lo = margin, hi = n - margin;
  if (!(hi > lo))
    throw ConfigError("frame_length too short for the pulse width");
  if (cfg.echoes_max > 0 &&
      (cfg.echoes_max - 1) * cfg.min_separation >= (hi - lo))
    throw ConfigError("echo count and min_separation do not fit the frame");

  const double alpha = pulse_envelope_alpha(cfg);
  std::vector<LabeledFrame> out(cfg.n_frames);
  for (int fi = 0; fi < cfg.n_frames; ++fi) {
    Rng rng(split_seed(cfg.seed, static_cast<uint64_t>(fi)));
    int count = static_cast<int>(rng.uniform_int(cfg.echoes_min, cfg.echoes_max));

    std::vector<double> positions;
    int attempts = 0;
    while (static_cast<int>(positions.size()) < count) {
      if (++attempts > 10000 * (count + 1))
        throw ConfigError("echo placement failed; relax min_separation");
      double p = rng.uniform(lo, hi);
      bool ok = true;
      for (double q : positions)
        if (std::fabs(p - q) < cfg.min_separation) { ok = false; break; }
      if (ok) positions.push_back(p);
    }
    std::sort(positions.begin(), positions.end());

    LabeledFrame lf;
    lf.frame = Frame(n, 1, cfg.sample_rate_hz);
    for (double p : positions) {
      double amp = rng.uniform(cfg.amp_min, cfg.amp_max);
      double phase = cfg.random_phase ? rng.uniform(-M_PI, M_PI) : 0.0;
      add_pulse(lf.frame.samples, p, amp, phase, alpha, cfg.center_freq);
    }
    lf.truth_positions = std::move(positions);
    if (count > 0 && std::isfinite(cfg.snr_db)) {
      lf.frame = add_noise_snr(lf.frame, cfg.snr_db,
                               split_seed(cfg.seed, kNoiseStream + fi));
    }
    out[fi] = std::move(lf);
  }
  return out;
}

std::vector<float> synthetic_pulse_template(const SyntheticConfig& cfg) {
  const double alpha = pulse_envelope_alpha(cfg);
  const int half = static_cast<int>(std::ceil(4.0 * pulse_sigma(cfg)));
  std::vector<float> tpl(2 * half + 1, 0.f);
  for (int i = -half; i <= half; ++i) {
    tpl[i + half] = static_cast<float>(
        std::exp(-alpha * i * i) * std::cos(2.0 * M_PI * cfg.center_freq * i));
  }
  return tpl;
}

TargetMask make_target_mask(std::span<const double> labels, int n,
                            int upsample, double sigma) {
  if (n < 1) throw InvalidArgument("make_target_mask: n must be >= 1");
  if (upsample < 1)
    throw InvalidArgument("make_target_mask: upsample must be >= 1");
  const int m = n * upsample;

  TargetMask mask;
  if (labels.empty()) {
    mask.values.assign(m, 0.0);
    mask.lambda0 = 1.0;
    return mask;
  }

  std::vector<double> spikes(m, 0.0);
  for (double p : labels) {
    if (!(p >= 0.0 && p < n))
      throw InvalidArgument("make_target_mask: label outside [0, N)");
    auto idx = static_cast<long long>(std::floor(p * upsample + 0.5));
    if (idx >= m) idx = m - 1;  // labels in the top half-bin clamp to the grid
    if (spikes[idx] != 0.0)
      throw InvalidArgument(
          "make_target_mask: two labels round to the same upsampled index");
    spikes[idx] = 1.0;
  }

  auto smooth = convolve_same(spikes, gaussian_kernel(sigma, 7));
  double peak = *std::max_element(smooth.begin(), smooth.end());
  mask.lambda0 = 20.0 / peak;
  mask.values.resize(m);
  for (int i = 0; i < m; ++i) mask.values[i] = mask.lambda0 * smooth[i];
  return mask;
}

LabeledFrame random_crop_pad(const LabeledFrame& lf, uint64_t seed) {
  const int n = lf.frame.length();
  if (n % 4 != 0)
    throw InvalidArgument("random_crop_pad: N must be divisible by 4");
  const int keep = 3 * n / 4;
  Rng rng(seed);
  const int start = static_cast<int>(rng.uniform_int(0, n - keep));

  LabeledFrame out = lf;
  for (int c = 0; c < out.frame.channels; ++c) {
    float* ch = out.frame.channel(c);
    std::fill(ch, ch + start, 0.f);
    std::fill(ch + start + keep, ch + n, 0.f);
  }
  out.truth_positions.clear();
  for (double p : lf.truth_positions)
    if (p >= start && p < start + keep) out.truth_positions.push_back(p);
  return out;
}

void split_train_val(int n_frames, std::vector<int>& train_idx,
                     std::vector<int>& val_idx) {
  train_idx.clear();
  val_idx.clear();
  for (int i = 0; i < n_frames; ++i)
    (i % 10 == 9 ? val_idx : train_idx).push_back(i);
}

void to_json(nlohmann::json& j, const SyntheticConfig& cfg) {
  j = nlohmann::json{{"n_frames", cfg.n_frames},
                     {"frame_length", cfg.frame_length},
                     {"echoes_min", cfg.echoes_min},
                     {"echoes_max", cfg.echoes_max},
                     {"center_freq", cfg.center_freq},
                     {"bandwidth", cfg.bandwidth},
                     {"amp_min", cfg.amp_min},
                     {"amp_max", cfg.amp_max},
                     {"min_separation", cfg.min_separation},
                     {"random_phase", cfg.random_phase},
                     {"sample_rate_hz", cfg.sample_rate_hz},
                     {"seed", cfg.seed}};
  // +inf (noise disabled) is not a JSON number; encode as null
  if (std::isfinite(cfg.snr_db))
    j["snr_db"] = cfg.snr_db;
  else
    j["snr_db"] = nullptr;
}

void from_json(const nlohmann::json& j, SyntheticConfig& cfg) {
  j.at("n_frames").get_to(cfg.n_frames);
  j.at("frame_length").get_to(cfg.frame_length);
  j.at("echoes_min").get_to(cfg.echoes_min);
  j.at("echoes_max").get_to(cfg.echoes_max);
  j.at("center_freq").get_to(cfg.center_freq);
  j.at("bandwidth").get_to(cfg.bandwidth);
  j.at("amp_min").get_to(cfg.amp_min);
  j.at("amp_max").get_to(cfg.amp_max);
  j.at("min_separation").get_to(cfg.min_separation);
  j.at("random_phase").get_to(cfg.random_phase);
  j.at("sample_rate_hz").get_to(cfg.sample_rate_hz);
  j.at("seed").get_to(cfg.seed);
  if (j.at("snr_db").is_null())
    cfg.snr_db = std::numeric_limits<double>::infinity();
  else
    j.at("snr_db").get_to(cfg.snr_db);
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  if (dataset.frames.empty()) throw InvalidArgument("save_dataset: no frames");
  const int n = dataset.length();
  const int c = dataset.channels();
  for (const auto& lf : dataset.frames)
    if (lf.frame.length() != n || lf.frame.channels != c)
      throw ShapeError("save_dataset: frames must share N and C");

  std::filesystem::create_directories(dir);

  nlohmann::json manifest{{"format_version", kDatasetFormatVersion},
                          {"n_frames", dataset.frames.size()},
                          {"N", n},
                          {"C", c},
                          {"R", dataset.meta.upsample},
                          {"sample_rate_hz", dataset.meta.sample_rate_hz},
                          {"seed", dataset.meta.seed}};
  manifest["generator"] =
      dataset.meta.has_generator ? nlohmann::json(dataset.meta.generator)
                                 : nlohmann::json(nullptr);
  detail::write_json(dir / "manifest.json", manifest);

  std::vector<float> blob;
  blob.reserve(dataset.frames.size() * static_cast<size_t>(n) * c);
  for (const auto& lf : dataset.frames)
    blob.insert(blob.end(), lf.frame.samples.begin(), lf.frame.samples.end());
  detail::write_bytes(dir / "frames.f32", blob.data(),
                      blob.size() * sizeof(float));

  nlohmann::json labels = nlohmann::json::array();
  for (const auto& lf : dataset.frames) labels.push_back(lf.truth_positions);
  detail::write_json(dir / "labels.json", labels);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  auto manifest = detail::read_json(dir / "manifest.json");
  int version = manifest.at("format_version").get<int>();
  if (version != kDatasetFormatVersion)
    throw FormatError("unsupported dataset format_version " +
                      std::to_string(version));
  const auto n_frames = manifest.at("n_frames").get<size_t>();
  const int n = manifest.at("N").get<int>();
  const int c = manifest.at("C").get<int>();

  Dataset ds;
  ds.meta.upsample = manifest.at("R").get<int>();
  ds.meta.sample_rate_hz = manifest.at("sample_rate_hz").get<double>();
  ds.meta.seed = manifest.at("seed").get<uint64_t>();
  if (!manifest.at("generator").is_null()) {
    ds.meta.has_generator = true;
    manifest.at("generator").get_to(ds.meta.generator);
  }

  auto blob = detail::read_f32(dir / "frames.f32",
                               n_frames * static_cast<size_t>(n) * c);
  auto labels = detail::read_json(dir / "labels.json");
  if (!labels.is_array() || labels.size() != n_frames)
    throw FormatError("labels.json does not match manifest n_frames");

  ds.frames.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    auto& lf = ds.frames[i];
    lf.frame = Frame(n, c, ds.meta.sample_rate_hz);
    const float* src = blob.data() + i * static_cast<size_t>(n) * c;
    std::copy(src, src + static_cast<size_t>(n) * c, lf.frame.samples.begin());
    labels[i].get_to(lf.truth_positions);
  }
  return ds;
}

Dataset load_iq_dataset(const std::filesystem::path& dir, int interp_factor,
                        ChannelMode mode, bool* missing_truth) {
  if (interp_factor < 1)
    throw InvalidArgument("load_iq_dataset: interp_factor must be >= 1");
  auto manifest = detail::read_json(dir / "iq_manifest.json");
  int version = manifest.at("format_version").get<int>();
  if (version != kIqFormatVersion)
    throw FormatError("unsupported iq format_version " +
                      std::to_string(version));
  const auto n_frames = manifest.at("n_frames").get<size_t>();
  const int rec = manifest.at("record_length").get<int>();
  const double fs = manifest.value("sample_rate_hz", 1.0);

  auto blob =
      detail::read_f32(dir / "iq.f32", n_frames * 2 * static_cast<size_t>(rec));

  nlohmann::json truth = nlohmann::json::array();
  bool have_truth = std::filesystem::exists(dir / "truth.json");
  if (have_truth) {
    truth = detail::read_json(dir / "truth.json");
    if (!truth.is_array() || truth.size() != n_frames)
      throw FormatError("truth.json does not match manifest n_frames");
  }
  if (missing_truth) *missing_truth = !have_truth;

  Dataset ds;
  ds.meta.sample_rate_hz = fs * interp_factor;
  const int n_out = rec * interp_factor;

  ds.frames.resize(n_frames);
  for (size_t fi = 0; fi < n_frames; ++fi) {
    const float* i_rec = blob.data() + fi * 2 * static_cast<size_t>(rec);
    const float* q_rec = i_rec + rec;
    auto i_up = resample_interp({i_rec, static_cast<size_t>(rec)}, interp_factor);
    auto q_up = resample_interp({q_rec, static_cast<size_t>(rec)}, interp_factor);

    auto& lf = ds.frames[fi];
    if (mode == ChannelMode::iq) {
      lf.frame = Frame(n_out, 2, ds.meta.sample_rate_hz);
      std::copy(i_up.begin(), i_up.end(), lf.frame.channel(0));
      std::copy(q_up.begin(), q_up.end(), lf.frame.channel(1));
    } else {
      lf.frame = Frame(n_out, 1, ds.meta.sample_rate_hz);
      for (int i = 0; i < n_out; ++i)
        lf.frame.samples[i] = std::hypot(i_up[i], q_up[i]);
    }
    if (have_truth) {
      truth[fi].get_to(lf.truth_positions);
      for (double& p : lf.truth_positions) p *= interp_factor;
      std::sort(lf.truth_positions.begin(), lf.truth_positions.end());
    }
  }
  return ds;
}

}  // namespace stofnet
