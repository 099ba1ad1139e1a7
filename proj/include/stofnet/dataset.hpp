#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stofnet/signal.hpp"

namespace stofnet {

// A frame with ground-truth arrival positions in fractional input-sample
// units, sorted ascending, each in [0, N).
struct LabeledFrame {
  Frame frame;
  std::vector<double> truth_positions;
};

// Regression target on the N*R grid: a binary spike mask smoothed with a
// Gaussian kernel and amplified so the tallest spike reaches 20.
struct TargetMask {
  std::vector<double> values;
  double lambda0 = 1.0;
};

// Synthetic pulse-echo generator settings. Pulses are Gaussian-modulated
// cosines; center_freq and bandwidth are fractions of the sample rate
// (bandwidth is the -6 dB full fractional bandwidth of the pulse spectrum).
struct SyntheticConfig {
  int n_frames = 100;
  int frame_length = 1024;
  int echoes_min = 1;
  int echoes_max = 3;
  double center_freq = 0.125;
  double bandwidth = 0.5;
  double amp_min = 0.3;
  double amp_max = 1.0;
  double min_separation = 32.0;  // samples
  double snr_db = 30.0;          // +inf disables noise
  bool random_phase = true;      // per-echo carrier phase in [-pi, pi)
  double sample_rate_hz = 1.0e6;
  uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const SyntheticConfig& cfg);
void from_json(const nlohmann::json& j, SyntheticConfig& cfg);

// Deterministic per config.seed; frame i uses streams split_seed(seed, i)
// for echo placement and split_seed(seed, 1<<32 | i) for noise.
std::vector<LabeledFrame> generate_synthetic(const SyntheticConfig& cfg);

// The canonical zero-phase unit-amplitude pulse of a generator config,
// centered in an odd-length array. Used as the matched-filter template.
std::vector<float> synthetic_pulse_template(const SyntheticConfig& cfg);

// Gaussian envelope decay exponent alpha with envelope exp(-alpha * t^2),
// t in samples. Shared by the generator and the template builder.
double pulse_envelope_alpha(const SyntheticConfig& cfg);

// Builds the length n*upsample target: spikes at round(p * upsample),
// smoothed with gaussian_kernel(sigma, 7), scaled by lambda0 = 20 / peak.
// Empty labels give an all-zero mask with lambda0 = 1. Two labels rounding
// to the same upsampled index raise InvalidArgument.
TargetMask make_target_mask(std::span<const double> labels, int n,
                            int upsample, double sigma);

// Keeps a uniformly placed contiguous window of 3N/4 samples, zeroing the
// rest in place (absolute label coordinates are preserved); labels outside
// the window are dropped. Requires N divisible by 4.
LabeledFrame random_crop_pad(const LabeledFrame& lf, uint64_t seed);

// Deterministic 90/10 train/validation split by frame index: index i goes
// to validation iff i % 10 == 9.
void split_train_val(int n_frames, std::vector<int>& train_idx,
                     std::vector<int>& val_idx);

struct DatasetMeta {
  int upsample = 4;  // R: target-grid factor recorded with the data
  uint64_t seed = 0;
  double sample_rate_hz = 1.0;
  bool has_generator = false;
  SyntheticConfig generator;  // config echo, valid when has_generator
};

struct Dataset {
  std::vector<LabeledFrame> frames;
  DatasetMeta meta;

  int length() const { return frames.empty() ? 0 : frames[0].frame.length(); }
  int channels() const { return frames.empty() ? 1 : frames[0].frame.channels; }
};

// Directory container: manifest.json + frames.f32 (little-endian float32,
// [frame][channel][sample]) + labels.json. Lossless round-trip.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

enum class ChannelMode { iq, magnitude };

// Adapter for externally captured I/Q records: directory with
// iq_manifest.json, iq.f32 (per frame: record_length I samples then
// record_length Q samples, little-endian float32) and an optional
// truth.json sidecar with native-grid positions. Channels are interpolated
// by interp_factor and truth positions rescaled accordingly. A missing
// sidecar loads empty labels and sets *missing_truth.
Dataset load_iq_dataset(const std::filesystem::path& dir, int interp_factor,
                        ChannelMode mode, bool* missing_truth = nullptr);

}  // namespace stofnet
