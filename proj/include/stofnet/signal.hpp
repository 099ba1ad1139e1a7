#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace stofnet {

// One captured 1-D record: C channels of N samples, channel-major storage.
// For C=2 the channels are interpreted as (I, Q).
struct Frame {
  std::vector<float> samples;  // [channel][sample], size = channels * N
  int channels = 1;
  double sample_rate_hz = 1.0;

  Frame() = default;
  Frame(int n, int c, double fs = 1.0)
      : samples(static_cast<size_t>(n) * c, 0.f),
        channels(c),
        sample_rate_hz(fs) {}

  int length() const {
    return channels > 0 ? static_cast<int>(samples.size()) / channels : 0;
  }
  float* channel(int c) { return samples.data() + static_cast<size_t>(c) * length(); }
  const float* channel(int c) const {
    return samples.data() + static_cast<size_t>(c) * length();
  }
};

// Peak normalization to [-1, 1]. An all-zero frame passes through unchanged
// and sets *all_zero when given. Non-finite samples raise InvalidArgument.
Frame normalize_amplitude(const Frame& frame, bool* all_zero = nullptr);

// Additive white Gaussian noise with RMS = signal_rms * 10^(-snr_db/20),
// deterministic per seed. snr_db = +inf disables the noise. A zero-power
// frame has no defined SNR and raises UndefinedValue.
Frame add_noise_snr(const Frame& frame, double snr_db, uint64_t seed);

// Band-limited integer-factor interpolation: polyphase windowed sinc with
// 8 taps per phase, Hann window, each phase normalized to unit DC gain.
// factor = 1 is the identity.
std::vector<float> resample_interp(std::span<const float> signal, int factor);

// Symmetric unit-sum smoothing kernel.
struct Kernel1D {
  std::vector<double> taps;  // odd length
  double sigma = 0.0;
  int length() const { return static_cast<int>(taps.size()); }
};

Kernel1D gaussian_kernel(double sigma, int length);

// Same-length convolution with zero-padded borders.
std::vector<double> convolve_same(std::span<const double> signal,
                                  const Kernel1D& kernel);

// Instantaneous amplitude. C=2 reads (I, Q) per sample; C=1 takes the
// magnitude of the analytic signal.
std::vector<float> envelope(const Frame& frame);

}  // namespace stofnet
