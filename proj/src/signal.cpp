#include "stofnet/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <unsupported/Eigen/FFT>

#include "stofnet/errors.hpp"
#include "stofnet/rng.hpp"

namespace stofnet {

Frame normalize_amplitude(const Frame& frame, bool* all_zero) {
  float max_abs = 0.f;
  for (float v : frame.samples) {
    if (!std::isfinite(v))
      throw InvalidArgument("normalize_amplitude: non-finite sample");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  if (all_zero) *all_zero = (max_abs == 0.f);
  Frame out = frame;
  if (max_abs > 0.f) {
    for (float& v : out.samples) v /= max_abs;
  }
  return out;
}

Frame add_noise_snr(const Frame& frame, double snr_db, uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return frame;
  double power = 0.0;
  for (float v : frame.samples) power += static_cast<double>(v) * v;
  if (!(power > 0.0))
    throw UndefinedValue("add_noise_snr: zero-power frame has no defined SNR");
  double rms = std::sqrt(power / static_cast<double>(frame.samples.size()));
  double noise_rms = rms * std::pow(10.0, -snr_db / 20.0);
  Rng rng(seed);
  Frame out = frame;
  for (float& v : out.samples)
    v = static_cast<float>(v + noise_rms * rng.normal());
  return out;
}

std::vector<float> resample_interp(std::span<const float> signal, int factor) {
  if (factor < 1)
    throw InvalidArgument("resample_interp: factor must be >= 1");
  if (factor == 1) return {signal.begin(), signal.end()};

  constexpr int kTapsPerPhase = 8;
  constexpr int kLeft = kTapsPerPhase / 2 - 1;  // taps span offsets -3..4
  constexpr double kHalfWidth = kTapsPerPhase / 2.0;

  // Per-phase windowed-sinc taps, unit DC gain per phase. Phase 0 reduces
  // to the identity, so original samples pass through exactly.
  std::vector<double> taps(static_cast<size_t>(factor) * kTapsPerPhase);
  for (int j = 0; j < factor; ++j) {
    double frac = static_cast<double>(j) / factor;
    double sum = 0.0;
    for (int t = 0; t < kTapsPerPhase; ++t) {
      double u = (t - kLeft) - frac;
      double sinc = u == 0.0 ? 1.0 : std::sin(M_PI * u) / (M_PI * u);
      double win = 0.5 * (1.0 + std::cos(M_PI * u / kHalfWidth));
      double h = sinc * win;
      taps[static_cast<size_t>(j) * kTapsPerPhase + t] = h;
      sum += h;
    }
    for (int t = 0; t < kTapsPerPhase; ++t)
      taps[static_cast<size_t>(j) * kTapsPerPhase + t] /= sum;
  }

  const int n = static_cast<int>(signal.size());
  std::vector<float> out(static_cast<size_t>(n) * factor);
  for (int m = 0; m < n; ++m) {
    for (int j = 0; j < factor; ++j) {
      const double* h = taps.data() + static_cast<size_t>(j) * kTapsPerPhase;
      double acc = 0.0;
      for (int t = 0; t < kTapsPerPhase; ++t) {
        int src = m + t - kLeft;
        if (src >= 0 && src < n) acc += h[t] * signal[src];
      }
      out[static_cast<size_t>(m) * factor + j] = static_cast<float>(acc);
    }
  }
  return out;
}

Kernel1D gaussian_kernel(double sigma, int length) {
  if (!(sigma > 0.0))
    throw InvalidArgument("gaussian_kernel: sigma must be positive");
  if (length < 1 || length % 2 == 0)
    throw InvalidArgument("gaussian_kernel: length must be odd");
  Kernel1D k;
  k.sigma = sigma;
  k.taps.resize(length);
  const int c = (length - 1) / 2;
  double sum = 0.0;
  for (int i = 0; i < length; ++i) {
    double d = (i - c) / sigma;
    k.taps[i] = std::exp(-0.5 * d * d);
    sum += k.taps[i];
  }
  for (double& t : k.taps) t /= sum;
  return k;
}

std::vector<double> convolve_same(std::span<const double> signal,
                                  const Kernel1D& kernel) {
  const int n = static_cast<int>(signal.size());
  const int len = kernel.length();
  if (len > n)
    throw InvalidArgument("convolve_same: kernel longer than signal");
  const int c = (len - 1) / 2;
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    int lo = std::max(0, i - c);
    int hi = std::min(n - 1, i + c);
    for (int j = lo; j <= hi; ++j) acc += signal[j] * kernel.taps[c + i - j];
    out[i] = acc;
  }
  return out;
}

std::vector<float> envelope(const Frame& frame) {
  const int n = frame.length();
  if (frame.channels == 2) {
    std::vector<float> out(n);
    const float* i_ch = frame.channel(0);
    const float* q_ch = frame.channel(1);
    for (int i = 0; i < n; ++i) out[i] = std::hypot(i_ch[i], q_ch[i]);
    return out;
  }
  if (frame.channels != 1)
    throw InvalidArgument("envelope: expected 1 or 2 channels");

  // Analytic signal: zero the negative frequencies, double the positive.
  std::vector<std::complex<double>> x(n), spec, analytic;
  for (int i = 0; i < n; ++i) x[i] = frame.samples[i];
  Eigen::FFT<double> fft;
  fft.fwd(spec, x);
  for (int k = 1; k < (n + 1) / 2; ++k) spec[k] *= 2.0;
  for (int k = n / 2 + 1; k < n; ++k) spec[k] = 0.0;
  fft.inv(analytic, spec);
  std::vector<float> out(n);
  for (int i = 0; i < n; ++i) out[i] = static_cast<float>(std::abs(analytic[i]));
  return out;
}

}  // namespace stofnet
