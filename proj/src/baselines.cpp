#include "stofnet/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "stofnet/errors.hpp"

namespace stofnet {

double parabolic_offset(double yl, double yc, double yr) {
  const double denom = yl - 2.0 * yc + yr;
  if (denom == 0.0) return 0.0;
  return 0.5 * (yl - yr) / denom;
}

std::vector<Detection> gradient_peak_detect(const Frame& frame,
                                            double rel_threshold) {
  if (!(rel_threshold > 0.0 && rel_threshold <= 1.0))
    throw InvalidArgument("gradient_peak_detect: threshold must be in (0, 1]");
  const auto env = envelope(frame);
  const int n = static_cast<int>(env.size());
  if (n < 3) return {};
  const float peak = *std::max_element(env.begin(), env.end());
  if (peak <= 0.f) return {};
  const double gate = rel_threshold * peak;

  std::vector<Detection> out;
  for (int i = 1; i + 1 < n; ++i) {
    if (env[i] < gate) continue;
    // first difference changes sign + -> -
    if (!(env[i] - env[i - 1] > 0.f && env[i + 1] - env[i] <= 0.f)) continue;
    double delta = parabolic_offset(env[i - 1], env[i], env[i + 1]);
    out.push_back({i + delta, env[i], false});
  }
  return out;
}

std::optional<Detection> threshold_first_crossing(const Frame& frame,
                                                  double rel_threshold) {
  if (!(rel_threshold > 0.0 && rel_threshold <= 1.0))
    throw InvalidArgument("threshold_first_crossing: threshold must be in (0, 1]");
  const auto env = envelope(frame);
  const float peak = *std::max_element(env.begin(), env.end());
  if (peak <= 0.f) return std::nullopt;
  const double gate = rel_threshold * peak;

  for (size_t i = 0; i < env.size(); ++i) {
    if (env[i] >= gate) {
      if (i == 0) return Detection{0.0, env[0], false};
      // linear interpolation between the bracketing samples
      const double lo = env[i - 1], hi = env[i];
      const double pos =
          (i - 1) + (hi > lo ? (gate - lo) / (hi - lo) : 1.0);
      return Detection{pos, env[i], false};
    }
  }
  return std::nullopt;
}

Detection xcorr_toa(const Frame& frame, std::span<const float> tpl) {
  const int n = frame.length();
  const int len = static_cast<int>(tpl.size());
  if (len < 1) throw InvalidArgument("xcorr_toa: empty template");
  if (len > n) throw InvalidArgument("xcorr_toa: template longer than frame");
  double tpl_energy = 0.0;
  for (float v : tpl) tpl_energy += static_cast<double>(v) * v;
  if (!(tpl_energy > 0.0))
    throw InvalidArgument("xcorr_toa: zero-energy template");

  std::vector<float> mono;
  if (frame.channels == 1) {
    mono.assign(frame.samples.begin(), frame.samples.end());
  } else {
    mono = envelope(frame);  // C=2 correlates the magnitude
  }
  double sig_energy = 0.0;
  for (float v : mono) sig_energy += static_cast<double>(v) * v;
  if (!(sig_energy > 0.0)) return {0.0, 0.0, true};

  const double norm = std::sqrt(tpl_energy * sig_energy);
  const int lags = n - len + 1;
  std::vector<double> r(lags);
  for (int lag = 0; lag < lags; ++lag) {
    double acc = 0.0;
    for (int k = 0; k < len; ++k) acc += static_cast<double>(tpl[k]) * mono[lag + k];
    r[lag] = acc / norm;
  }
  int peak = 0;
  for (int lag = 1; lag < lags; ++lag)
    if (r[lag] > r[peak]) peak = lag;

  double delta = 0.0;
  if (peak > 0 && peak + 1 < lags)
    delta = parabolic_offset(r[peak - 1], r[peak], r[peak + 1]);

  const double center = (len - 1) / 2.0;
  return {peak + delta + center, r[peak], false};
}

EchoDetector make_gradient_detector(double rel_threshold) {
  return {"gradient", 0, [rel_threshold](const Frame& f) {
            return gradient_peak_detect(f, rel_threshold);
          }};
}

EchoDetector make_threshold_detector(double rel_threshold) {
  return {"threshold", 0, [rel_threshold](const Frame& f) {
            std::vector<Detection> out;
            if (auto d = threshold_first_crossing(f, rel_threshold))
              out.push_back(*d);
            return out;
          }};
}

EchoDetector make_xcorr_detector(std::vector<float> tpl) {
  return {"xcorr", 0, [tpl = std::move(tpl)](const Frame& f) {
            std::vector<Detection> out;
            Detection d = xcorr_toa(f, tpl);
            if (!d.degenerate) out.push_back(d);
            return out;
          }};
}

}  // namespace stofnet
