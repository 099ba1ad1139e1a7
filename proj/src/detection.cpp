#include "stofnet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stofnet/errors.hpp"
#include "stofnet/evaluation.hpp"

namespace stofnet {

Detection detect_single(std::span<const float> scores, int upsample) {
  if (scores.empty()) throw InvalidArgument("detect_single: empty scores");
  if (upsample < 1) throw InvalidArgument("detect_single: upsample must be >= 1");
  size_t best = 0;
  bool varied = false;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
    if (scores[i] != scores[0]) varied = true;
  }
  return {static_cast<double>(best) / upsample, scores[best], !varied};
}

std::vector<Detection> nms_1d(std::span<const float> scores, double threshold,
                              int window, int upsample) {
  if (window < 1) throw InvalidArgument("nms_1d: window must be >= 1");
  if (upsample < 1) throw InvalidArgument("nms_1d: upsample must be >= 1");
  const auto n = static_cast<long long>(scores.size());

  // candidates: local maxima at or above the threshold
  std::vector<long long> cand;
  for (long long i = 0; i < n; ++i) {
    if (!(scores[i] >= threshold)) continue;
    if (i > 0 && scores[i] < scores[i - 1]) continue;
    if (i + 1 < n && scores[i] < scores[i + 1]) continue;
    cand.push_back(i);
  }

  // greedy: descending score, index ascending on ties
  std::sort(cand.begin(), cand.end(), [&](long long a, long long b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<long long> kept;
  for (long long i : cand) {
    bool suppressed = false;
    for (long long j : kept) {
      if (std::llabs(i - j) <= window) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());

  std::vector<Detection> out;
  out.reserve(kept.size());
  for (long long i : kept)
    out.push_back({static_cast<double>(i) / upsample, scores[i], false});
  return out;
}

double select_threshold_gmeans(
    const std::vector<std::vector<float>>& val_scores,
    const std::vector<std::vector<double>>& val_truth, int upsample,
    double tau, int window, std::vector<double> candidates) {
  if (val_scores.empty() || val_scores.size() != val_truth.size())
    throw InvalidArgument("select_threshold_gmeans: bad validation set");
  size_t positives = 0;
  for (const auto& t : val_truth) positives += t.size();
  if (positives == 0)
    throw UndefinedValue("select_threshold_gmeans: no positive labels, TPR undefined");

  if (candidates.empty()) {
    // 64 quantiles of the per-frame score maxima
    std::vector<double> maxima;
    maxima.reserve(val_scores.size());
    for (const auto& s : val_scores) {
      if (s.empty()) continue;
      maxima.push_back(*std::max_element(s.begin(), s.end()));
    }
    if (maxima.empty())
      throw InvalidArgument("select_threshold_gmeans: empty score arrays");
    std::sort(maxima.begin(), maxima.end());
    for (int q = 0; q < 64; ++q) {
      double pos = (q + 0.5) / 64.0 * (maxima.size() - 1);
      candidates.push_back(maxima[static_cast<size_t>(std::llround(pos))]);
    }
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
  }
  std::sort(candidates.begin(), candidates.end());

  double best_threshold = candidates.front();
  double best_g = -1.0;
  for (double threshold : candidates) {
    long long tp = 0, fp = 0, fn = 0;
    for (size_t f = 0; f < val_scores.size(); ++f) {
      auto dets = nms_1d(val_scores[f], threshold, window, upsample);
      std::vector<double> positions(dets.size());
      for (size_t i = 0; i < dets.size(); ++i) positions[i] = dets[i].position;
      MatchResult m = match_detections(positions, val_truth[f], tau);
      tp += m.tp;
      fp += m.fp;
      fn += m.fn;
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double far =
        (tp + fp) > 0 ? static_cast<double>(fp) / static_cast<double>(tp + fp)
                      : 0.0;
    const double g = std::sqrt(tpr * (1.0 - far));
    if (g > best_g) {
      best_g = g;
      best_threshold = threshold;
    }
  }
  return best_threshold;
}

}  // namespace stofnet
