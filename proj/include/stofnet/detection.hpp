#pragma once

#include <span>
#include <vector>

namespace stofnet {

// One estimated arrival: position in fractional input-sample units
// (upsampled index / R) with the score at the kept peak.
struct Detection {
  double position = 0.0;
  double confidence = 0.0;
  bool degenerate = false;  // set when the score vector carried no peak
};

// Global argmax; ties go to the lowest index. An all-equal score vector
// returns index 0 flagged degenerate.
Detection detect_single(std::span<const float> scores, int upsample);

// Threshold + 1-D non-maximum suppression: local maxima with score >=
// threshold, processed in descending score order; a kept peak suppresses
// candidates within +-window samples. Results are sorted by position.
std::vector<Detection> nms_1d(std::span<const float> scores, double threshold,
                              int window, int upsample = 1);

// Sweeps candidate thresholds over a labeled validation set and returns the
// one maximizing sqrt(TPR * (1 - FAR)) where TPR = TP/(TP+FN) and FAR =
// FP/(TP+FP) (0 when nothing is detected). An empty candidate list uses 64
// quantiles of the per-frame score maxima. Requires at least one positive
// label.
double select_threshold_gmeans(
    const std::vector<std::vector<float>>& val_scores,
    const std::vector<std::vector<double>>& val_truth, int upsample,
    double tau, int window, std::vector<double> candidates = {});

}  // namespace stofnet
