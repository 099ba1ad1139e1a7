#pragma once

#include <optional>
#include <span>

#include "stofnet/detection.hpp"
#include "stofnet/evaluation.hpp"
#include "stofnet/signal.hpp"

namespace stofnet {

// Sub-sample offset of the vertex of the parabola through (-1, yl), (0, yc),
// (1, yr); strictly inside (-0.5, 0.5) when yc is the strict maximum.
double parabolic_offset(double yl, double yc, double yr);

// Envelope-derivative peak picking: sign changes of the first difference
// where the envelope reaches rel_threshold * max, parabolic refinement.
std::vector<Detection> gradient_peak_detect(const Frame& frame,
                                            double rel_threshold);

// First sample where the envelope crosses rel_threshold * max, linearly
// interpolated between the bracketing samples. No crossing -> no detection.
std::optional<Detection> threshold_first_crossing(const Frame& frame,
                                                  double rel_threshold);

// Lag of the normalized cross-correlation maximum, parabolic sub-sample
// refinement; the reported position is the template center's alignment.
Detection xcorr_toa(const Frame& frame, std::span<const float> tpl);

EchoDetector make_gradient_detector(double rel_threshold = 0.5);
EchoDetector make_threshold_detector(double rel_threshold = 0.5);
EchoDetector make_xcorr_detector(std::vector<float> tpl);

}  // namespace stofnet
