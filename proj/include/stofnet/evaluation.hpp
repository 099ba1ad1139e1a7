#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stofnet/dataset.hpp"
#include "stofnet/detection.hpp"
#include "stofnet/model.hpp"

namespace stofnet {

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<double> matched_errors;  // |estimate - truth|, each < tau
};

// One-to-one matching of estimates to ground truth, gated at distance <
// tau: maximizes the number of matches, then minimizes the total matched
// distance (exact, via the non-crossing matching recurrence on sorted
// positions). Unmatched estimates count as FP, unmatched truths as FN.
MatchResult match_detections(std::span<const double> estimates,
                             std::span<const double> truth, double tau);

// 100 * tp / (tp + fp + fn); absent when all three counts are zero.
std::optional<double> jaccard_percent(const MatchResult& m);

struct RmseAggregate {
  std::optional<double> mean;
  std::optional<double> stdev;  // population std over frames with TPs
  int frames_with_tp = 0;
};

// Per-frame RMSE over matched errors, aggregated over frames that have at
// least one TP. Frames without TPs are excluded here (they still count in
// Jaccard).
RmseAggregate rmse_aggregate(std::span<const MatchResult> per_frame);

// "mean +- std" with three decimals, the table rendering of an RMSE column.
std::string format_rmse(double mean, double stdev);

// A runnable detector: name tag, trainable weight count (0 for classical
// methods) and the per-frame detection function.
struct EchoDetector {
  std::string name;
  long long weights = 0;
  std::function<std::vector<Detection>(const Frame&)> detect;
};

enum class DetectMode { single, multi };

// Wraps a trained network: single-echo argmax or threshold+NMS detection.
EchoDetector make_network_detector(const Network& net, DetectMode mode,
                                   double threshold, int window);

// Runs the network over labeled frames and picks the operating threshold by
// the g-means sweep.
double auto_threshold(const Network& net,
                      const std::vector<LabeledFrame>& val_frames, double tau,
                      int window);

struct ModelReport {
  std::string model;
  std::optional<double> rmse_mean;
  std::optional<double> rmse_std;
  std::optional<double> jaccard_percent;
  long long weights = 0;
  double time_ms = 0.0;
  std::string error;  // non-empty when the model failed on this dataset
};

struct EvalReport {
  double tau = 1.0;
  std::vector<ModelReport> rows;
};

// Runs every detector over the dataset, matches at tolerance tau and
// aggregates RMSE/Jaccard plus mean single-frame wall-clock time (measured
// single-threaded over at most timing_frames frames). A failing model
// produces an error row; the run continues.
EvalReport benchmark(const std::vector<EchoDetector>& models,
                     const Dataset& data, double tau, int timing_frames = 32);

// CSV with the exact header
// model,rmse_mean,rmse_std,jaccard_percent,weights,time_ms
// (absent values render as empty fields).
std::string report_csv(const EvalReport& report);

nlohmann::json report_json(const EvalReport& report);

}  // namespace stofnet
