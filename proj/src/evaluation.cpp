#include "stofnet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "stofnet/errors.hpp"
#include "stofnet/parallel.hpp"

namespace stofnet {

MatchResult match_detections(std::span<const double> estimates,
                             std::span<const double> truth, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("match_detections: tau must be > 0");
  std::vector<double> est(estimates.begin(), estimates.end());
  std::vector<double> tru(truth.begin(), truth.end());
  std::sort(est.begin(), est.end());
  std::sort(tru.begin(), tru.end());
  const int n = static_cast<int>(est.size());
  const int m = static_cast<int>(tru.size());

  // Non-crossing recurrence over sorted positions: an optimal one-to-one
  // matching on a line never crosses, so f(i, j) over suffixes maximizes
  // the match count, then minimizes the total matched distance.
  struct Cell {
    int count = 0;
    double dist = 0.0;
  };
  auto better = [](const Cell& a, const Cell& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.dist < b.dist;
  };
  std::vector<Cell> dp(static_cast<size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> Cell& {
    return dp[static_cast<size_t>(i) * (m + 1) + j];
  };
  for (int i = n - 1; i >= 0; --i) {
    for (int j = m - 1; j >= 0; --j) {
      Cell best = at(i + 1, j);                    // skip estimate i
      if (better(at(i, j + 1), best)) best = at(i, j + 1);  // skip truth j
      const double d = std::fabs(est[i] - tru[j]);
      if (d < tau) {
        Cell take{at(i + 1, j + 1).count + 1, at(i + 1, j + 1).dist + d};
        if (better(take, best)) best = take;
      }
      at(i, j) = best;
    }
  }

  MatchResult out;
  int i = 0, j = 0;
  while (i < n && j < m) {
    const double d = std::fabs(est[i] - tru[j]);
    if (d < tau) {
      Cell take{at(i + 1, j + 1).count + 1, at(i + 1, j + 1).dist + d};
      if (!better(at(i + 1, j), take) && !better(at(i, j + 1), take)) {
        out.matched_errors.push_back(d);
        ++i;
        ++j;
        continue;
      }
    }
    if (better(at(i + 1, j), at(i, j + 1)))
      ++i;
    else
      ++j;
  }
  out.tp = static_cast<int>(out.matched_errors.size());
  out.fp = n - out.tp;
  out.fn = m - out.tp;
  return out;
}

std::optional<double> jaccard_percent(const MatchResult& m) {
  const long long denom = static_cast<long long>(m.tp) + m.fp + m.fn;
  if (denom == 0) return std::nullopt;
  return 100.0 * m.tp / static_cast<double>(denom);
}

RmseAggregate rmse_aggregate(std::span<const MatchResult> per_frame) {
  std::vector<double> rmse;
  for (const auto& m : per_frame) {
    if (m.tp < 1) continue;
    double ss = 0.0;
    for (double e : m.matched_errors) ss += e * e;
    rmse.push_back(std::sqrt(ss / m.tp));
  }
  RmseAggregate out;
  out.frames_with_tp = static_cast<int>(rmse.size());
  if (rmse.empty()) return out;
  double mean = 0.0;
  for (double r : rmse) mean += r;
  mean /= rmse.size();
  double var = 0.0;
  for (double r : rmse) var += (r - mean) * (r - mean);
  var /= rmse.size();  // population std
  out.mean = mean;
  out.stdev = std::sqrt(var);
  return out;
}

std::string format_rmse(double mean, double stdev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f \xC2\xB1 %.3f", mean, stdev);
  return buf;
}

EchoDetector make_network_detector(const Network& net, DetectMode mode,
                                   double threshold, int window) {
  const int upsample = net.config.upsample;
  return {"stofnet", count_parameters(net),
          [net, mode, threshold, window, upsample](const Frame& frame) {
            auto scores = forward(net, frame);
            std::vector<Detection> out;
            if (mode == DetectMode::single) {
              out.push_back(detect_single(scores, upsample));
            } else {
              out = nms_1d(scores, threshold, window, upsample);
            }
            return out;
          }};
}

double auto_threshold(const Network& net,
                      const std::vector<LabeledFrame>& val_frames, double tau,
                      int window) {
  std::vector<std::vector<float>> scores(val_frames.size());
  std::vector<std::vector<double>> truth(val_frames.size());
  parallel_for(static_cast<int>(val_frames.size()), [&](int i) {
    Frame f = normalize_amplitude(val_frames[i].frame);
    scores[i] = forward(net, f);
    truth[i] = val_frames[i].truth_positions;
  });
  return select_threshold_gmeans(scores, truth, net.config.upsample, tau,
                                 window);
}

EvalReport benchmark(const std::vector<EchoDetector>& models,
                     const Dataset& data, double tau, int timing_frames) {
  if (data.frames.empty()) throw InvalidArgument("benchmark: empty dataset");
  EvalReport report;
  report.tau = tau;
  const int n_frames = static_cast<int>(data.frames.size());

  for (const auto& model : models) {
    ModelReport row;
    row.model = model.name;
    row.weights = model.weights;
    try {
      std::vector<MatchResult> matches(n_frames);
      parallel_for(n_frames, [&](int i) {
        Frame f = normalize_amplitude(data.frames[i].frame);
        auto dets = model.detect(f);
        std::vector<double> positions(dets.size());
        for (size_t d = 0; d < dets.size(); ++d)
          positions[d] = dets[d].position;
        matches[i] =
            match_detections(positions, data.frames[i].truth_positions, tau);
      });

      long long tp = 0, fp = 0, fn = 0;
      for (const auto& m : matches) {
        tp += m.tp;
        fp += m.fp;
        fn += m.fn;
      }
      MatchResult pooled;
      pooled.tp = static_cast<int>(tp);
      pooled.fp = static_cast<int>(fp);
      pooled.fn = static_cast<int>(fn);
      row.jaccard_percent = jaccard_percent(pooled);

      auto agg = rmse_aggregate(matches);
      row.rmse_mean = agg.mean;
      row.rmse_std = agg.stdev;

      // single-threaded wall-clock pass on a frame subset
      const int t_frames = std::min(timing_frames, n_frames);
      auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < t_frames; ++i) {
        Frame f = normalize_amplitude(data.frames[i].frame);
        model.detect(f);
      }
      auto t1 = std::chrono::steady_clock::now();
      row.time_ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count() / t_frames;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string csv_field(const std::optional<double>& v) {
  if (!v) return "";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "model,rmse_mean,rmse_std,jaccard_percent,weights,time_ms\n";
  for (const auto& row : report.rows) {
    char tail[96];
    std::snprintf(tail, sizeof(tail), "%lld,%.3f", row.weights, row.time_ms);
    out += row.model + "," + csv_field(row.rmse_mean) + "," +
           csv_field(row.rmse_std) + "," + csv_field(row.jaccard_percent) +
           "," + tail + "\n";
  }
  return out;
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json r{{"model", row.model},
                     {"weights", row.weights},
                     {"time_ms", row.time_ms}};
    r["rmse_mean"] = row.rmse_mean ? nlohmann::json(*row.rmse_mean)
                                   : nlohmann::json(nullptr);
    r["rmse_std"] = row.rmse_std ? nlohmann::json(*row.rmse_std)
                                 : nlohmann::json(nullptr);
    r["jaccard_percent"] = row.jaccard_percent
                               ? nlohmann::json(*row.jaccard_percent)
                               : nlohmann::json(nullptr);
    r["error"] = row.error.empty() ? nlohmann::json(nullptr)
                                   : nlohmann::json(row.error);
    rows.push_back(std::move(r));
  }
  return nlohmann::json{{"tau", report.tau}, {"rows", rows}};
}

}  // namespace stofnet
