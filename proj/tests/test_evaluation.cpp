#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "stofnet/dataset.hpp"
#include "stofnet/errors.hpp"
#include "stofnet/evaluation.hpp"
#include "stofnet/rng.hpp"

using namespace stofnet;

namespace {

// Exhaustive matching oracle: bitmask DP over truth subsets, maximizing
// match count then minimizing total distance. Independent of the
// production recurrence (which runs over sorted suffixes).
std::pair<int, double> match_oracle(const std::vector<double>& est,
                                    const std::vector<double>& truth,
                                    double tau) {
  const int n = static_cast<int>(est.size());
  const int m = static_cast<int>(truth.size());
  REQUIRE(m <= 12);
  const double inf = 1e18;
  std::vector<std::vector<double>> best(
      n + 1, std::vector<double>(1u << m, inf));
  std::vector<std::vector<int>> cnt(n + 1, std::vector<int>(1u << m, -1));
  cnt[0][0] = 0;
  best[0][0] = 0.0;
  for (int i = 0; i < n; ++i) {
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
      if (cnt[i][mask] < 0) continue;
      // skip estimate i
      if (cnt[i][mask] > cnt[i + 1][mask] ||
          (cnt[i][mask] == cnt[i + 1][mask] &&
           best[i][mask] < best[i + 1][mask])) {
        cnt[i + 1][mask] = cnt[i][mask];
        best[i + 1][mask] = best[i][mask];
      }
      // match estimate i to any free truth
      for (int j = 0; j < m; ++j) {
        if (mask & (1u << j)) continue;
        double d = std::fabs(est[i] - truth[j]);
        if (!(d < tau)) continue;
        unsigned nm = mask | (1u << j);
        int c = cnt[i][mask] + 1;
        double v = best[i][mask] + d;
        if (c > cnt[i + 1][nm] ||
            (c == cnt[i + 1][nm] && v < best[i + 1][nm])) {
          cnt[i + 1][nm] = c;
          best[i + 1][nm] = v;
        }
      }
    }
  }
  int bc = 0;
  double bd = 0.0;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    if (cnt[n][mask] < 0) continue;
    if (cnt[n][mask] > bc ||
        (cnt[n][mask] == bc && best[n][mask] < bd)) {
      bc = cnt[n][mask];
      bd = best[n][mask];
    }
  }
  return {bc, bd};
}

}  // namespace

TEST_CASE("match_detections spec examples") {
  auto m = match_detections(std::vector<double>{100.25},
                            std::vector<double>{100.0}, 1.0);
  CHECK(m.tp == 1);
  CHECK(m.fp == 0);
  CHECK(m.fn == 0);
  REQUIRE(m.matched_errors.size() == 1);
  CHECK(m.matched_errors[0] == doctest::Approx(0.25));

  m = match_detections(std::vector<double>{102.5}, std::vector<double>{100.0},
                       1.0);
  CHECK(m.tp == 0);
  CHECK(m.fp == 1);
  CHECK(m.fn == 1);

  m = match_detections(std::vector<double>{10.1, 50.9},
                       std::vector<double>{10.0, 50.0, 90.0}, 1.0);
  CHECK(m.tp == 2);
  CHECK(m.fn == 1);
  CHECK(m.fp == 0);
  REQUIRE(m.matched_errors.size() == 2);
  CHECK(m.matched_errors[0] == doctest::Approx(0.1));
  CHECK(m.matched_errors[1] == doctest::Approx(0.9));
}

TEST_CASE("match_detections distance gate is strict") {
  auto m = match_detections(std::vector<double>{11.0},
                            std::vector<double>{10.0}, 1.0);
  CHECK(m.tp == 0);  // distance exactly tau does not match

  CHECK_THROWS_AS(
      match_detections(std::vector<double>{1.0}, std::vector<double>{1.0}, 0.0),
      InvalidArgument);
}

TEST_CASE("match_detections equals the exhaustive oracle on random instances") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(0, 8));
    const int m = static_cast<int>(rng.uniform_int(0, 8));
    std::vector<double> est(n), truth(m);
    for (auto& v : est) v = rng.uniform(0, 12);
    for (auto& v : truth) v = rng.uniform(0, 12);

    auto result = match_detections(est, truth, 1.0);
    auto [oc, od] = match_oracle(est, truth, 1.0);
    CHECK(result.tp == oc);
    double total = 0.0;
    for (double e : result.matched_errors) total += e;
    if (result.tp > 0) CHECK(total == doctest::Approx(od).epsilon(1e-9));

    // bookkeeping identities
    CHECK(result.tp + result.fn == m);
    CHECK(result.tp + result.fp == n);
    for (double e : result.matched_errors) CHECK(e < 1.0);

    // shrinking tau never increases tp
    auto tighter = match_detections(est, truth, 0.5);
    CHECK(tighter.tp <= result.tp);
  }
}

TEST_CASE("jaccard_percent") {
  CHECK(*jaccard_percent({1, 0, 0, {}}) == doctest::Approx(100.0));
  CHECK(*jaccard_percent({2, 0, 1, {}}) == doctest::Approx(66.667).epsilon(1e-4));
  CHECK(*jaccard_percent({0, 3, 2, {}}) == 0.0);
  CHECK_FALSE(jaccard_percent({0, 0, 0, {}}).has_value());

  // monotone non-increasing in fp and fn at fixed tp
  double base = *jaccard_percent({3, 1, 1, {}});
  CHECK(*jaccard_percent({3, 2, 1, {}}) < base);
  CHECK(*jaccard_percent({3, 1, 2, {}}) < base);
}

TEST_CASE("rmse_aggregate") {
  MatchResult one;
  one.tp = 2;
  one.matched_errors = {0.3, 0.4};
  auto agg = rmse_aggregate(std::vector<MatchResult>{one});
  CHECK(*agg.mean == doctest::Approx(0.35355).epsilon(1e-4));
  CHECK(*agg.stdev == doctest::Approx(0.0));

  // identical per-frame RMSE -> (r, 0)
  auto agg3 = rmse_aggregate(std::vector<MatchResult>{one, one, one});
  CHECK(*agg3.mean == doctest::Approx(0.35355).epsilon(1e-4));
  CHECK(*agg3.stdev == doctest::Approx(0.0));
  CHECK(agg3.frames_with_tp == 3);

  // frames without TPs are excluded
  MatchResult miss;
  miss.fp = 2;
  auto agg2 = rmse_aggregate(std::vector<MatchResult>{one, miss});
  CHECK(agg2.frames_with_tp == 1);
  CHECK(*agg2.mean == doctest::Approx(0.35355).epsilon(1e-4));

  auto none = rmse_aggregate(std::vector<MatchResult>{miss});
  CHECK_FALSE(none.mean.has_value());
}

TEST_CASE("format_rmse renders the table cell") {
  CHECK(format_rmse(0.145, 0.212) == "0.145 \xC2\xB1 0.212");
}

namespace {

Dataset tiny_dataset() {
  SyntheticConfig cfg;
  cfg.n_frames = 12;
  cfg.frame_length = 256;
  cfg.echoes_min = 1;
  cfg.echoes_max = 2;
  cfg.seed = 55;
  Dataset ds;
  ds.frames = generate_synthetic(cfg);
  ds.meta.upsample = 4;
  return ds;
}

}  // namespace

TEST_CASE("benchmark: oracle and empty detectors bracket the metrics") {
  auto ds = tiny_dataset();

  // an oracle that replays the truth (frames are visited in index order
  // when detection runs single-threaded), and a detector emitting nothing
  int call = 0;
  EchoDetector truth_det{"oracle", 0, [&ds, &call](const Frame&) {
                           std::vector<Detection> out;
                           const auto& lf =
                               ds.frames[call % ds.frames.size()];
                           ++call;
                           for (double p : lf.truth_positions)
                             out.push_back({p, 1.0, false});
                           return out;
                         }};
  EchoDetector nothing{"nothing", 0,
                       [](const Frame&) { return std::vector<Detection>{}; }};

  // sequential detection keeps the call-order trick valid
  setenv("STOFNET_THREADS", "1", 1);
  auto report = benchmark({truth_det, nothing}, ds, 1.0, 4);
  unsetenv("STOFNET_THREADS");

  REQUIRE(report.rows.size() == 2);
  CHECK(*report.rows[0].rmse_mean == doctest::Approx(0.0));
  CHECK(*report.rows[0].jaccard_percent == doctest::Approx(100.0));
  CHECK(report.rows[1].jaccard_percent.value_or(-1) == 0.0);
  CHECK_FALSE(report.rows[1].rmse_mean.has_value());
  CHECK(report.rows[1].error.empty());
}

TEST_CASE("benchmark survives a failing model with an error row") {
  auto ds = tiny_dataset();
  EchoDetector broken{"broken", 0, [](const Frame&) -> std::vector<Detection> {
                        throw ShapeError("frame length mismatch");
                      }};
  EchoDetector nothing{"nothing", 0,
                       [](const Frame&) { return std::vector<Detection>{}; }};
  auto report = benchmark({broken, nothing}, ds, 1.0, 2);
  REQUIRE(report.rows.size() == 2);
  CHECK_FALSE(report.rows[0].error.empty());
  CHECK(report.rows[1].error.empty());
}

TEST_CASE("report_csv header and absent-value cells") {
  EvalReport report;
  report.tau = 1.0;
  ModelReport full;
  full.model = "xcorr";
  full.rmse_mean = 0.123456;
  full.rmse_std = 0.045678;
  full.jaccard_percent = 83.5;
  full.weights = 641668;
  full.time_ms = 3.273;
  ModelReport empty;
  empty.model = "nothing";
  report.rows = {full, empty};

  auto csv = report_csv(report);
  auto header = csv.substr(0, csv.find('\n'));
  CHECK(header == "model,rmse_mean,rmse_std,jaccard_percent,weights,time_ms");
  CHECK(csv.find("xcorr,0.123456,0.045678,83.500000,641668,3.273") !=
        std::string::npos);
  CHECK(csv.find("nothing,,,,0,") != std::string::npos);
}

TEST_CASE("report_json uses null for absent values") {
  EvalReport report;
  ModelReport row;
  row.model = "nothing";
  report.rows = {row};
  auto j = report_json(report);
  CHECK(j["rows"][0]["rmse_mean"].is_null());
  CHECK(j["rows"][0]["error"].is_null());
  CHECK(j["rows"][0]["model"] == "nothing");
}
