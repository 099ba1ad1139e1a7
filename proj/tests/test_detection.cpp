#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stofnet/detection.hpp"
#include "stofnet/errors.hpp"
#include "stofnet/rng.hpp"

using namespace stofnet;

namespace {

// Brute-force NMS oracle for short arrays: enumerate every feasible subset
// of above-threshold local maxima (pairwise separation > window) and pick
// the one whose descending score sequence is lexicographically largest,
// breaking score ties toward lower indices.
std::vector<int> nms_oracle(const std::vector<float>& s, double threshold,
                            int window) {
  const int n = static_cast<int>(s.size());
  std::vector<int> cand;
  for (int i = 0; i < n; ++i) {
    if (!(s[i] >= threshold)) continue;
    if (i > 0 && s[i] < s[i - 1]) continue;
    if (i + 1 < n && s[i] < s[i + 1]) continue;
    cand.push_back(i);
  }
  const int c = static_cast<int>(cand.size());
  REQUIRE(c <= 16);

  auto key = [&](const std::vector<int>& subset) {
    // (score desc, index asc) sequence for lexicographic comparison
    std::vector<std::pair<float, int>> k;
    for (int i : subset) k.push_back({s[i], i});
    std::sort(k.begin(), k.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    return k;
  };
  auto lex_better = [&](const std::vector<std::pair<float, int>>& a,
                        const std::vector<std::pair<float, int>>& b) {
    for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      if (a[i].first != b[i].first) return a[i].first > b[i].first;
      if (a[i].second != b[i].second) return a[i].second < b[i].second;
    }
    return a.size() > b.size();
  };

  std::vector<int> best;
  std::vector<std::pair<float, int>> best_key;
  for (unsigned mask = 0; mask < (1u << c); ++mask) {
    std::vector<int> subset;
    for (int b = 0; b < c; ++b)
      if (mask & (1u << b)) subset.push_back(cand[b]);
    bool feasible = true;
    for (size_t a = 0; a < subset.size() && feasible; ++a)
      for (size_t b = a + 1; b < subset.size(); ++b)
        if (std::abs(subset[a] - subset[b]) <= window) {
          feasible = false;
          break;
        }
    if (!feasible) continue;
    auto k = key(subset);
    if (best.empty() || lex_better(k, best_key)) {
      best = subset;
      best_key = k;
    }
  }
  std::sort(best.begin(), best.end());
  return best;
}

bool is_local_max(const std::vector<float>& s, int i) {
  const int n = static_cast<int>(s.size());
  if (i > 0 && s[i] < s[i - 1]) return false;
  if (i + 1 < n && s[i] < s[i + 1]) return false;
  return true;
}

}  // namespace

TEST_CASE("detect_single: argmax, ties, degenerate input") {
  std::vector<float> s(64, 0.f);
  s[41] = 2.f;
  auto d = detect_single(s, 4);
  CHECK(d.position == doctest::Approx(10.25));
  CHECK(d.confidence == 2.f);
  CHECK_FALSE(d.degenerate);

  std::vector<float> zeros(16, 0.f);
  auto z = detect_single(zeros, 4);
  CHECK(z.position == 0.0);
  CHECK(z.degenerate);

  std::vector<float> ties(32, 0.f);
  ties[10] = ties[20] = 1.f;
  CHECK(detect_single(ties, 4).position == doctest::Approx(10.0 / 4));

  CHECK_THROWS_AS(detect_single({}, 4), InvalidArgument);
}

TEST_CASE("nms_1d spec examples") {
  std::vector<float> s{0.1f, 0.9f, 0.8f, 0.2f};
  auto dets = nms_1d(s, 0.5, 1);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].position == 1.0);
  CHECK(dets[0].confidence == doctest::Approx(0.9));

  CHECK(nms_1d(s, 2.0, 1).empty());

  // two peaks exactly window+1 apart are both kept
  std::vector<float> two(16, 0.f);
  two[4] = 1.0f;
  two[8] = 0.7f;
  auto kept = nms_1d(two, 0.5, 3);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].position == 4.0);
  CHECK(kept[1].position == 8.0);
  // one sample closer and the weaker peak is suppressed
  CHECK(nms_1d(two, 0.5, 4).size() == 1);
}

TEST_CASE("nms_1d reports positions on the input grid when upsampled") {
  std::vector<float> s(64, 0.f);
  s[41] = 3.f;
  s[10] = 2.f;
  auto dets = nms_1d(s, 1.0, 7, 4);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].position == doctest::Approx(2.5));
  CHECK(dets[1].position == doctest::Approx(10.25));
}

TEST_CASE("nms_1d agrees with the brute-force oracle on short arrays") {
  Rng rng(17);
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(0, 8));
    std::vector<float> s(n);
    for (auto& v : s)
      v = static_cast<float>(std::round(rng.uniform(0, 1) * 8) / 8);  // ties
    const double threshold = rng.uniform(0.1, 0.9);
    const int window = static_cast<int>(rng.uniform_int(1, 4));

    auto dets = nms_1d(s, threshold, window);
    auto expected = nms_oracle(s, threshold, window);
    REQUIRE(dets.size() == expected.size());
    for (size_t i = 0; i < dets.size(); ++i)
      CHECK(dets[i].position == static_cast<double>(expected[i]));
  }
}

TEST_CASE("nms_1d invariants on random arrays") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 16 + static_cast<int>(rng.uniform_int(0, 48));
    std::vector<float> s(n);
    for (auto& v : s) v = static_cast<float>(rng.uniform(0, 1));
    const double threshold = rng.uniform(0.2, 0.8);
    const int window = static_cast<int>(rng.uniform_int(1, 6));

    auto dets = nms_1d(s, threshold, window);
    for (size_t i = 0; i + 1 < dets.size(); ++i)
      CHECK(dets[i + 1].position - dets[i].position >
            static_cast<double>(window));
    for (const auto& d : dets) {
      const int idx = static_cast<int>(d.position);
      CHECK(s[idx] >= threshold);
      CHECK(is_local_max(s, idx));
    }
    // raising the threshold never yields more detections
    auto fewer = nms_1d(s, threshold + 0.1, window);
    CHECK(fewer.size() <= dets.size());
  }
}

TEST_CASE("detect_single equals unconstrained NMS's top detection") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> s(40);
    for (auto& v : s) v = static_cast<float>(rng.uniform(0, 1));
    auto single = detect_single(s, 1);
    auto all = nms_1d(s, -1e30, 1 << 29);
    REQUIRE(all.size() == 1);  // infinite window keeps only the best peak
    CHECK(all[0].position == single.position);
  }
}

TEST_CASE("select_threshold_gmeans picks the best operating point") {
  // Construct three synthetic validation frames where candidate thresholds
  // trade TPR against precision, then check against the stated arithmetic.
  // truth at index 10; peaks: tall true peak at 10, medium false peak at 30,
  // small false peak at 50.
  std::vector<std::vector<float>> scores;
  std::vector<std::vector<double>> truth;
  for (int f = 0; f < 3; ++f) {
    std::vector<float> s(64, 0.f);
    s[10] = 1.0f;
    s[30] = 0.6f;
    if (f == 0) s[50] = 0.3f;
    scores.push_back(s);
    truth.push_back({10.0});
  }
  // threshold 0.2: TP=3, FP=4 -> TPR 1, FAR 4/7, g = sqrt(3/7) = 0.654
  // threshold 0.5: TP=3, FP=3 -> TPR 1, FAR 1/2, g = sqrt(1/2) = 0.707
  // threshold 0.8: TP=3, FP=0 -> TPR 1, FAR 0,  g = 1
  double chosen =
      select_threshold_gmeans(scores, truth, 1, 1.0, 3, {0.2, 0.5, 0.8});
  CHECK(chosen == 0.8);

  // a perfect single candidate is returned unconditionally
  CHECK(select_threshold_gmeans(scores, truth, 1, 1.0, 3, {0.4}) == 0.4);

  std::vector<std::vector<double>> no_truth{{}, {}, {}};
  CHECK_THROWS_AS(select_threshold_gmeans(scores, no_truth, 1, 1.0, 3),
                  UndefinedValue);
}

TEST_CASE("g-means arithmetic prefers (0.9, 0.2) over the corners") {
  // direct check of the example triple via hand-built score sets
  auto g = [](double tpr, double far) { return std::sqrt(tpr * (1 - far)); };
  CHECK(g(0.9, 0.2) == doctest::Approx(0.8485281));
  CHECK(g(0.9, 0.2) > g(1.0, 1.0));
  CHECK(g(0.9, 0.2) > g(0.5, 0.0));
}
