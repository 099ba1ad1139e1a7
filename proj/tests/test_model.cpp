#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "stofnet/errors.hpp"
#include "stofnet/model.hpp"
#include "stofnet/rng.hpp"

using namespace stofnet;
namespace fs = std::filesystem;

namespace {

std::vector<float> random_input(int n, int channels, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> x(static_cast<size_t>(n) * channels);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  return x;
}

}  // namespace

TEST_CASE("layer table: shapes, ReLU placement, parameter counts") {
  ModelConfig cfg;  // F=64 R=4 S=4 C=1
  auto table = layer_table(cfg);
  REQUIRE(table.size() == 16);

  // convolutions feeding a residual add carry no ReLU
  std::vector<bool> relu_expected = {true, true, true,          // entry + ctx
                                     true, false, true, false,  // res1, res2
                                     true, false, true, false,  // res3, res4
                                     true, false,               // res5
                                     false, true, false};       // fuse + head
  for (size_t i = 0; i < table.size(); ++i)
    CHECK(table[i].relu == relu_expected[i]);

  CHECK(table[0].kernel == 9);
  CHECK(table[1].stride == 4);
  CHECK(table[1].out_ch == 256);
  CHECK(table[15].out_ch == 4);

  CHECK(count_parameters(cfg) == 641668);

  // toy config against the per-layer hand count sum(Cin*Cout*k + Cout)
  ModelConfig toy{1, 1, 1, 1, 9, 7, 3};
  CHECK(count_parameters(toy) == 118);

  ModelConfig doubled = cfg;
  doubled.features = 128;
  CHECK(count_parameters(doubled) > count_parameters(cfg));
}

TEST_CASE("count_parameters of a network equals the config count") {
  ModelConfig cfg;
  cfg.features = 8;
  auto net = make_network<float>(cfg, 1);
  CHECK(count_parameters(net) == count_parameters(cfg));
}

TEST_CASE("sample_shuffle interleaves and round-trips") {
  // [[1,2],[3,4]] as channel-major columns: ch0 = (1,3)? No: t[m][j] with
  // rows m = positions. ch j holds t[:, j], so ch0 = (1,3), ch1 = (2,4).
  std::vector<float> t{1.f, 3.f, 2.f, 4.f};
  auto out = sample_shuffle<float>(t, 2, 2, 2);
  CHECK(out == std::vector<float>{1.f, 2.f, 3.f, 4.f});

  auto same = sample_shuffle<float>(t, 2, 2, 1);
  CHECK(same == t);

  Rng rng(4);
  for (auto [ch, len, r] : std::vector<std::array<int, 3>>{
           {8, 16, 4}, {6, 10, 2}, {12, 5, 3}, {4, 7, 4}}) {
    std::vector<float> x(static_cast<size_t>(ch) * len);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
    auto shuffled = sample_shuffle<float>(x, ch, len, r);
    auto back = sample_unshuffle<float>(shuffled, ch / r, len * r, r);
    CHECK(back == x);
  }

  CHECK_THROWS_AS(sample_shuffle<float>(t, 3, 2, 2), ShapeError);
}

TEST_CASE("forward output length is N*R for all tested shapes") {
  for (int n : {256, 512, 1024, 1536}) {
    for (int r : {1, 2, 4}) {
      ModelConfig cfg;
      cfg.features = 8;
      cfg.upsample = r;
      auto net = make_network<float>(cfg, 7);
      auto y = forward<float>(net, random_input(n, 1, 11), n);
      CHECK(y.size() == static_cast<size_t>(n) * r);
    }
  }
}

TEST_CASE("forward validates shapes") {
  ModelConfig cfg;
  cfg.features = 8;
  auto net = make_network<float>(cfg, 7);
  CHECK_THROWS_AS(forward<float>(net, random_input(510, 1, 1), 510),
                  ShapeError);  // not divisible by S=4

  Frame two_channels(256, 2);
  CHECK_THROWS_AS(forward(net, two_channels), ShapeError);
}

TEST_CASE("all-zero parameters map any input to zero") {
  ModelConfig cfg;
  cfg.features = 8;
  auto net = zero_network<float>(cfg);
  auto y = forward<float>(net, random_input(256, 1, 3), 256);
  for (float v : y) CHECK(v == 0.f);
}

TEST_CASE("zeroed residual pair acts as the identity") {
  ModelConfig cfg;
  cfg.features = 8;
  auto net = make_network<float>(cfg, 19);
  const int pair = 2;  // zero res3 (layers 7 and 8 in the table)
  for (int layer : {3 + 2 * pair, 4 + 2 * pair}) {
    std::fill(net.weights[layer].begin(), net.weights[layer].end(), 0.f);
    std::fill(net.biases[layer].begin(), net.biases[layer].end(), 0.f);
  }
  ForwardCache<float> cache;
  forward<float>(net, random_input(256, 1, 5), 256, &cache);
  CHECK(cache.trunk_out[pair] == cache.trunk_out[pair - 1]);
}

TEST_CASE("forward is deterministic") {
  ModelConfig cfg;
  cfg.features = 16;
  auto net = make_network<float>(cfg, 23);
  auto x = random_input(512, 1, 29);
  auto y1 = forward<float>(net, x, 512);
  auto y2 = forward<float>(net, x, 512);
  CHECK(y1 == y2);
}

TEST_CASE("forward is shift-equivariant for shifts of S*k samples") {
  ModelConfig cfg;
  cfg.features = 16;
  auto net = make_network<float>(cfg, 31);
  const int n = 512, shift = cfg.contraction * 3;  // S*k with k=3

  // interior-supported bump
  std::vector<float> x(n, 0.f), xs(n, 0.f);
  for (int i = 200; i < 260; ++i) {
    float v = std::exp(-(i - 230.f) * (i - 230.f) / 80.f) *
              std::cos(0.7f * (i - 230.f));
    x[i] = v;
    xs[i + shift] = v;
  }
  auto y = forward<float>(net, x, n);
  auto ys = forward<float>(net, xs, n);

  const int r = cfg.upsample;
  double max_dev = 0.0;
  for (int i = 100 * r; i < (n - 100) * r; ++i)
    max_dev = std::max(max_dev,
                       std::fabs(static_cast<double>(ys[i + shift * r]) - y[i]));
  CHECK(max_dev < 1e-3);
}

TEST_CASE("backward matches finite differences on a toy config") {
  ModelConfig cfg;
  cfg.features = 4;
  const int n = 32;
  auto net = make_network<double>(cfg, 41);
  Rng rng(43);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-1, 1);
  std::vector<double> target(static_cast<size_t>(n) * cfg.upsample, 0.0);
  target[40] = 1.5;
  target[77] = 0.8;

  auto loss_of = [&](const NetworkT<double>& w) {
    auto y = forward<double>(w, x, n);
    double l = 0.0;
    for (size_t i = 0; i < y.size(); ++i)
      l += (y[i] - target[i]) * (y[i] - target[i]);
    return l;
  };

  ForwardCache<double> cache;
  auto y = forward<double>(net, x, n, &cache);
  std::vector<double> grad(y.size());
  for (size_t i = 0; i < y.size(); ++i) grad[i] = 2.0 * (y[i] - target[i]);
  auto analytic = backward<double>(net, cache, grad);

  const double eps = 1e-4;
  Rng pick(47);
  for (size_t l = 0; l < net.weights.size(); ++l) {
    for (int probe = 0; probe < 4; ++probe) {
      auto wi = static_cast<size_t>(
          pick.uniform_int(0, static_cast<int64_t>(net.weights[l].size()) - 1));
      auto perturbed = net;
      perturbed.weights[l][wi] += eps;
      double lp = loss_of(perturbed);
      perturbed.weights[l][wi] -= 2 * eps;
      double lm = loss_of(perturbed);
      double numeric = (lp - lm) / (2 * eps);
      double a = analytic.weights[l][wi];
      CHECK(std::fabs(a - numeric) <=
            1e-3 * std::max({std::fabs(a), std::fabs(numeric), 1e-6}));
    }
    auto bi = static_cast<size_t>(
        pick.uniform_int(0, static_cast<int64_t>(net.biases[l].size()) - 1));
    auto perturbed = net;
    perturbed.biases[l][bi] += eps;
    double lp = loss_of(perturbed);
    perturbed.biases[l][bi] -= 2 * eps;
    double lm = loss_of(perturbed);
    double numeric = (lp - lm) / (2 * eps);
    double a = analytic.biases[l][bi];
    CHECK(std::fabs(a - numeric) <=
          1e-3 * std::max({std::fabs(a), std::fabs(numeric), 1e-6}));
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  ModelConfig cfg;
  cfg.features = 4;
  auto net = make_network<float>(cfg, 3);
  const int n = 64;
  ForwardCache<float> cache;
  auto y = forward<float>(net, random_input(n, 1, 9), n, &cache);
  std::vector<float> zero(y.size(), 0.f);
  auto grads = backward<float>(net, cache, zero);
  for (const auto& w : grads.weights)
    for (float v : w) CHECK(v == 0.f);
  for (const auto& b : grads.biases)
    for (float v : b) CHECK(v == 0.f);
}

TEST_CASE("frozen blocks report exactly zero gradients") {
  ModelConfig cfg;
  cfg.features = 4;
  auto net = make_network<float>(cfg, 3);
  net.trainable[5] = 0;
  const int n = 64;
  ForwardCache<float> cache;
  auto y = forward<float>(net, random_input(n, 1, 9), n, &cache);
  std::vector<float> grad(y.size(), 1.f);
  auto grads = backward<float>(net, cache, grad);
  for (float v : grads.weights[5]) CHECK(v == 0.f);
  for (float v : grads.biases[5]) CHECK(v == 0.f);
  // a neighboring block still gets gradient signal
  bool any = false;
  for (float v : grads.weights[4])
    if (v != 0.f) any = true;
  CHECK(any);
}

TEST_CASE("model save/load round-trips bit-exactly") {
  ModelConfig cfg;
  cfg.features = 8;
  cfg.contraction = 8;
  auto net = make_network<float>(cfg, 13);
  auto dir = fs::temp_directory_path() / "stofnet_test_model";
  fs::remove_all(dir);
  save_model(net, dir);
  auto loaded = load_model(dir);

  CHECK(loaded.config == net.config);
  const int n = 256;
  auto x = random_input(n, 1, 17);
  CHECK(forward<float>(loaded, x, n) == forward<float>(net, x, n));

  // a different stored contraction surfaces through the loaded config
  CHECK(loaded.config.contraction == 8);

  // corrupted blob length
  auto blob_path = dir / "model.f32";
  auto size = fs::file_size(blob_path);
  fs::resize_file(blob_path, size - 4);
  CHECK_THROWS_AS(load_model(dir), FormatError);
}
