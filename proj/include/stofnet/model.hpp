#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stofnet/signal.hpp"

namespace stofnet {

struct ModelConfig {
  int features = 64;     // F: trunk feature channels
  int upsample = 4;      // R: output samples per input sample
  int contraction = 4;   // S: temporal contraction of the context block
  int in_channels = 1;   // C
  int k_first = 9;
  int k_mid = 7;
  int k_tail = 3;

  bool operator==(const ModelConfig&) const = default;
};

struct ConvSpec {
  std::string name;
  int in_ch = 1;
  int out_ch = 1;
  int kernel = 1;
  int stride = 1;
  bool relu = false;  // ReLU directly after this convolution

  long long weight_count() const {
    return static_cast<long long>(in_ch) * out_ch * kernel;
  }
  long long param_count() const { return weight_count() + out_ch; }
};

// The fixed 16-convolution layout: entry conv, contraction/expansion context
// pair, five residual pairs, two fusion convolutions and the upsampling
// head. Convolutions whose output feeds a residual add carry no ReLU.
std::vector<ConvSpec> layer_table(const ModelConfig& cfg);

long long count_parameters(const ModelConfig& cfg);

// Parameter container. Weight blocks are [out_ch][in_ch][k] row-major, one
// block per layer_table entry, biases separate. A constructed network is
// immutable during inference: concurrent forward() calls are safe; training
// mutates parameters under a single-writer contract.
template <class T>
struct NetworkT {
  ModelConfig config;
  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> biases;
  std::vector<uint8_t> trainable;  // per block; frozen blocks get zero grads
};

using Network = NetworkT<float>;

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
template <class T>
NetworkT<T> make_network(const ModelConfig& cfg, uint64_t seed);

template <class T>
NetworkT<T> zero_network(const ModelConfig& cfg);

template <class To, class From>
NetworkT<To> network_cast(const NetworkT<From>& src);

template <class T>
long long count_parameters(const NetworkT<T>& net);

// Channel-to-temporal interleave, (channels x length) -> (channels/r x
// length*r) with out[f][m*r + j] = in[f*r + j][m]. Bijective; r = 1 is the
// identity. channels must be divisible by r.
template <class T>
std::vector<T> sample_shuffle(std::span<const T> chmajor, int channels,
                              int length, int r);

// Exact inverse of sample_shuffle.
template <class T>
std::vector<T> sample_unshuffle(std::span<const T> chmajor, int channels,
                                int length, int r);

// Activations recorded during a forward pass, as needed for backward.
template <class T>
struct ForwardCache {
  int n = 0;
  std::vector<T> input;                       // C x N
  std::vector<T> a1;                          // F x N
  std::vector<T> a2;                          // F*S x N/S
  std::vector<T> a3;                          // F*S x N/S
  std::vector<T> ctx;                         // F x N, shuffle(a3) + a1
  std::array<std::vector<T>, 5> trunk_mid;    // post-ReLU block activations
  std::array<std::vector<T>, 5> trunk_out;    // block outputs t1..t5
  std::vector<T> fused;                       // L14 output + ctx
  std::vector<T> a15;                         // post-ReLU L15 output
};

// Maps a channel-major C x N input to the length N*R score vector.
// N must be divisible by the contraction factor.
template <class T>
std::vector<T> forward(const NetworkT<T>& net, std::span<const T> input,
                       int n, ForwardCache<T>* cache = nullptr);

std::vector<float> forward(const Network& net, const Frame& frame);

template <class T>
struct ParamGrads {
  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> biases;

  void accumulate(const ParamGrads& other);
  void scale(T factor);
};

template <class T>
ParamGrads<T> zero_grads(const ModelConfig& cfg);

// Gradients of a scalar loss with respect to every parameter block, given
// the upstream gradient on the score vector. Frozen blocks report zeros.
template <class T>
ParamGrads<T> backward(const NetworkT<T>& net, const ForwardCache<T>& cache,
                       std::span<const T> grad_scores);

// model.json (config + format_version) next to model.f32 (little-endian
// float32 blocks: weights then biases per layer, in table order).
void save_model(const Network& net, const std::filesystem::path& dir);
Network load_model(const std::filesystem::path& dir);

}  // namespace stofnet
