#include "stofnet/model.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "conv1d.hpp"
#include "io_util.hpp"
#include "stofnet/errors.hpp"
#include "stofnet/rng.hpp"

namespace stofnet {

namespace {

constexpr int kModelFormatVersion = 1;

void check_config(const ModelConfig& cfg) {
  if (cfg.features < 1 || cfg.upsample < 1 || cfg.contraction < 1 ||
      cfg.in_channels < 1)
    throw ConfigError("model dimensions must be >= 1");
  for (int k : {cfg.k_first, cfg.k_mid, cfg.k_tail})
    if (k < 1 || k % 2 == 0)
      throw ConfigError("kernel sizes must be odd and >= 1");
}

template <class T>
void relu_inplace(std::vector<T>& v) {
  for (T& x : v) x = std::max(x, T(0));
}

// grad *= (act > 0)
template <class T>
void relu_mask(std::vector<T>& grad, const std::vector<T>& act) {
  for (size_t i = 0; i < grad.size(); ++i)
    if (!(act[i] > T(0))) grad[i] = T(0);
}

template <class T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::vector<ConvSpec> layer_table(const ModelConfig& cfg) {
  check_config(cfg);
  const int f = cfg.features;
  const int s = cfg.contraction;
  std::vector<ConvSpec> t;
  t.push_back({"entry", cfg.in_channels, f, cfg.k_first, 1, true});
  t.push_back({"ctx_contract", f, f * s, cfg.k_mid, s, true});
  t.push_back({"ctx_expand", f * s, f * s, cfg.k_tail, 1, true});
  for (int b = 0; b < 5; ++b) {
    t.push_back({"res" + std::to_string(b + 1) + "_a", f, f, cfg.k_mid, 1, true});
    t.push_back({"res" + std::to_string(b + 1) + "_b", f, f, cfg.k_mid, 1, false});
  }
  t.push_back({"fuse_wide", f, f, cfg.k_mid, 1, false});  // long skip adds here
  t.push_back({"fuse_narrow", f, f, cfg.k_tail, 1, true});
  t.push_back({"head", f, cfg.upsample, cfg.k_tail, 1, false});
  return t;
}

long long count_parameters(const ModelConfig& cfg) {
  long long total = 0;
  for (const auto& spec : layer_table(cfg)) total += spec.param_count();
  return total;
}

template <class T>
NetworkT<T> zero_network(const ModelConfig& cfg) {
  NetworkT<T> net;
  net.config = cfg;
  for (const auto& spec : layer_table(cfg)) {
    net.weights.emplace_back(spec.weight_count(), T(0));
    net.biases.emplace_back(spec.out_ch, T(0));
    net.trainable.push_back(1);
  }
  return net;
}

template <class T>
NetworkT<T> make_network(const ModelConfig& cfg, uint64_t seed) {
  NetworkT<T> net = zero_network<T>(cfg);
  Rng rng(seed);
  const auto table = layer_table(cfg);
  for (size_t l = 0; l < table.size(); ++l) {
    double bound = std::sqrt(6.0 / (table[l].in_ch * table[l].kernel));
    for (T& w : net.weights[l])
      w = static_cast<T>(rng.uniform(-bound, bound));
  }
  return net;
}

template <class To, class From>
NetworkT<To> network_cast(const NetworkT<From>& src) {
  NetworkT<To> out;
  out.config = src.config;
  out.trainable = src.trainable;
  out.weights.reserve(src.weights.size());
  out.biases.reserve(src.biases.size());
  for (const auto& w : src.weights)
    out.weights.emplace_back(w.begin(), w.end());
  for (const auto& b : src.biases) out.biases.emplace_back(b.begin(), b.end());
  return out;
}

template <class T>
long long count_parameters(const NetworkT<T>& net) {
  long long total = 0;
  for (const auto& w : net.weights) total += static_cast<long long>(w.size());
  for (const auto& b : net.biases) total += static_cast<long long>(b.size());
  return total;
}

template <class T>
std::vector<T> sample_shuffle(std::span<const T> chmajor, int channels,
                              int length, int r) {
  if (r < 1) throw InvalidArgument("sample_shuffle: r must be >= 1");
  if (channels % r != 0)
    throw ShapeError("sample_shuffle: channels not divisible by r");
  if (chmajor.size() != static_cast<size_t>(channels) * length)
    throw ShapeError("sample_shuffle: buffer size mismatch");
  std::vector<T> out(chmajor.size());
  const int out_ch = channels / r;
  for (int f = 0; f < out_ch; ++f) {
    T* dst = out.data() + static_cast<size_t>(f) * length * r;
    for (int j = 0; j < r; ++j) {
      const T* src = chmajor.data() + static_cast<size_t>(f * r + j) * length;
      for (int m = 0; m < length; ++m) dst[static_cast<size_t>(m) * r + j] = src[m];
    }
  }
  return out;
}

template <class T>
std::vector<T> sample_unshuffle(std::span<const T> chmajor, int channels,
                                int length, int r) {
  if (r < 1) throw InvalidArgument("sample_unshuffle: r must be >= 1");
  if (length % r != 0)
    throw ShapeError("sample_unshuffle: length not divisible by r");
  if (chmajor.size() != static_cast<size_t>(channels) * length)
    throw ShapeError("sample_unshuffle: buffer size mismatch");
  std::vector<T> out(chmajor.size());
  const int m_len = length / r;
  for (int f = 0; f < channels; ++f) {
    const T* src = chmajor.data() + static_cast<size_t>(f) * length;
    for (int j = 0; j < r; ++j) {
      T* dst = out.data() + static_cast<size_t>(f * r + j) * m_len;
      for (int m = 0; m < m_len; ++m) dst[m] = src[static_cast<size_t>(m) * r + j];
    }
  }
  return out;
}

template <class T>
std::vector<T> forward(const NetworkT<T>& net, std::span<const T> input, int n,
                       ForwardCache<T>* cache) {
  const auto& cfg = net.config;
  const int f = cfg.features;
  const int s = cfg.contraction;
  if (n < 1) throw ShapeError("forward: empty input");
  if (n % s != 0)
    throw ShapeError("forward: N must be divisible by the contraction factor");
  if (input.size() != static_cast<size_t>(cfg.in_channels) * n)
    throw ShapeError("forward: input size does not match C x N");
  const auto table = layer_table(cfg);
  if (net.weights.size() != table.size())
    throw ShapeError("forward: network has wrong number of layers");

  ForwardCache<T> local;
  ForwardCache<T>& cc = cache ? *cache : local;
  cc.n = n;
  const int m = n / s;

  auto conv = [&](int layer, const std::vector<T>& x, int len) {
    const auto& spec = table[layer];
    std::vector<T> y(static_cast<size_t>(spec.out_ch) * (len / spec.stride));
    detail::conv1d_forward(spec.in_ch, spec.out_ch, spec.kernel, spec.stride,
                           net.weights[layer].data(), net.biases[layer].data(),
                           x.data(), len, y.data());
    return y;
  };

  cc.input.assign(input.begin(), input.end());

  cc.a1 = conv(0, cc.input, n);                       // entry, F x N
  relu_inplace(cc.a1);
  cc.a2 = conv(1, cc.a1, n);                          // contract, F*S x N/S
  relu_inplace(cc.a2);
  cc.a3 = conv(2, cc.a2, m);                          // expand, F*S x N/S
  relu_inplace(cc.a3);

  cc.ctx = sample_shuffle<T>(cc.a3, f * s, m, s);     // back to F x N
  add_into(cc.ctx, cc.a1);                            // context-block skip

  const std::vector<T>* t_in = &cc.ctx;
  for (int b = 0; b < 5; ++b) {
    cc.trunk_mid[b] = conv(3 + 2 * b, *t_in, n);
    relu_inplace(cc.trunk_mid[b]);
    cc.trunk_out[b] = conv(4 + 2 * b, cc.trunk_mid[b], n);
    add_into(cc.trunk_out[b], *t_in);                 // residual add
    t_in = &cc.trunk_out[b];
  }

  cc.fused = conv(13, *t_in, n);                      // fuse_wide
  add_into(cc.fused, cc.ctx);                         // long skip
  cc.a15 = conv(14, cc.fused, n);                     // fuse_narrow
  relu_inplace(cc.a15);

  auto head = conv(15, cc.a15, n);                    // R x N
  return sample_shuffle<T>(head, cfg.upsample, n, cfg.upsample);
}

std::vector<float> forward(const Network& net, const Frame& frame) {
  if (frame.channels != net.config.in_channels)
    throw ShapeError("forward: frame channels do not match the model");
  return forward<float>(net, frame.samples, frame.length());
}

template <class T>
void ParamGrads<T>::accumulate(const ParamGrads<T>& other) {
  for (size_t l = 0; l < weights.size(); ++l) {
    add_into(weights[l], other.weights[l]);
    add_into(biases[l], other.biases[l]);
  }
}

template <class T>
void ParamGrads<T>::scale(T factor) {
  for (auto& w : weights)
    for (T& v : w) v *= factor;
  for (auto& b : biases)
    for (T& v : b) v *= factor;
}

template <class T>
ParamGrads<T> zero_grads(const ModelConfig& cfg) {
  ParamGrads<T> g;
  for (const auto& spec : layer_table(cfg)) {
    g.weights.emplace_back(spec.weight_count(), T(0));
    g.biases.emplace_back(spec.out_ch, T(0));
  }
  return g;
}

template <class T>
ParamGrads<T> backward(const NetworkT<T>& net, const ForwardCache<T>& cache,
                       std::span<const T> grad_scores) {
  const auto& cfg = net.config;
  const int n = cache.n;
  const int f = cfg.features;
  const int s = cfg.contraction;
  const int m = n / s;
  if (grad_scores.size() != static_cast<size_t>(n) * cfg.upsample)
    throw ShapeError("backward: gradient length must be N*R");

  const auto table = layer_table(cfg);
  ParamGrads<T> g = zero_grads<T>(cfg);

  auto conv_bwd = [&](int layer, const std::vector<T>& x,
                      const std::vector<T>& dy, int len, std::vector<T>* dx) {
    const auto& spec = table[layer];
    detail::conv1d_backward(spec.in_ch, spec.out_ch, spec.kernel, spec.stride,
                            net.weights[layer].data(), x.data(), dy.data(),
                            len, g.weights[layer].data(),
                            g.biases[layer].data(), dx ? dx->data() : nullptr);
  };
  auto zeros = [](size_t count) { return std::vector<T>(count, T(0)); };

  // head shuffle undone, then the two fusion convolutions
  auto d_head = sample_unshuffle<T>(grad_scores, 1, n * cfg.upsample, cfg.upsample);
  auto d_a15 = zeros(static_cast<size_t>(f) * n);
  conv_bwd(15, cache.a15, d_head, n, &d_a15);
  relu_mask(d_a15, cache.a15);

  auto d_fused = zeros(static_cast<size_t>(f) * n);
  conv_bwd(14, cache.fused, d_a15, n, &d_fused);

  auto d_ctx = d_fused;  // long-skip branch
  auto d_t = zeros(static_cast<size_t>(f) * n);
  conv_bwd(13, cache.trunk_out[4], d_fused, n, &d_t);

  for (int b = 4; b >= 0; --b) {
    const std::vector<T>& t_in = b == 0 ? cache.ctx : cache.trunk_out[b - 1];
    auto d_mid = zeros(static_cast<size_t>(f) * n);
    conv_bwd(4 + 2 * b, cache.trunk_mid[b], d_t, n, &d_mid);
    relu_mask(d_mid, cache.trunk_mid[b]);
    // residual pass-through keeps d_t and adds the branch gradient
    conv_bwd(3 + 2 * b, t_in, d_mid, n, &d_t);
  }
  add_into(d_ctx, d_t);

  // context block: skip into a1 plus the shuffled expand path
  auto d_a3 = sample_unshuffle<T>(d_ctx, f, n, s);
  relu_mask(d_a3, cache.a3);
  auto d_a2 = zeros(static_cast<size_t>(f) * s * m);
  conv_bwd(2, cache.a2, d_a3, m, &d_a2);
  relu_mask(d_a2, cache.a2);
  auto d_a1 = d_ctx;
  conv_bwd(1, cache.a1, d_a2, n, &d_a1);
  relu_mask(d_a1, cache.a1);
  conv_bwd(0, cache.input, d_a1, n, nullptr);

  for (size_t l = 0; l < table.size(); ++l) {
    if (!net.trainable[l]) {
      std::fill(g.weights[l].begin(), g.weights[l].end(), T(0));
      std::fill(g.biases[l].begin(), g.biases[l].end(), T(0));
    }
  }
  return g;
}

void save_model(const Network& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = net.config;
  nlohmann::json j{{"format_version", kModelFormatVersion},
                   {"config",
                    {{"features", cfg.features},
                     {"upsample", cfg.upsample},
                     {"contraction", cfg.contraction},
                     {"in_channels", cfg.in_channels},
                     {"k_first", cfg.k_first},
                     {"k_mid", cfg.k_mid},
                     {"k_tail", cfg.k_tail}}}};
  detail::write_json(dir / "model.json", j);

  std::vector<float> blob;
  blob.reserve(count_parameters(net));
  for (size_t l = 0; l < net.weights.size(); ++l) {
    blob.insert(blob.end(), net.weights[l].begin(), net.weights[l].end());
    blob.insert(blob.end(), net.biases[l].begin(), net.biases[l].end());
  }
  detail::write_bytes(dir / "model.f32", blob.data(),
                      blob.size() * sizeof(float));
}

Network load_model(const std::filesystem::path& dir) {
  auto j = detail::read_json(dir / "model.json");
  int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format_version " +
                      std::to_string(version));
  ModelConfig cfg;
  const auto& jc = j.at("config");
  jc.at("features").get_to(cfg.features);
  jc.at("upsample").get_to(cfg.upsample);
  jc.at("contraction").get_to(cfg.contraction);
  jc.at("in_channels").get_to(cfg.in_channels);
  jc.at("k_first").get_to(cfg.k_first);
  jc.at("k_mid").get_to(cfg.k_mid);
  jc.at("k_tail").get_to(cfg.k_tail);

  Network net = zero_network<float>(cfg);
  auto blob = detail::read_f32(
      dir / "model.f32", static_cast<size_t>(count_parameters(cfg)));
  size_t pos = 0;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    std::copy_n(blob.begin() + pos, net.weights[l].size(),
                net.weights[l].begin());
    pos += net.weights[l].size();
    std::copy_n(blob.begin() + pos, net.biases[l].size(),
                net.biases[l].begin());
    pos += net.biases[l].size();
  }
  return net;
}

// the float path trains and infers; the double path backs gradient checks
template NetworkT<float> zero_network<float>(const ModelConfig&);
template NetworkT<double> zero_network<double>(const ModelConfig&);
template NetworkT<float> make_network<float>(const ModelConfig&, uint64_t);
template NetworkT<double> make_network<double>(const ModelConfig&, uint64_t);
template NetworkT<double> network_cast<double, float>(const NetworkT<float>&);
template NetworkT<float> network_cast<float, double>(const NetworkT<double>&);
template long long count_parameters<float>(const NetworkT<float>&);
template long long count_parameters<double>(const NetworkT<double>&);
template std::vector<float> sample_shuffle<float>(std::span<const float>, int,
                                                  int, int);
template std::vector<double> sample_shuffle<double>(std::span<const double>,
                                                    int, int, int);
template std::vector<float> sample_unshuffle<float>(std::span<const float>,
                                                    int, int, int);
template std::vector<double> sample_unshuffle<double>(std::span<const double>,
                                                      int, int, int);
template std::vector<float> forward<float>(const NetworkT<float>&,
                                           std::span<const float>, int,
                                           ForwardCache<float>*);
template std::vector<double> forward<double>(const NetworkT<double>&,
                                             std::span<const double>, int,
                                             ForwardCache<double>*);
template struct ParamGrads<float>;
template struct ParamGrads<double>;
template ParamGrads<float> zero_grads<float>(const ModelConfig&);
template ParamGrads<double> zero_grads<double>(const ModelConfig&);
template ParamGrads<float> backward<float>(const NetworkT<float>&,
                                           const ForwardCache<float>&,
                                           std::span<const float>);
template ParamGrads<double> backward<double>(const NetworkT<double>&,
                                             const ForwardCache<double>&,
                                             std::span<const double>);

}  // namespace stofnet
