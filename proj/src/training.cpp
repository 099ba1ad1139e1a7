#include "stofnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stofnet/errors.hpp"
#include "stofnet/parallel.hpp"
#include "stofnet/rng.hpp"

namespace stofnet {

namespace {

// training seed streams: per-epoch shuffle, per-(epoch, frame) noise/crop
constexpr uint64_t kShuffleStream = 0x10ull << 56;
constexpr uint64_t kNoiseStream = 0x20ull << 56;
constexpr uint64_t kCropStream = 0x30ull << 56;

uint64_t frame_stream(uint64_t tag, int epoch, int frame_index) {
  return tag + (static_cast<uint64_t>(epoch) << 28) +
         static_cast<uint64_t>(frame_index);
}

template <class T>
LossBreakdown loss_impl(std::span<const T> prediction, const TargetMask& target,
                        double lambda1, std::span<T> grad) {
  if (prediction.size() != target.values.size())
    throw ShapeError("loss: prediction and target lengths differ");
  if (!grad.empty() && grad.size() != prediction.size())
    throw ShapeError("loss: gradient buffer length differs");
  double l2 = 0.0, l1 = 0.0;
  for (size_t i = 0; i < prediction.size(); ++i) {
    const double p = prediction[i];
    const double d = p - target.values[i];
    l2 += d * d;
    l1 += std::fabs(p);
    if (!grad.empty()) {
      double sign = p > 0.0 ? 1.0 : (p < 0.0 ? -1.0 : 0.0);
      grad[i] = static_cast<T>(2.0 * d + lambda1 * sign);
    }
  }
  l1 *= lambda1;
  return {l2 + l1, l2, l1};
}

}  // namespace

template <class T>
LossBreakdown loss(std::span<const T> prediction, const TargetMask& target,
                   double lambda1) {
  return loss_impl<T>(prediction, target, lambda1, {});
}

template <class T>
LossBreakdown loss_grad(std::span<const T> prediction, const TargetMask& target,
                        double lambda1, std::span<T> grad) {
  return loss_impl<T>(prediction, target, lambda1, grad);
}

double cosine_lr(int step, int total_steps, double lr_start) {
  if (step < 0) throw InvalidArgument("cosine_lr: negative step");
  if (total_steps < 1 || step >= total_steps) return 0.0;
  return 0.5 * lr_start * (1.0 + std::cos(M_PI * step / total_steps));
}

bool early_stop(std::span<const double> val_history, double delta,
                int patience) {
  if (val_history.empty())
    throw InvalidArgument("early_stop: empty history");
  if (patience < 1) throw InvalidArgument("early_stop: patience must be >= 1");
  double best = val_history[0];
  int stall = 0;
  for (size_t i = 1; i < val_history.size(); ++i) {
    if (best - val_history[i] > delta) {  // improvement of exactly delta
      best = val_history[i];              // does not reset the counter
      stall = 0;
    } else {
      ++stall;
    }
  }
  return stall >= patience;
}

template <class T>
void AdamW<T>::update(size_t block, std::vector<T>& param,
                      const std::vector<T>& grad, double lr,
                      double weight_decay) {
  if (param.size() != grad.size())
    throw ShapeError("AdamW: parameter/gradient size mismatch");
  if (t_ < 1) throw Error("AdamW: update() before begin_step()");
  if (block >= m_.size()) {
    m_.resize(block + 1);
    v_.resize(block + 1);
  }
  auto& m = m_[block];
  auto& v = v_[block];
  if (m.empty()) {
    m.assign(param.size(), 0.0);
    v.assign(param.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < param.size(); ++i) {
    const double gi = grad[i];
    m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
    v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    const double p = param[i];
    param[i] = static_cast<T>(p - lr * (mhat / (std::sqrt(vhat) + eps_) +
                                        weight_decay * p));
  }
}

namespace {

struct FrameResult {
  double loss = 0.0;
  ParamGrads<float> grads;
};

// normalize -> noise -> crop -> mask -> forward -> loss/backward
FrameResult train_step_frame(const Network& net, const LabeledFrame& lf,
                             const TrainConfig& cfg, uint64_t noise_seed,
                             uint64_t crop_seed) {
  bool all_zero = false;
  LabeledFrame work;
  work.frame = normalize_amplitude(lf.frame, &all_zero);
  work.truth_positions = lf.truth_positions;
  if (!all_zero && std::isfinite(cfg.noise_snr_db))
    work.frame = add_noise_snr(work.frame, cfg.noise_snr_db, noise_seed);
  work = random_crop_pad(work, crop_seed);

  const int n = work.frame.length();
  TargetMask mask = make_target_mask(work.truth_positions, n,
                                     net.config.upsample, cfg.sigma);

  ForwardCache<float> cache;
  auto scores = forward<float>(net, work.frame.samples, n, &cache);
  std::vector<float> grad(scores.size());
  LossBreakdown lb = loss_grad<float>(scores, mask, cfg.lambda1, grad);

  FrameResult out;
  out.loss = lb.total;
  out.grads = backward<float>(net, cache, grad);
  return out;
}

double validation_loss(const Network& net,
                       const std::vector<LabeledFrame>& val_set,
                       const TrainConfig& cfg) {
  std::vector<double> losses(val_set.size(), 0.0);
  parallel_for(static_cast<int>(val_set.size()), [&](int i) {
    Frame f = normalize_amplitude(val_set[i].frame);
    TargetMask mask =
        make_target_mask(val_set[i].truth_positions, f.length(),
                         net.config.upsample, cfg.sigma);
    auto scores = forward<float>(net, f.samples, f.length());
    losses[i] = loss<float>(scores, mask, cfg.lambda1).total;
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

}  // namespace

TrainResult train(const Network& initial,
                  const std::vector<LabeledFrame>& train_set,
                  const std::vector<LabeledFrame>& val_set,
                  const TrainConfig& cfg) {
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  if (cfg.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (cfg.max_epochs < 0) throw InvalidArgument("train: negative max_epochs");

  TrainResult result;
  result.net = initial;
  if (cfg.max_epochs == 0) return result;

  Network net = initial;
  AdamW<float> optimizer;
  const int n_train = static_cast<int>(train_set.size());

  Network best = net;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> val_history;

  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr_start);

    // Fisher-Yates with the fixed-algorithm Rng keeps the order reproducible
    Rng shuffle_rng(split_seed(cfg.seed, kShuffleStream + epoch));
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    double epoch_loss = 0.0;
    for (int b0 = 0; b0 < n_train; b0 += cfg.batch_size) {
      const int batch = std::min(cfg.batch_size, n_train - b0);
      std::vector<FrameResult> results(batch);
      parallel_for(batch, [&](int i) {
        const int idx = order[b0 + i];
        results[i] = train_step_frame(
            net, train_set[idx], cfg,
            split_seed(cfg.seed, frame_stream(kNoiseStream, epoch, idx)),
            split_seed(cfg.seed, frame_stream(kCropStream, epoch, idx)));
      });

      // mean over the batch, accumulated in index order
      ParamGrads<float> grads = std::move(results[0].grads);
      double batch_loss = results[0].loss;
      for (int i = 1; i < batch; ++i) {
        grads.accumulate(results[i].grads);
        batch_loss += results[i].loss;
      }
      grads.scale(1.0f / static_cast<float>(batch));
      batch_loss /= batch;
      epoch_loss += batch_loss * batch;

      if (!std::isfinite(batch_loss))
        throw Error("training diverged: non-finite loss at epoch " +
                    std::to_string(epoch));

      optimizer.begin_step();
      for (size_t l = 0; l < net.weights.size(); ++l) {
        if (!net.trainable[l]) continue;
        optimizer.update(2 * l, net.weights[l], grads.weights[l], lr,
                         cfg.weight_decay);
        optimizer.update(2 * l + 1, net.biases[l], grads.biases[l], lr,
                         cfg.weight_decay);
      }
    }
    epoch_loss /= n_train;

    double val = val_set.empty() ? epoch_loss
                                 : validation_loss(net, val_set, cfg);
    result.history.push_back({epoch_loss, val, lr});
    val_history.push_back(val);

    if (val < best_val) {
      best_val = val;
      best = net;
    }
    if (early_stop(val_history, cfg.early_stop_delta, cfg.early_stop_patience))
      break;
  }

  result.net = std::move(best);
  return result;
}

template LossBreakdown loss<float>(std::span<const float>, const TargetMask&,
                                   double);
template LossBreakdown loss<double>(std::span<const double>, const TargetMask&,
                                    double);
template LossBreakdown loss_grad<float>(std::span<const float>,
                                        const TargetMask&, double,
                                        std::span<float>);
template LossBreakdown loss_grad<double>(std::span<const double>,
                                         const TargetMask&, double,
                                         std::span<double>);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace stofnet
