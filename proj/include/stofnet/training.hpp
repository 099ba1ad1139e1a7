#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stofnet/dataset.hpp"
#include "stofnet/model.hpp"

namespace stofnet {

struct TrainConfig {
  int batch_size = 4;
  double weight_decay = 1e-8;
  double lr_start = 5e-4;
  int max_epochs = 80;           // cosine annealing horizon
  double early_stop_delta = 1e-6;
  int early_stop_patience = 5;
  double lambda1 = 1e-2;         // L1 score regularization
  double sigma = 1.0;            // target-mask smoothing
  double noise_snr_db = 30.0;    // training-only augmentation; +inf disables
  uint64_t seed = 1;
};

struct LossBreakdown {
  double total = 0.0;
  double l2_term = 0.0;
  double l1_term = 0.0;
};

// Squared-error against the amplified mask plus lambda1-weighted L1 on the
// prediction, both summed over the N*R samples.
template <class T>
LossBreakdown loss(std::span<const T> prediction, const TargetMask& target,
                   double lambda1);

// Same, also writing dLoss/dprediction into grad (sign(0) taken as 0).
template <class T>
LossBreakdown loss_grad(std::span<const T> prediction,
                        const TargetMask& target, double lambda1,
                        std::span<T> grad);

// 0.5 * lr_start * (1 + cos(pi * step / total_steps)), clamped to the
// floor 0 past total_steps.
double cosine_lr(int step, int total_steps, double lr_start);

// True iff the best value seen has not improved by more than delta for
// `patience` consecutive entries (improvement of exactly delta does not
// count). Never true before entry patience+1.
bool early_stop(std::span<const double> val_history, double delta,
                int patience);

// AdamW with decoupled weight decay (beta1 0.9, beta2 0.999, eps 1e-8).
// One optimizer step spans begin_step() plus update() per block.
template <class T>
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void begin_step() { ++t_; }
  int steps() const { return t_; }

  void update(size_t block, std::vector<T>& param, const std::vector<T>& grad,
              double lr, double weight_decay);

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;  // per-block moments
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Network net;  // best-validation checkpoint
  std::vector<EpochStats> history;
};

// Per-step pipeline: normalize -> noise (30 dB default) -> crop-and-pad ->
// target mask -> forward -> loss -> backward -> AdamW with per-epoch cosine
// learning rate. Deterministic given config.seed; augmentation streams are
// derived per (epoch, frame index). Validation frames see neither noise nor
// cropping. Aborts with Error if the loss turns non-finite.
TrainResult train(const Network& initial,
                  const std::vector<LabeledFrame>& train_set,
                  const std::vector<LabeledFrame>& val_set,
                  const TrainConfig& cfg);

}  // namespace stofnet
