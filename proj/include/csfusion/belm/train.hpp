#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "csfusion/belm/model.hpp"
#include "csfusion/error.hpp"
#include "csfusion/rng.hpp"

namespace csfusion::belm {

struct TrainingPair {
  BelmInput input;
  Utterance target;
};

/// Linear warmup to `peak_lr` over `warmup_steps`, then inverse square-root
/// decay. `step` counts from 1.
inline double learning_rate(const BelmConfig& c, std::uint64_t step) {
  if (c.warmup_steps == 0) return c.peak_lr;
  const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
  const double w = static_cast<double>(c.warmup_steps);
  return s <= w ? c.peak_lr * s / w : c.peak_lr * std::sqrt(w / s);
}

/// Adam with bias correction.
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param<T>*>& params, double lr) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const T rate = static_cast<T>(lr);
    const T eps = static_cast<T>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto g = params[i]->grad.array();
      auto m = m_[i].array();
      auto v = v_[i].array();
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.square();
      params[i]->value.array() -= rate * (m / c1) / ((v / c2).sqrt() + eps);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Mat<T>> m_, v_;
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Param<T>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::uint64_t steps = 0;
  double mean_loss = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  /// Stop after this many optimizer steps in total (0: no limit).
  std::uint64_t max_steps = 0;
  /// Called after every epoch; returning false stops training.
  std::function<bool(const EpochStats&)> on_epoch;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> step_loss;
  std::uint64_t steps = 0;
};

/// Teacher-forcing training with Adam, warmup schedule and gradient clipping.
/// Deterministic for a fixed model seed: epoch e shuffles with stream e and
/// step s draws dropout from stream s.
template <typename T>
TrainResult train(BelmModel<T>& model, const std::vector<TrainingPair>& pairs,
                  const TrainOptions& options) {
  TrainResult result;
  if (options.epochs == 0) return result;
  if (pairs.empty()) throw Error(ErrorKind::kEmptyTrainingSet, "no training pairs");
  if (options.batch_size == 0) {
    throw Error(ErrorKind::kInvalidArgument, "batch_size must be positive");
  }
  for (const auto& p : pairs) model.check_lengths(p.input, p.target.size() + 1);

  const BelmConfig& cfg = model.config();
  AdamOptimizer<T> adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const auto params = model.parameters();
  std::vector<std::size_t> order(pairs.size());

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::derive(cfg.seed, epoch, 0x73687566);
    shuffle.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool stop = false;
    for (std::size_t first = 0; first < order.size(); first += options.batch_size) {
      const std::size_t last = std::min(order.size(), first + options.batch_size);
      std::vector<std::pair<const BelmInput*, const Utterance*>> items;
      for (std::size_t i = first; i < last; ++i) {
        items.emplace_back(&pairs[order[i]].input, &pairs[order[i]].target);
      }
      const PackedBatch batch = pack_training(items, cfg.positions);

      const std::uint64_t step = model.steps() + 1;
      Rng dropout_rng = Rng::derive(cfg.seed, step, 0x64726f70);
      const double loss = static_cast<double>(
          model.loss_and_grad(batch, DropoutContext{&dropout_rng, cfg.dropout}));
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::kInvalidConfig,
                    "non-finite loss at step " + std::to_string(step));
      }
      clip_grad_norm(params, cfg.grad_clip);
      adam.step(params, learning_rate(cfg, step));
      model.set_steps(step);
      for (const auto* p : params) {
        if (!p->value.allFinite()) {
          throw Error(ErrorKind::kInvalidConfig,
                      "non-finite parameters after step " + std::to_string(step));
        }
      }

      result.step_loss.push_back(loss);
      loss_sum += loss;
      ++batches;
      ++result.steps;
      if (options.max_steps && result.steps >= options.max_steps) {
        stop = true;
        break;
      }
    }
    EpochStats stats{epoch, model.steps(), loss_sum / static_cast<double>(batches)};
    result.epoch_loss.push_back(stats.mean_loss);
    if (stop) break;
    if (options.on_epoch && !options.on_epoch(stats)) break;
  }
  return result;
}

}  // namespace csfusion::belm
