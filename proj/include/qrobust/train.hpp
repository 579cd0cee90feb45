#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "qrobust/data.hpp"
#include "qrobust/model.hpp"
#include "qrobust/rng.hpp"

namespace qrobust::train {

enum class OptimizerKind {
  /// Adam for Pure mode, SPSA for Mixed mode.
  Auto,
  Adam,
  Spsa,
};

struct TrainConfig {
  double lr = 0.001;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double label_smoothing = 0.0;
  OptimizerKind optimizer = OptimizerKind::Auto;
  double spsa_step = 0.01;
  double spsa_perturb = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Percentages in [0, 100].
struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

/// (1 - alpha) * onehot + alpha / C
std::vector<double> smooth_labels(std::span<const double> onehot, double alpha);
std::vector<double> one_hot(std::size_t label, std::size_t n_classes);

/// -sum_i t_i log softmax(logits)_i, evaluated with log-sum-exp.
double cross_entropy(std::span<const double> logits, std::span<const double> target);
/// Also writes dCE/dlogits = softmax * sum(t) - t.
double cross_entropy(std::span<const double> logits, std::span<const double> target, std::span<double> grad);

model::LossFn cross_entropy_loss(std::vector<double> target);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

struct AdamHyper {
  double lr = 0.001;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Decoupled weight decay (theta *= 1 - lr * wd) followed by a bias-corrected Adam step.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
};

/// Optimizer state that persists across epochs.
struct Trainer {
  TrainConfig config;
  AdamState adam;
  Rng shuffle_rng;
  Rng spsa_rng;

  explicit Trainer(TrainConfig cfg);
};

/// One pass of mini-batch training over a seeded shuffle. Per-sample losses
/// are weighted and normalized by the batch weight mass; batches with zero
/// mass leave the model untouched.
EpochStats train_epoch(model::Classifier& model, const data::Dataset& dataset, std::span<const double> sample_weights,
                       Trainer& trainer, const model::EvalMode& mode);

/// Unweighted per-sample cross-entropy under `mode` (smoothed targets if configured).
std::vector<double> per_sample_losses(const model::Classifier& model, const data::Dataset& dataset,
                                      const model::EvalMode& mode, double label_smoothing = 0.0);

std::vector<std::size_t> predict_all(const model::Classifier& model, const data::Dataset& dataset,
                                     const model::EvalMode& mode);

Metrics compute_metrics(std::span<const int> truth, std::span<const std::size_t> predicted, std::size_t n_classes);
Metrics evaluate(const model::Classifier& model, const data::Dataset& dataset, const model::EvalMode& mode);

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::vector<double> test_accuracy;  // per epoch, when a test set is given
};

/// Full training run with all-ones weights. Writes one log line per epoch
/// ("epoch\ttrain_loss\ttest_acc") when `log` is non-null.
TrainResult fit(model::Classifier& model, const data::Dataset& train_set, const TrainConfig& config,
                const model::EvalMode& mode, const data::Dataset* test_set = nullptr, std::ostream* log = nullptr);

}  // namespace qrobust::train
