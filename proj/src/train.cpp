#include "qrobust/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "qrobust/parallel.hpp"

namespace qrobust::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("label smoothing must be in [0, 1)");
  }
  if (!(spsa_perturb > 0.0)) throw std::invalid_argument("SPSA perturbation must be positive");
  if (!(spsa_step > 0.0)) throw std::invalid_argument("SPSA step must be positive");
}

std::vector<double> smooth_labels(std::span<const double> onehot, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("label smoothing must be in [0, 1)");
  if (onehot.empty()) throw std::invalid_argument("label vector is empty");
  const double uniform_mass = alpha / static_cast<double>(onehot.size());
  std::vector<double> out(onehot.size());
  for (std::size_t i = 0; i < onehot.size(); ++i) out[i] = (1.0 - alpha) * onehot[i] + uniform_mass;
  return out;
}

std::vector<double> one_hot(std::size_t label, std::size_t n_classes) {
  if (label >= n_classes) throw std::out_of_range("label out of range");
  std::vector<double> v(n_classes, 0.0);
  v[label] = 1.0;
  return v;
}

namespace {

double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  return m + std::log(s);
}

}  // namespace

double cross_entropy(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size() || logits.empty()) throw std::invalid_argument("cross_entropy shape mismatch");
  const double lse = log_sum_exp(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (target[i] != 0.0) loss -= target[i] * (logits[i] - lse);
  }
  return loss;
}

double cross_entropy(std::span<const double> logits, std::span<const double> target, std::span<double> grad) {
  const double loss = cross_entropy(logits, target);
  const double lse = log_sum_exp(logits);
  const double mass = std::accumulate(target.begin(), target.end(), 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - lse) * mass - target[i];
  return loss;
}

model::LossFn cross_entropy_loss(std::vector<double> target) {
  return [target = std::move(target)](std::span<const double> logits, std::span<double> grad) {
    return cross_entropy(logits, target, grad);
  };
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamHyper& hyper) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer state size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= hyper.lr * hyper.weight_decay * params[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

Trainer::Trainer(TrainConfig cfg)
    : config(cfg), shuffle_rng(make_stream(cfg.seed, "shuffle")), spsa_rng(make_stream(cfg.seed, "spsa")) {
  config.validate();
}

EpochStats train_epoch(model::Classifier& model, const data::Dataset& dataset, std::span<const double> sample_weights,
                       Trainer& trainer, const model::EvalMode& mode) {
  if (dataset.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (sample_weights.size() != dataset.size()) throw std::invalid_argument("one weight per sample is required");
  const auto& cfg = trainer.config;
  const bool use_spsa = cfg.optimizer == OptimizerKind::Spsa || (cfg.optimizer == OptimizerKind::Auto && !mode.is_pure());
  if (!use_spsa && !mode.is_pure()) throw std::invalid_argument("Adam needs exact gradients; use SPSA under noise");

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(trainer.shuffle_rng, i)]);

  std::vector<std::vector<double>> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    targets[i] = smooth_labels(one_hot(static_cast<std::size_t>(dataset.labels[i]), dataset.n_classes),
                               cfg.label_smoothing);
  }

  const std::size_t p = model.n_params();
  const AdamHyper hyper{cfg.lr, cfg.weight_decay};
  double loss_sum = 0.0;
  double mass_sum = 0.0;
  std::vector<double> grad(p);
  std::vector<std::vector<double>> sample_grads;
  std::vector<double> sample_loss;

  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t end = std::min(n, start + cfg.batch_size);
    const std::size_t b = end - start;
    double mass = 0.0;
    for (std::size_t k = start; k < end; ++k) mass += sample_weights[order[k]];
    if (!(mass > 0.0)) continue;

    if (use_spsa) {
      std::vector<model::Sample> batch;
      batch.reserve(b);
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        batch.push_back({dataset.row(i), targets[i], sample_weights[i]});
      }
      loss_sum += model::batch_loss(model, batch, mode) * mass;
      const auto g = model::spsa_grad(model, batch, mode, cfg.spsa_perturb, trainer.spsa_rng);
      auto params = model.mutable_params();
      for (std::size_t j = 0; j < p; ++j) params[j] -= cfg.spsa_step * g[j];
    } else {
      sample_grads.assign(b, std::vector<double>(p, 0.0));
      sample_loss.assign(b, 0.0);
      parallel_for(b, [&](std::size_t k) {
        const auto i = order[start + k];
        if (sample_weights[i] == 0.0) return;
        sample_loss[k] = model.loss_and_grad(dataset.row(i), cross_entropy_loss(targets[i]), sample_grads[k],
                                             model::GradMethod::Adjoint);
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = 0; k < b; ++k) {
        const double w = sample_weights[order[start + k]];
        if (w == 0.0) continue;
        loss_sum += w * sample_loss[k];
        for (std::size_t j = 0; j < p; ++j) grad[j] += w * sample_grads[k][j];
      }
      for (auto& g : grad) g /= mass;
      adam_step(model.mutable_params(), grad, trainer.adam, hyper);
    }
    mass_sum += mass;
  }
  return {0, mass_sum > 0.0 ? loss_sum / mass_sum : 0.0};
}

std::vector<double> per_sample_losses(const model::Classifier& model, const data::Dataset& dataset,
                                      const model::EvalMode& mode, double label_smoothing) {
  std::vector<double> losses(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const auto target = smooth_labels(one_hot(static_cast<std::size_t>(dataset.labels[i]), dataset.n_classes),
                                      label_smoothing);
    losses[i] = cross_entropy(model.forward(dataset.row(i), mode), target);
  });
  return losses;
}

std::vector<std::size_t> predict_all(const model::Classifier& model, const data::Dataset& dataset,
                                     const model::EvalMode& mode) {
  std::vector<std::size_t> preds(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) { preds[i] = model::predict(model, dataset.row(i), mode); });
  return preds;
}

Metrics compute_metrics(std::span<const int> truth, std::span<const std::size_t> predicted, std::size_t n_classes) {
  if (truth.empty()) throw std::invalid_argument("cannot score an empty prediction set");
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth/prediction length mismatch");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = predicted[i];
    if (t >= n_classes || p >= n_classes) throw std::out_of_range("label out of range in metrics");
    if (t == p) {
      ++correct;
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  const double total = static_cast<double>(truth.size());
  double f1_sum = 0.0, fpr_sum = 0.0, fnr_sum = 0.0;
  std::size_t f1_n = 0, fpr_n = 0, fnr_n = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double support = static_cast<double>(tp[c] + fn[c]);
    const double negatives = total - support;
    const double tn = negatives - static_cast<double>(fp[c]);
    if (tp[c] + fp[c] + fn[c] > 0) {
      f1_sum += 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fn[c]);
      ++f1_n;
    }
    if (support > 0) {
      fnr_sum += fn[c] / support;
      ++fnr_n;
    }
    if (negatives > 0) {
      fpr_sum += fp[c] / (fp[c] + tn);
      ++fpr_n;
    }
  }
  Metrics m;
  m.accuracy = 100.0 * static_cast<double>(correct) / total;
  m.macro_f1 = f1_n ? 100.0 * f1_sum / static_cast<double>(f1_n) : 0.0;
  m.fpr = fpr_n ? 100.0 * fpr_sum / static_cast<double>(fpr_n) : 0.0;
  m.fnr = fnr_n ? 100.0 * fnr_sum / static_cast<double>(fnr_n) : 0.0;
  return m;
}

Metrics evaluate(const model::Classifier& model, const data::Dataset& dataset, const model::EvalMode& mode) {
  if (dataset.empty()) throw std::invalid_argument("cannot evaluate on an empty dataset");
  const auto preds = predict_all(model, dataset, mode);
  return compute_metrics(dataset.labels, preds, dataset.n_classes);
}

TrainResult fit(model::Classifier& model, const data::Dataset& train_set, const TrainConfig& config,
                const model::EvalMode& mode, const data::Dataset* test_set, std::ostream* log) {
  Trainer trainer(config);
  const std::vector<double> weights(train_set.size(), 1.0);
  TrainResult result;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    auto stats = train_epoch(model, train_set, weights, trainer, mode);
    stats.epoch = e + 1;
    result.epochs.push_back(stats);
    double acc = -1.0;
    if (test_set != nullptr) {
      acc = evaluate(model, *test_set, mode).accuracy;
      result.test_accuracy.push_back(acc);
    }
    if (log != nullptr) *log << stats.epoch << '\t' << stats.train_loss << '\t' << acc << '\n';
  }
  return result;
}

}  // namespace qrobust::train
