#include "qrobust/defend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace qrobust::defend {

void QDetectConfig::validate() const {
  if (!(wan_lr >= 0.0 && wan_lr <= 1.0)) throw std::invalid_argument("qdetect learning rate must be in [0, 1]");
  if (!(anneal_coeff >= 0.0)) throw std::invalid_argument("annealing coefficient must be non-negative");
  if (!(beta_lo > 0.0 && beta_lo <= beta_hi)) throw std::invalid_argument("inverse temperature range must be ascending");
  if (sweeps < 1) throw std::invalid_argument("annealing needs at least one sweep");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw std::invalid_argument("keep fraction must be in (0, 1]");
}

double mask_energy(std::span<const std::uint8_t> mask, std::span<const double> losses, double alpha,
                   double keep_fraction) {
  if (mask.size() != losses.size()) throw std::invalid_argument("mask/loss length mismatch");
  double loss = 0.0;
  double kept = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      loss += losses[i];
      kept += 1.0;
    }
  }
  const double excess = kept - keep_fraction * static_cast<double>(mask.size());
  return loss + alpha * excess * excess;
}

AnnealResult anneal_mask(std::span<const double> losses, const QDetectConfig& config, Rng& rng) {
  config.validate();
  if (losses.empty()) throw std::invalid_argument("qdetect needs at least one loss");
  for (double l : losses) {
    if (!std::isfinite(l)) throw std::invalid_argument("qdetect losses must be finite");
  }
  const std::size_t n = losses.size();
  const double target = config.keep_fraction * static_cast<double>(n);
  const double alpha = config.anneal_coeff;

  std::vector<std::uint8_t> mask(n, 1);
  double kept = static_cast<double>(n);
  double energy = mask_energy(mask, losses, alpha, config.keep_fraction);
  AnnealResult best{mask, energy};

  for (std::size_t s = 0; s < config.sweeps; ++s) {
    const double frac = config.sweeps > 1 ? static_cast<double>(s) / static_cast<double>(config.sweeps - 1) : 1.0;
    const double beta = config.beta_lo + (config.beta_hi - config.beta_lo) * frac;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = mask[i] ? -1.0 : 1.0;
      const double delta = d * losses[i] + alpha * (2.0 * d * (kept - target) + 1.0);
      if (delta <= 0.0 || uniform01(rng) < std::exp(-beta * delta)) {
        mask[i] ^= 1;
        kept += d;
        energy += delta;
        if (energy < best.energy) {
          best.mask = mask;
          best.energy = energy;
        }
      }
    }
  }
  // Recompute rather than trust the accumulated deltas.
  best.energy = mask_energy(best.mask, losses, alpha, config.keep_fraction);
  return best;
}

std::vector<double> qdetect_weights(std::span<const double> losses, std::span<const double> prev_weights,
                                    const QDetectConfig& config, Rng& rng) {
  if (prev_weights.size() != losses.size()) throw std::invalid_argument("one previous weight per loss is required");
  const auto result = anneal_mask(losses, config, rng);
  std::vector<double> w(losses.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = (1.0 - config.wan_lr) * prev_weights[i] + config.wan_lr * result.mask[i];
    w[i] = std::clamp(v, 0.0, 1.0);
  }
  return w;
}

DefendedRun defended_train(model::Classifier& model, const data::Dataset& dataset, const train::TrainConfig& train_config,
                           const QDetectConfig& qdetect_config, const model::EvalMode& mode) {
  qdetect_config.validate();
  train::Trainer trainer(train_config);
  Rng rng = make_stream(qdetect_config.seed, "qdetect");
  std::vector<double> weights(dataset.size(), 1.0);
  DefendedRun run;
  for (std::size_t e = 0; e < train_config.epochs; ++e) {
    const auto losses = train::per_sample_losses(model, dataset, mode, train_config.label_smoothing);
    weights = qdetect_weights(losses, weights, qdetect_config, rng);
    run.weight_history.push_back(weights);
    auto stats = train::train_epoch(model, dataset, weights, trainer, mode);
    stats.epoch = e + 1;
    run.epochs.push_back(stats);
  }
  return run;
}

void write_weight_history(const std::filesystem::path& path, const std::vector<std::vector<double>>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[32];
  for (std::size_t e = 0; e < history.size(); ++e) {
    out << e + 1;
    for (double w : history[e]) {
      std::snprintf(buf, sizeof buf, "\t%.6f", w);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace qrobust::defend
