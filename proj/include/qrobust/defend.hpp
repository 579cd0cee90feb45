#pragma once

// Loss-based sample reweighting solved by simulated annealing, and the
// training loop that feeds the weights back into each epoch.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qrobust/data.hpp"
#include "qrobust/model.hpp"
#include "qrobust/rng.hpp"
#include "qrobust/train.hpp"

namespace qrobust::defend {

struct QDetectConfig {
  double wan_lr = 0.05;
  double anneal_coeff = 1.0;
  double beta_lo = 0.1;
  double beta_hi = 2.0;
  std::size_t sweeps = 50;
  double keep_fraction = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

/// E(m) = sum_i m_i l_i + alpha * (sum_i m_i - kappa N)^2
double mask_energy(std::span<const std::uint8_t> mask, std::span<const double> losses, double alpha,
                   double keep_fraction);

struct AnnealResult {
  std::vector<std::uint8_t> mask;
  double energy = 0.0;
};

/// Single-spin-flip Metropolis from the all-ones mask, beta ramped linearly
/// over the sweeps. Returns the lowest-energy mask visited.
AnnealResult anneal_mask(std::span<const double> losses, const QDetectConfig& config, Rng& rng);

/// w <- (1 - eta) * prev + eta * m, clamped to [0, 1].
std::vector<double> qdetect_weights(std::span<const double> losses, std::span<const double> prev_weights,
                                    const QDetectConfig& config, Rng& rng);

struct DefendedRun {
  std::vector<std::vector<double>> weight_history;  // one row per epoch
  std::vector<train::EpochStats> epochs;
};

/// Each epoch: per-sample losses under the current model, refreshed weights,
/// then one weighted training epoch.
DefendedRun defended_train(model::Classifier& model, const data::Dataset& dataset, const train::TrainConfig& train_config,
                           const QDetectConfig& qdetect_config, const model::EvalMode& mode);

/// Tab-separated rows "epoch w_0 ... w_{N-1}".
void write_weight_history(const std::filesystem::path& path, const std::vector<std::vector<double>>& history);

}  // namespace qrobust::defend
