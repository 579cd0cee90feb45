#pragma once

// Label-flipping and QUID poisoning (training-time) and FGSM/PGD evasion
// (test-time).

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "qrobust/data.hpp"
#include "qrobust/encode.hpp"
#include "qrobust/model.hpp"
#include "qrobust/qcore.hpp"
#include "qrobust/rng.hpp"

namespace qrobust::attacks {

struct PoisonRecord {
  std::size_t index = 0;
  int original_label = 0;
  int poisoned_label = 0;

  bool operator==(const PoisonRecord&) const = default;
};

struct PoisonResult {
  data::Dataset dataset;
  std::vector<PoisonRecord> records;
};

/// Picks round(ratio * N) distinct samples uniformly and relabels each to a
/// uniformly drawn other class.
PoisonResult label_flip(const data::Dataset& dataset, double ratio, std::size_t n_classes, Rng& rng);

/// Maps a feature vector to the state its encoder prepares.
using Encoder = std::function<qcore::StateVector(std::span<const double>)>;

/// Encoder-only circuit of a quantum model, run in Pure mode.
Encoder model_encoder(const model::QuantumClassifier& model);

/// Mean projector of the encoded states of each class.
std::vector<qcore::DensityMatrix> class_centroids(const data::Dataset& dataset, const Encoder& encoder);

/// <psi|rho|psi>
double centroid_similarity(const qcore::DensityMatrix& centroid, const qcore::StateVector& state);

enum class QuidTarget {
  /// Relabel to the wrong class whose centroid overlaps the sample least.
  LeastSimilar,
  /// Relabel to the wrong class whose centroid overlaps the sample most.
  MostSimilar,
};

/// Encoder-state-similarity poisoning: round(ratio * N) uniformly selected
/// samples are relabeled by comparing their encoded state to the class
/// centroids. Ties go to the lowest class index.
PoisonResult quid_poison(const data::Dataset& dataset, const Encoder& encoder, double ratio, Rng& rng,
                         QuidTarget target = QuidTarget::LeastSimilar);

/// Label QUID would assign to a sample with encoded state `state` and true label `label`.
int quid_relabel(std::span<const qcore::DensityMatrix> centroids, const qcore::StateVector& state, int label,
                 QuidTarget target);

/// Per-dimension box the perturbed input must stay in.
struct Bounds {
  std::vector<encode::Range> per_dim;

  static Bounds uniform(std::size_t dim, encode::Range r) { return {std::vector<encode::Range>(dim, r)}; }
  double clamp(std::size_t i, double v) const;
};

/// x' = clamp(x + eps * sign(dL/dx)), sign(0) = 0.
std::vector<double> fgsm(const model::Classifier& model, std::span<const double> x, std::size_t y, double eps,
                         const Bounds& bounds);

struct PgdConfig {
  double eps = 0.1;
  double step = 0.01;
  std::size_t iters = 10;
};

/// Iterated signed-gradient ascent projected onto the L-inf eps ball around x
/// and onto `bounds`. Starts uniformly inside the ball when `rng` is given.
std::vector<double> pgd(const model::Classifier& model, std::span<const double> x, std::size_t y,
                        const PgdConfig& config, const Bounds& bounds, Rng* rng);

/// Gradient sign operator used by both evasion attacks.
std::vector<double> gradient_sign(const model::Classifier& model, std::span<const double> x, std::size_t y);

/// 100 * misclassified / attacked.
double attack_success_rate(std::span<const int> true_labels, std::span<const std::size_t> predictions);
double attack_success_rate(const model::Classifier& model, const data::Dataset& attacked_set,
                           const model::EvalMode& mode);

/// Subset of `dataset` picked by a poisoning selection (attacked indices).
data::Dataset attacked_subset(const data::Dataset& dataset, std::span<const PoisonRecord> records);

/// "index,original,poisoned" header then one record per line.
void write_poison_manifest(const std::filesystem::path& path, std::span<const PoisonRecord> records);
std::vector<PoisonRecord> read_poison_manifest(const std::filesystem::path& path);

}  // namespace qrobust::attacks
