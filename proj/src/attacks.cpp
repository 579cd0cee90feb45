#include "qrobust/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qrobust/parallel.hpp"
#include "qrobust/train.hpp"

namespace qrobust::attacks {

namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("poison ratio must be in [0, 1]");
}

// round(ratio * n) distinct indices, uniformly drawn, returned ascending.
std::vector<std::size_t> select_indices(std::size_t n, double ratio, Rng& rng) {
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

PoisonResult label_flip(const data::Dataset& dataset, double ratio, std::size_t n_classes, Rng& rng) {
  check_ratio(ratio);
  if (n_classes < 2) throw std::invalid_argument("label flipping needs at least two classes");
  PoisonResult out{dataset, {}};
  for (auto i : select_indices(dataset.size(), ratio, rng)) {
    const int original = dataset.labels[i];
    // Uniform over the C-1 other classes.
    auto draw = static_cast<int>(uniform_index(rng, n_classes - 1));
    if (draw >= original) ++draw;
    out.dataset.labels[i] = draw;
    out.records.push_back({i, original, draw});
  }
  return out;
}

Encoder model_encoder(const model::QuantumClassifier& model) {
  return [&model](std::span<const double> x) { return qcore::run_pure(model.encoder_circuit(x)); };
}

std::vector<qcore::DensityMatrix> class_centroids(const data::Dataset& dataset, const Encoder& encoder) {
  std::vector<std::optional<qcore::StateVector>> states(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) { states[i] = encoder(dataset.row(i)); });

  std::vector<std::vector<qcore::Complex>> sums(dataset.n_classes);
  std::vector<std::size_t> counts(dataset.n_classes, 0);
  std::size_t n_qubits = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = *states[i];
    n_qubits = s.n_qubits();
    const auto c = static_cast<std::size_t>(dataset.labels[i]);
    const std::size_t dim = s.dim();
    auto& acc = sums[c];
    if (acc.empty()) acc.assign(dim * dim, qcore::Complex{0.0});
    const auto a = s.amplitudes();
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t col = 0; col < dim; ++col) acc[r * dim + col] += a[r] * std::conj(a[col]);
    }
    ++counts[c];
  }
  std::vector<qcore::DensityMatrix> centroids;
  centroids.reserve(dataset.n_classes);
  for (std::size_t c = 0; c < dataset.n_classes; ++c) {
    if (counts[c] == 0) throw std::invalid_argument("class " + std::to_string(c) + " has no samples");
    for (auto& v : sums[c]) v /= static_cast<double>(counts[c]);
    centroids.push_back(qcore::DensityMatrix::from_entries(n_qubits, std::move(sums[c])));
  }
  return centroids;
}

double centroid_similarity(const qcore::DensityMatrix& centroid, const qcore::StateVector& state) {
  if (centroid.n_qubits() != state.n_qubits()) throw std::invalid_argument("similarity: qubit count mismatch");
  const auto a = state.amplitudes();
  qcore::Complex total{0.0};
  for (std::size_t r = 0; r < centroid.dim(); ++r) {
    qcore::Complex row{0.0};
    for (std::size_t c = 0; c < centroid.dim(); ++c) row += centroid(r, c) * a[c];
    total += std::conj(a[r]) * row;
  }
  return total.real();
}

int quid_relabel(std::span<const qcore::DensityMatrix> centroids, const qcore::StateVector& state, int label,
                 QuidTarget target) {
  int best = -1;
  double best_score = 0.0;
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (static_cast<int>(c) == label) continue;
    const double s = centroid_similarity(centroids[c], state);
    const bool better = best < 0 || (target == QuidTarget::LeastSimilar ? s < best_score : s > best_score);
    if (better) {
      best = static_cast<int>(c);
      best_score = s;
    }
  }
  return best;
}

PoisonResult quid_poison(const data::Dataset& dataset, const Encoder& encoder, double ratio, Rng& rng,
                         QuidTarget target) {
  check_ratio(ratio);
  if (dataset.n_classes < 2) throw std::invalid_argument("QUID needs at least two classes");
  const auto centroids = class_centroids(dataset, encoder);
  PoisonResult out{dataset, {}};
  for (auto i : select_indices(dataset.size(), ratio, rng)) {
    const int original = dataset.labels[i];
    const int poisoned = quid_relabel(centroids, encoder(dataset.row(i)), original, target);
    out.dataset.labels[i] = poisoned;
    out.records.push_back({i, original, poisoned});
  }
  return out;
}

double Bounds::clamp(std::size_t i, double v) const {
  const auto& r = per_dim.at(i);
  return std::clamp(v, r.lo, r.hi);
}

std::vector<double> gradient_sign(const model::Classifier& model, std::span<const double> x, std::size_t y) {
  const auto loss = train::cross_entropy_loss(train::one_hot(y, model.n_classes()));
  const auto g = model.grad_input(x, loss, model::GradMethod::Adjoint);
  std::vector<double> s(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

std::vector<double> fgsm(const model::Classifier& model, std::span<const double> x, std::size_t y, double eps,
                         const Bounds& bounds) {
  if (!(eps >= 0.0)) throw std::invalid_argument("FGSM epsilon must be non-negative");
  if (bounds.per_dim.size() != x.size()) throw std::invalid_argument("bounds dimension mismatch");
  const auto s = gradient_sign(model, x, y);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = bounds.clamp(i, x[i] + eps * s[i]);
  return out;
}

std::vector<double> pgd(const model::Classifier& model, std::span<const double> x, std::size_t y,
                        const PgdConfig& config, const Bounds& bounds, Rng* rng) {
  if (!(config.eps >= 0.0)) throw std::invalid_argument("PGD epsilon must be non-negative");
  if (!(config.step > 0.0)) throw std::invalid_argument("PGD step must be positive");
  if (config.iters < 1) throw std::invalid_argument("PGD needs at least one iteration");
  if (bounds.per_dim.size() != x.size()) throw std::invalid_argument("bounds dimension mismatch");

  const double eps = config.eps;
  std::vector<double> cur(x.begin(), x.end());
  if (rng != nullptr) {
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = bounds.clamp(i, x[i] + uniform(*rng, -eps, eps));
  }
  for (std::size_t it = 0; it < config.iters; ++it) {
    const auto s = gradient_sign(model, cur, y);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double stepped = cur[i] + config.step * s[i];
      const double projected = std::min(std::max(stepped, x[i] - eps), x[i] + eps);
      cur[i] = bounds.clamp(i, projected);
    }
  }
  return cur;
}

double attack_success_rate(std::span<const int> true_labels, std::span<const std::size_t> predictions) {
  if (true_labels.empty()) throw std::invalid_argument("attack success rate needs a non-empty attacked set");
  if (true_labels.size() != predictions.size()) throw std::invalid_argument("label/prediction length mismatch");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (static_cast<std::size_t>(true_labels[i]) != predictions[i]) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(true_labels.size());
}

double attack_success_rate(const model::Classifier& model, const data::Dataset& attacked_set,
                           const model::EvalMode& mode) {
  if (attacked_set.empty()) throw std::invalid_argument("attack success rate needs a non-empty attacked set");
  const auto preds = train::predict_all(model, attacked_set, mode);
  return attack_success_rate(attacked_set.labels, preds);
}

data::Dataset attacked_subset(const data::Dataset& dataset, std::span<const PoisonRecord> records) {
  std::vector<std::size_t> idx;
  idx.reserve(records.size());
  for (const auto& r : records) idx.push_back(r.index);
  return dataset.subset(idx);
}

void write_poison_manifest(const std::filesystem::path& path, std::span<const PoisonRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,original,poisoned\n";
  for (const auto& r : records) out << r.index << ',' << r.original_label << ',' << r.poisoned_label << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<PoisonRecord> read_poison_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "index,original,poisoned") {
    throw std::runtime_error(path.string() + ": missing manifest header");
  }
  std::vector<PoisonRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    PoisonRecord r;
    char c1 = 0, c2 = 0;
    if (!(ss >> r.index >> c1 >> r.original_label >> c2 >> r.poisoned_label) || c1 != ',' || c2 != ',') {
      throw std::runtime_error(path.string() + ": malformed record on line " + std::to_string(line_no));
    }
    records.push_back(r);
  }
  return records;
}

}  // namespace qrobust::attacks
