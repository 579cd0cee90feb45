#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qrobust/rng.hpp"

namespace qrobust::data {

/// Row-major feature matrix with integer labels in [0, n_classes).
struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::string split = "full";

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * n_features, n_features}; }
  std::span<double> row(std::size_t i) { return {features.data() + i * n_features, n_features}; }

  /// Throws on shape mismatch, non-finite features or out-of-range labels.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset with_features(std::vector<double> new_features, std::size_t new_n_features) const;
};

/// IDX images (magic 0x00000803) and labels (0x00000801); pixels scaled to [0, 1].
Dataset load_mnist_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

/// Header "label,f0,...,fD-1"; labels densified to [0, C) in ascending order.
Dataset load_csv_features(const std::filesystem::path& path);

struct PcaModel {
  std::vector<double> mean;                 // [D]
  std::vector<double> components;           // [k][D], row-orthonormal
  std::vector<double> explained_variance;   // [k], non-increasing
  std::vector<bool> zero_variance;          // [k]
  std::size_t n_components = 0;
  std::size_t input_dim = 0;

  std::span<const double> component(std::size_t i) const {
    return {components.data() + i * input_dim, input_dim};
  }
};

/// Top-k principal axes of the centered rows. Each axis is signed so its
/// largest-magnitude coordinate is positive.
PcaModel pca_fit(std::span<const double> rows, std::size_t n_cols, std::size_t k);
std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x);
Dataset pca_transform(const PcaModel& model, const Dataset& dataset);
std::vector<double> pca_inverse(const PcaModel& model, std::span<const double> reduced);

struct Split {
  Dataset train;
  Dataset test;
};

/// Exactly per_class_train / per_class_test samples of every class, disjoint.
Split stratified_sample(const Dataset& dataset, std::size_t per_class_train, std::size_t per_class_test, Rng& rng);

/// Gaussian clusters around centers drawn uniformly from [-center_box, center_box]^dim.
Dataset synth_blobs(std::size_t n_classes, std::size_t dim, std::size_t per_class, double spread, Rng& rng,
                    double center_box = 1.0);

/// Standard normal draw (Box-Muller on uniform01), identical across standard libraries.
double standard_normal(Rng& rng);

}  // namespace qrobust::data
