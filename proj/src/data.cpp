#include "qrobust/data.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace qrobust::data {

void Dataset::validate() const {
  if (features.size() != labels.size() * n_features) throw std::invalid_argument("dataset feature/label shape mismatch");
  for (double v : features) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset contains a non-finite feature");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw std::invalid_argument("dataset label out of range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.n_features = n_features;
  out.n_classes = n_classes;
  out.split = split;
  out.features.reserve(indices.size() * n_features);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw std::out_of_range("subset index out of range");
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

Dataset Dataset::with_features(std::vector<double> new_features, std::size_t new_n_features) const {
  Dataset out;
  out.n_features = new_n_features;
  out.n_classes = n_classes;
  out.split = split;
  out.features = std::move(new_features);
  out.labels = labels;
  if (out.features.size() != out.labels.size() * new_n_features) {
    throw std::invalid_argument("replacement features have the wrong shape");
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& what) {
  if (offset + 4 > buf.size()) throw std::runtime_error(what + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  const auto images = read_file(image_path);
  const auto labels = read_file(label_path);

  if (read_be32(images, 0, "images") != 0x00000803U) throw std::runtime_error("images: bad IDX magic");
  if (read_be32(labels, 0, "labels") != 0x00000801U) throw std::runtime_error("labels: bad IDX magic");
  const std::size_t n_images = read_be32(images, 4, "images");
  const std::size_t rows = read_be32(images, 8, "images");
  const std::size_t cols = read_be32(images, 12, "images");
  const std::size_t n_labels = read_be32(labels, 4, "labels");
  if (n_images != n_labels) {
    throw std::runtime_error("image count " + std::to_string(n_images) + " != label count " +
                             std::to_string(n_labels));
  }
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + n_images * pixels) throw std::runtime_error("images: truncated payload");
  if (labels.size() < 8 + n_labels) throw std::runtime_error("labels: truncated payload");

  Dataset ds;
  ds.n_features = pixels;
  ds.features.resize(n_images * pixels);
  for (std::size_t i = 0; i < ds.features.size(); ++i) ds.features[i] = images[16 + i] / 255.0;
  ds.labels.resize(n_labels);
  int max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    ds.labels[i] = labels[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.n_classes = n_labels == 0 ? 0 : static_cast<std::size_t>(max_label) + 1;
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t line_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
  if (pos == 0 || pos != cell.size() || !std::isfinite(v)) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
  return v;
}

}  // namespace

Dataset load_csv_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "label") {
    throw std::runtime_error(path.string() + ": header must be 'label,f0,...'");
  }
  const std::size_t d = header.size() - 1;

  std::vector<double> raw_labels;
  Dataset ds;
  ds.n_features = d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                               " cells, got " + std::to_string(cells.size()));
    }
    raw_labels.push_back(parse_number(cells[0], line_no));
    for (std::size_t j = 1; j < cells.size(); ++j) ds.features.push_back(parse_number(cells[j], line_no));
  }
  if (raw_labels.empty()) throw std::runtime_error(path.string() + ": no data rows");

  std::map<double, int> dense;
  for (double l : raw_labels) dense.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : dense) id = next++;
  for (double l : raw_labels) ds.labels.push_back(dense.at(l));
  ds.n_classes = dense.size();
  return ds;
}

// ---------------------------------------------------------------------------
// PCA

PcaModel pca_fit(std::span<const double> rows, std::size_t n_cols, std::size_t k) {
  if (n_cols == 0 || rows.size() % n_cols != 0 || rows.empty()) throw std::invalid_argument("pca_fit: bad matrix shape");
  const std::size_t n = rows.size() / n_cols;
  if (k > std::min(n, n_cols)) {
    throw std::invalid_argument("pca_fit: k=" + std::to_string(k) + " exceeds min(N, D)=" +
                                std::to_string(std::min(n, n_cols)));
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(rows.data(), n, n_cols);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigendecomposition failed");

  PcaModel model;
  model.n_components = k;
  model.input_dim = n_cols;
  model.mean.assign(mean.data(), mean.data() + n_cols);
  model.components.resize(k * n_cols);
  model.explained_variance.resize(k);
  model.zero_variance.resize(k);
  const double scale = std::max(1.0, solver.eigenvalues().cwiseAbs().maxCoeff());
  for (std::size_t c = 0; c < k; ++c) {
    // Eigen sorts ascending.
    const auto col = static_cast<Eigen::Index>(n_cols - 1 - c);
    Eigen::VectorXd axis = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    std::copy(axis.data(), axis.data() + n_cols, model.components.begin() + static_cast<long>(c * n_cols));
    const double var = std::max(0.0, solver.eigenvalues()(col));
    model.explained_variance[c] = var;
    model.zero_variance[c] = var <= 1e-12 * scale;
  }
  return model;
}

std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim) throw std::invalid_argument("pca_transform: feature count mismatch");
  std::vector<double> out(model.n_components, 0.0);
  for (std::size_t c = 0; c < model.n_components; ++c) {
    const auto axis = model.component(c);
    double v = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) v += (x[j] - model.mean[j]) * axis[j];
    out[c] = v;
  }
  return out;
}

Dataset pca_transform(const PcaModel& model, const Dataset& dataset) {
  std::vector<double> reduced;
  reduced.reserve(dataset.size() * model.n_components);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto r = pca_transform(model, dataset.row(i));
    reduced.insert(reduced.end(), r.begin(), r.end());
  }
  return dataset.with_features(std::move(reduced), model.n_components);
}

std::vector<double> pca_inverse(const PcaModel& model, std::span<const double> reduced) {
  if (reduced.size() != model.n_components) throw std::invalid_argument("pca_inverse: component count mismatch");
  std::vector<double> out(model.mean);
  for (std::size_t c = 0; c < model.n_components; ++c) {
    const auto axis = model.component(c);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += reduced[c] * axis[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

Split stratified_sample(const Dataset& dataset, std::size_t per_class_train, std::size_t per_class_test, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(dataset.n_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    const std::size_t need = per_class_train + per_class_test;
    if (pool.size() < need) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                                  " samples, " + std::to_string(need) + " requested");
    }
    // Partial Fisher-Yates: the first `need` slots become a uniform draw.
    for (std::size_t i = 0; i < need; ++i) {
      const std::size_t j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    train_idx.insert(train_idx.end(), pool.begin(), pool.begin() + static_cast<long>(per_class_train));
    test_idx.insert(test_idx.end(), pool.begin() + static_cast<long>(per_class_train),
                    pool.begin() + static_cast<long>(need));
  }
  Split split{dataset.subset(train_idx), dataset.subset(test_idx)};
  split.train.split = "train";
  split.test.split = "test";
  return split;
}

double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Dataset synth_blobs(std::size_t n_classes, std::size_t dim, std::size_t per_class, double spread, Rng& rng,
                    double center_box) {
  if (n_classes < 2) throw std::invalid_argument("synth_blobs needs at least two classes");
  if (dim < 1) throw std::invalid_argument("synth_blobs needs dim >= 1");
  Dataset ds;
  ds.n_features = dim;
  ds.n_classes = n_classes;
  std::vector<double> centers(n_classes * dim);
  for (auto& c : centers) c = uniform(rng, -center_box, center_box);
  ds.features.reserve(n_classes * per_class * dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j) ds.features.push_back(centers[c * dim + j] + spread * standard_normal(rng));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

}  // namespace qrobust::data
