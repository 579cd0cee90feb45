#include "qrobust/encode.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qrobust::encode {

using qcore::GateOp;

std::size_t EncodingSpec::max_features() const {
  switch (kind) {
    case EncodingKind::Angle: return n_qubits;
    case EncodingKind::Amplitude: return std::size_t{1} << n_qubits;
    case EncodingKind::DenseAngle: return 2 * n_qubits;
  }
  return 0;
}

Range default_input_range(EncodingKind kind) {
  switch (kind) {
    case EncodingKind::Angle: return {0.0, std::numbers::pi};
    case EncodingKind::Amplitude: return {0.0, 1.0};
    case EncodingKind::DenseAngle: return {-std::numbers::pi, std::numbers::pi};
  }
  return {};
}

std::vector<GateOp> angle_encode(std::span<const double> x, const EncodingSpec& spec) {
  if (x.size() > spec.n_qubits) {
    throw std::invalid_argument("angle encoding takes at most one feature per qubit (" + std::to_string(x.size()) +
                                " features, " + std::to_string(spec.n_qubits) + " qubits)");
  }
  std::vector<GateOp> ops;
  ops.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ops.push_back(GateOp::ry(i, x[i]));
  return ops;
}

std::vector<GateOp> dense_angle_encode(std::span<const double> x, std::size_t n_qubits) {
  if (x.size() != 2 * n_qubits) {
    throw std::invalid_argument("dense angle encoding needs exactly 2 features per qubit (" +
                                std::to_string(x.size()) + " features, " + std::to_string(n_qubits) + " qubits)");
  }
  std::vector<GateOp> ops;
  ops.reserve(4 * n_qubits);
  for (std::size_t q = 0; q < n_qubits; ++q) {
    const double a = x[2 * q];
    const double b = x[2 * q + 1];
    ops.push_back(GateOp::rz(q, a));
    ops.push_back(GateOp::rx(q, b));
    ops.push_back(GateOp::rz(q, a / 2.0));
    ops.push_back(GateOp::rx(q, b / 2.0));
  }
  return ops;
}

qcore::StateVector amplitude_encode(std::span<const double> x, std::size_t n_qubits) {
  const std::size_t dim = std::size_t{1} << n_qubits;
  if (x.size() > dim) {
    throw std::invalid_argument("amplitude encoding: " + std::to_string(x.size()) + " features exceed 2^" +
                                std::to_string(n_qubits));
  }
  double norm2 = 0.0;
  for (double v : x) norm2 += v * v;
  if (!(norm2 > 0.0)) throw std::invalid_argument("amplitude encoding of a zero vector is undefined");
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<qcore::Complex> amps(dim);
  for (std::size_t i = 0; i < x.size(); ++i) amps[i] = x[i] * inv;
  return qcore::StateVector::from_amplitudes(n_qubits, std::move(amps));
}

// Binary tree of uniformly controlled RY rotations. Level k targets qubit k
// with qubits 0..k-1 as controls; each multiplexor is expanded into 2^k RY
// and 2^k CX gates along a Gray-code path.
std::vector<GateOp> amplitude_prep_circuit(std::span<const double> x, std::size_t n_qubits) {
  const auto state = amplitude_encode(x, n_qubits);
  const std::size_t dim = state.dim();
  std::vector<double> a(dim);
  for (std::size_t i = 0; i < dim; ++i) a[i] = state.amplitudes()[i].real();

  // norms[k][p] = norm of the amplitudes whose top k bits equal p.
  std::vector<std::vector<double>> norms(n_qubits + 1);
  norms[n_qubits].assign(a.begin(), a.end());
  for (std::size_t k = n_qubits; k-- > 0;) {
    norms[k].resize(std::size_t{1} << k);
    for (std::size_t p = 0; p < norms[k].size(); ++p) {
      const double l = norms[k + 1][2 * p];
      const double r = norms[k + 1][2 * p + 1];
      norms[k][p] = std::sqrt(l * l + r * r);
    }
  }

  std::vector<GateOp> ops;
  for (std::size_t k = 0; k < n_qubits; ++k) {
    const std::size_t patterns = std::size_t{1} << k;
    std::vector<double> alpha(patterns);
    for (std::size_t p = 0; p < patterns; ++p) {
      // Leaf level keeps signs; upper levels split non-negative norms.
      alpha[p] = 2.0 * std::atan2(norms[k + 1][2 * p + 1], norms[k + 1][2 * p]);
    }
    if (k == 0) {
      ops.push_back(GateOp::ry(0, alpha[0]));
      continue;
    }
    for (std::size_t i = 0; i < patterns; ++i) {
      const std::size_t gray = i ^ (i >> 1);
      double theta = 0.0;
      for (std::size_t p = 0; p < patterns; ++p) {
        theta += (std::popcount(p & gray) % 2 == 0) ? alpha[p] : -alpha[p];
      }
      ops.push_back(GateOp::ry(k, theta / static_cast<double>(patterns)));
      const std::size_t flipped_bit = (i + 1 == patterns) ? k - 1 : static_cast<std::size_t>(std::countr_zero(i + 1));
      ops.push_back(GateOp::cx(k - 1 - flipped_bit, k));
    }
  }
  return ops;
}

std::vector<Range> fit_bounds(std::span<const double> rows, std::size_t n_cols) {
  if (n_cols == 0 || rows.empty() || rows.size() % n_cols != 0) {
    throw std::invalid_argument("fit_bounds needs a non-empty row-major matrix");
  }
  std::vector<Range> bounds(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) bounds[c] = {rows[c], rows[c]};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& b = bounds[i % n_cols];
    b.lo = std::min(b.lo, rows[i]);
    b.hi = std::max(b.hi, rows[i]);
  }
  return bounds;
}

std::vector<double> rescale(std::span<const double> x, std::span<const Range> from_bounds, Range to) {
  if (x.size() != from_bounds.size()) throw std::invalid_argument("rescale: bounds/feature count mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& b = from_bounds[i];
    if (b.hi == b.lo) {
      out[i] = 0.5 * (to.lo + to.hi);
    } else {
      out[i] = to.lo + (x[i] - b.lo) * (to.hi - to.lo) / (b.hi - b.lo);
    }
  }
  return out;
}

}  // namespace qrobust::encode
