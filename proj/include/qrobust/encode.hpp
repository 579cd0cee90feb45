#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "qrobust/qcore.hpp"

namespace qrobust::encode {

enum class EncodingKind { Angle, Amplitude, DenseAngle };

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

struct EncodingSpec {
  EncodingKind kind = EncodingKind::Angle;
  std::size_t n_qubits = 1;
  Range input_range{0.0, 3.141592653589793};

  /// Number of classical features the encoding consumes at most.
  std::size_t max_features() const;
};

/// Default [lo, hi] a model's inputs are rescaled into for each encoding.
Range default_input_range(EncodingKind kind);

/// One RY(x_i) on qubit i.
std::vector<qcore::GateOp> angle_encode(std::span<const double> x, const EncodingSpec& spec);

/// RZ(a), RX(b), RZ(a/2), RX(b/2) on every qubit for pairs (a_i, b_i) = (x[2i], x[2i+1]).
std::vector<qcore::GateOp> dense_angle_encode(std::span<const double> x, std::size_t n_qubits);

/// Zero-pads x to 2^n entries and divides by its L2 norm.
qcore::StateVector amplitude_encode(std::span<const double> x, std::size_t n_qubits);

/// RY/CX circuit that prepares amplitude_encode(x) from |0...0> (real
/// amplitudes, up to global phase).
std::vector<qcore::GateOp> amplitude_prep_circuit(std::span<const double> x, std::size_t n_qubits);

/// Per-dimension [min, max] observed in the rows of a row-major matrix.
std::vector<Range> fit_bounds(std::span<const double> rows, std::size_t n_cols);

/// Affine map of each dimension from its bounds onto `to`; constant
/// dimensions land on the midpoint of `to`.
std::vector<double> rescale(std::span<const double> x, std::span<const Range> from_bounds, Range to);

}  // namespace qrobust::encode
