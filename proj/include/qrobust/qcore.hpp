#pragma once

// Exact statevector and density-matrix simulation of small qubit registers.
//
// Qubit 0 is the most significant bit of a basis index, so for n qubits the
// basis state |q0 q1 ... q(n-1)> has index sum_q bit_q * 2^(n-1-q).

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qrobust::qcore {

using Complex = std::complex<double>;

/// Row-major 2x2 complex matrix.
using Mat2 = std::array<Complex, 4>;

inline constexpr std::size_t kMaxQubits = 12;

class StateVector {
 public:
  /// |0...0> on n qubits.
  explicit StateVector(std::size_t n_qubits);

  /// Validates that the amplitudes have length 2^n and unit norm within 1e-9.
  static StateVector from_amplitudes(std::size_t n_qubits, std::vector<Complex> amplitudes);

  std::size_t n_qubits() const noexcept { return n_qubits_; }
  std::size_t dim() const noexcept { return amps_.size(); }
  std::span<const Complex> amplitudes() const noexcept { return amps_; }
  std::span<Complex> mutable_amplitudes() noexcept { return amps_; }
  double norm_squared() const noexcept;

 private:
  StateVector(std::size_t n_qubits, std::vector<Complex> amplitudes, bool /*unchecked*/);

  std::size_t n_qubits_;
  std::vector<Complex> amps_;
};

class DensityMatrix {
 public:
  /// |0...0><0...0| on n qubits.
  explicit DensityMatrix(std::size_t n_qubits);

  static DensityMatrix from_pure(const StateVector& state);
  /// Validates shape, Hermiticity, unit trace (1e-9).
  static DensityMatrix from_entries(std::size_t n_qubits, std::vector<Complex> entries);

  std::size_t n_qubits() const noexcept { return n_qubits_; }
  std::size_t dim() const noexcept { return dim_; }
  const Complex& operator()(std::size_t row, std::size_t col) const { return entries_[row * dim_ + col]; }
  Complex& operator()(std::size_t row, std::size_t col) { return entries_[row * dim_ + col]; }
  std::span<const Complex> entries() const noexcept { return entries_; }
  std::span<Complex> mutable_entries() noexcept { return entries_; }

  Complex trace() const noexcept;
  /// max |rho_ij - conj(rho_ji)|
  double hermiticity_error() const noexcept;
  /// Smallest eigenvalue of the Hermitian part.
  double min_eigenvalue() const;

 private:
  std::size_t n_qubits_;
  std::size_t dim_;
  std::vector<Complex> entries_;
};

enum class GateKind { X, Y, Z, H, RX, RY, RZ, CX, CRX };

bool is_rotation(GateKind kind) noexcept;
bool is_controlled(GateKind kind) noexcept;
std::string to_string(GateKind kind);

struct GateOp {
  GateKind kind;
  std::optional<double> angle;
  /// One qubit, or (control, target) for CX/CRX.
  std::vector<std::size_t> targets;

  static GateOp x(std::size_t q) { return {GateKind::X, std::nullopt, {q}}; }
  static GateOp y(std::size_t q) { return {GateKind::Y, std::nullopt, {q}}; }
  static GateOp z(std::size_t q) { return {GateKind::Z, std::nullopt, {q}}; }
  static GateOp h(std::size_t q) { return {GateKind::H, std::nullopt, {q}}; }
  static GateOp rx(std::size_t q, double theta) { return {GateKind::RX, theta, {q}}; }
  static GateOp ry(std::size_t q, double theta) { return {GateKind::RY, theta, {q}}; }
  static GateOp rz(std::size_t q, double theta) { return {GateKind::RZ, theta, {q}}; }
  static GateOp cx(std::size_t control, std::size_t target) { return {GateKind::CX, std::nullopt, {control, target}}; }
  static GateOp crx(std::size_t control, std::size_t target, double theta) {
    return {GateKind::CRX, theta, {control, target}};
  }
};

/// Throws if the gate is malformed or addresses a qubit >= n_qubits.
void validate_gate(const GateOp& gate, std::size_t n_qubits);

/// 2x2 matrix acting on the (last) target qubit. For CX/CRX this is the
/// block applied when the control is |1>.
Mat2 gate_matrix(const GateOp& gate);

/// d/dtheta of gate_matrix for rotation kinds.
Mat2 gate_matrix_derivative(const GateOp& gate);

/// Dense 2^n x 2^n unitary of a gate, row-major. Reference path for tests.
std::vector<Complex> dense_unitary(const GateOp& gate, std::size_t n_qubits);

StateVector apply_gate(const StateVector& state, const GateOp& gate);
DensityMatrix apply_gate_dm(const DensityMatrix& dm, const GateOp& gate);

enum class ChannelKind { Depolarizing, AmplitudeDamping, Custom };

struct KrausChannel {
  ChannelKind kind;
  double parameter;
  std::vector<Mat2> operators;

  /// max-entry deviation of sum_k E_k^dagger E_k from I
  double completeness_error() const noexcept;
  std::string label() const;
};

KrausChannel make_depolarizing(double p);
KrausChannel make_amplitude_damping(double gamma);
/// Checks completeness within 1e-9.
KrausChannel make_custom_channel(std::vector<Mat2> operators);

DensityMatrix apply_channel(const DensityMatrix& dm, const KrausChannel& channel, std::size_t qubit);

double expect_z(const StateVector& state, std::size_t qubit);
double expect_z(const DensityMatrix& dm, std::size_t qubit);

/// |<a|b>|^2
double state_fidelity(const StateVector& a, const StateVector& b);

/// Channels applied to every target qubit after each gate.
using NoisePolicy = std::optional<std::vector<KrausChannel>>;

struct CircuitSpec {
  std::size_t n_qubits = 1;
  std::vector<GateOp> ops;
  NoisePolicy noise;
  /// Replaces |0...0> as the starting point when set.
  std::optional<StateVector> initial_state;
};

void validate_circuit(const CircuitSpec& circuit);

/// Throws when the circuit carries a noise policy.
StateVector run_pure(const CircuitSpec& circuit);
DensityMatrix run_mixed(const CircuitSpec& circuit);

// In-place kernels. `vqubit` addresses a register of log2(amps.size()) qubits.
namespace kernels {
void apply_1q(std::span<Complex> amps, std::size_t n_qubits, std::size_t qubit, const Mat2& m);
void apply_controlled(std::span<Complex> amps, std::size_t n_qubits, std::size_t control, std::size_t target,
                      const Mat2& m);
/// Zeroes the control=|0> subspace and applies m to the control=|1> subspace.
void apply_projected_controlled(std::span<Complex> amps, std::size_t n_qubits, std::size_t control,
                                std::size_t target, const Mat2& m);
void apply_gate_inplace(std::span<Complex> amps, std::size_t n_qubits, const GateOp& gate);
void apply_gate_adjoint_inplace(std::span<Complex> amps, std::size_t n_qubits, const GateOp& gate);
void apply_gate_dm_inplace(std::span<Complex> rho, std::size_t n_qubits, const GateOp& gate);
void apply_channel_inplace(std::vector<Complex>& rho, std::vector<Complex>& scratch, std::size_t n_qubits,
                           const KrausChannel& channel, std::size_t qubit);
}  // namespace kernels

Mat2 adjoint(const Mat2& m) noexcept;
Mat2 multiply(const Mat2& a, const Mat2& b) noexcept;

}  // namespace qrobust::qcore
