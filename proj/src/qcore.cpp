#include "qrobust/qcore.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace qrobust::qcore {

namespace {

constexpr double kStateTolerance = 1e-9;
const Complex kI{0.0, 1.0};

std::size_t checked_dim(std::size_t n_qubits) {
  if (n_qubits == 0 || n_qubits > kMaxQubits) {
    throw std::invalid_argument("qubit count must be in [1, " + std::to_string(kMaxQubits) + "], got " +
                                std::to_string(n_qubits));
  }
  return std::size_t{1} << n_qubits;
}

void check_qubit(std::size_t qubit, std::size_t n_qubits) {
  if (qubit >= n_qubits) {
    throw std::out_of_range("qubit index " + std::to_string(qubit) + " out of range for " +
                            std::to_string(n_qubits) + " qubits");
  }
}

constexpr Mat2 kIdentity{Complex{1}, Complex{0}, Complex{0}, Complex{1}};
constexpr Mat2 kPauliX{Complex{0}, Complex{1}, Complex{1}, Complex{0}};
constexpr Mat2 kPauliY{Complex{0}, Complex{0, -1}, Complex{0, 1}, Complex{0}};
constexpr Mat2 kPauliZ{Complex{1}, Complex{0}, Complex{0}, Complex{-1}};

Mat2 conj(const Mat2& m) noexcept { return {std::conj(m[0]), std::conj(m[1]), std::conj(m[2]), std::conj(m[3])}; }

Mat2 scale(const Mat2& m, Complex s) noexcept { return {m[0] * s, m[1] * s, m[2] * s, m[3] * s}; }

}  // namespace

Mat2 adjoint(const Mat2& m) noexcept { return {std::conj(m[0]), std::conj(m[2]), std::conj(m[1]), std::conj(m[3])}; }

Mat2 multiply(const Mat2& a, const Mat2& b) noexcept {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
          a[2] * b[1] + a[3] * b[3]};
}

// ---------------------------------------------------------------------------
// StateVector / DensityMatrix

StateVector::StateVector(std::size_t n_qubits) : n_qubits_(n_qubits), amps_(checked_dim(n_qubits)) {
  amps_[0] = 1.0;
}

StateVector::StateVector(std::size_t n_qubits, std::vector<Complex> amplitudes, bool)
    : n_qubits_(n_qubits), amps_(std::move(amplitudes)) {}

StateVector StateVector::from_amplitudes(std::size_t n_qubits, std::vector<Complex> amplitudes) {
  if (amplitudes.size() != checked_dim(n_qubits)) {
    throw std::invalid_argument("amplitude count " + std::to_string(amplitudes.size()) + " does not match 2^" +
                                std::to_string(n_qubits));
  }
  StateVector state(n_qubits, std::move(amplitudes), true);
  if (std::abs(state.norm_squared() - 1.0) > kStateTolerance) {
    throw std::invalid_argument("state amplitudes are not normalized");
  }
  return state;
}

double StateVector::norm_squared() const noexcept {
  double total = 0.0;
  for (const auto& a : amps_) total += std::norm(a);
  return total;
}

DensityMatrix::DensityMatrix(std::size_t n_qubits)
    : n_qubits_(n_qubits), dim_(checked_dim(n_qubits)), entries_(dim_ * dim_) {
  entries_[0] = 1.0;
}

DensityMatrix DensityMatrix::from_pure(const StateVector& state) {
  DensityMatrix dm(state.n_qubits());
  const auto amps = state.amplitudes();
  for (std::size_t i = 0; i < dm.dim_; ++i) {
    for (std::size_t j = 0; j < dm.dim_; ++j) dm.entries_[i * dm.dim_ + j] = amps[i] * std::conj(amps[j]);
  }
  return dm;
}

DensityMatrix DensityMatrix::from_entries(std::size_t n_qubits, std::vector<Complex> entries) {
  DensityMatrix dm(n_qubits);
  if (entries.size() != dm.dim_ * dm.dim_) {
    throw std::invalid_argument("density matrix entry count does not match 4^n");
  }
  dm.entries_ = std::move(entries);
  if (dm.hermiticity_error() > kStateTolerance) throw std::invalid_argument("density matrix is not Hermitian");
  if (std::abs(dm.trace() - Complex{1.0}) > kStateTolerance) {
    throw std::invalid_argument("density matrix trace is not 1");
  }
  return dm;
}

Complex DensityMatrix::trace() const noexcept {
  Complex t{0.0};
  for (std::size_t i = 0; i < dim_; ++i) t += entries_[i * dim_ + i];
  return t;
}

double DensityMatrix::hermiticity_error() const noexcept {
  double worst = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = i; j < dim_; ++j) {
      worst = std::max(worst, std::abs(entries_[i * dim_ + j] - std::conj(entries_[j * dim_ + i])));
    }
  }
  return worst;
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::MatrixXcd m(dim_, dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 0; j < dim_; ++j) {
      m(i, j) = 0.5 * (entries_[i * dim_ + j] + std::conj(entries_[j * dim_ + i]));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Gates

bool is_rotation(GateKind kind) noexcept {
  return kind == GateKind::RX || kind == GateKind::RY || kind == GateKind::RZ || kind == GateKind::CRX;
}

bool is_controlled(GateKind kind) noexcept { return kind == GateKind::CX || kind == GateKind::CRX; }

std::string to_string(GateKind kind) {
  switch (kind) {
    case GateKind::X: return "X";
    case GateKind::Y: return "Y";
    case GateKind::Z: return "Z";
    case GateKind::H: return "H";
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::CX: return "CX";
    case GateKind::CRX: return "CRX";
  }
  return "?";
}

void validate_gate(const GateOp& gate, std::size_t n_qubits) {
  const std::size_t arity = is_controlled(gate.kind) ? 2 : 1;
  if (gate.targets.size() != arity) {
    throw std::invalid_argument(to_string(gate.kind) + " expects " + std::to_string(arity) + " target(s), got " +
                                std::to_string(gate.targets.size()));
  }
  for (auto q : gate.targets) check_qubit(q, n_qubits);
  if (arity == 2 && gate.targets[0] == gate.targets[1]) {
    throw std::invalid_argument(to_string(gate.kind) + " control and target must differ");
  }
  if (is_rotation(gate.kind) && !gate.angle) {
    throw std::invalid_argument(to_string(gate.kind) + " requires an angle");
  }
}

Mat2 gate_matrix(const GateOp& gate) {
  const double half = gate.angle.value_or(0.0) / 2.0;
  const double c = std::cos(half);
  const double s = std::sin(half);
  switch (gate.kind) {
    case GateKind::X:
    case GateKind::CX: return kPauliX;
    case GateKind::Y: return kPauliY;
    case GateKind::Z: return kPauliZ;
    case GateKind::H: {
      const double r = 1.0 / std::sqrt(2.0);
      return {Complex{r}, Complex{r}, Complex{r}, Complex{-r}};
    }
    case GateKind::RX:
    case GateKind::CRX: return {Complex{c}, Complex{0, -s}, Complex{0, -s}, Complex{c}};
    case GateKind::RY: return {Complex{c}, Complex{-s}, Complex{s}, Complex{c}};
    case GateKind::RZ: return {std::polar(1.0, -half), Complex{0}, Complex{0}, std::polar(1.0, half)};
  }
  throw std::invalid_argument("unknown gate kind");
}

Mat2 gate_matrix_derivative(const GateOp& gate) {
  // d/dtheta exp(-i theta P / 2) = -i/2 P exp(-i theta P / 2)
  const Mat2 u = gate_matrix(gate);
  switch (gate.kind) {
    case GateKind::RX:
    case GateKind::CRX: return scale(multiply(kPauliX, u), -0.5 * kI);
    case GateKind::RY: return scale(multiply(kPauliY, u), -0.5 * kI);
    case GateKind::RZ: return scale(multiply(kPauliZ, u), -0.5 * kI);
    default: throw std::invalid_argument(to_string(gate.kind) + " has no angle to differentiate");
  }
}

std::vector<Complex> dense_unitary(const GateOp& gate, std::size_t n_qubits) {
  validate_gate(gate, n_qubits);
  const std::size_t dim = checked_dim(n_qubits);
  const Mat2 m = gate_matrix(gate);
  const std::size_t target = gate.targets.back();
  const std::size_t tbit = n_qubits - 1 - target;
  std::vector<Complex> u(dim * dim);
  for (std::size_t col = 0; col < dim; ++col) {
    if (is_controlled(gate.kind) && !((col >> (n_qubits - 1 - gate.targets[0])) & 1U)) {
      u[col * dim + col] = 1.0;
      continue;
    }
    const std::size_t in_bit = (col >> tbit) & 1U;
    for (std::size_t out_bit = 0; out_bit < 2; ++out_bit) {
      const std::size_t row = (col & ~(std::size_t{1} << tbit)) | (out_bit << tbit);
      u[row * dim + col] = m[out_bit * 2 + in_bit];
    }
  }
  return u;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

void apply_1q(std::span<Complex> amps, std::size_t n_qubits, std::size_t qubit, const Mat2& m) {
  const std::size_t stride = std::size_t{1} << (n_qubits - 1 - qubit);
  const std::size_t size = amps.size();
  for (std::size_t base = 0; base < size; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; ++i) {
      const Complex a0 = amps[i];
      const Complex a1 = amps[i + stride];
      amps[i] = m[0] * a0 + m[1] * a1;
      amps[i + stride] = m[2] * a0 + m[3] * a1;
    }
  }
}

void apply_controlled(std::span<Complex> amps, std::size_t n_qubits, std::size_t control, std::size_t target,
                      const Mat2& m) {
  const std::size_t stride = std::size_t{1} << (n_qubits - 1 - target);
  const std::size_t cmask = std::size_t{1} << (n_qubits - 1 - control);
  const std::size_t size = amps.size();
  for (std::size_t base = 0; base < size; base += 2 * stride) {
    for (std::size_t i = base; i < base + stride; ++i) {
      if (!(i & cmask)) continue;
      const Complex a0 = amps[i];
      const Complex a1 = amps[i + stride];
      amps[i] = m[0] * a0 + m[1] * a1;
      amps[i + stride] = m[2] * a0 + m[3] * a1;
    }
  }
}

void apply_projected_controlled(std::span<Complex> amps, std::size_t n_qubits, std::size_t control,
                                std::size_t target, const Mat2& m) {
  const std::size_t cmask = std::size_t{1} << (n_qubits - 1 - control);
  for (std::size_t i = 0; i < amps.size(); ++i) {
    if (!(i & cmask)) amps[i] = 0.0;
  }
  apply_controlled(amps, n_qubits, control, target, m);
}

void apply_gate_inplace(std::span<Complex> amps, std::size_t n_qubits, const GateOp& gate) {
  const Mat2 m = gate_matrix(gate);
  if (is_controlled(gate.kind)) {
    apply_controlled(amps, n_qubits, gate.targets[0], gate.targets[1], m);
  } else {
    apply_1q(amps, n_qubits, gate.targets[0], m);
  }
}

void apply_gate_adjoint_inplace(std::span<Complex> amps, std::size_t n_qubits, const GateOp& gate) {
  const Mat2 m = adjoint(gate_matrix(gate));
  if (is_controlled(gate.kind)) {
    apply_controlled(amps, n_qubits, gate.targets[0], gate.targets[1], m);
  } else {
    apply_1q(amps, n_qubits, gate.targets[0], m);
  }
}

// rho is treated as a 2n-qubit vector: row qubit q is register qubit q,
// column qubit q is register qubit n + q. U rho U^dagger is then U on the
// row half followed by conj(U) on the column half.
void apply_gate_dm_inplace(std::span<Complex> rho, std::size_t n_qubits, const GateOp& gate) {
  const Mat2 m = gate_matrix(gate);
  const Mat2 mc = conj(m);
  const std::size_t reg = 2 * n_qubits;
  if (is_controlled(gate.kind)) {
    const auto c = gate.targets[0];
    const auto t = gate.targets[1];
    apply_controlled(rho, reg, c, t, m);
    apply_controlled(rho, reg, n_qubits + c, n_qubits + t, mc);
  } else {
    const auto q = gate.targets[0];
    apply_1q(rho, reg, q, m);
    apply_1q(rho, reg, n_qubits + q, mc);
  }
}

void apply_channel_inplace(std::vector<Complex>& rho, std::vector<Complex>& scratch, std::size_t n_qubits,
                           const KrausChannel& channel, std::size_t qubit) {
  const std::size_t reg = 2 * n_qubits;
  if (channel.operators.size() == 1) {
    apply_1q(rho, reg, qubit, channel.operators[0]);
    apply_1q(rho, reg, n_qubits + qubit, conj(channel.operators[0]));
    return;
  }
  std::vector<Complex> acc(rho.size(), Complex{0.0});
  for (const auto& e : channel.operators) {
    scratch.assign(rho.begin(), rho.end());
    apply_1q(scratch, reg, qubit, e);
    apply_1q(scratch, reg, n_qubits + qubit, conj(e));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scratch[i];
  }
  rho.swap(acc);
}

}  // namespace kernels

StateVector apply_gate(const StateVector& state, const GateOp& gate) {
  validate_gate(gate, state.n_qubits());
  StateVector out = state;
  kernels::apply_gate_inplace(out.mutable_amplitudes(), out.n_qubits(), gate);
  return out;
}

DensityMatrix apply_gate_dm(const DensityMatrix& dm, const GateOp& gate) {
  validate_gate(gate, dm.n_qubits());
  DensityMatrix out = dm;
  kernels::apply_gate_dm_inplace(out.mutable_entries(), out.n_qubits(), gate);
  return out;
}

// ---------------------------------------------------------------------------
// Channels

double KrausChannel::completeness_error() const noexcept {
  Mat2 sum{};
  for (const auto& e : operators) {
    const Mat2 p = multiply(adjoint(e), e);
    for (std::size_t i = 0; i < 4; ++i) sum[i] += p[i];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(sum[i] - kIdentity[i]));
  return worst;
}

std::string KrausChannel::label() const {
  switch (kind) {
    case ChannelKind::Depolarizing: return "depolarizing(" + std::to_string(parameter) + ")";
    case ChannelKind::AmplitudeDamping: return "amplitude_damping(" + std::to_string(parameter) + ")";
    case ChannelKind::Custom: return "custom";
  }
  return "?";
}

KrausChannel make_depolarizing(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("depolarizing probability must be in [0, 1]");
  const double a = std::sqrt(1.0 - p);
  const double b = std::sqrt(p / 3.0);
  return {ChannelKind::Depolarizing, p, {scale(kIdentity, a), scale(kPauliX, b), scale(kPauliY, b), scale(kPauliZ, b)}};
}

KrausChannel make_amplitude_damping(double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("damping rate must be in [0, 1]");
  const Mat2 e0{Complex{1}, Complex{0}, Complex{0}, Complex{std::sqrt(1.0 - gamma)}};
  const Mat2 e1{Complex{0}, Complex{std::sqrt(gamma)}, Complex{0}, Complex{0}};
  return {ChannelKind::AmplitudeDamping, gamma, {e0, e1}};
}

KrausChannel make_custom_channel(std::vector<Mat2> operators) {
  KrausChannel channel{ChannelKind::Custom, 0.0, std::move(operators)};
  if (channel.operators.empty() || channel.completeness_error() > 1e-9) {
    throw std::invalid_argument("Kraus operators do not satisfy completeness");
  }
  return channel;
}

DensityMatrix apply_channel(const DensityMatrix& dm, const KrausChannel& channel, std::size_t qubit) {
  check_qubit(qubit, dm.n_qubits());
  std::vector<Complex> rho(dm.entries().begin(), dm.entries().end());
  std::vector<Complex> scratch;
  kernels::apply_channel_inplace(rho, scratch, dm.n_qubits(), channel, qubit);
  DensityMatrix out(dm.n_qubits());
  std::copy(rho.begin(), rho.end(), out.mutable_entries().begin());
  return out;
}

// ---------------------------------------------------------------------------
// Measurement

double expect_z(const StateVector& state, std::size_t qubit) {
  check_qubit(qubit, state.n_qubits());
  const std::size_t shift = state.n_qubits() - 1 - qubit;
  const auto amps = state.amplitudes();
  double total = 0.0;
  for (std::size_t i = 0; i < amps.size(); ++i) {
    total += ((i >> shift) & 1U) ? -std::norm(amps[i]) : std::norm(amps[i]);
  }
  return total;
}

double expect_z(const DensityMatrix& dm, std::size_t qubit) {
  check_qubit(qubit, dm.n_qubits());
  const std::size_t shift = dm.n_qubits() - 1 - qubit;
  double total = 0.0;
  for (std::size_t i = 0; i < dm.dim(); ++i) {
    const double p = dm(i, i).real();
    total += ((i >> shift) & 1U) ? -p : p;
  }
  return total;
}

double state_fidelity(const StateVector& a, const StateVector& b) {
  if (a.n_qubits() != b.n_qubits()) throw std::invalid_argument("fidelity requires equal qubit counts");
  Complex overlap{0.0};
  const auto x = a.amplitudes();
  const auto y = b.amplitudes();
  for (std::size_t i = 0; i < x.size(); ++i) overlap += std::conj(x[i]) * y[i];
  return std::min(1.0, std::norm(overlap));
}

// ---------------------------------------------------------------------------
// Circuits

void validate_circuit(const CircuitSpec& circuit) {
  checked_dim(circuit.n_qubits);
  for (const auto& op : circuit.ops) validate_gate(op, circuit.n_qubits);
  if (circuit.initial_state && circuit.initial_state->n_qubits() != circuit.n_qubits) {
    throw std::invalid_argument("initial state qubit count does not match circuit");
  }
  if (circuit.noise) {
    for (const auto& ch : *circuit.noise) {
      if (ch.completeness_error() > 1e-9) throw std::invalid_argument("noise channel is not trace preserving");
    }
  }
}

StateVector run_pure(const CircuitSpec& circuit) {
  if (circuit.noise) throw std::invalid_argument("pure simulation cannot apply a noise policy");
  validate_circuit(circuit);
  StateVector state = circuit.initial_state ? *circuit.initial_state : StateVector(circuit.n_qubits);
  for (const auto& op : circuit.ops) kernels::apply_gate_inplace(state.mutable_amplitudes(), circuit.n_qubits, op);
  return state;
}

DensityMatrix run_mixed(const CircuitSpec& circuit) {
  validate_circuit(circuit);
  const std::size_t n = circuit.n_qubits;
  DensityMatrix start = circuit.initial_state ? DensityMatrix::from_pure(*circuit.initial_state) : DensityMatrix(n);
  std::vector<Complex> rho(start.entries().begin(), start.entries().end());
  std::vector<Complex> scratch;
  for (const auto& op : circuit.ops) {
    kernels::apply_gate_dm_inplace(rho, n, op);
    if (!circuit.noise) continue;
    for (const auto q : op.targets) {
      for (const auto& ch : *circuit.noise) kernels::apply_channel_inplace(rho, scratch, n, ch, q);
    }
  }
  std::copy(rho.begin(), rho.end(), start.mutable_entries().begin());
  return start;
}

}  // namespace qrobust::qcore
