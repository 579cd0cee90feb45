#pragma once

// Test-only oracles and generators. Nothing here calls into the library's
// gate tables, so checks against it are independent.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "qrobust/qcore.hpp"
#include "qrobust/rng.hpp"

namespace support {

using qrobust::Rng;
using qrobust::qcore::Complex;
using qrobust::qcore::GateKind;
using qrobust::qcore::GateOp;

inline constexpr double kPi = std::numbers::pi;

struct Dense {
  std::size_t n = 0;
  std::vector<Complex> a;  // row-major n x n

  explicit Dense(std::size_t dim = 0) : n(dim), a(dim * dim) {}
  static Dense identity(std::size_t dim) {
    Dense d(dim);
    for (std::size_t i = 0; i < dim; ++i) d(i, i) = 1.0;
    return d;
  }
  Complex& operator()(std::size_t r, std::size_t c) { return a[r * n + c]; }
  Complex operator()(std::size_t r, std::size_t c) const { return a[r * n + c]; }
};

inline Dense mat2(Complex a, Complex b, Complex c, Complex d) {
  Dense m(2);
  m(0, 0) = a;
  m(0, 1) = b;
  m(1, 0) = c;
  m(1, 1) = d;
  return m;
}

inline Dense operator*(const Dense& x, const Dense& y) {
  Dense out(x.n);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t k = 0; k < x.n; ++k)
      for (std::size_t j = 0; j < x.n; ++j) out(i, j) += x(i, k) * y(k, j);
  return out;
}

inline Dense operator+(const Dense& x, const Dense& y) {
  Dense out(x.n);
  for (std::size_t i = 0; i < x.a.size(); ++i) out.a[i] = x.a[i] + y.a[i];
  return out;
}

inline Dense dagger(const Dense& x) {
  Dense out(x.n);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t j = 0; j < x.n; ++j) out(i, j) = std::conj(x(j, i));
  return out;
}

inline Dense kron(const Dense& x, const Dense& y) {
  Dense out(x.n * y.n);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t j = 0; j < x.n; ++j)
      for (std::size_t k = 0; k < y.n; ++k)
        for (std::size_t l = 0; l < y.n; ++l) out(i * y.n + k, j * y.n + l) = x(i, j) * y(k, l);
  return out;
}

// Textbook single-qubit matrices.
inline Dense pauli_x() { return mat2(0, 1, 1, 0); }
inline Dense pauli_y() { return mat2(0, Complex(0, -1), Complex(0, 1), 0); }
inline Dense pauli_z() { return mat2(1, 0, 0, -1); }
inline Dense hadamard() {
  const double s = 1.0 / std::sqrt(2.0);
  return mat2(s, s, s, -s);
}
inline Dense rot_x(double t) {
  return mat2(std::cos(t / 2), Complex(0, -std::sin(t / 2)), Complex(0, -std::sin(t / 2)), std::cos(t / 2));
}
inline Dense rot_y(double t) { return mat2(std::cos(t / 2), -std::sin(t / 2), std::sin(t / 2), std::cos(t / 2)); }
inline Dense rot_z(double t) { return mat2(std::polar(1.0, -t / 2), 0, 0, std::polar(1.0, t / 2)); }

/// Embeds a single-qubit matrix at `q` of an n-qubit register (qubit 0 leftmost).
inline Dense embed(const Dense& m, std::size_t q, std::size_t n) {
  Dense out = Dense::identity(1);
  for (std::size_t i = 0; i < n; ++i) out = kron(out, i == q ? m : Dense::identity(2));
  return out;
}

/// |0><0|_c (x) I + |1><1|_c (x) m_t
inline Dense controlled(const Dense& m, std::size_t c, std::size_t t, std::size_t n) {
  const Dense p0 = mat2(1, 0, 0, 0);
  const Dense p1 = mat2(0, 0, 0, 1);
  Dense a = Dense::identity(1), b = Dense::identity(1);
  for (std::size_t i = 0; i < n; ++i) {
    a = kron(a, i == c ? p0 : Dense::identity(2));
    b = kron(b, i == c ? p1 : (i == t ? m : Dense::identity(2)));
  }
  return a + b;
}

inline Dense oracle_unitary(const GateOp& g, std::size_t n) {
  const double t = g.angle.value_or(0.0);
  switch (g.kind) {
    case GateKind::X: return embed(pauli_x(), g.targets[0], n);
    case GateKind::Y: return embed(pauli_y(), g.targets[0], n);
    case GateKind::Z: return embed(pauli_z(), g.targets[0], n);
    case GateKind::H: return embed(hadamard(), g.targets[0], n);
    case GateKind::RX: return embed(rot_x(t), g.targets[0], n);
    case GateKind::RY: return embed(rot_y(t), g.targets[0], n);
    case GateKind::RZ: return embed(rot_z(t), g.targets[0], n);
    case GateKind::CX: return controlled(pauli_x(), g.targets[0], g.targets[1], n);
    case GateKind::CRX: return controlled(rot_x(t), g.targets[0], g.targets[1], n);
  }
  return Dense();
}

inline std::vector<Complex> apply(const Dense& m, const std::vector<Complex>& v) {
  std::vector<Complex> out(m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j) out[i] += m(i, j) * v[j];
  return out;
}

inline GateOp random_gate(Rng& rng, std::size_t n) {
  static constexpr GateKind kinds[] = {GateKind::X,  GateKind::Y,  GateKind::Z,  GateKind::H,  GateKind::RX,
                                       GateKind::RY, GateKind::RZ, GateKind::CX, GateKind::CRX};
  const std::size_t count = n >= 2 ? 9 : 7;
  const GateKind kind = kinds[qrobust::uniform_index(rng, count)];
  const std::size_t q0 = qrobust::uniform_index(rng, n);
  GateOp g{kind, std::nullopt, {q0}};
  if (qrobust::qcore::is_rotation(kind)) g.angle = qrobust::uniform(rng, -2 * kPi, 2 * kPi);
  if (qrobust::qcore::is_controlled(kind)) {
    std::size_t q1 = qrobust::uniform_index(rng, n - 1);
    if (q1 >= q0) ++q1;
    g.targets.push_back(q1);
  }
  return g;
}

inline qrobust::qcore::CircuitSpec random_circuit(Rng& rng, std::size_t n, std::size_t n_gates) {
  qrobust::qcore::CircuitSpec c;
  c.n_qubits = n;
  for (std::size_t i = 0; i < n_gates; ++i) c.ops.push_back(random_gate(rng, n));
  return c;
}

inline std::vector<Complex> random_amplitudes(Rng& rng, std::size_t dim) {
  std::vector<Complex> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = {qrobust::uniform(rng, -1, 1), qrobust::uniform(rng, -1, 1)};
    norm += std::norm(x);
  }
  for (auto& x : v) x /= std::sqrt(norm);
  return v;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = qrobust::uniform(rng, lo, hi);
  return v;
}

/// |a - b| <= tol * max(floor, |a|, |b|)
inline bool rel_close(double a, double b, double tol, double floor = 1.0) {
  return std::abs(a - b) <= tol * std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace support
