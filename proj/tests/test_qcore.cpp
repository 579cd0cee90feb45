#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "qrobust/qcore.hpp"
#include "support.hpp"

using namespace qrobust::qcore;
using support::kPi;

namespace {

DensityMatrix diag_dm(std::vector<double> d) {
  const auto n = static_cast<std::size_t>(std::log2(d.size()));
  std::vector<Complex> e(d.size() * d.size());
  for (std::size_t i = 0; i < d.size(); ++i) e[i * d.size() + i] = d[i];
  return DensityMatrix::from_entries(n, e);
}

double max_dm_diff(const DensityMatrix& a, const DensityMatrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.entries().size(); ++i) m = std::max(m, std::abs(a.entries()[i] - b.entries()[i]));
  return m;
}

DensityMatrix random_mixed(qrobust::Rng& rng, std::size_t n) {
  // Convex mixture of three random pure states.
  const std::size_t dim = std::size_t{1} << n;
  std::vector<Complex> e(dim * dim);
  double w[3] = {0.5, 0.3, 0.2};
  for (double wk : w) {
    const auto v = support::random_amplitudes(rng, dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) e[i * dim + j] += wk * v[i] * std::conj(v[j]);
  }
  return DensityMatrix::from_entries(n, e);
}

}  // namespace

TEST_CASE("states validate their invariants") {
  StateVector s(3);
  CHECK(s.dim() == 8);
  CHECK(s.amplitudes()[0] == Complex(1.0));
  CHECK_THROWS_AS(StateVector::from_amplitudes(1, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(StateVector::from_amplitudes(2, {1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(StateVector(0), std::invalid_argument);

  CHECK_THROWS_AS(DensityMatrix::from_entries(1, {0.5, 0.0, 0.0, 0.4}), std::invalid_argument);
  CHECK_THROWS_AS(DensityMatrix::from_entries(1, {0.5, 0.1, 0.2, 0.5}), std::invalid_argument);
  const auto dm = diag_dm({0.75, 0.25});
  CHECK(dm.trace().real() == doctest::Approx(1.0));
  CHECK(dm.min_eigenvalue() == doctest::Approx(0.25));
}

TEST_CASE("apply_gate examples") {
  const StateVector zero(1);
  const auto one = apply_gate(zero, GateOp::ry(0, kPi));
  CHECK(std::abs(one.amplitudes()[0]) < 1e-15);
  CHECK(std::abs(one.amplitudes()[1] - Complex(1.0)) < 1e-15);

  const auto same = apply_gate(zero, GateOp::ry(0, 0.0));
  CHECK(same.amplitudes()[0] == Complex(1.0));
  CHECK(same.amplitudes()[1] == Complex(0.0));

  CHECK(std::abs(expect_z(apply_gate(zero, GateOp::h(0)), 0)) < 1e-15);
  // Input untouched.
  CHECK(zero.amplitudes()[0] == Complex(1.0));

  CHECK_THROWS_AS(apply_gate(zero, GateOp::x(1)), std::out_of_range);
  CHECK_THROWS_AS(apply_gate(zero, GateOp{GateKind::RY, std::nullopt, {0}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_gate(StateVector(2), GateOp::cx(1, 1)), std::invalid_argument);
}

TEST_CASE("apply_gate_dm examples") {
  const auto flipped = apply_gate_dm(diag_dm({1, 0}), GateOp::x(0));
  CHECK(max_dm_diff(flipped, diag_dm({0, 1})) < 1e-15);

  qrobust::Rng rng(7);
  const auto rho = random_mixed(rng, 2);
  CHECK(max_dm_diff(apply_gate_dm(rho, GateOp::rz(1, 0.0)), rho) < 1e-15);

  const auto plus = apply_gate_dm(diag_dm({1, 0}), GateOp::h(0));
  for (const auto& e : plus.entries()) CHECK(std::abs(e - Complex(0.5)) < 1e-15);
}

TEST_CASE("gate matrices are unitary for random angles") {
  qrobust::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto g = support::random_gate(rng, 2);
    const auto m = gate_matrix(g);
    const auto p = multiply(adjoint(m), m);
    CHECK(std::abs(p[0] - Complex(1.0)) < 1e-12);
    CHECK(std::abs(p[1]) < 1e-12);
    CHECK(std::abs(p[2]) < 1e-12);
    CHECK(std::abs(p[3] - Complex(1.0)) < 1e-12);
  }
}

TEST_CASE("gate derivatives match finite differences of the gate matrix") {
  for (auto kind : {GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::CRX}) {
    for (double t : {-2.0, 0.3, 1.7}) {
      GateOp g{kind, t, kind == GateKind::CRX ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{0}};
      const auto d = gate_matrix_derivative(g);
      const double h = 1e-6;
      GateOp gp = g, gm = g;
      *gp.angle += h;
      *gm.angle -= h;
      const auto mp = gate_matrix(gp), mm = gate_matrix(gm);
      for (int k = 0; k < 4; ++k) CHECK(std::abs((mp[k] - mm[k]) / (2 * h) - d[k]) < 1e-8);
    }
  }
}

TEST_CASE("strided kernels agree with dense matrix products on up to 3 qubits") {
  qrobust::Rng rng(3);
  for (std::size_t n = 1; n <= 3; ++n) {
    for (int trial = 0; trial < 60; ++trial) {
      const auto g = support::random_gate(rng, n);
      const auto u = support::oracle_unitary(g, n);
      const auto amps = support::random_amplitudes(rng, std::size_t{1} << n);
      const auto got = apply_gate(StateVector::from_amplitudes(n, amps), g);
      const auto want = support::apply(u, amps);
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.amplitudes()[i] - want[i]) < 1e-12);

      // rho -> U rho U^dagger
      const auto rho = random_mixed(rng, n);
      support::Dense r(rho.dim());
      for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = rho.entries()[i];
      const auto expect = u * r * support::dagger(u);
      const auto out = apply_gate_dm(rho, g);
      for (std::size_t i = 0; i < expect.a.size(); ++i) CHECK(std::abs(out.entries()[i] - expect.a[i]) < 1e-12);

      // Library dense reference agrees with the independent oracle too.
      const auto lib = dense_unitary(g, n);
      for (std::size_t i = 0; i < lib.size(); ++i) CHECK(std::abs(lib[i] - u.a[i]) < 1e-12);

      // Adjoint kernel undoes the gate.
      auto back = std::vector<Complex>(got.amplitudes().begin(), got.amplitudes().end());
      kernels::apply_gate_adjoint_inplace(back, n, g);
      for (std::size_t i = 0; i < amps.size(); ++i) CHECK(std::abs(back[i] - amps[i]) < 1e-12);
    }
  }
}

TEST_CASE("depolarizing channel") {
  const auto ch = make_depolarizing(0.75);
  CHECK(ch.operators.size() == 4);
  CHECK(ch.completeness_error() < 1e-12);
  const auto out = apply_channel(diag_dm({1, 0}), ch, 0);
  CHECK(max_dm_diff(out, diag_dm({0.5, 0.5})) < 1e-12);

  qrobust::Rng rng(5);
  const auto rho = random_mixed(rng, 2);
  CHECK(max_dm_diff(apply_channel(rho, make_depolarizing(0.0), 1), rho) < 1e-15);

  const double p = 0.01;
  const auto small = apply_channel(diag_dm({1, 0}), make_depolarizing(p), 0);
  CHECK(std::abs(small(0, 0).real() - (1 - 2 * p / 3)) < 1e-15);
  CHECK(std::abs(small(1, 1).real() - 2 * p / 3) < 1e-15);

  CHECK_THROWS_AS(make_depolarizing(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_depolarizing(1.1), std::invalid_argument);
}

TEST_CASE("amplitude damping channel") {
  const auto full = make_amplitude_damping(1.0);
  CHECK(max_dm_diff(apply_channel(diag_dm({0, 1}), full, 0), diag_dm({1, 0})) < 1e-15);
  qrobust::Rng rng(9);
  const auto rho = random_mixed(rng, 1);
  CHECK(max_dm_diff(apply_channel(rho, make_amplitude_damping(0.0), 0), rho) < 1e-15);
  CHECK(max_dm_diff(apply_channel(diag_dm({0, 1}), make_amplitude_damping(0.5), 0), diag_dm({0.5, 0.5})) < 1e-15);
  CHECK(max_dm_diff(apply_channel(diag_dm({0, 1}), make_amplitude_damping(0.3), 0), diag_dm({0.3, 0.7})) < 1e-12);

  const auto e = make_amplitude_damping(0.36).operators;
  CHECK(e[0][3].real() == doctest::Approx(0.8));
  CHECK(e[1][1].real() == doctest::Approx(0.6));
  CHECK_THROWS_AS(make_amplitude_damping(2.0), std::invalid_argument);
}

TEST_CASE("apply_channel acts on a single qubit of a register") {
  const auto out = apply_channel(DensityMatrix(2), make_depolarizing(0.75), 0);
  // (I/2) (x) |0><0| = diag(0.5, 0, 0.5, 0)
  CHECK(max_dm_diff(out, diag_dm({0.5, 0, 0.5, 0})) < 1e-12);

  const auto identity = make_custom_channel({Mat2{1, 0, 0, 1}});
  qrobust::Rng rng(4);
  const auto rho = random_mixed(rng, 2);
  CHECK(max_dm_diff(apply_channel(rho, identity, 1), rho) < 1e-15);
  CHECK_THROWS_AS(apply_channel(rho, identity, 2), std::out_of_range);
  CHECK_THROWS_AS(make_custom_channel({Mat2{1, 0, 0, 0.5}}), std::invalid_argument);
}

TEST_CASE("channels match direct Kraus sums on random states") {
  qrobust::Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + qrobust::uniform_index(rng, 3);
    const std::size_t q = qrobust::uniform_index(rng, n);
    const auto ch = trial % 2 ? make_depolarizing(qrobust::uniform01(rng)) : make_amplitude_damping(qrobust::uniform01(rng));
    const auto rho = random_mixed(rng, n);
    support::Dense r(rho.dim());
    for (std::size_t i = 0; i < r.a.size(); ++i) r.a[i] = rho.entries()[i];
    support::Dense sum(rho.dim());
    for (const auto& op : ch.operators) {
      const auto e = support::embed(support::mat2(op[0], op[1], op[2], op[3]), q, n);
      sum = sum + e * r * support::dagger(e);
    }
    const auto out = apply_channel(rho, ch, q);
    for (std::size_t i = 0; i < sum.a.size(); ++i) CHECK(std::abs(out.entries()[i] - sum.a[i]) < 1e-12);
  }
}

TEST_CASE("Kraus completeness holds for every constructed channel") {
  for (int i = 0; i <= 100; ++i) {
    const double p = i / 100.0;
    CHECK(make_depolarizing(p).completeness_error() < 1e-12);
    CHECK(make_amplitude_damping(p).completeness_error() < 1e-12);
  }
}

TEST_CASE("expect_z examples") {
  CHECK(expect_z(StateVector(1), 0) == 1.0);
  CHECK(expect_z(apply_gate(StateVector(1), GateOp::x(0)), 0) == -1.0);
  for (double t : {0.0, kPi / 2, kPi}) {
    CHECK(std::abs(expect_z(apply_gate(StateVector(1), GateOp::ry(0, t)), 0) - std::cos(t)) < 1e-15);
  }
  CHECK(expect_z(diag_dm({0.75, 0.25}), 0) == doctest::Approx(0.5));
  // Qubit ordering: X on qubit 1 of two flips only that qubit.
  const auto s = apply_gate(StateVector(2), GateOp::x(1));
  CHECK(expect_z(s, 0) == 1.0);
  CHECK(expect_z(s, 1) == -1.0);
  CHECK(std::abs(s.amplitudes()[1] - Complex(1.0)) < 1e-15);
  CHECK_THROWS_AS(expect_z(s, 2), std::out_of_range);
}

TEST_CASE("state_fidelity examples") {
  const StateVector zero(1);
  const auto one = apply_gate(zero, GateOp::x(0));
  const auto plus = apply_gate(zero, GateOp::h(0));
  CHECK(state_fidelity(zero, zero) == doctest::Approx(1.0));
  CHECK(state_fidelity(zero, one) == doctest::Approx(0.0));
  CHECK(state_fidelity(zero, plus) == doctest::Approx(0.5));
  // Global phase is invisible.
  const auto phased = apply_gate(apply_gate(zero, GateOp::rz(0, 1.3)), GateOp::ry(0, 0.0));
  CHECK(state_fidelity(zero, phased) == doctest::Approx(1.0));
  CHECK_THROWS_AS(state_fidelity(zero, StateVector(2)), std::invalid_argument);
}

TEST_CASE("run_circuit examples") {
  CircuitSpec empty{2, {}, std::nullopt, std::nullopt};
  const auto s = run_pure(empty);
  CHECK(s.amplitudes()[0] == Complex(1.0));

  CircuitSpec bell{2, {GateOp::h(0), GateOp::cx(0, 1)}, std::nullopt, std::nullopt};
  const auto b = run_pure(bell);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(b.amplitudes()[0] - Complex(r)) < 1e-15);
  CHECK(std::abs(b.amplitudes()[3] - Complex(r)) < 1e-15);
  CHECK(std::abs(b.amplitudes()[1]) < 1e-15);
  CHECK(std::abs(b.amplitudes()[2]) < 1e-15);

  const double p = 0.01;
  CircuitSpec noisy{1, {GateOp::ry(0, kPi / 2)}, std::vector{make_depolarizing(p)}, std::nullopt};
  const auto rho = run_mixed(noisy);
  // Direct Kraus evaluation of the same single step.
  const auto direct = apply_channel(DensityMatrix::from_pure(apply_gate(StateVector(1), GateOp::ry(0, kPi / 2))),
                                    make_depolarizing(p), 0);
  CHECK(max_dm_diff(rho, direct) < 1e-15);
  CHECK(std::abs(expect_z(rho, 0) - (1 - 4 * p / 3) * std::cos(kPi / 2)) < 1e-15);

  CHECK_THROWS_AS(run_pure(noisy), std::invalid_argument);
}

TEST_CASE("noise lands on both qubits of a two-qubit gate") {
  const auto ch = make_amplitude_damping(1.0);
  // X on both, then CX (no-op on |11> -> |10>), then full relaxation of both.
  CircuitSpec c{2, {GateOp::cx(0, 1)}, std::vector{ch}, StateVector::from_amplitudes(2, {0, 0, 0, 1})};
  const auto rho = run_mixed(c);
  CHECK(std::abs(rho(0, 0) - Complex(1.0)) < 1e-15);
}

TEST_CASE("random circuits stay normalized (property)") {
  qrobust::Rng rng(1234);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + qrobust::uniform_index(rng, 4);
    const auto c = support::random_circuit(rng, n, qrobust::uniform_index(rng, 21));
    CHECK(std::abs(run_pure(c).norm_squared() - 1.0) < 1e-9);
  }
}

TEST_CASE("mixed runs keep trace and positivity under channel sequences (property)") {
  qrobust::Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + qrobust::uniform_index(rng, 3);
    auto c = support::random_circuit(rng, n, 1 + qrobust::uniform_index(rng, 15));
    c.noise = std::vector{make_depolarizing(qrobust::uniform01(rng)), make_amplitude_damping(qrobust::uniform01(rng))};
    const auto rho = run_mixed(c);
    CHECK(std::abs(rho.trace() - Complex(1.0)) < 1e-9);
    CHECK(rho.hermiticity_error() < 1e-9);
    CHECK(rho.min_eigenvalue() > -1e-8);
  }
}

TEST_CASE("pure and mixed runs agree without noise (property)") {
  qrobust::Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + qrobust::uniform_index(rng, 4);
    const auto c = support::random_circuit(rng, n, qrobust::uniform_index(rng, 21));
    const auto s = run_pure(c);
    const auto rho = run_mixed(c);
    for (std::size_t q = 0; q < n; ++q) CHECK(std::abs(expect_z(s, q) - expect_z(rho, q)) < 1e-9);
  }
}

TEST_CASE("expect_z after RY equals cos on a dense grid") {
  for (int i = 0; i < 100; ++i) {
    const double t = -kPi + 2 * kPi * i / 99.0;
    CHECK(std::abs(expect_z(apply_gate(StateVector(1), GateOp::ry(0, t)), 0) - std::cos(t)) < 1e-12);
  }
}
