#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qrobust/model.hpp"
#include "model_oracles.hpp"
#include "support.hpp"

using namespace qrobust;
using namespace qrobust::model;
using namespace support;

TEST_CASE("QMLP circuit structure") {
  QmlpConfig c{2, 1, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal};
  const std::vector<double> theta(c.n_theta(), 0.0);
  const std::vector<double> x{0.0, 0.0};
  const auto b = build_qmlp_circuit(c, theta, x, AmplitudePrep::Ideal);
  CHECK(b.circuit.ops.size() == 8);
  CHECK(b.sources.size() == 8);

  const auto s = qcore::run_pure(b.circuit);
  CHECK(qcore::expect_z(s, 0) == doctest::Approx(1.0));
  CHECK(qcore::expect_z(s, 1) == doctest::Approx(1.0));

  // Re-upload repeats the encoding every layer; without it only once.
  c.layers = 3;
  const std::vector<double> theta3(c.n_theta(), 0.0);
  CHECK(build_qmlp_circuit(c, theta3, x, AmplitudePrep::Ideal).circuit.ops.size() == 3 * 8);
  c.reupload = false;
  CHECK(build_qmlp_circuit(c, theta3, x, AmplitudePrep::Ideal).circuit.ops.size() == 2 + 3 * 6);

  // Amplitude encoding never re-emits state preparation.
  QmlpConfig a{2, 3, encode::EncodingKind::Amplitude, true, 2, AmplitudePrep::Ideal};
  const std::vector<double> xa{0.1, 0.2, 0.3, 0.4};
  const auto ba = build_qmlp_circuit(a, theta3, xa, AmplitudePrep::Ideal);
  CHECK(ba.amplitude_input);
  CHECK(ba.circuit.initial_state.has_value());
  CHECK(ba.circuit.ops.size() == 3 * 6);
  for (const auto& src : ba.sources) CHECK(src.kind != AngleSource::Kind::Input);
  const auto bg = build_qmlp_circuit(a, theta3, xa, AmplitudePrep::Gates);
  CHECK(!bg.circuit.initial_state.has_value());
  CHECK(bg.circuit.ops.size() > 3 * 6);

  CHECK_THROWS_AS(build_qmlp_circuit(c, std::vector<double>(5, 0.0), x, AmplitudePrep::Ideal), std::invalid_argument);
  CHECK_THROWS_AS(QmlpModel(QmlpConfig{2, 0, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal}),
                  std::invalid_argument);
  CHECK_THROWS_AS(QmlpModel(QmlpConfig{2, 1, encode::EncodingKind::Angle, true, 1, AmplitudePrep::Ideal}),
                  std::invalid_argument);
}

TEST_CASE("PQC-6 circuit structure") {
  Pqc6Config c;
  CHECK(c.params_per_layer() == 24);
  CHECK(c.n_theta() == 144);
  Pqc6Model m(c);
  CHECK(m.n_circuit_params() == 144);

  const std::vector<double> x{0.3, -0.2, 1.0, 2.0, -1.5, 0.7, 0.1, 0.0};
  const std::vector<double> theta(144, 0.0);
  const auto b = build_pqc6_circuit(c, theta, x);
  CHECK(b.circuit.ops.size() == 16 + 6 * 24);
  // All-zero parameters leave only the encoding in effect.
  const auto enc = qcore::run_pure(m.encoder_circuit(x));
  CHECK(qcore::state_fidelity(enc, qcore::run_pure(b.circuit)) == doctest::Approx(1.0));
  // CRX pairs are ordered by (control, target).
  const auto& first = b.circuit.ops[16 + 12];
  CHECK(first.kind == qcore::GateKind::CRX);
  CHECK(first.targets == std::vector<std::size_t>{0, 1});
  CHECK(b.circuit.ops[16 + 23].targets == std::vector<std::size_t>{3, 2});

  CHECK_THROWS_AS(build_pqc6_circuit(c, theta, std::vector<double>(7, 0.0)), std::invalid_argument);
}

TEST_CASE("forward examples") {
  QmlpConfig c{1, 1, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal};
  QmlpModel m(c);
  const std::vector<double> x{0.7};
  for (double v : m.forward(x, EvalMode::pure())) CHECK(v == 0.0);

  m.head_w(0, 0) = 1.0;
  const std::vector<double> zero{0.0};
  CHECK(m.forward(zero, EvalMode::pure())[0] == doctest::Approx(1.0));
  m.head_b(1) = 0.25;
  CHECK(m.forward(zero, EvalMode::pure())[1] == doctest::Approx(0.25));
  CHECK(predict(m, zero, EvalMode::pure()) == 0);
}

TEST_CASE("depolarizing noise contracts readouts by the closed-form factor") {
  // One qubit, theta = 0, x = 0: every gate is the identity, so each gate's
  // channel shrinks <Z> by (1 - 4p/3). Three gates per layer.
  for (double p : {0.01, 0.1, 0.3}) {
    for (std::size_t layers : {1u, 4u, 10u}) {
      QmlpModel m(QmlpConfig{1, layers, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal});
      m.head_w(0, 0) = 1.0;
      const std::vector<double> x{0.0};
      const auto logits = m.forward(x, EvalMode::mixed({qcore::make_depolarizing(p)}));
      CHECK(logits[0] == doctest::Approx(std::pow(1 - 4 * p / 3, 3.0 * static_cast<double>(layers))).epsilon(1e-12));
    }
  }

  Rng rng(3);
  QmlpModel deep(QmlpConfig{3, 5, encode::EncodingKind::Angle, true, 3, AmplitudePrep::Ideal}, rng);
  const std::vector<double> x{0.4, 1.2, 2.0};
  const auto logits = deep.forward(x, EvalMode::mixed({qcore::make_depolarizing(0.75)}));
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(logits[k] - deep.head_b(k)) < 1e-12);
}

TEST_CASE("gradient examples on a single rotation") {
  QmlpModel m(QmlpConfig{1, 1, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal});
  m.head_w(0, 0) = 1.0;
  const LossFn first_logit = [](std::span<const double> l, std::span<double> g) {
    g[0] = 1.0;
    g[1] = 0.0;
    return l[0];
  };
  // <Z> = cos(x + theta_RY): d/dtheta at x = pi/2 is -1, at 0 is 0.
  for (auto method : {GradMethod::Adjoint, GradMethod::ParameterShift}) {
    const std::vector<double> half{kPi / 2};
    const std::vector<double> zero{0.0};
    CHECK(grad_params(m, half, first_logit, EvalMode::pure(), method)[0] == doctest::Approx(-1.0));
    CHECK(std::abs(grad_params(m, zero, first_logit, EvalMode::pure(), method)[0]) < 1e-12);
    CHECK(grad_input(m, half, first_logit, EvalMode::pure(), method)[0] == doctest::Approx(-1.0));
  }

  // Zero head weights kill the input gradient.
  QmlpModel z(QmlpConfig{2, 2, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal});
  const std::vector<double> x{0.3, 0.9};
  for (double g : grad_input(z, x, quadratic_loss({1.0, -1.0}), EvalMode::pure())) CHECK(g == 0.0);

  const auto mixed = EvalMode::mixed({qcore::make_depolarizing(0.01)});
  CHECK_THROWS_AS(grad_params(z, x, quadratic_loss({1.0, -1.0}), mixed), std::invalid_argument);
  CHECK_THROWS_AS(grad_input(z, x, quadratic_loss({1.0, -1.0}), mixed), std::invalid_argument);
}

TEST_CASE("random 3-qubit 2-layer model matches finite differences") {
  Rng rng(2024);
  QmlpModel m(QmlpConfig{3, 2, encode::EncodingKind::Angle, true, 3, AmplitudePrep::Ideal}, rng);
  const auto x = support::random_vector(rng, 3, 0.0, kPi);
  const auto loss = quadratic_loss({0.5, -1.0, 0.25});
  CHECK(rel_error(grad_params(m, x, loss, EvalMode::pure()), fd_params(m, x, loss, 1e-4)) < 1e-5);
  CHECK(rel_error(grad_input(m, x, loss, EvalMode::pure()), fd_input(m, x, loss, 1e-4)) < 1e-5);
}

TEST_CASE("gradients match finite differences on random models (property)") {
  Rng rng(31337);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 20; ++trial) {
    auto [m, x] = random_quantum_case(rng);
    std::vector<double> c(m->n_classes());
    for (auto& v : c) v = uniform(rng, -1, 1);
    const auto loss = quadratic_loss(c);
    const auto gp = grad_params(*m, x, loss, EvalMode::pure());
    const auto gi = grad_input(*m, x, loss, EvalMode::pure());
    INFO(m->describe());
    CHECK(rel_error(gp, fd_params(*m, x, loss, 1e-4)) < 1e-5);
    CHECK(rel_error(gi, fd_input(*m, x, loss, 1e-4)) < 1e-5);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::minutes(1));
}

TEST_CASE("adjoint and parameter-shift paths agree (property)") {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    auto [m, x] = random_quantum_case(rng);
    const auto loss = quadratic_loss(std::vector<double>(m->n_classes(), 0.3));
    CHECK(rel_error(grad_params(*m, x, loss, EvalMode::pure(), GradMethod::Adjoint),
                    grad_params(*m, x, loss, EvalMode::pure(), GradMethod::ParameterShift)) < 1e-8);
    CHECK(rel_error(grad_input(*m, x, loss, EvalMode::pure(), GradMethod::Adjoint),
                    grad_input(*m, x, loss, EvalMode::pure(), GradMethod::ParameterShift)) < 1e-8);
  }
}

TEST_CASE("amplitude input gradient matches finite differences") {
  Rng rng(6);
  QmlpModel m(QmlpConfig{1, 2, encode::EncodingKind::Amplitude, true, 2, AmplitudePrep::Ideal}, rng);
  const std::vector<double> x{3.0, 4.0};
  const auto loss = quadratic_loss({1.0, -0.5});
  const auto g = grad_input(m, x, loss, EvalMode::pure());
  CHECK(rel_error(g, fd_input(m, x, loss, 1e-4)) < 1e-5);
  // Scaling x does not change the state, so the gradient is orthogonal to x.
  CHECK(std::abs(g[0] * x[0] + g[1] * x[1]) < 1e-10);
}

TEST_CASE("pure and noiseless mixed forward agree (property)") {
  Rng rng(12);
  const auto silent = EvalMode::mixed({qcore::make_depolarizing(0.0), qcore::make_amplitude_damping(0.0)});
  for (int trial = 0; trial < 30; ++trial) {
    auto [m, x] = random_quantum_case(rng);
    const auto a = m->forward(x, EvalMode::pure());
    const auto b = m->forward(x, silent);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-9);
  }
  // Gate-based amplitude preparation gives the same readout as the ideal state.
  QmlpModel g(QmlpConfig{3, 2, encode::EncodingKind::Amplitude, true, 2, AmplitudePrep::Gates}, rng);
  const auto x = support::random_vector(rng, 8, 0.0, 1.0);
  const auto a = g.forward(x, EvalMode::pure());
  const auto b = g.forward(x, silent);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-9);
}

TEST_CASE("forward is bitwise deterministic") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto [m, x] = random_quantum_case(rng);
    CHECK(m->forward(x, EvalMode::pure()) == m->forward(x, EvalMode::pure()));
    const auto noisy = EvalMode::mixed({qcore::make_depolarizing(0.05)});
    CHECK(m->forward(x, noisy) == m->forward(x, noisy));
  }
  Rng a(9), b(9);
  QmlpModel m1(QmlpConfig{2, 2, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal}, a);
  QmlpModel m2(QmlpConfig{2, 2, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal}, b);
  CHECK(std::equal(m1.params().begin(), m1.params().end(), m2.params().begin()));
}

TEST_CASE("initialization ranges") {
  Rng rng(4);
  QmlpModel m(QmlpConfig{4, 3, encode::EncodingKind::Angle, true, 4, AmplitudePrep::Ideal}, rng);
  for (double t : m.circuit_params()) CHECK(std::abs(t) <= kPi);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t q = 0; q < 4; ++q) CHECK(std::abs(m.head_w(c, q)) <= 0.5);
}

TEST_CASE("CMLP examples and gradients") {
  CmlpModel zero(CmlpConfig{3, 4, 2});
  zero.b2(0) = 0.5;
  zero.b2(1) = -1.0;
  const std::vector<double> x{1.0, 2.0, 3.0};
  const auto l = zero.forward(x, EvalMode::pure());
  CHECK(l[0] == 0.5);
  CHECK(l[1] == -1.0);

  CmlpModel tiny(CmlpConfig{1, 1, 2});
  tiny.w1(0, 0) = 1.0;
  const std::vector<double> two{2.0};
  CHECK(tiny.hidden(two)[0] == 2.0);
  const std::vector<double> neg{-2.0};
  CHECK(tiny.hidden(neg)[0] == 0.0);

  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    CmlpModel m(CmlpConfig{5, 7, 3}, rng);
    const auto xi = support::random_vector(rng, 5, -1, 1);
    const auto loss = quadratic_loss({0.2, -0.4, 1.0});
    std::vector<double> g(m.n_params());
    m.loss_and_grad(xi, loss, g, GradMethod::Adjoint);
    CHECK(rel_error(g, fd_params(m, xi, loss, 1e-6)) < 1e-6);
    CHECK(rel_error(m.grad_input(xi, loss, GradMethod::Adjoint), fd_input(m, xi, loss, 1e-6)) < 1e-6);
  }
  CHECK_THROWS_AS(CmlpModel(CmlpConfig{3, 0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(zero.forward(std::vector<double>{1.0}, EvalMode::pure()), std::invalid_argument);
}

TEST_CASE("SPSA examples") {
  Rng rng(10);
  const auto quad = [](std::span<const double> t) {
    double s = 0.0;
    for (double v : t) s += v * v;
    return s;
  };
  const std::vector<double> origin(6, 0.0);
  const double c = 0.02;
  for (double g : spsa_grad(quad, origin, c, rng)) CHECK(std::abs(g) <= c * 6);

  const double a = 1.7;
  const auto linear = [a](std::span<const double> t) { return a * t[0]; };
  for (int i = 0; i < 10; ++i) CHECK(spsa_grad(linear, std::vector<double>{0.3}, c, rng)[0] == doctest::Approx(a));

  CHECK_THROWS_AS(spsa_grad(quad, origin, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(spsa_grad(quad, origin, -1.0, rng), std::invalid_argument);
}

TEST_CASE("SPSA averages toward the true gradient (Monte-Carlo)") {
  Rng init(77);
  const std::size_t d = 4;
  const auto target = support::random_vector(init, d, -1, 1);
  const auto theta = support::random_vector(init, d, -1, 1);
  const auto f = [&](std::span<const double> t) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (t[i] - target[i]) * (t[i] - target[i]);
    return s;
  };
  std::vector<double> truth(d);
  for (std::size_t i = 0; i < d; ++i) truth[i] = 2 * (theta[i] - target[i]);

  auto average = [&](int seeds) {
    std::vector<double> mean(d, 0.0);
    for (int s = 0; s < seeds; ++s) {
      Rng rng = make_stream(static_cast<std::uint64_t>(s), "spsa");
      const auto g = spsa_grad(f, theta, 0.02, rng);
      for (std::size_t i = 0; i < d; ++i) mean[i] += g[i] / seeds;
    }
    return mean;
  };
  double dot = 0.0, nm = 0.0, nt = 0.0;
  const auto m50 = average(50);
  for (std::size_t i = 0; i < d; ++i) {
    dot += m50[i] * truth[i];
    nm += m50[i] * m50[i];
    nt += truth[i] * truth[i];
  }
  // Direction of the 50-seed mean is within 10% of the true gradient.
  CHECK(dot / std::sqrt(nm * nt) > 0.9);
  // Magnitude converges as well with more seeds.
  const auto m2000 = average(2000);
  double err = 0.0;
  for (std::size_t i = 0; i < d; ++i) err += (m2000[i] - truth[i]) * (m2000[i] - truth[i]);
  CHECK(std::sqrt(err / nt) < 0.1);
}

TEST_CASE("checkpoints round-trip losslessly") {
  Rng rng(123);
  std::vector<std::unique_ptr<Classifier>> models;
  models.push_back(std::make_unique<QmlpModel>(
      QmlpConfig{3, 2, encode::EncodingKind::Amplitude, false, 4, AmplitudePrep::Gates}, rng));
  models.push_back(std::make_unique<QmlpModel>(
      QmlpConfig{2, 3, encode::EncodingKind::Angle, true, 2, AmplitudePrep::Ideal}, rng));
  models.push_back(std::make_unique<Pqc6Model>(Pqc6Config{}, rng));
  models.push_back(std::make_unique<CmlpModel>(CmlpConfig{6, 5, 3}, rng));
  for (const auto& m : models) {
    std::stringstream ss;
    save_checkpoint(ss, *m, 987654321);
    const auto loaded = load_checkpoint(ss);
    CHECK(loaded.seed == 987654321);
    CHECK(loaded.model->describe() == m->describe());
    REQUIRE(loaded.model->n_params() == m->n_params());
    CHECK(std::equal(m->params().begin(), m->params().end(), loaded.model->params().begin()));
  }
  std::stringstream bad("not-a-checkpoint 1\n");
  CHECK_THROWS(load_checkpoint(bad));
}
