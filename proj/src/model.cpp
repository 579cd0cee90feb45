#include "qrobust/model.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "qrobust/train.hpp"

namespace qrobust::model {

using qcore::Complex;
using qcore::GateOp;

std::size_t predict(const Classifier& model, std::span<const double> x, const EvalMode& mode) {
  const auto logits = model.forward(x, mode);
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

std::vector<double> grad_params(const Classifier& model, std::span<const double> x, const LossFn& loss,
                                const EvalMode& mode, GradMethod method) {
  if (!mode.is_pure()) throw std::invalid_argument("exact gradients are unavailable under noise; use SPSA");
  std::vector<double> g(model.n_params());
  model.loss_and_grad(x, loss, g, method);
  return g;
}

std::vector<double> grad_input(const Classifier& model, std::span<const double> x, const LossFn& loss,
                               const EvalMode& mode, GradMethod method) {
  if (!mode.is_pure()) throw std::invalid_argument("exact gradients are unavailable under noise");
  return model.grad_input(x, loss, method);
}

namespace {

void check_input(std::span<const double> x, std::size_t expected, const std::string& who) {
  if (x.size() != expected) {
    throw std::invalid_argument(who + " expects " + std::to_string(expected) + " features, got " +
                                std::to_string(x.size()));
  }
}

// Diagonal of sum_i w_i Z_i in the computational basis.
std::vector<double> observable_diagonal(std::span<const double> weights, std::size_t n_qubits) {
  const std::size_t dim = std::size_t{1} << n_qubits;
  std::vector<double> diag(dim, 0.0);
  for (std::size_t idx = 0; idx < dim; ++idx) {
    double v = 0.0;
    for (std::size_t q = 0; q < n_qubits; ++q) {
      v += ((idx >> (n_qubits - 1 - q)) & 1U) ? -weights[q] : weights[q];
    }
    diag[idx] = v;
  }
  return diag;
}

double diagonal_expectation(std::span<const double> diag, std::span<const Complex> amps) {
  double total = 0.0;
  for (std::size_t i = 0; i < amps.size(); ++i) total += diag[i] * std::norm(amps[i]);
  return total;
}

double shifted_expectation(const qcore::CircuitSpec& circuit, std::size_t op, double shift,
                           std::span<const double> diag) {
  qcore::CircuitSpec shifted = circuit;
  *shifted.ops[op].angle += shift;
  const auto state = qcore::run_pure(shifted);
  return diagonal_expectation(diag, state.amplitudes());
}

const char* encoding_name(encode::EncodingKind kind) {
  switch (kind) {
    case encode::EncodingKind::Angle: return "angle";
    case encode::EncodingKind::Amplitude: return "amplitude";
    case encode::EncodingKind::DenseAngle: return "dense_angle";
  }
  return "?";
}

}  // namespace

// ---------------------------------------------------------------------------
// QuantumClassifier

QuantumClassifier::QuantumClassifier(std::size_t n_qubits, std::size_t n_classes, std::size_t n_circuit_params)
    : n_qubits_(n_qubits),
      n_classes_(n_classes),
      n_circuit_params_(n_circuit_params),
      params_(n_circuit_params + n_classes * n_qubits + n_classes, 0.0) {}

void QuantumClassifier::initialize(Rng& rng) {
  for (std::size_t i = 0; i < n_circuit_params_; ++i) params_[i] = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const double bound = 1.0 / std::sqrt(static_cast<double>(n_qubits_));
  for (std::size_t i = n_circuit_params_; i < params_.size(); ++i) params_[i] = uniform(rng, -bound, bound);
}

std::vector<double> QuantumClassifier::readout(std::span<const double> x, const EvalMode& mode) const {
  std::vector<double> z(n_qubits_);
  if (mode.is_pure()) {
    const auto state = qcore::run_pure(build(x, AmplitudePrep::Ideal).circuit);
    for (std::size_t q = 0; q < n_qubits_; ++q) z[q] = qcore::expect_z(state, q);
  } else {
    auto circuit = build(x, mixed_prep()).circuit;
    circuit.noise = mode.noise;
    const auto dm = qcore::run_mixed(circuit);
    for (std::size_t q = 0; q < n_qubits_; ++q) z[q] = qcore::expect_z(dm, q);
  }
  return z;
}

std::vector<double> QuantumClassifier::forward(std::span<const double> x, const EvalMode& mode) const {
  const auto z = readout(x, mode);
  std::vector<double> logits(n_classes_);
  for (std::size_t c = 0; c < n_classes_; ++c) {
    double v = head_b(c);
    for (std::size_t q = 0; q < n_qubits_; ++q) v += head_w(c, q) * z[q];
    logits[c] = v;
  }
  return logits;
}

QuantumClassifier::Sensitivities QuantumClassifier::sensitivities(const BoundCircuit& bound, const LossFn& loss,
                                                                  GradMethod method) const {
  const auto& circuit = bound.circuit;
  const auto& ops = circuit.ops;
  const auto psi = qcore::run_pure(circuit);

  std::vector<double> z(n_qubits_);
  for (std::size_t q = 0; q < n_qubits_; ++q) z[q] = qcore::expect_z(psi, q);
  std::vector<double> logits(n_classes_);
  for (std::size_t c = 0; c < n_classes_; ++c) {
    double v = head_b(c);
    for (std::size_t q = 0; q < n_qubits_; ++q) v += head_w(c, q) * z[q];
    logits[c] = v;
  }
  std::vector<double> dlogits(n_classes_, 0.0);

  Sensitivities out;
  out.loss = loss(logits, dlogits);
  out.head_grad.assign(n_classes_ * n_qubits_ + n_classes_, 0.0);
  std::vector<double> dz(n_qubits_, 0.0);
  for (std::size_t c = 0; c < n_classes_; ++c) {
    for (std::size_t q = 0; q < n_qubits_; ++q) {
      out.head_grad[c * n_qubits_ + q] = dlogits[c] * z[q];
      dz[q] += dlogits[c] * head_w(c, q);
    }
    out.head_grad[n_classes_ * n_qubits_ + c] = dlogits[c];
  }

  // dL/dangle = d<O>/dangle with O = sum_q dL/dz_q Z_q held fixed.
  const auto diag = observable_diagonal(dz, n_qubits_);
  out.op_grad.assign(ops.size(), 0.0);
  const std::size_t n = n_qubits_;

  std::vector<Complex> lambda(psi.amplitudes().begin(), psi.amplitudes().end());
  for (std::size_t i = 0; i < lambda.size(); ++i) lambda[i] *= diag[i];

  if (method == GradMethod::Adjoint) {
    std::vector<Complex> phi(psi.amplitudes().begin(), psi.amplitudes().end());
    std::vector<Complex> mu(phi.size());
    for (std::size_t k = ops.size(); k-- > 0;) {
      const auto& op = ops[k];
      qcore::kernels::apply_gate_adjoint_inplace(phi, n, op);
      if (bound.sources[k].kind != AngleSource::Kind::Fixed) {
        const auto du = qcore::gate_matrix_derivative(op);
        mu = phi;
        if (qcore::is_controlled(op.kind)) {
          qcore::kernels::apply_projected_controlled(mu, n, op.targets[0], op.targets[1], du);
        } else {
          qcore::kernels::apply_1q(mu, n, op.targets[0], du);
        }
        Complex overlap{0.0};
        for (std::size_t i = 0; i < mu.size(); ++i) overlap += std::conj(lambda[i]) * mu[i];
        out.op_grad[k] = 2.0 * overlap.real();
      }
      qcore::kernels::apply_gate_adjoint_inplace(lambda, n, op);
    }
  } else {
    // Two-term rule for single-qubit rotations; four-term rule for CRX,
    // whose generator has eigenvalues {0, +-1/2}.
    const double c1 = (std::sqrt(2.0) + 1.0) / (4.0 * std::sqrt(2.0));
    const double c2 = (std::sqrt(2.0) - 1.0) / (4.0 * std::sqrt(2.0));
    const double s = std::numbers::pi / 2.0;
    for (std::size_t k = 0; k < ops.size(); ++k) {
      if (bound.sources[k].kind == AngleSource::Kind::Fixed) continue;
      if (ops[k].kind == qcore::GateKind::CRX) {
        out.op_grad[k] = c1 * (shifted_expectation(circuit, k, s, diag) - shifted_expectation(circuit, k, -s, diag)) -
                         c2 * (shifted_expectation(circuit, k, 3 * s, diag) -
                               shifted_expectation(circuit, k, -3 * s, diag));
      } else {
        out.op_grad[k] =
            0.5 * (shifted_expectation(circuit, k, s, diag) - shifted_expectation(circuit, k, -s, diag));
      }
    }
    if (bound.amplitude_input) {
      for (std::size_t k = ops.size(); k-- > 0;) qcore::kernels::apply_gate_adjoint_inplace(lambda, n, ops[k]);
    }
  }

  if (bound.amplitude_input) {
    // lambda = U^dagger O U psi0; for real psi0, d<O>/dpsi0_j = 2 Re lambda_j.
    out.initial_grad.resize(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) out.initial_grad[i] = 2.0 * lambda[i].real();
  }
  return out;
}

double QuantumClassifier::loss_and_grad(std::span<const double> x, const LossFn& loss, std::span<double> grad,
                                        GradMethod method) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer has the wrong size");
  const auto bound = build(x, AmplitudePrep::Ideal);
  const auto sens = sensitivities(bound, loss, method);
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t k = 0; k < bound.sources.size(); ++k) {
    const auto& src = bound.sources[k];
    if (src.kind == AngleSource::Kind::Param) grad[src.index] += src.scale * sens.op_grad[k];
  }
  std::copy(sens.head_grad.begin(), sens.head_grad.end(), grad.begin() + static_cast<long>(n_circuit_params_));
  return sens.loss;
}

std::vector<double> QuantumClassifier::grad_input(std::span<const double> x, const LossFn& loss,
                                                  GradMethod method) const {
  const auto bound = build(x, AmplitudePrep::Ideal);
  const auto sens = sensitivities(bound, loss, method);
  std::vector<double> gx(x.size(), 0.0);
  for (std::size_t k = 0; k < bound.sources.size(); ++k) {
    const auto& src = bound.sources[k];
    if (src.kind == AngleSource::Kind::Input) gx[src.index] += src.scale * sens.op_grad[k];
  }
  if (bound.amplitude_input) {
    // psi0 = x / |x|  =>  dpsi0/dx = (I - psi0 psi0^T) / |x|
    double norm2 = 0.0;
    for (double v : x) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    double proj = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) proj += (x[i] / norm) * sens.initial_grad[i];
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += (sens.initial_grad[i] - (x[i] / norm) * proj) / norm;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// QMLP

void QmlpConfig::validate() const {
  if (n_qubits == 0 || n_qubits > qcore::kMaxQubits) throw std::invalid_argument("QMLP qubit count out of range");
  if (layers < 1) throw std::invalid_argument("QMLP needs at least one layer");
  if (n_classes < 2) throw std::invalid_argument("QMLP needs at least two classes");
}

std::size_t QmlpConfig::input_dim() const {
  return encode::EncodingSpec{encoding, n_qubits, encode::default_input_range(encoding)}.max_features();
}

BoundCircuit build_qmlp_circuit(const QmlpConfig& config, std::span<const double> theta, std::span<const double> x,
                                AmplitudePrep prep) {
  config.validate();
  if (theta.size() != config.n_theta()) throw std::invalid_argument("QMLP parameter shape mismatch");
  check_input(x, config.input_dim(), "QMLP");
  const std::size_t n = config.n_qubits;

  BoundCircuit out;
  out.circuit.n_qubits = n;
  auto& ops = out.circuit.ops;
  auto& src = out.sources;
  auto push = [&](GateOp op, AngleSource s) {
    ops.push_back(std::move(op));
    src.push_back(s);
  };

  auto emit_encoding = [&] {
    if (config.encoding == encode::EncodingKind::Angle) {
      for (std::size_t i = 0; i < x.size(); ++i) push(GateOp::ry(i, x[i]), {AngleSource::Kind::Input, i, 1.0});
    } else {
      const auto enc = encode::dense_angle_encode(x, n);
      for (std::size_t i = 0; i < enc.size(); ++i) {
        // RZ(a), RX(b), RZ(a/2), RX(b/2) per qubit
        const std::size_t q = i / 4;
        const std::size_t feature = 2 * q + (i % 2);
        push(enc[i], {AngleSource::Kind::Input, feature, (i % 4) < 2 ? 1.0 : 0.5});
      }
    }
  };

  if (config.encoding == encode::EncodingKind::Amplitude) {
    if (prep == AmplitudePrep::Ideal) {
      out.circuit.initial_state = encode::amplitude_encode(x, n);
      out.amplitude_input = true;
    } else {
      for (auto& op : encode::amplitude_prep_circuit(x, n)) push(std::move(op), {});
    }
  }

  for (std::size_t l = 0; l < config.layers; ++l) {
    if (config.encoding != encode::EncodingKind::Amplitude && (l == 0 || config.reupload)) emit_encoding();
    const std::size_t base = l * n * 3;
    for (std::size_t q = 0; q < n; ++q) {
      push(GateOp::ry(q, theta[base + q * 3]), {AngleSource::Kind::Param, base + q * 3, 1.0});
      push(GateOp::rz(q, theta[base + q * 3 + 1]), {AngleSource::Kind::Param, base + q * 3 + 1, 1.0});
    }
    if (n >= 2) {
      for (std::size_t q = 0; q < n; ++q) {
        push(GateOp::crx(q, (q + 1) % n, theta[base + q * 3 + 2]), {AngleSource::Kind::Param, base + q * 3 + 2, 1.0});
      }
    }
  }
  return out;
}

QmlpModel::QmlpModel(QmlpConfig config)
    : QuantumClassifier(config.n_qubits, config.n_classes, config.n_theta()), config_(config) {
  config_.validate();
}

QmlpModel::QmlpModel(QmlpConfig config, Rng& init_rng) : QmlpModel(config) { initialize(init_rng); }

BoundCircuit QmlpModel::build(std::span<const double> x, AmplitudePrep prep) const {
  return build_qmlp_circuit(config_, circuit_params(), x, prep);
}

qcore::CircuitSpec QmlpModel::encoder_circuit(std::span<const double> x) const {
  check_input(x, config_.input_dim(), "QMLP");
  qcore::CircuitSpec c;
  c.n_qubits = config_.n_qubits;
  switch (config_.encoding) {
    case encode::EncodingKind::Angle:
      c.ops = encode::angle_encode(x, {config_.encoding, config_.n_qubits, {}});
      break;
    case encode::EncodingKind::DenseAngle: c.ops = encode::dense_angle_encode(x, config_.n_qubits); break;
    case encode::EncodingKind::Amplitude: c.initial_state = encode::amplitude_encode(x, config_.n_qubits); break;
  }
  return c;
}

std::string QmlpModel::describe() const {
  std::ostringstream os;
  os << "qmlp qubits=" << config_.n_qubits << " layers=" << config_.layers
     << " encoding=" << encoding_name(config_.encoding) << " reupload=" << (config_.reupload ? 1 : 0)
     << " classes=" << config_.n_classes
     << " prep=" << (config_.amplitude_prep == AmplitudePrep::Gates ? "gates" : "ideal");
  return os.str();
}

// ---------------------------------------------------------------------------
// PQC-6

void Pqc6Config::validate() const {
  if (n_qubits < 2 || n_qubits > qcore::kMaxQubits) throw std::invalid_argument("PQC-6 qubit count out of range");
  if (layers < 1) throw std::invalid_argument("PQC-6 needs at least one layer");
  if (n_classes < 2) throw std::invalid_argument("PQC-6 needs at least two classes");
}

BoundCircuit build_pqc6_circuit(const Pqc6Config& config, std::span<const double> theta, std::span<const double> x) {
  config.validate();
  if (theta.size() != config.n_theta()) throw std::invalid_argument("PQC-6 parameter shape mismatch");
  const std::size_t n = config.n_qubits;
  check_input(x, 2 * n, "PQC-6");

  BoundCircuit out;
  out.circuit.n_qubits = n;
  const auto enc = encode::dense_angle_encode(x, n);
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const std::size_t q = i / 4;
    out.circuit.ops.push_back(enc[i]);
    out.sources.push_back({AngleSource::Kind::Input, 2 * q + (i % 2), (i % 4) < 2 ? 1.0 : 0.5});
  }
  const std::size_t per_layer = config.params_per_layer();
  for (std::size_t l = 0; l < config.layers; ++l) {
    std::size_t p = l * per_layer;
    for (std::size_t q = 0; q < n; ++q) {
      out.circuit.ops.push_back(GateOp::ry(q, theta[p]));
      out.sources.push_back({AngleSource::Kind::Param, p++, 1.0});
      out.circuit.ops.push_back(GateOp::rz(q, theta[p]));
      out.sources.push_back({AngleSource::Kind::Param, p++, 1.0});
      out.circuit.ops.push_back(GateOp::rx(q, theta[p]));
      out.sources.push_back({AngleSource::Kind::Param, p++, 1.0});
    }
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t t = 0; t < n; ++t) {
        if (c == t) continue;
        out.circuit.ops.push_back(GateOp::crx(c, t, theta[p]));
        out.sources.push_back({AngleSource::Kind::Param, p++, 1.0});
      }
    }
  }
  return out;
}

Pqc6Model::Pqc6Model(Pqc6Config config)
    : QuantumClassifier(config.n_qubits, config.n_classes, (config.validate(), config.n_theta())), config_(config) {}

Pqc6Model::Pqc6Model(Pqc6Config config, Rng& init_rng) : Pqc6Model(config) { initialize(init_rng); }

BoundCircuit Pqc6Model::build(std::span<const double> x, AmplitudePrep) const {
  return build_pqc6_circuit(config_, circuit_params(), x);
}

qcore::CircuitSpec Pqc6Model::encoder_circuit(std::span<const double> x) const {
  qcore::CircuitSpec c;
  c.n_qubits = config_.n_qubits;
  c.ops = encode::dense_angle_encode(x, config_.n_qubits);
  return c;
}

std::string Pqc6Model::describe() const {
  std::ostringstream os;
  os << "pqc6 qubits=" << config_.n_qubits << " layers=" << config_.layers << " classes=" << config_.n_classes;
  return os.str();
}

// ---------------------------------------------------------------------------
// CMLP

void CmlpConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("CMLP input_dim must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("CMLP hidden_dim must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("CMLP needs at least two classes");
}

CmlpModel::CmlpModel(CmlpConfig config) : config_(config), params_((config.validate(), config.n_params()), 0.0) {}

CmlpModel::CmlpModel(CmlpConfig config, Rng& init_rng) : CmlpModel(config) {
  const double b1_bound = 1.0 / std::sqrt(static_cast<double>(config_.input_dim));
  const double b2_bound = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));
  const std::size_t layer1 = config_.hidden_dim * (config_.input_dim + 1);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const double b = i < layer1 ? b1_bound : b2_bound;
    params_[i] = uniform(init_rng, -b, b);
  }
}

std::vector<double> CmlpModel::hidden(std::span<const double> x) const {
  check_input(x, config_.input_dim, "CMLP");
  const std::size_t d = config_.input_dim;
  const double* b1 = params_.data() + config_.hidden_dim * d;
  std::vector<double> h(config_.hidden_dim);
  for (std::size_t j = 0; j < config_.hidden_dim; ++j) {
    double v = b1[j];
    const double* row = params_.data() + j * d;
    for (std::size_t i = 0; i < d; ++i) v += row[i] * x[i];
    h[j] = v > 0.0 ? v : 0.0;
  }
  return h;
}

std::vector<double> CmlpModel::forward(std::span<const double> x, const EvalMode&) const {
  const auto h = hidden(x);
  const std::size_t hd = config_.hidden_dim;
  const double* w2 = params_.data() + hd * (config_.input_dim + 1);
  const double* b2 = w2 + config_.n_classes * hd;
  std::vector<double> logits(config_.n_classes);
  for (std::size_t c = 0; c < config_.n_classes; ++c) {
    double v = b2[c];
    for (std::size_t j = 0; j < hd; ++j) v += w2[c * hd + j] * h[j];
    logits[c] = v;
  }
  return logits;
}

double CmlpModel::loss_and_grad(std::span<const double> x, const LossFn& loss, std::span<double> grad,
                                GradMethod) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer has the wrong size");
  const auto h = hidden(x);
  const auto logits = forward(x, EvalMode::pure());
  std::vector<double> dlogits(config_.n_classes, 0.0);
  const double value = loss(logits, dlogits);

  const std::size_t d = config_.input_dim;
  const std::size_t hd = config_.hidden_dim;
  const std::size_t w2_off = hd * (d + 1);
  const std::size_t b2_off = w2_off + config_.n_classes * hd;
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> dh(hd, 0.0);
  for (std::size_t c = 0; c < config_.n_classes; ++c) {
    grad[b2_off + c] = dlogits[c];
    for (std::size_t j = 0; j < hd; ++j) {
      grad[w2_off + c * hd + j] = dlogits[c] * h[j];
      dh[j] += dlogits[c] * params_[w2_off + c * hd + j];
    }
  }
  for (std::size_t j = 0; j < hd; ++j) {
    if (h[j] <= 0.0) continue;
    grad[hd * d + j] = dh[j];
    for (std::size_t i = 0; i < d; ++i) grad[j * d + i] = dh[j] * x[i];
  }
  return value;
}

std::vector<double> CmlpModel::grad_input(std::span<const double> x, const LossFn& loss, GradMethod) const {
  const auto h = hidden(x);
  const auto logits = forward(x, EvalMode::pure());
  std::vector<double> dlogits(config_.n_classes, 0.0);
  loss(logits, dlogits);
  const std::size_t d = config_.input_dim;
  const std::size_t hd = config_.hidden_dim;
  const std::size_t w2_off = hd * (d + 1);
  std::vector<double> gx(d, 0.0);
  for (std::size_t j = 0; j < hd; ++j) {
    if (h[j] <= 0.0) continue;
    double dh = 0.0;
    for (std::size_t c = 0; c < config_.n_classes; ++c) dh += dlogits[c] * params_[w2_off + c * hd + j];
    for (std::size_t i = 0; i < d; ++i) gx[i] += dh * params_[j * d + i];
  }
  return gx;
}

std::string CmlpModel::describe() const {
  std::ostringstream os;
  os << "cmlp input=" << config_.input_dim << " hidden=" << config_.hidden_dim << " classes=" << config_.n_classes;
  return os.str();
}

// ---------------------------------------------------------------------------
// SPSA

std::vector<double> spsa_grad(const std::function<double(std::span<const double>)>& f,
                              std::span<const double> theta, double c, Rng& rng) {
  if (!(c > 0.0)) throw std::invalid_argument("SPSA perturbation must be positive");
  const std::size_t dim = theta.size();
  std::vector<double> delta(dim);
  for (auto& d : delta) d = (rng() >> 63) ? 1.0 : -1.0;
  std::vector<double> plus(theta.begin(), theta.end());
  std::vector<double> minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < dim; ++i) {
    plus[i] += c * delta[i];
    minus[i] -= c * delta[i];
  }
  const double diff = (f(plus) - f(minus)) / (2.0 * c);
  std::vector<double> g(dim);
  for (std::size_t i = 0; i < dim; ++i) g[i] = diff * delta[i];  // 1/delta == delta for +-1
  return g;
}

double batch_loss(const Classifier& model, std::span<const Sample> batch, const EvalMode& mode) {
  double total = 0.0;
  double mass = 0.0;
  for (const auto& s : batch) {
    if (s.weight == 0.0) continue;
    const auto logits = model.forward(s.x, mode);
    total += s.weight * train::cross_entropy(logits, s.target);
    mass += s.weight;
  }
  return mass > 0.0 ? total / mass : 0.0;
}

std::vector<double> spsa_grad(const Classifier& model, std::span<const Sample> batch, const EvalMode& mode, double c,
                              Rng& rng) {
  auto probe = model.clone();
  const auto f = [&](std::span<const double> theta) {
    auto dst = probe->mutable_params();
    std::copy(theta.begin(), theta.end(), dst.begin());
    return batch_loss(*probe, batch, mode);
  };
  return spsa_grad(f, model.params(), c, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "qrobust-checkpoint";
constexpr int kVersion = 1;

encode::EncodingKind parse_encoding(const std::string& s) {
  if (s == "angle") return encode::EncodingKind::Angle;
  if (s == "amplitude") return encode::EncodingKind::Amplitude;
  if (s == "dense_angle") return encode::EncodingKind::DenseAngle;
  throw std::runtime_error("checkpoint: unknown encoding '" + s + "'");
}

}  // namespace

void save_checkpoint(std::ostream& out, const Classifier& model, std::uint64_t seed) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "model " << model.kind() << '\n';
  out << "seed " << seed << '\n';
  if (const auto* q = dynamic_cast<const QmlpModel*>(&model)) {
    const auto& c = q->config();
    out << "n_qubits " << c.n_qubits << "\nlayers " << c.layers << "\nencoding " << encoding_name(c.encoding)
        << "\nreupload " << (c.reupload ? 1 : 0) << "\nn_classes " << c.n_classes << "\namplitude_prep "
        << (c.amplitude_prep == AmplitudePrep::Gates ? "gates" : "ideal") << '\n';
  } else if (const auto* p = dynamic_cast<const Pqc6Model*>(&model)) {
    const auto& c = p->config();
    out << "n_qubits " << c.n_qubits << "\nlayers " << c.layers << "\nn_classes " << c.n_classes << '\n';
  } else if (const auto* m = dynamic_cast<const CmlpModel*>(&model)) {
    const auto& c = m->config();
    out << "input_dim " << c.input_dim << "\nhidden_dim " << c.hidden_dim << "\nn_classes " << c.n_classes << '\n';
  } else {
    throw std::invalid_argument("checkpoint: unsupported model kind " + model.kind());
  }
  const auto params = model.params();
  out << "params " << params.size() << '\n';
  char buf[64];
  for (double v : params) {
    std::snprintf(buf, sizeof buf, "%a", v);
    out << buf << '\n';
  }
  out << "end\n";
}

LoadedCheckpoint load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw std::runtime_error("checkpoint: bad header");
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  std::map<std::string, std::string> fields;
  std::string key;
  std::size_t n_params = 0;
  while (in >> key) {
    if (key == "params") {
      if (!(in >> n_params)) throw std::runtime_error("checkpoint: missing parameter count");
      break;
    }
    std::string value;
    if (!(in >> value)) throw std::runtime_error("checkpoint: missing value for " + key);
    fields[key] = value;
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = fields.find(k);
    if (it == fields.end()) throw std::runtime_error("checkpoint: missing field " + k);
    return it->second;
  };
  auto get_size = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };

  LoadedCheckpoint loaded;
  loaded.seed = std::stoull(get("seed"));
  const auto& kind = get("model");
  if (kind == "qmlp") {
    QmlpConfig c;
    c.n_qubits = get_size("n_qubits");
    c.layers = get_size("layers");
    c.encoding = parse_encoding(get("encoding"));
    c.reupload = get("reupload") == "1";
    c.n_classes = get_size("n_classes");
    c.amplitude_prep = get("amplitude_prep") == "gates" ? AmplitudePrep::Gates : AmplitudePrep::Ideal;
    loaded.model = std::make_unique<QmlpModel>(c);
  } else if (kind == "pqc6") {
    loaded.model = std::make_unique<Pqc6Model>(
        Pqc6Config{get_size("n_qubits"), get_size("layers"), get_size("n_classes")});
  } else if (kind == "cmlp") {
    loaded.model = std::make_unique<CmlpModel>(
        CmlpConfig{get_size("input_dim"), get_size("hidden_dim"), get_size("n_classes")});
  } else {
    throw std::runtime_error("checkpoint: unknown model kind '" + kind + "'");
  }

  auto dst = loaded.model->mutable_params();
  if (n_params != dst.size()) throw std::runtime_error("checkpoint: parameter count does not match architecture");
  std::string token;
  for (std::size_t i = 0; i < n_params; ++i) {
    if (!(in >> token)) throw std::runtime_error("checkpoint: truncated parameter block");
    char* end = nullptr;
    dst[i] = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') throw std::runtime_error("checkpoint: bad number '" + token + "'");
  }
  if (!(in >> token) || token != "end") throw std::runtime_error("checkpoint: missing end marker");
  return loaded;
}

}  // namespace qrobust::model
