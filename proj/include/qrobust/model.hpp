#pragma once

// Hybrid classifiers: the re-uploading QMLP, the 4-qubit PQC-6 network, and
// a one-hidden-layer classical MLP. All share the Classifier interface used
// by training, attacks and defenses.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrobust/encode.hpp"
#include "qrobust/qcore.hpp"
#include "qrobust/rng.hpp"

namespace qrobust::model {

/// Pure statevector evaluation, or density-matrix evaluation with per-gate noise.
struct EvalMode {
  std::optional<std::vector<qcore::KrausChannel>> noise;

  static EvalMode pure() { return {}; }
  static EvalMode mixed(std::vector<qcore::KrausChannel> channels) { return {std::move(channels)}; }
  bool is_pure() const noexcept { return !noise.has_value(); }
};

/// Loss on logits; writes dL/dlogits into `grad_logits` (same length).
using LossFn = std::function<double(std::span<const double> logits, std::span<double> grad_logits)>;

enum class GradMethod { Adjoint, ParameterShift };

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t n_classes() const = 0;
  virtual bool is_quantum() const = 0;

  virtual std::vector<double> forward(std::span<const double> x, const EvalMode& mode) const = 0;

  /// Flat parameter vector; layout is model specific.
  virtual std::span<const double> params() const = 0;
  virtual std::span<double> mutable_params() = 0;
  std::size_t n_params() const { return params().size(); }

  /// Returns the loss and writes dL/dparams into `grad`. Pure mode only.
  virtual double loss_and_grad(std::span<const double> x, const LossFn& loss, std::span<double> grad,
                               GradMethod method = GradMethod::Adjoint) const = 0;

  /// dL/dx at x. Pure mode only.
  virtual std::vector<double> grad_input(std::span<const double> x, const LossFn& loss,
                                         GradMethod method = GradMethod::Adjoint) const = 0;

  virtual std::unique_ptr<Classifier> clone() const = 0;

  /// Canonical one-line description of the architecture (no parameters).
  virtual std::string describe() const = 0;
};

std::size_t predict(const Classifier& model, std::span<const double> x, const EvalMode& mode);

/// dL/dparams; throws for Mixed mode, where spsa_grad applies instead.
std::vector<double> grad_params(const Classifier& model, std::span<const double> x, const LossFn& loss,
                                const EvalMode& mode, GradMethod method = GradMethod::Adjoint);
/// dL/dx; throws for Mixed mode.
std::vector<double> grad_input(const Classifier& model, std::span<const double> x, const LossFn& loss,
                               const EvalMode& mode, GradMethod method = GradMethod::Adjoint);

// ---------------------------------------------------------------------------
// Circuit with provenance for every gate angle.

struct AngleSource {
  enum class Kind { Fixed, Param, Input };
  Kind kind = Kind::Fixed;
  std::size_t index = 0;
  double scale = 1.0;
};

struct BoundCircuit {
  qcore::CircuitSpec circuit;
  std::vector<AngleSource> sources;  // one per op
  /// Set when circuit.initial_state came from amplitude-encoding the input.
  bool amplitude_input = false;
};

enum class AmplitudePrep {
  /// Initial state written directly; exact and noiseless.
  Ideal,
  /// RY/CX state-preparation gates, which pick up noise in Mixed mode.
  Gates,
};

// ---------------------------------------------------------------------------
// Shared machinery for circuits read out through <Z_i> and a linear head.

class QuantumClassifier : public Classifier {
 public:
  QuantumClassifier(std::size_t n_qubits, std::size_t n_classes, std::size_t n_circuit_params);

  bool is_quantum() const override { return true; }
  std::size_t n_classes() const override { return n_classes_; }
  std::size_t n_qubits() const noexcept { return n_qubits_; }
  std::size_t n_circuit_params() const noexcept { return n_circuit_params_; }

  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }

  std::span<const double> circuit_params() const { return {params_.data(), n_circuit_params_}; }
  double& head_w(std::size_t cls, std::size_t qubit) { return params_[n_circuit_params_ + cls * n_qubits_ + qubit]; }
  double head_w(std::size_t cls, std::size_t qubit) const {
    return params_[n_circuit_params_ + cls * n_qubits_ + qubit];
  }
  double& head_b(std::size_t cls) { return params_[n_circuit_params_ + n_classes_ * n_qubits_ + cls]; }
  double head_b(std::size_t cls) const { return params_[n_circuit_params_ + n_classes_ * n_qubits_ + cls]; }

  /// The circuit that produces the readout state for input x.
  virtual BoundCircuit build(std::span<const double> x, AmplitudePrep prep) const = 0;
  /// Encoding-only circuit (no variational layers); the encoder state used by QUID.
  virtual qcore::CircuitSpec encoder_circuit(std::span<const double> x) const = 0;
  virtual AmplitudePrep mixed_prep() const { return AmplitudePrep::Ideal; }

  /// z_i = <Z_i> for every qubit.
  std::vector<double> readout(std::span<const double> x, const EvalMode& mode) const;

  std::vector<double> forward(std::span<const double> x, const EvalMode& mode) const override;
  double loss_and_grad(std::span<const double> x, const LossFn& loss, std::span<double> grad,
                       GradMethod method) const override;
  std::vector<double> grad_input(std::span<const double> x, const LossFn& loss, GradMethod method) const override;

  /// Quantum angles uniform in [-pi, pi]; head uniform in +-1/sqrt(n_qubits).
  void initialize(Rng& rng);

 protected:
  struct Sensitivities {
    double loss = 0.0;
    std::vector<double> head_grad;    // head_w then head_b
    std::vector<double> op_grad;      // d loss / d angle of each op
    std::vector<double> initial_grad;  // d loss / d (real) initial amplitude
  };
  Sensitivities sensitivities(const BoundCircuit& bound, const LossFn& loss, GradMethod method) const;

  std::size_t n_qubits_;
  std::size_t n_classes_;
  std::size_t n_circuit_params_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// QMLP

struct QmlpConfig {
  std::size_t n_qubits = 9;
  std::size_t layers = 2;
  encode::EncodingKind encoding = encode::EncodingKind::Angle;
  bool reupload = true;
  std::size_t n_classes = 10;
  AmplitudePrep amplitude_prep = AmplitudePrep::Gates;

  void validate() const;
  std::size_t input_dim() const;
  std::size_t n_theta() const { return layers * n_qubits * 3; }
};

/// Layer template: [encode], RY(theta[l][q][0]) and RZ(theta[l][q][1]) on
/// every qubit, then a ring of CRX(theta[l][q][2]) from q to q+1 mod n.
BoundCircuit build_qmlp_circuit(const QmlpConfig& config, std::span<const double> theta, std::span<const double> x,
                                AmplitudePrep prep);

class QmlpModel final : public QuantumClassifier {
 public:
  explicit QmlpModel(QmlpConfig config);
  QmlpModel(QmlpConfig config, Rng& init_rng);

  const QmlpConfig& config() const noexcept { return config_; }
  double& theta(std::size_t layer, std::size_t qubit, std::size_t k) {
    return params_[(layer * n_qubits_ + qubit) * 3 + k];
  }

  std::string kind() const override { return "qmlp"; }
  std::size_t input_dim() const override { return config_.input_dim(); }
  BoundCircuit build(std::span<const double> x, AmplitudePrep prep) const override;
  qcore::CircuitSpec encoder_circuit(std::span<const double> x) const override;
  AmplitudePrep mixed_prep() const override { return config_.amplitude_prep; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<QmlpModel>(*this); }
  std::string describe() const override;

 private:
  QmlpConfig config_;
};

// ---------------------------------------------------------------------------
// PQC-6 network: dense angle encoding, then layers of RY/RZ/RX on every
// qubit and CRX over every ordered qubit pair.

struct Pqc6Config {
  std::size_t n_qubits = 4;
  std::size_t layers = 6;
  std::size_t n_classes = 4;

  void validate() const;
  std::size_t params_per_layer() const { return 3 * n_qubits + n_qubits * (n_qubits - 1); }
  std::size_t n_theta() const { return layers * params_per_layer(); }
};

BoundCircuit build_pqc6_circuit(const Pqc6Config& config, std::span<const double> theta, std::span<const double> x);

class Pqc6Model final : public QuantumClassifier {
 public:
  explicit Pqc6Model(Pqc6Config config);
  Pqc6Model(Pqc6Config config, Rng& init_rng);

  const Pqc6Config& config() const noexcept { return config_; }

  std::string kind() const override { return "pqc6"; }
  std::size_t input_dim() const override { return 2 * config_.n_qubits; }
  BoundCircuit build(std::span<const double> x, AmplitudePrep prep) const override;
  qcore::CircuitSpec encoder_circuit(std::span<const double> x) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<Pqc6Model>(*this); }
  std::string describe() const override;

 private:
  Pqc6Config config_;
};

// ---------------------------------------------------------------------------
// Classical MLP: linear -> ReLU -> linear.

struct CmlpConfig {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t n_classes = 2;

  void validate() const;
  std::size_t n_params() const { return hidden_dim * input_dim + hidden_dim + n_classes * hidden_dim + n_classes; }
};

class CmlpModel final : public Classifier {
 public:
  explicit CmlpModel(CmlpConfig config);
  /// PyTorch-style uniform(+-1/sqrt(fan_in)) initialization.
  CmlpModel(CmlpConfig config, Rng& init_rng);

  const CmlpConfig& config() const noexcept { return config_; }
  double& w1(std::size_t h, std::size_t i) { return params_[h * config_.input_dim + i]; }
  double& b1(std::size_t h) { return params_[config_.hidden_dim * config_.input_dim + h]; }
  double& w2(std::size_t c, std::size_t h) {
    return params_[config_.hidden_dim * (config_.input_dim + 1) + c * config_.hidden_dim + h];
  }
  double& b2(std::size_t c) {
    return params_[config_.hidden_dim * (config_.input_dim + 1) + config_.n_classes * config_.hidden_dim + c];
  }

  std::string kind() const override { return "cmlp"; }
  std::size_t input_dim() const override { return config_.input_dim; }
  std::size_t n_classes() const override { return config_.n_classes; }
  bool is_quantum() const override { return false; }
  std::vector<double> forward(std::span<const double> x, const EvalMode& mode) const override;
  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }
  double loss_and_grad(std::span<const double> x, const LossFn& loss, std::span<double> grad,
                       GradMethod method) const override;
  std::vector<double> grad_input(std::span<const double> x, const LossFn& loss, GradMethod method) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<CmlpModel>(*this); }
  std::string describe() const override;

  /// Hidden activations after ReLU.
  std::vector<double> hidden(std::span<const double> x) const;

 private:
  CmlpConfig config_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// SPSA

/// Two-evaluation SPSA estimate of grad f at theta with Rademacher
/// perturbations of size c.
std::vector<double> spsa_grad(const std::function<double(std::span<const double>)>& f,
                              std::span<const double> theta, double c, Rng& rng);

struct Sample {
  std::span<const double> x;
  std::span<const double> target;  // class distribution
  double weight = 1.0;
};

/// Weighted mean cross-entropy of a batch under `mode`.
double batch_loss(const Classifier& model, std::span<const Sample> batch, const EvalMode& mode);

/// SPSA estimate of the batch-loss gradient with respect to all parameters.
std::vector<double> spsa_grad(const Classifier& model, std::span<const Sample> batch, const EvalMode& mode, double c,
                              Rng& rng);

// ---------------------------------------------------------------------------
// Checkpoints: text container, hex-float parameters, lossless round trip.

void save_checkpoint(std::ostream& out, const Classifier& model, std::uint64_t seed);
struct LoadedCheckpoint {
  std::unique_ptr<Classifier> model;
  std::uint64_t seed = 0;
};
LoadedCheckpoint load_checkpoint(std::istream& in);

}  // namespace qrobust::model
