#pragma once

// Config-driven experiment runner: data -> PCA -> baseline -> attack ->
// defense -> metrics, repeated per seed, plus report emission.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qrobust/attacks.hpp"
#include "qrobust/defend.hpp"
#include "qrobust/encode.hpp"
#include "qrobust/model.hpp"
#include "qrobust/train.hpp"

namespace qrobust::bench {

inline constexpr const char* kToolVersion = "0.1.0";

struct DataSpec {
  enum class Source { Blobs, Mnist, Csv };
  Source source = Source::Blobs;
  std::size_t classes = 4;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  // blobs
  std::size_t dim = 16;
  double spread = 0.5;
  double center_box = 1.0;
  // files
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path csv;
  /// Fixed data seed; when unset each experiment seed draws its own data.
  std::optional<std::uint64_t> seed;
};

struct ModelSpec {
  enum class Type { Qmlp, Pqc6, Cmlp };
  enum class Features { Pca, Raw };
  std::string name;
  Type type = Type::Qmlp;
  std::size_t qubits = 4;
  std::size_t layers = 2;
  encode::EncodingKind encoding = encode::EncodingKind::Angle;
  bool reupload = true;
  model::AmplitudePrep amplitude_prep = model::AmplitudePrep::Gates;
  std::size_t hidden = 32;
  Features features = Features::Pca;
  std::size_t components = 0;  // CMLP with PCA features; 0 means qubit count

  /// Number of PCA components the model consumes (0 for raw features).
  std::size_t pca_components() const;
};

struct NoiseSpec {
  enum class Channel { Depolarizing, AmplitudeDamping, Both };
  Channel channel = Channel::Depolarizing;
  double p = 0.01;

  std::vector<qcore::KrausChannel> channels() const;
};

struct AttackSpec {
  enum class Kind { None, LabelFlip, Quid, Fgsm, Pgd };
  Kind kind = Kind::None;
  double ratio = 0.5;
  attacks::QuidTarget quid_target = attacks::QuidTarget::LeastSimilar;
  double eps = 0.1;
  double step = 0.01;
  std::size_t iters = 10;
  bool random_start = false;

  bool poisoning() const { return kind == Kind::LabelFlip || kind == Kind::Quid; }
  bool evasion() const { return kind == Kind::Fgsm || kind == Kind::Pgd; }
};

struct DefenseSpec {
  enum class Kind { None, LabelSmoothing, QDetect };
  Kind kind = Kind::None;
  double smoothing = 0.2;
  defend::QDetectConfig qdetect;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output = "results";
  DataSpec data;
  std::vector<ModelSpec> models;
  train::TrainConfig train;
  bool train_noisy = false;
  bool eval_pure = true;
  bool eval_mixed = false;
  NoiseSpec noise;
  AttackSpec attack;
  DefenseSpec defense;

  /// Throws std::invalid_argument on inconsistent or infeasible settings.
  void validate() const;
};

/// Flat "section.key = value" settings in file order; the parsed form of a config file.
using Settings = std::map<std::string, std::string>;

Settings read_settings(std::istream& in);
Settings read_settings(const std::filesystem::path& path);
/// Applies every key; unknown sections or keys are errors.
ExperimentConfig parse_config(const Settings& settings);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical settings text, as 16 hex digits.
std::string config_hash(const Settings& settings);

/// acc_attack / acc_baseline; throws when the baseline is zero.
double relative_accuracy(double acc_attack, double acc_baseline);

struct ReportRow {
  std::string cell = "-";
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string model;
  std::string condition;  // baseline | attacked | defended
  std::string mode;       // pure | mixed
  train::Metrics metrics;
  double rel_acc = 1.0;
  std::optional<double> asr;
};

struct ExperimentReport {
  std::string name;
  std::string config_text;  // canonical settings echo
  std::vector<ReportRow> rows;
  double runtime_seconds = 0.0;
  std::string tool_version = kToolVersion;
};

/// Runs every seed and model. `settings` is echoed and hashed into the rows.
ExperimentReport run_experiment(const ExperimentConfig& config, const Settings& settings);
ExperimentReport run_experiment(const Settings& settings);

/// Sweep: "[sweep] key = section.key" and "values = a,b,c"; one run per value,
/// rows tagged with "key=value" in the cell column.
ExperimentReport run_sweep(const Settings& settings);

enum class ReportFormat { Table, Summary, Both };

/// Tab-separated, one row per cell x seed x model x condition x mode; no timings.
void write_table(std::ostream& out, const ExperimentReport& report);
std::vector<ReportRow> read_table(std::istream& in);
/// Medians across seeds, runtime, version and config echo.
void write_summary(std::ostream& out, const ExperimentReport& report);
/// Writes <out>/<name>.tsv and/or <out>/<name>.txt; returns the written paths.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, ReportFormat format,
                                               const std::filesystem::path& out_dir);

/// Median of rel_acc / accuracy / asr per (cell, model, condition, mode).
struct SummaryLine {
  std::string cell, model, condition, mode;
  std::size_t n_seeds = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double rel_acc = 0.0;
  std::optional<double> asr;
};
std::vector<SummaryLine> summarize(const std::vector<ReportRow>& rows);

double median(std::vector<double> values);

}  // namespace qrobust::bench
