#include "qrobust/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qrobust/parallel.hpp"

namespace qrobust::bench {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

template <typename E>
E to_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw std::invalid_argument(key + ": unknown value '" + v + "' (expected one of " + names + ")");
}

[[noreturn]] void unknown_key(const std::string& key) { throw std::invalid_argument("unknown config key '" + key + "'"); }

void set_model_key(ModelSpec& m, const std::string& key, const std::string& full, const std::string& v) {
  using E = encode::EncodingKind;
  if (key == "type") {
    m.type = to_enum<ModelSpec::Type>(full, v, {{"qmlp", ModelSpec::Type::Qmlp}, {"pqc6", ModelSpec::Type::Pqc6},
                                                 {"cmlp", ModelSpec::Type::Cmlp}});
  } else if (key == "qubits") {
    m.qubits = to_uint(full, v);
  } else if (key == "layers") {
    m.layers = to_uint(full, v);
  } else if (key == "encoding") {
    m.encoding = to_enum<E>(full, v, {{"angle", E::Angle}, {"amplitude", E::Amplitude}, {"dense_angle", E::DenseAngle}});
  } else if (key == "reupload") {
    m.reupload = to_bool(full, v);
  } else if (key == "amplitude_prep") {
    m.amplitude_prep = to_enum<model::AmplitudePrep>(
        full, v, {{"ideal", model::AmplitudePrep::Ideal}, {"gates", model::AmplitudePrep::Gates}});
  } else if (key == "hidden") {
    m.hidden = to_uint(full, v);
  } else if (key == "features") {
    m.features = to_enum<ModelSpec::Features>(full, v, {{"pca", ModelSpec::Features::Pca}, {"raw", ModelSpec::Features::Raw}});
  } else if (key == "components") {
    m.components = to_uint(full, v);
  } else {
    unknown_key(full);
  }
}

}  // namespace

std::size_t ModelSpec::pca_components() const {
  switch (type) {
    case Type::Qmlp:
      return encoding == encode::EncodingKind::Amplitude ? (std::size_t{1} << qubits) : qubits;
    case Type::Pqc6:
      return 2 * qubits;
    case Type::Cmlp:
      return features == Features::Raw ? 0 : (components ? components : qubits);
  }
  return 0;
}

std::vector<qcore::KrausChannel> NoiseSpec::channels() const {
  switch (channel) {
    case Channel::Depolarizing:
      return {qcore::make_depolarizing(p)};
    case Channel::AmplitudeDamping:
      return {qcore::make_amplitude_damping(p)};
    case Channel::Both:
      return {qcore::make_depolarizing(p), qcore::make_amplitude_damping(p)};
  }
  return {};
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("experiment.seeds must list at least one seed");
  if (models.empty()) throw std::invalid_argument("at least one [model.NAME] section is required");
  if (data.classes < 2) throw std::invalid_argument("data.classes must be at least 2");
  if (data.train_per_class < 1 || data.test_per_class < 1) {
    throw std::invalid_argument("data.train_per_class and data.test_per_class must be positive");
  }
  if (!eval_pure && !eval_mixed) throw std::invalid_argument("eval.modes must include pure or mixed");
  if (!(noise.p >= 0.0 && noise.p <= 1.0)) throw std::invalid_argument("eval.p must be in [0, 1]");
  train.validate();
  if (defense.kind == DefenseSpec::Kind::QDetect) defense.qdetect.validate();
  if (!(defense.smoothing >= 0.0 && defense.smoothing < 1.0)) {
    throw std::invalid_argument("defense.smoothing must be in [0, 1)");
  }
  if (!(attack.ratio >= 0.0 && attack.ratio <= 1.0)) throw std::invalid_argument("attack.ratio must be in [0, 1]");
  if (!(attack.eps >= 0.0)) throw std::invalid_argument("attack.eps must be non-negative");
  if (attack.kind == AttackSpec::Kind::Pgd && (!(attack.step > 0.0) || attack.iters < 1)) {
    throw std::invalid_argument("attack.step must be positive and attack.iters at least 1");
  }
  if (attack.evasion() && (eval_mixed || train_noisy)) {
    throw std::invalid_argument("gradient attacks are unavailable in mixed mode (no exact input gradients under noise)");
  }
  std::set<std::string> names;
  for (const auto& m : models) {
    if (!names.insert(m.name).second) throw std::invalid_argument("duplicate model name '" + m.name + "'");
    if (m.type != ModelSpec::Type::Cmlp && (m.qubits < 1 || m.qubits > qcore::kMaxQubits)) {
      throw std::invalid_argument("model." + m.name + ".qubits out of range");
    }
    if (m.type != ModelSpec::Type::Cmlp && m.layers < 1) {
      throw std::invalid_argument("model." + m.name + ".layers must be at least 1");
    }
    if (m.type == ModelSpec::Type::Cmlp && m.hidden < 1) {
      throw std::invalid_argument("model." + m.name + ".hidden must be at least 1");
    }
    if (m.type == ModelSpec::Type::Cmlp && (eval_mixed || train_noisy) && !eval_pure) {
      throw std::invalid_argument("model." + m.name + ": classical models have no mixed mode");
    }
    if (m.type == ModelSpec::Type::Cmlp && attack.kind == AttackSpec::Kind::Quid) {
      throw std::invalid_argument("model." + m.name + ": QUID needs a quantum encoder");
    }
    if (m.type == ModelSpec::Type::Qmlp && m.encoding == encode::EncodingKind::DenseAngle) {
      throw std::invalid_argument("model." + m.name + ": QMLP supports angle or amplitude encoding");
    }
  }
}

Settings read_settings(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  Settings out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) out[section + "." + key] = trim(value.data());
  }
  return out;
}

Settings read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return read_settings(in);
}

ExperimentConfig parse_config(const Settings& settings) {
  ExperimentConfig cfg;
  std::map<std::string, ModelSpec> models;
  using A = AttackSpec::Kind;
  using D = DefenseSpec::Kind;
  for (const auto& [full, v] : settings) {
    const auto dot = full.rfind('.');
    const std::string section = full.substr(0, dot);
    const std::string key = full.substr(dot + 1);
    if (section == "experiment") {
      if (key == "name") {
        cfg.name = v;
      } else if (key == "seeds") {
        for (const auto& s : split_list(v)) cfg.seeds.push_back(to_uint(full, s));
      } else if (key == "output") {
        cfg.output = v;
      } else {
        unknown_key(full);
      }
    } else if (section == "data") {
      auto& d = cfg.data;
      if (key == "source") {
        d.source = to_enum<DataSpec::Source>(full, v, {{"blobs", DataSpec::Source::Blobs},
                                                       {"mnist", DataSpec::Source::Mnist},
                                                       {"csv", DataSpec::Source::Csv}});
      } else if (key == "classes") {
        d.classes = to_uint(full, v);
      } else if (key == "train_per_class") {
        d.train_per_class = to_uint(full, v);
      } else if (key == "test_per_class") {
        d.test_per_class = to_uint(full, v);
      } else if (key == "dim") {
        d.dim = to_uint(full, v);
      } else if (key == "spread") {
        d.spread = to_double(full, v);
      } else if (key == "center_box") {
        d.center_box = to_double(full, v);
      } else if (key == "images") {
        d.images = v;
      } else if (key == "labels") {
        d.labels = v;
      } else if (key == "csv") {
        d.csv = v;
      } else if (key == "seed") {
        d.seed = to_uint(full, v);
      } else {
        unknown_key(full);
      }
    } else if (section.starts_with("model.")) {
      const std::string name = section.substr(6);
      if (name.empty()) unknown_key(full);
      auto& m = models[name];
      m.name = name;
      set_model_key(m, key, full, v);
    } else if (section == "train") {
      auto& t = cfg.train;
      if (key == "lr") {
        t.lr = to_double(full, v);
      } else if (key == "weight_decay") {
        t.weight_decay = to_double(full, v);
      } else if (key == "batch_size") {
        t.batch_size = to_uint(full, v);
      } else if (key == "epochs") {
        t.epochs = to_uint(full, v);
      } else if (key == "optimizer") {
        t.optimizer = to_enum<train::OptimizerKind>(full, v, {{"auto", train::OptimizerKind::Auto},
                                                              {"adam", train::OptimizerKind::Adam},
                                                              {"spsa", train::OptimizerKind::Spsa}});
      } else if (key == "spsa_step") {
        t.spsa_step = to_double(full, v);
      } else if (key == "spsa_perturb") {
        t.spsa_perturb = to_double(full, v);
      } else if (key == "noisy") {
        cfg.train_noisy = to_bool(full, v);
      } else {
        unknown_key(full);
      }
    } else if (section == "eval") {
      if (key == "modes") {
        cfg.eval_pure = cfg.eval_mixed = false;
        for (const auto& m : split_list(v)) {
          if (m == "pure") {
            cfg.eval_pure = true;
          } else if (m == "mixed") {
            cfg.eval_mixed = true;
          } else {
            throw std::invalid_argument(full + ": unknown mode '" + m + "'");
          }
        }
      } else if (key == "channel") {
        cfg.noise.channel = to_enum<NoiseSpec::Channel>(full, v, {{"depolarizing", NoiseSpec::Channel::Depolarizing},
                                                                  {"amplitude_damping", NoiseSpec::Channel::AmplitudeDamping},
                                                                  {"both", NoiseSpec::Channel::Both}});
      } else if (key == "p") {
        cfg.noise.p = to_double(full, v);
      } else {
        unknown_key(full);
      }
    } else if (section == "attack") {
      auto& a = cfg.attack;
      if (key == "type") {
        a.kind = to_enum<A>(full, v, {{"none", A::None}, {"label_flip", A::LabelFlip}, {"quid", A::Quid},
                                      {"fgsm", A::Fgsm}, {"pgd", A::Pgd}});
      } else if (key == "ratio") {
        a.ratio = to_double(full, v);
      } else if (key == "quid_target") {
        a.quid_target = to_enum<attacks::QuidTarget>(full, v, {{"least_similar", attacks::QuidTarget::LeastSimilar},
                                                               {"most_similar", attacks::QuidTarget::MostSimilar}});
      } else if (key == "eps") {
        a.eps = to_double(full, v);
      } else if (key == "step") {
        a.step = to_double(full, v);
      } else if (key == "iters") {
        a.iters = to_uint(full, v);
      } else if (key == "random_start") {
        a.random_start = to_bool(full, v);
      } else {
        unknown_key(full);
      }
    } else if (section == "defense") {
      auto& d = cfg.defense;
      if (key == "type") {
        d.kind = to_enum<D>(full, v, {{"none", D::None}, {"label_smoothing", D::LabelSmoothing}, {"qdetect", D::QDetect}});
      } else if (key == "smoothing") {
        d.smoothing = to_double(full, v);
      } else if (key == "wan_lr") {
        d.qdetect.wan_lr = to_double(full, v);
      } else if (key == "anneal_coeff") {
        d.qdetect.anneal_coeff = to_double(full, v);
      } else if (key == "beta_lo") {
        d.qdetect.beta_lo = to_double(full, v);
      } else if (key == "beta_hi") {
        d.qdetect.beta_hi = to_double(full, v);
      } else if (key == "sweeps") {
        d.qdetect.sweeps = to_uint(full, v);
      } else if (key == "keep_fraction") {
        d.qdetect.keep_fraction = to_double(full, v);
      } else {
        unknown_key(full);
      }
    } else {
      throw std::invalid_argument("unknown config section '" + section + "'");
    }
  }
  for (auto& [name, m] : models) cfg.models.push_back(std::move(m));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_settings(path)); }

std::string config_hash(const Settings& settings) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : settings) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double relative_accuracy(double acc_attack, double acc_baseline) {
  if (!(acc_baseline > 0.0)) throw std::invalid_argument("relative accuracy needs a positive baseline accuracy");
  return acc_attack / acc_baseline;
}

namespace {

std::string canonical_text(const Settings& settings) {
  std::string out;
  for (const auto& [k, v] : settings) out += k + " = " + v + "\n";
  return out;
}

data::Dataset keep_classes(const data::Dataset& d, std::size_t classes) {
  if (d.n_classes < classes) {
    throw std::invalid_argument("dataset has " + std::to_string(d.n_classes) + " classes, config asks for " +
                                std::to_string(classes));
  }
  if (d.n_classes == classes) return d;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (static_cast<std::size_t>(d.labels[i]) < classes) idx.push_back(i);
  }
  auto out = d.subset(idx);
  out.n_classes = classes;
  return out;
}

struct Prepared {
  data::Dataset train;
  data::Dataset test;
  encode::Range range;
};

// PCA (when the model needs it), then rescaling into the model's input range
// with bounds fitted on the training split only.
Prepared prepare_features(const ModelSpec& spec, const data::Split& split) {
  Prepared p{split.train, split.test, {0.0, 1.0}};
  if (const auto k = spec.pca_components(); k > 0) {
    const auto pca = data::pca_fit(split.train.features, split.train.n_features, k);
    p.train = data::pca_transform(pca, split.train);
    p.test = data::pca_transform(pca, split.test);
  }
  switch (spec.type) {
    case ModelSpec::Type::Qmlp:
      p.range = encode::default_input_range(spec.encoding);
      break;
    case ModelSpec::Type::Pqc6:
      p.range = encode::default_input_range(encode::EncodingKind::DenseAngle);
      break;
    case ModelSpec::Type::Cmlp:
      p.range = {0.0, 1.0};
      break;
  }
  const auto bounds = encode::fit_bounds(p.train.features, p.train.n_features);
  for (auto* d : {&p.train, &p.test}) {
    for (std::size_t i = 0; i < d->size(); ++i) {
      auto row = d->row(i);
      const auto scaled = encode::rescale(row, bounds, p.range);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::clamp(scaled[j], p.range.lo, p.range.hi);
    }
  }
  return p;
}

std::unique_ptr<model::Classifier> make_model(const ModelSpec& spec, std::size_t input_dim, std::size_t n_classes,
                                              Rng& rng) {
  switch (spec.type) {
    case ModelSpec::Type::Qmlp: {
      model::QmlpConfig c;
      c.n_qubits = spec.qubits;
      c.layers = spec.layers;
      c.encoding = spec.encoding;
      c.reupload = spec.reupload;
      c.n_classes = n_classes;
      c.amplitude_prep = spec.amplitude_prep;
      return std::make_unique<model::QmlpModel>(c, rng);
    }
    case ModelSpec::Type::Pqc6:
      return std::make_unique<model::Pqc6Model>(model::Pqc6Config{spec.qubits, spec.layers, n_classes}, rng);
    case ModelSpec::Type::Cmlp:
      return std::make_unique<model::CmlpModel>(model::CmlpConfig{input_dim, spec.hidden, n_classes}, rng);
  }
  throw std::logic_error("unreachable model type");
}

data::Dataset perturb(const model::Classifier& target, const data::Dataset& test, const AttackSpec& attack,
                      const encode::Range& range, std::uint64_t seed) {
  const auto bounds = attacks::Bounds::uniform(test.n_features, range);
  // Budgets are given on the normalized [0, 1] feature scale; every input
  // dimension is an affine image of it with width hi - lo.
  const double width = range.hi - range.lo;
  const double eps = attack.eps * width;
  const double step = attack.step * width;
  std::vector<double> features(test.features.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto x = test.row(i);
    const auto y = static_cast<std::size_t>(test.labels[i]);
    std::vector<double> adv;
    if (attack.kind == AttackSpec::Kind::Fgsm) {
      adv = attacks::fgsm(target, x, y, eps, bounds);
    } else {
      // Per-sample stream keeps the random start independent of scheduling.
      Rng rng = make_stream(seed, "pgd-start:" + std::to_string(i));
      adv = attacks::pgd(target, x, y, {eps, step, attack.iters}, bounds,
                         attack.random_start ? &rng : nullptr);
    }
    std::copy(adv.begin(), adv.end(), features.begin() + static_cast<std::ptrdiff_t>(i * test.n_features));
  });
  return test.with_features(std::move(features), test.n_features);
}

data::Dataset load_pool(const DataSpec& d) {
  switch (d.source) {
    case DataSpec::Source::Mnist:
      return keep_classes(data::load_mnist_idx(d.images, d.labels), d.classes);
    case DataSpec::Source::Csv:
      return keep_classes(data::load_csv_features(d.csv), d.classes);
    case DataSpec::Source::Blobs:
      break;
  }
  throw std::logic_error("blobs are generated per seed");
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const Settings& settings) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.name = config.name;
  report.config_text = canonical_text(settings);
  const std::string hash = config_hash(settings);

  std::optional<data::Dataset> file_pool;
  if (config.data.source != DataSpec::Source::Blobs) file_pool = load_pool(config.data);

  std::vector<std::pair<std::string, model::EvalMode>> modes;
  if (config.eval_pure) modes.emplace_back("pure", model::EvalMode::pure());
  if (config.eval_mixed) modes.emplace_back("mixed", model::EvalMode::mixed(config.noise.channels()));
  const model::EvalMode train_mode =
      config.train_noisy ? model::EvalMode::mixed(config.noise.channels()) : model::EvalMode::pure();

  const auto& atk = config.attack;
  const auto& def = config.defense;

  for (const auto seed : config.seeds) {
    const std::uint64_t data_seed = config.data.seed.value_or(seed);
    data::Dataset pool;
    if (file_pool) {
      pool = *file_pool;
    } else {
      Rng blob_rng = make_stream(data_seed, "blobs");
      pool = data::synth_blobs(config.data.classes, config.data.dim,
                               config.data.train_per_class + config.data.test_per_class, config.data.spread, blob_rng,
                               config.data.center_box);
    }
    Rng split_rng = make_stream(data_seed, "split");
    const auto split = data::stratified_sample(pool, config.data.train_per_class, config.data.test_per_class, split_rng);

    for (const auto& spec : config.models) {
      const auto prepared = prepare_features(spec, split);
      const auto& train_set = prepared.train;
      const auto& test_set = prepared.test;
      const std::size_t n_classes = train_set.n_classes;
      const bool quantum = spec.type != ModelSpec::Type::Cmlp;

      Rng init_rng = make_stream(seed, "init:" + spec.name);
      const auto initial = make_model(spec, train_set.n_features, n_classes, init_rng);
      train::TrainConfig tcfg = config.train;
      tcfg.seed = seed;
      const model::EvalMode fit_mode = quantum ? train_mode : model::EvalMode::pure();

      auto fresh = [&] { return initial->clone(); };
      auto emit = [&](const std::string& condition, const std::string& mode_name, const train::Metrics& m, double rel,
                      std::optional<double> asr) {
        ReportRow row;
        row.config_hash = hash;
        row.seed = seed;
        row.model = spec.name;
        row.condition = condition;
        row.mode = mode_name;
        row.metrics = m;
        row.rel_acc = rel;
        row.asr = asr;
        report.rows.push_back(std::move(row));
      };

      auto baseline = fresh();
      train::fit(*baseline, train_set, tcfg, fit_mode);

      std::map<std::string, double> baseline_acc;
      for (const auto& [mode_name, mode] : modes) {
        if (!quantum && mode_name == "mixed") continue;
        const auto m = train::evaluate(*baseline, test_set, mode);
        baseline_acc[mode_name] = m.accuracy;
        emit("baseline", mode_name, m, 1.0, std::nullopt);
      }
      if (atk.kind == AttackSpec::Kind::None && def.kind == DefenseSpec::Kind::None) continue;

      // Training data seen by the attacked and defended models.
      data::Dataset poisoned = train_set;
      std::optional<data::Dataset> asr_set;
      if (atk.poisoning()) {
        Rng poison_rng = make_stream(seed, "poison");
        attacks::PoisonResult result;
        if (atk.kind == AttackSpec::Kind::LabelFlip) {
          result = attacks::label_flip(train_set, atk.ratio, n_classes, poison_rng);
        } else {
          const auto& qmodel = dynamic_cast<const model::QuantumClassifier&>(*initial);
          result = attacks::quid_poison(train_set, attacks::model_encoder(qmodel), atk.ratio, poison_rng,
                                        atk.quid_target);
        }
        poisoned = std::move(result.dataset);
        // Held-out attacked set: the same selection rule applied to the test split.
        Rng select_rng = make_stream(seed, "asr-select");
        const auto picked = attacks::label_flip(test_set, atk.ratio, n_classes, select_rng);
        if (!picked.records.empty()) asr_set = attacks::attacked_subset(test_set, picked.records);
      }

      auto score = [&](const std::string& condition, const model::Classifier& trained) {
        for (const auto& [mode_name, mode] : modes) {
          if (!quantum && mode_name == "mixed") continue;
          const data::Dataset* eval_set = &test_set;
          std::optional<data::Dataset> adversarial;
          std::optional<double> asr;
          if (atk.evasion()) {
            adversarial = perturb(trained, test_set, atk, prepared.range, seed);
            eval_set = &*adversarial;
          }
          const auto m = train::evaluate(trained, *eval_set, mode);
          if (atk.evasion()) {
            asr = attacks::attack_success_rate(trained, *eval_set, mode);
          } else if (asr_set) {
            asr = attacks::attack_success_rate(trained, *asr_set, mode);
          }
          emit(condition, mode_name, m, relative_accuracy(m.accuracy, baseline_acc.at(mode_name)), asr);
        }
      };

      if (atk.kind != AttackSpec::Kind::None) {
        if (atk.poisoning()) {
          auto attacked = fresh();
          train::fit(*attacked, poisoned, tcfg, fit_mode);
          score("attacked", *attacked);
        } else {
          score("attacked", *baseline);
        }
      }

      if (def.kind != DefenseSpec::Kind::None) {
        auto defended = fresh();
        if (def.kind == DefenseSpec::Kind::LabelSmoothing) {
          train::TrainConfig ls = tcfg;
          ls.label_smoothing = def.smoothing;
          train::fit(*defended, poisoned, ls, fit_mode);
        } else {
          auto qcfg = def.qdetect;
          qcfg.seed = seed;
          defend::defended_train(*defended, poisoned, tcfg, qcfg, fit_mode);
        }
        score("defended", *defended);
      }
    }
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

ExperimentReport run_experiment(const Settings& settings) {
  return run_experiment(parse_config(settings), settings);
}

ExperimentReport run_sweep(const Settings& settings) {
  const auto key_it = settings.find("sweep.key");
  const auto values_it = settings.find("sweep.values");
  if (key_it == settings.end() || values_it == settings.end()) {
    throw std::invalid_argument("a sweep needs [sweep] key and values");
  }
  Settings base;
  for (const auto& [k, v] : settings) {
    if (k == "sweep.key" || k == "sweep.values") continue;
    if (k.starts_with("sweep.")) unknown_key(k);
    base[k] = v;
  }
  const auto values = split_list(values_it->second);
  if (values.empty()) throw std::invalid_argument("sweep.values is empty");

  ExperimentReport out;
  out.config_text = canonical_text(settings);
  for (const auto& value : values) {
    Settings cell = base;
    cell[key_it->second] = value;
    auto r = run_experiment(cell);
    if (out.name.empty()) out.name = r.name;
    for (auto& row : r.rows) {
      row.cell = key_it->second + "=" + value;
      out.rows.push_back(std::move(row));
    }
    out.runtime_seconds += r.runtime_seconds;
  }
  return out;
}

namespace {

constexpr const char* kHeader = "cell\tconfig_hash\tseed\tmodel\tcondition\tmode\taccuracy\tmacro_f1\tfpr\tfnr\trel_acc\tasr";

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_table(std::ostream& out, const ExperimentReport& report) {
  out << kHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.cell << '\t' << r.config_hash << '\t' << r.seed << '\t' << r.model << '\t' << r.condition << '\t'
        << r.mode << '\t' << fixed2(r.metrics.accuracy) << '\t' << fixed2(r.metrics.macro_f1) << '\t'
        << fixed2(r.metrics.fpr) << '\t' << fixed2(r.metrics.fnr) << '\t' << fixed2(r.rel_acc) << '\t'
        << (r.asr ? fixed2(*r.asr) : "-") << '\n';
  }
}

std::vector<ReportRow> read_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw std::runtime_error("report table: unexpected header");
  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() != 12) throw std::runtime_error("report table: line " + std::to_string(line_no) + " has " +
                                                 std::to_string(f.size()) + " fields, expected 12");
    const std::string where = "report table line " + std::to_string(line_no);
    ReportRow r;
    r.cell = f[0];
    r.config_hash = f[1];
    r.seed = to_uint(where, f[2]);
    r.model = f[3];
    r.condition = f[4];
    r.mode = f[5];
    r.metrics = {to_double(where, f[6]), to_double(where, f[7]), to_double(where, f[8]), to_double(where, f[9])};
    r.rel_acc = to_double(where, f[10]);
    if (f[11] != "-") r.asr = to_double(where, f[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<SummaryLine> summarize(const std::vector<ReportRow>& rows) {
  // Keyed groups in first-appearance order.
  std::vector<SummaryLine> lines;
  std::vector<std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(lines.begin(), lines.end(), [&](const SummaryLine& s) {
      return s.cell == r.cell && s.model == r.model && s.condition == r.condition && s.mode == r.mode;
    });
    if (it == lines.end()) {
      SummaryLine s;
      s.cell = r.cell;
      s.model = r.model;
      s.condition = r.condition;
      s.mode = r.mode;
      lines.push_back(std::move(s));
      groups.emplace_back();
      it = lines.end() - 1;
    }
    groups[static_cast<std::size_t>(it - lines.begin())].push_back(&r);
  }
  for (std::size_t g = 0; g < lines.size(); ++g) {
    std::vector<double> acc, f1, rel, asr;
    for (const auto* r : groups[g]) {
      acc.push_back(r->metrics.accuracy);
      f1.push_back(r->metrics.macro_f1);
      rel.push_back(r->rel_acc);
      if (r->asr) asr.push_back(*r->asr);
    }
    lines[g].n_seeds = groups[g].size();
    lines[g].accuracy = median(acc);
    lines[g].macro_f1 = median(f1);
    lines[g].rel_acc = median(rel);
    if (!asr.empty()) lines[g].asr = median(asr);
  }
  return lines;
}

void write_summary(std::ostream& out, const ExperimentReport& report) {
  out << "experiment: " << report.name << '\n';
  out << "tool version: " << report.tool_version << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", report.runtime_seconds);
  out << "runtime: " << buf << " s\n\n";
  out << "medians across seeds\n";
  out << "cell\tmodel\tcondition\tmode\tseeds\taccuracy\tmacro_f1\trel_acc\tasr\n";
  for (const auto& s : summarize(report.rows)) {
    out << s.cell << '\t' << s.model << '\t' << s.condition << '\t' << s.mode << '\t' << s.n_seeds << '\t'
        << fixed2(s.accuracy) << '\t' << fixed2(s.macro_f1) << '\t' << fixed2(s.rel_acc) << '\t'
        << (s.asr ? fixed2(*s.asr) : "-") << '\n';
  }
  if (!report.config_text.empty()) out << "\nconfig\n" << report.config_text;
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, ReportFormat format,
                                               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& ext, auto&& body) {
    const auto path = out_dir / (report.name + ext);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    body(out);
    if (!out) throw std::runtime_error("failed writing " + path.string());
    written.push_back(path);
  };
  if (format != ReportFormat::Summary) write(".tsv", [&](std::ostream& o) { write_table(o, report); });
  if (format != ReportFormat::Table) write(".txt", [&](std::ostream& o) { write_summary(o, report); });
  return written;
}

}  // namespace qrobust::bench
