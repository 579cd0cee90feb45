// Experiment runner: qrobust {baseline,attack,defend,sweep,report} ...

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "qrobust/bench.hpp"

namespace bench = qrobust::bench;

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "both";
};

void add_run_options(CLI::App* cmd, RunOptions& opts) {
  cmd->add_option("--config", opts.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "Run a single seed instead of experiment.seeds");
  cmd->add_option("--out", opts.out, "Output directory (default: experiment.output)");
  cmd->add_option("--format", opts.format, "Report format")->check(CLI::IsMember({"table", "summary", "both"}));
}

bench::ReportFormat parse_format(const std::string& f) {
  if (f == "table") return bench::ReportFormat::Table;
  if (f == "summary") return bench::ReportFormat::Summary;
  return bench::ReportFormat::Both;
}

int run(const std::string& command, const RunOptions& opts) {
  auto settings = bench::read_settings(std::filesystem::path(opts.config));
  if (opts.seed) settings["experiment.seeds"] = std::to_string(*opts.seed);

  bench::ExperimentReport report;
  std::filesystem::path out_dir;
  if (command == "sweep") {
    report = bench::run_sweep(settings);
    const auto it = settings.find("experiment.output");
    out_dir = it != settings.end() ? it->second : "results";
  } else {
    if (command == "baseline") {
      settings.erase("attack.type");
      settings.erase("defense.type");
    }
    if (settings.contains("sweep.key") || settings.contains("sweep.values")) {
      throw std::invalid_argument("config has a [sweep] section; use the sweep subcommand");
    }
    const auto config = bench::parse_config(settings);
    if (command == "attack" && config.attack.kind == bench::AttackSpec::Kind::None) {
      throw std::invalid_argument("the attack subcommand needs attack.type");
    }
    if (command == "attack" && config.defense.kind != bench::DefenseSpec::Kind::None) {
      throw std::invalid_argument("the attack subcommand runs undefended; use defend for defense.type");
    }
    if (command == "defend" && config.defense.kind == bench::DefenseSpec::Kind::None) {
      throw std::invalid_argument("the defend subcommand needs defense.type");
    }
    report = bench::run_experiment(config, settings);
    out_dir = config.output;
  }
  if (!opts.out.empty()) out_dir = opts.out;
  for (const auto& path : bench::emit_report(report, parse_format(opts.format), out_dir)) {
    std::cout << path.string() << '\n';
  }
  return 0;
}

int report(const std::vector<std::string>& tables, const std::string& out) {
  bench::ExperimentReport merged;
  merged.name = "report";
  for (const auto& t : tables) {
    std::ifstream in(t);
    if (!in) throw std::runtime_error("cannot open " + t);
    auto rows = bench::read_table(in);
    merged.rows.insert(merged.rows.end(), rows.begin(), rows.end());
  }
  if (out.empty()) {
    std::cout << "medians across seeds\n";
    std::cout << "cell\tmodel\tcondition\tmode\tseeds\taccuracy\tmacro_f1\trel_acc\tasr\n";
    for (const auto& s : bench::summarize(merged.rows)) {
      std::printf("%s\t%s\t%s\t%s\t%zu\t%.2f\t%.2f\t%.2f\t", s.cell.c_str(), s.model.c_str(), s.condition.c_str(),
                  s.mode.c_str(), s.n_seeds, s.accuracy, s.macro_f1, s.rel_acc);
      if (s.asr) {
        std::printf("%.2f\n", *s.asr);
      } else {
        std::printf("-\n");
      }
    }
    return 0;
  }
  for (const auto& path : bench::emit_report(merged, bench::ReportFormat::Summary, out)) std::cout << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness experiments for simulated quantum classifiers"};
  app.set_version_flag("--version", bench::kToolVersion);
  app.require_subcommand(1);

  RunOptions opts;
  std::string command;
  for (const char* name : {"baseline", "attack", "defend", "sweep"}) {
    const std::string help = std::string(name) == "baseline" ? "Train and evaluate clean models"
                             : std::string(name) == "attack" ? "Baseline plus the configured attack"
                             : std::string(name) == "defend" ? "Baseline, attack and the configured defense"
                                                             : "Repeat an experiment over [sweep] values";
    auto* cmd = app.add_subcommand(name, help);
    add_run_options(cmd, opts);
    cmd->callback([&command, name] { command = name; });
  }
  std::vector<std::string> tables;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "Summarize one or more result tables");
  rep->add_option("tables", tables, "Result tables (.tsv)")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", report_out, "Write report.txt here instead of printing");
  rep->callback([&command] { command = "report"; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (command == "report") return report(tables, report_out);
    return run(command, opts);
  } catch (const std::exception& e) {
    std::cerr << "qrobust: " << e.what() << '\n';
    return 1;
  }
}
