// selfens: train, evaluate and inspect self-ensembling models.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "selfens/config.hpp"
#include "selfens/errors.hpp"
#include "selfens/history_io.hpp"
#include "selfens/serialize.hpp"
#include "selfens/text.hpp"
#include "selfens/trainer.hpp"

namespace fs = std::filesystem;
using namespace selfens;

namespace {

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_config_flags(CLI::App& app, ConfigFlags& flags) {
  app.add_option("-c,--config", flags.file, "config file (flags override its values)");
  for (const ConfigKey& key : config_keys()) {
    const std::string flag(key.flag);
    flags.options[flag] = app.add_option("--" + flag, flags.values[flag], std::string(key.help))
                              ->group(std::string(key.section));
  }
}

RunConfig resolve_config(const ConfigFlags& flags) {
  ConfigOverrides overrides;
  for (const auto& [flag, option] : flags.options) {
    if (option->count() > 0) overrides.emplace_back(flag, flags.values.at(flag));
  }
  std::optional<fs::path> file;
  if (!flags.file.empty()) file = flags.file;
  RunConfig config = parse_config(file, overrides);
  for (const std::string& w : config.validate()) std::cerr << "warning: " << w << '\n';
  return config;
}

std::string percent(double error) { return format_real(std::round(error * 1e4) / 1e2) + "%"; }

int cmd_train(const RunConfig& config, bool progress, const std::string& save_config_path) {
  if (!save_config_path.empty()) save_config(save_config_path, config);
  std::ofstream history;
  if (!config.history_path.empty()) {
    history.open(config.history_path);
    if (!history) throw DataError("cannot write history file " + config.history_path);
  }
  const RunOutcome out = run_training(config, [&](const EpochRecord& r) {
    if (history.is_open()) history << epoch_record_json(r) << '\n' << std::flush;
    if (progress) {
      std::cerr << "epoch " << r.epoch << " lr " << format_real(r.learning_rate) << " w "
                << format_real(r.unsup_weight) << " sup " << format_real(r.supervised_loss) << " unsup "
                << format_real(r.unsupervised_loss) << " train_err " << format_real(r.train_error);
      if (r.test_error) std::cerr << " test_err " << format_real(*r.test_error);
      std::cerr << '\n';
    }
  });
  if (out.history.final_test_error()) {
    std::cout << "final test error: " << percent(out.final_test_error) << '\n';
  } else {
    std::cout << "training finished (no test set)\n";
  }
  return 0;
}

template <typename T>
double evaluate_checkpoint(const RunConfig& config, const fs::path& checkpoint) {
  const TrainingData data = prepare_data(config.data, config.seed);
  if (data.test.size() == 0) throw DataError("no test set configured");
  const LayerSpecList layers = build_network(config.network, data.train.item_shape(), data.train.num_classes);
  const Network<T> net(layers, data.train.item_shape());
  NetworkParams<T> params = net.init_params(0);
  load_checkpoint(checkpoint, params);
  return evaluate(net, params, data.test, config.eval_batch);
}

int cmd_evaluate(const RunConfig& config, const std::string& checkpoint) {
  const std::string path = checkpoint.empty() ? config.checkpoint_path : checkpoint;
  if (path.empty()) throw ConfigError("evaluate needs --checkpoint or run.checkpoint_path");
  const double error = config.precision == Precision::kF64 ? evaluate_checkpoint<double>(config, path)
                                                           : evaluate_checkpoint<float>(config, path);
  std::cout << "test error: " << percent(error) << " (" << format_real(error) << ")\n";
  return 0;
}

void print_summary(const std::string& name, const ReplicateSummary& s) {
  std::cout << name << ": mean " << percent(s.mean) << " std " << percent(s.stddev) << " over " << s.errors.size()
            << " seed(s)\n";
  for (std::size_t k = 0; k < s.errors.size(); ++k) {
    std::cout << "  seed " << s.seeds[k] << ": " << format_real(s.errors[k]) << '\n';
  }
}

int cmd_replicate(const RunConfig& config, const std::string& baseline) {
  if (baseline.empty()) {
    print_summary(std::string(algorithm_name(config.algorithm)), run_replicates(config, config.replicates));
    return 0;
  }
  RunConfig base = config;
  base.algorithm = parse_algorithm(baseline);
  const PairedComparison cmp = compare_paired(base, config, config.replicates);
  print_summary(baseline + " (baseline)", cmp.baseline);
  print_summary(std::string(algorithm_name(config.algorithm)), cmp.candidate);
  std::cout << "paired deltas (candidate - baseline):";
  for (double d : cmp.deltas) std::cout << ' ' << format_real(d);
  std::cout << "\ncandidate better on " << cmp.candidate_wins << "/" << cmp.deltas.size() << " seeds\n";
  return 0;
}

int cmd_corrupt(const RunConfig& config, const std::vector<double>& fractions, const std::string& out_dir) {
  if (!out_dir.empty()) fs::create_directories(out_dir);
  const std::vector<CorruptionRun> runs = corruption_experiment(config, fractions);
  std::cout << "fraction,w_max,supervised_final,temporal_final\n";
  for (const CorruptionRun& run : runs) {
    const auto fmt = [](const RunHistory& h) {
      const auto e = h.final_test_error();
      return e ? format_real(*e) : std::string("n/a");
    };
    std::cout << format_real(run.fraction) << ',' << format_real(corruption_w_max(run.fraction)) << ','
              << fmt(run.supervised) << ',' << fmt(run.temporal) << '\n';
    if (!out_dir.empty()) {
      const std::string tag = format_real(run.fraction);
      save_history(fs::path(out_dir) / ("supervised_" + tag + ".jsonl"), run.supervised);
      save_history(fs::path(out_dir) / ("temporal_" + tag + ".jsonl"), run.temporal);
    }
  }
  return 0;
}

int cmd_export(const std::vector<std::string>& files, const std::string& metrics, const std::string& out_path) {
  std::vector<CurveInput> inputs;
  for (const std::string& f : files) {
    // LABEL=PATH names the columns of that run.
    const auto eq = f.find('=');
    if (eq == std::string::npos) {
      inputs.push_back({files.size() == 1 ? "" : fs::path(f).stem().string(), f});
    } else {
      inputs.push_back({f.substr(0, eq), f.substr(eq + 1)});
    }
  }
  std::vector<std::string> metric_list;
  if (!metrics.empty()) {
    for (const std::string& m : split(metrics, ',')) metric_list.push_back(trim(m));
  }
  const CurveExport result = export_curves(inputs, metric_list);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';
  if (out_path.empty()) {
    std::cout << result.csv;
  } else {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write " + out_path);
    out << result.csv;
  }
  return 0;
}

int cmd_inspect(const std::string& path, const std::string& json_path) {
  const EnsembleSummary s = inspect_ensemble(path);
  std::cout << ensemble_summary_text(s);
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw DataError("cannot write " + json_path);
    out << ensemble_summary_json(s) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-ensembling semi-supervised training"};
  app.require_subcommand(1);

  ConfigFlags train_flags, eval_flags, rep_flags, corrupt_flags;
  bool progress = false;
  std::string save_config_path;
  auto* train = app.add_subcommand("train", "train one model");
  add_config_flags(*train, train_flags);
  train->add_flag("--progress", progress, "print one line per epoch to stderr");
  train->add_option("--save-config", save_config_path, "write the resolved config to this file");

  std::string checkpoint;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "test error of a saved checkpoint");
  add_config_flags(*evaluate_cmd, eval_flags);
  evaluate_cmd->add_option("--from", checkpoint, "checkpoint to evaluate (default: run.checkpoint_path)");

  std::string baseline;
  auto* replicate = app.add_subcommand("replicate", "train run.replicates seeds and report mean and std");
  add_config_flags(*replicate, rep_flags);
  replicate->add_option("--baseline", baseline, "also run this algorithm on the same seeds and pair the errors");

  std::vector<double> fractions{0.0, 0.2, 0.5, 0.8};
  std::string out_dir;
  auto* corrupt = app.add_subcommand("corrupt", "supervised vs temporal ensembling under label corruption");
  add_config_flags(*corrupt, corrupt_flags);
  corrupt->add_option("--fractions", fractions, "corruption fractions")->delimiter(',');
  corrupt->add_option("--out-dir", out_dir, "directory for per-run JSONL histories");

  std::vector<std::string> files;
  std::string metrics, csv_out;
  auto* export_cmd = app.add_subcommand("export-curves", "CSV of epoch curves from JSONL histories");
  export_cmd->add_option("histories", files, "history files, optionally LABEL=PATH")->required();
  export_cmd->add_option("--metrics", metrics, "comma list of train_err,test_err,w,lambda");
  export_cmd->add_option("-o,--out", csv_out, "output CSV (default stdout)");

  std::string z_path, json_path;
  auto* inspect = app.add_subcommand("inspect-ensemble", "summarize an ensemble (Z) file");
  inspect->add_option("file", z_path, "ensemble file")->required();
  inspect->add_option("--json", json_path, "also write the summary as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(resolve_config(train_flags), progress, save_config_path);
    if (*evaluate_cmd) return cmd_evaluate(resolve_config(eval_flags), checkpoint);
    if (*replicate) return cmd_replicate(resolve_config(rep_flags), baseline);
    if (*corrupt) return cmd_corrupt(resolve_config(corrupt_flags), fractions, out_dir);
    if (*export_cmd) return cmd_export(files, metrics, csv_out);
    if (*inspect) return cmd_inspect(z_path, json_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
