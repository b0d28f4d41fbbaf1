// Pipeline driver: synth -> extract -> train -> calibrate -> predict ->
// evaluate -> report. Every stage reads and writes files under a run
// directory, is deterministic given the config + seed, and embeds the config
// hash in its outputs.
//
// Exit codes: 0 success, 1 usage, 2 bad data/input, 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsbm/pipeline.hpp"

namespace {

using nsbm::pipeline::PipelineConfig;
using nsbm::pipeline::RunPaths;

// Command-line misuse, distinct from bad data files (exit 1 vs 2).
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> resolve_lead_times(const PipelineConfig& cfg,
                                       const std::string& t_arg) {
  if (t_arg == "all") return nsbm::pipeline::lead_times(cfg);
  std::size_t pos = 0;
  double t = 0.0;
  try {
    t = std::stod(t_arg, &pos);
  } catch (const std::exception&) {
    throw usage_error("--T expects a number or 'all', got '" + t_arg + "'");
  }
  if (pos != t_arg.size() || !(t > 0.0)) {
    throw usage_error("--T expects a positive number or 'all', got '" + t_arg +
                      "'");
  }
  try {
    nsbm::to_ds(t);  // rejects values off the 0.1 s grid
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  return {t};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-stationary block-maxima crash risk pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "runs/default";
  std::uint64_t seed = 0;
  std::string t_arg = "all";
  std::string sample_id;
  std::string data_path;
  int n_crash = -1;
  int n_noncrash = -1;

  app.add_option("--config", config_path, "Config file (key = value lines)");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out_dir, "Run directory (default runs/default)");

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic trajectory CSV");
  synth->add_option("--n-crash", n_crash, "Override number of crash samples");
  synth->add_option("--n-noncrash", n_noncrash, "Override number of non-crash samples");

  CLI::App* extract =
      app.add_subcommand("extract", "Extract extreme events and scene graphs");
  extract->add_option("--T", t_arg, "Lead time in seconds, or 'all'");

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train the network and fit the stationary baseline");
  train_cmd->add_option("--T", t_arg, "Lead time in seconds, or 'all'");

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Calibrate warning thresholds");
  calibrate->add_option("--T", t_arg, "Lead time in seconds, or 'all'");

  CLI::App* predict =
      app.add_subcommand("predict", "Score every frame of one sample");
  predict->add_option("--sample", sample_id, "Sample id to score")->required();
  predict->add_option("--T", t_arg, "Lead time in seconds, or 'all'");

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Evaluate models against baselines");
  evaluate->add_option("--T", t_arg, "Lead time in seconds, or 'all'");
  evaluate->add_option("--data", data_path,
                       "Trajectory CSV to evaluate on (default: the run's own data)");

  CLI::App* report =
      app.add_subcommand("report", "Summarize evaluation reports across lead times");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) {
      cfg = nsbm::pipeline::parse_config(nsbm::read_text_file(config_path));
    }
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (n_crash >= 0) cfg.n_crash = n_crash;
    if (n_noncrash >= 0) cfg.n_noncrash = n_noncrash;
    RunPaths paths{out_dir};
    paths.ensure();
    nsbm::write_text_file((paths.root / "config.txt").string(),
                          nsbm::pipeline::dump_config(cfg));

    if (synth->parsed()) {
      nsbm::pipeline::op_synth(cfg, paths);
      std::cout << "wrote " << paths.data_csv().string() << "\n";
    } else if (extract->parsed()) {
      for (const double t : resolve_lead_times(cfg, t_arg)) {
        nsbm::pipeline::op_extract(cfg, paths, t);
        std::cout << "wrote " << paths.crash_events(t).string() << "\n";
      }
    } else if (train_cmd->parsed()) {
      for (const double t : resolve_lead_times(cfg, t_arg)) {
        nsbm::pipeline::op_train(cfg, paths, t);
        std::cout << "wrote " << paths.model("nsbm", "crash", t).string() << "\n";
      }
    } else if (calibrate->parsed()) {
      for (const double t : resolve_lead_times(cfg, t_arg)) {
        nsbm::pipeline::op_calibrate(cfg, paths, t);
        std::cout << "wrote " << paths.calib(t).string() << "\n";
      }
    } else if (predict->parsed()) {
      for (const double t : resolve_lead_times(cfg, t_arg)) {
        nsbm::pipeline::op_predict(cfg, paths, sample_id, t);
        std::cout << "wrote "
                  << (paths.eval_dir() /
                      ("predict_" + sample_id + "_T" +
                       nsbm::pipeline::fmt_lead_time(t) + ".csv"))
                         .string()
                  << "\n";
      }
    } else if (evaluate->parsed()) {
      for (const double t : resolve_lead_times(cfg, t_arg)) {
        nsbm::pipeline::op_evaluate(cfg, paths, t, data_path);
        std::cout << "wrote " << paths.report(t).string() << "\n";
      }
    } else if (report->parsed()) {
      nsbm::pipeline::op_report(cfg, paths);
      std::cout << "wrote " << (paths.eval_dir() / "summary.csv").string() << "\n";
    }
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const nsbm::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nsbm::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
