// sslasr: generate a synthetic corpus, run a training protocol on it, and
// summarize runs.
//
// Exit codes: 0 ok, 1 usage or other failure, 2 configuration error,
// 3 missing input files, 4 internal invariant violation, 5 manifest hash
// mismatch.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "sslasr/experiment.hpp"

namespace fs = std::filesystem;
using namespace sslasr;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

void print_profiles(const std::vector<WerProfile>& profiles) {
  for (const auto& p : profiles) {
    for (const auto& pt : p.points) {
      std::printf("%-8s %-12s %-22s frac=%.3f wer=%.2f\n", p.protocol.c_str(), pt.stage_label.c_str(),
                  pt.model_id.c_str(), pt.train_fraction, pt.wer);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised and active-learning ASR simulator"};
  app.require_subcommand(0, 1);
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print the default configuration and exit");

  std::string config_path, data_dir, out_dir, protocol;
  std::int64_t seed_override = -1;
  int threads = 1;
  std::vector<std::string> run_dirs;

  auto* gen = app.add_subcommand("gen", "Generate corpus, splits and oracle files");
  gen->add_option("--config", config_path, "Experiment config (JSON)");
  gen->add_option("--out", out_dir, "Output data directory")->required();
  gen->add_option("--seed-override", seed_override, "Replace the config's master seed")->check(CLI::NonNegativeNumber);

  auto* run = app.add_subcommand("run", "Run one protocol on generated data");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  run->add_option("--data", data_dir, "Directory written by gen")->required();
  run->add_option("--out", out_dir, "Run output directory")->required();
  run->add_option("--protocol", protocol, "seed | topline | noniter | iter | active | random");
  run->add_option("--seed-override", seed_override, "Master seed for the run's own streams (default: the data's)")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--threads", threads, "Decoding threads")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Verify and merge run directories");
  report->add_option("runs", run_dirs, "Run directories")->required();
  report->add_option("--out", out_dir, "Report output directory")->required();

  auto* print_cfg = app.add_subcommand("print-default-config", "Print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (print_default || *print_cfg) {
      std::cout << config_to_text(ExperimentConfig{});
      return 0;
    }
    if (*gen) {
      ExperimentConfig cfg = config_or_default(config_path);
      if (seed_override >= 0) {
        cfg.master_seed = static_cast<std::uint64_t>(seed_override);
        cfg.generator.master_seed = cfg.master_seed;
      }
      cmd_gen(cfg, out_dir);
      std::printf("wrote corpus.json, splits.json, oracle.json to %s\n", out_dir.c_str());
      return 0;
    }
    if (*run) {
      ExperimentConfig cfg = config_or_default(config_path);
      if (protocol.empty()) protocol = cfg.protocol;
      std::optional<std::uint64_t> seed;
      if (seed_override >= 0) seed = static_cast<std::uint64_t>(seed_override);
      const RunOutcome r = cmd_run(cfg, protocol, data_dir, out_dir, threads, seed);
      print_profiles(r.profiles);
      return 0;
    }
    if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const ReportSummary s = cmd_report(dirs, out_dir);
      print_profiles(s.profiles);
      auto show = [](const char* name, const std::optional<double>& v) {
        if (v) std::printf("%s: %.6f\n", name, *v);
      };
      show("seed_wer", s.seed_wer);
      show("topline_wer", s.topline_wer);
      show("best_ssl_wer", s.best_ssl_wer);
      show("gap_recovery", s.gap_recovery);
      if (s.budget_match) std::printf("budget_match: %s\n", *s.budget_match ? "yes" : "no");
      return 0;
    }
    std::cerr << app.help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 3;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.invariant() << ": " << e.what() << "\n";
    return 4;
  } catch (const ContractViolation& e) {
    std::cerr << "invariant violated: contract: " << e.what() << "\n";
    return 4;
  } catch (const HashMismatchError& e) {
    std::cerr << "manifest hash mismatch: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
