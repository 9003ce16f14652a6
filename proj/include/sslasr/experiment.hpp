#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sslasr/acoustic_model.hpp"
#include "sslasr/binning.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/decoder.hpp"
#include "sslasr/protocols.hpp"

namespace sslasr {

inline constexpr const char* kToolVersion = "0.1.0";

/// A required input file or directory is absent.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

/// A run directory's files disagree with the hashes in its manifest.
class HashMismatchError : public Error {
 public:
  using Error::Error;
};

struct ExperimentConfig {
  GeneratorConfig generator;  // generator.master_seed is kept equal to master_seed
  SplitRatios splits;
  int lm_order = 2;
  double lm_add_k = 0.5;
  TrainConfig train;
  DecodeConfig decode;
  BinSpec bins = BinSpec::standard();
  SslConfig ssl;
  AlConfig al;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  std::string protocol = "iter";

  void validate() const;
};

inline const std::vector<std::string> kProtocols = {"seed", "topline", "noniter", "iter", "active", "random"};

std::string config_to_text(const ExperimentConfig& cfg);
/// Missing keys take their defaults; unknown keys and bad values are
/// ConfigErrors naming the dotted field path (parse errors carry line/column).
ExperimentConfig config_from_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct DataBundle {
  Corpus corpus;
  DataSplits splits;
  Oracle oracle;
  std::uint64_t seed = 0;
};

/// Writes corpus.json (pool records without references), splits.json and
/// oracle.json.
void cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
DataBundle load_data(const std::filesystem::path& data_dir);

struct RunOutcome {
  std::vector<WerProfile> profiles;
  double seed_wer = 0.0;
  std::optional<double> topline_wer;
};

/// Runs one protocol and writes profile.csv, bins.csv, scatter.csv,
/// decoded_seed.tsv, am_seed.json and manifest.json into `out_dir`. The dev
/// and random-baseline streams use the data's master seed unless overridden.
RunOutcome cmd_run(const ExperimentConfig& cfg, const std::string& protocol,
                   const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                   int threads = 1, std::optional<std::uint64_t> seed_override = std::nullopt);

struct ReportSummary {
  std::vector<WerProfile> profiles;
  std::optional<double> seed_wer;
  std::optional<double> topline_wer;
  std::optional<double> best_ssl_wer;
  std::optional<double> gap_recovery;
  std::optional<bool> budget_match;
};

/// (seed − best) / (seed − topline).
double gap_recovery(double seed_wer, double best_wer, double topline_wer);

/// Verifies every run directory against its manifest, merges the profiles
/// and writes report.csv and summary.json into `out_dir`.
ReportSummary cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                         const std::filesystem::path& out_dir);

}  // namespace sslasr
