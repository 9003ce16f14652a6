#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sslasr/acoustic_model.hpp"
#include "sslasr/binning.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/decoder.hpp"
#include "sslasr/eval.hpp"
#include "sslasr/language_model.hpp"

namespace sslasr {

enum class ModelSelection { kDev, kTest };
enum class AlSelection { kStaticBins, kAdaptive };

std::string to_string(ModelSelection m);
std::string to_string(AlSelection m);
ModelSelection parse_model_selection(const std::string& s);
AlSelection parse_al_selection(const std::string& s);

struct SslConfig {
  int max_local_iters = 3;
  double local_churn_threshold = 0.02;  // fraction of the pool changing bins
  int max_global_iters = 3;
  double global_improvement_threshold = 0.2;  // absolute WER
  ModelSelection model_selection = ModelSelection::kDev;

  void validate() const;
};

struct AlConfig {
  AlSelection selection_mode = AlSelection::kAdaptive;
};

struct ProfilePoint {
  std::string stage_label;
  std::string model_id;
  double train_fraction = 0.0;
  double wer = 0.0;

  bool operator==(const ProfilePoint&) const = default;
};

struct WerProfile {
  std::string protocol;
  std::vector<ProfilePoint> points;  // points[0] is always the seed anchor

  double seed_wer() const { return points.at(0).wer; }
  /// Lowest WER over the stages after the seed anchor (seed WER if none).
  double best_wer() const;
  /// Same, restricted to stages whose label starts with `prefix`.
  std::optional<double> best_wer(const std::string& prefix) const;
};

std::string profile_csv(const std::vector<WerProfile>& profiles);
std::vector<WerProfile> profiles_from_csv(const std::string& text);

/// Shared inputs of every protocol: the fixed LM, the seed set with its dev
/// carve-out, the unlabeled pool and the test set, plus train/decode knobs.
class ProtocolContext {
 public:
  ProtocolContext(const Lexicon& lexicon, const DataSplits& splits, const AcousticModel& init,
                  TrainConfig train, DecodeConfig decode, int lm_order, double lm_add_k,
                  std::uint64_t master_seed, int threads = 1);

  const Lexicon& lexicon() const { return *lexicon_; }
  const LanguageModel& lm() const { return lm_; }
  const std::vector<Utterance>& seed_train() const { return seed_train_; }
  const std::vector<Utterance>& dev() const { return dev_; }
  const std::vector<Utterance>& pool() const { return splits_->d_u; }
  const std::vector<Utterance>& test() const { return splits_->test; }
  const DecodeConfig& decode_config() const { return decode_; }
  const TrainConfig& train_config() const { return train_; }
  int threads() const { return threads_; }

  /// Seed-set ground truth plus `extra`, trained from the flat start.
  AcousticModel train(const std::vector<LabeledUtterance>& extra) const;
  DecodedPool decode(const AcousticModel& am, const std::vector<Utterance>& utts) const;
  double test_wer(const AcousticModel& am) const;
  double dev_wer(const AcousticModel& am) const;
  /// (|seed train| + added) / (|seed train| + |pool|).
  double fraction(std::size_t added) const;

  const Utterance& pool_utterance(const std::string& id) const;

 private:
  double wer_on(const AcousticModel& am, const std::vector<Utterance>& utts) const;

  const Lexicon* lexicon_;
  const DataSplits* splits_;
  AcousticModel init_;
  TrainConfig train_;
  DecodeConfig decode_;
  LanguageModel lm_;
  std::vector<Utterance> seed_train_;
  std::vector<Utterance> dev_;
  std::map<std::string, std::size_t> pool_index_;
  int threads_;
};

/// Throws InvariantViolation("label-hygiene") if a pool utterance in the
/// model's training set carries a label of the wrong kind: SSL models must
/// only see decoded labels for pool utterances, AL models only ground truth.
void audit_labels(const AcousticModel& am, const std::set<std::string>& pool_ids,
                  bool pool_labels_from_oracle);

struct SeedResult {
  AcousticModel model;
  ProfilePoint point;
  DecodedPool pool_decode;  // the seed model's decode of the unlabeled pool
};

SeedResult run_seed_baseline(const ProtocolContext& ctx);

struct ToplineResult {
  AcousticModel model;
  ProfilePoint point;
};

/// Ground truth for the whole pool via `Oracle::peek` (not budget-charged).
ToplineResult run_topline(const ProtocolContext& ctx, const Oracle& oracle);

struct NonIterativeResult {
  WerProfile profile;
  BinHistogram histogram;  // the seed decode
  std::vector<std::size_t> stage_sizes;  // per bin, zero for skipped stages
};

NonIterativeResult run_non_iterative(const ProtocolContext& ctx, const SeedResult& seed,
                                     const BinSpec& spec);

struct LocalHistogram {
  int pass = 0;   // 1-based global pass
  int stage = 0;  // 0 = the pass's opening decode, else bin n being added
  int local = 0;  // 0 = opening decode, else local iteration
  BinHistogram histogram;
};

struct IterativeResult {
  WerProfile profile;  // stage labels "iter<g>-B<n>"
  std::vector<LocalHistogram> histograms;
  int passes = 0;
};

IterativeResult run_iterative(const ProtocolContext& ctx, const SeedResult& seed,
                              const BinSpec& spec, const SslConfig& cfg);

struct ActiveResult {
  WerProfile profile;
  std::vector<std::size_t> budgets;  // cumulative oracle labels per stage
  AcousticModel final_model;
};

/// `spec` is the self-training (decreasing) spec; batches walk it reversed.
ActiveResult run_active_learning(const ProtocolContext& ctx, const SeedResult& seed,
                                 const BinSpec& spec, const AlConfig& cfg, Oracle& oracle);

WerProfile run_random_baseline(const ProtocolContext& ctx, const SeedResult& seed,
                               const std::vector<std::size_t>& budgets, Oracle& oracle,
                               std::uint64_t master_seed);

}  // namespace sslasr
