#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sslasr/common.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/language_model.hpp"

namespace sslasr {

struct TrainConfig {
  int em_iterations = 10;
  double emission_add = 0.5;
  double transition_add = 0.5;
  double dev_fraction = 0.1;

  void validate() const;
};

inline const std::string kGroundTruth = "ground-truth";
inline std::string decoded_by(const std::string& model_id) { return "decoded-by:" + model_id; }

/// Per-phone left-to-right HMMs with categorical emissions. Phone-state
/// `(p, s)` lives at row `p * states_per_phone + s` of every table. Each
/// state has a self-loop probability; the remainder advances to the next
/// state (or out of the phone, for the last one).
class AcousticModel {
 public:
  AcousticModel() = default;
  AcousticModel(int num_phones, int states_per_phone, int alphabet_size);

  int num_phones() const { return num_phones_; }
  int states_per_phone() const { return states_per_phone_; }
  int alphabet_size() const { return alphabet_; }
  int num_states() const { return num_phones_ * states_per_phone_; }
  int state_index(int phone, int s) const { return phone * states_per_phone_ + s; }

  Eigen::MatrixXd& emissions() { return emissions_; }
  const Eigen::MatrixXd& emissions() const { return emissions_; }
  Eigen::VectorXd& self_loop() { return self_loop_; }
  const Eigen::VectorXd& self_loop() const { return self_loop_; }

  bool trained() const { return trained_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  /// Stable identifier derived from the training-set fingerprint.
  std::string id() const;
  int em_iterations_run() const { return em_iterations_run_; }
  const std::vector<double>& loglik_trace() const { return loglik_trace_; }
  /// Sorted (utterance id, label source) pairs of the training set.
  const std::vector<std::pair<std::string, std::string>>& label_sources() const {
    return label_sources_;
  }
  const TrainConfig& train_config() const { return train_config_; }

  void set_provenance(std::vector<std::pair<std::string, std::string>> sources,
                      const TrainConfig& cfg, int iterations, std::vector<double> trace);

  /// Throws InvariantViolation when a distribution is unnormalized or has a
  /// non-positive entry.
  void check_normalized(double tol = 1e-9) const;

  bool operator==(const AcousticModel& o) const;

 private:
  int num_phones_ = 0;
  int states_per_phone_ = 0;
  int alphabet_ = 0;
  Eigen::MatrixXd emissions_;
  Eigen::VectorXd self_loop_;
  bool trained_ = false;
  std::uint64_t fingerprint_ = 0;
  int em_iterations_run_ = 0;
  std::vector<double> loglik_trace_;
  std::vector<std::pair<std::string, std::string>> label_sources_;
  TrainConfig train_config_;
};

/// Log-domain view of a model for the inner loops of alignment and decoding.
struct ScoringTables {
  explicit ScoringTables(const AcousticModel& am);

  Eigen::MatrixXd log_emission;  // states x alphabet
  Eigen::VectorXd log_self;
  Eigen::VectorXd log_advance;
  bool flat = false;  // uniform emissions and 0.5 self-loops everywhere
};

AcousticModel flat_start(const Lexicon& lexicon, int num_phones, int alphabet_size,
                         int states_per_phone);

/// One element of a training set. The utterance is borrowed and must outlive
/// the call that consumes it.
struct LabeledUtterance {
  const Utterance* utterance = nullptr;
  WordSeq transcript;
  std::string label_source = kGroundTruth;
};

/// Order-insensitive fingerprint of a training set.
std::uint64_t training_fingerprint(const std::vector<LabeledUtterance>& labeled);

struct Alignment {
  std::vector<int> state;     // phone-state row per frame
  std::vector<int> position;  // index into the transcript's state chain per frame
  double log_likelihood = 0.0;
};

/// Phone-state rows visited by a transcript, in order.
std::vector<int> state_chain(const AcousticModel& am, const Lexicon& lexicon,
                             const WordSeq& transcript);

/// Exact best state path for a fixed transcript. The likelihood covers every
/// emission and transition including the final exit; with `lm` it also adds
/// the transcript's LM log probability. On a flat model (uniform emissions,
/// self-loops of 0.5) all paths tie and the linear segmentation is returned.
Alignment forced_align(const AcousticModel& am, const Utterance& utterance,
                       const WordSeq& transcript, const Lexicon& lexicon,
                       const LanguageModel* lm = nullptr);

/// Viterbi-EM from `init`. Utterances are processed in ascending id order.
AcousticModel train_supervised(const std::vector<LabeledUtterance>& labeled, const Lexicon& lexicon,
                               const TrainConfig& cfg, const AcousticModel& init);

double corpus_loglik(const AcousticModel& am, const LanguageModel* lm,
                     const std::vector<LabeledUtterance>& labeled, const Lexicon& lexicon);

std::string model_to_text(const AcousticModel& am);
AcousticModel model_from_text(const std::string& text);

}  // namespace sslasr
