#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sslasr/common.hpp"

namespace sslasr {

/// Add-k smoothed word n-gram model over a closed vocabulary plus a
/// sentence-end symbol (id == vocab_size). No backoff: every history row
/// is (count + k) / (history_count + k * (V + 1)).
///
/// Histories are exposed as dense integer states so the decoder can walk
/// them without looking at word tuples. The begin-of-sentence pad is the
/// pseudo-word V inside a state.
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(int order, int vocab_size, double add_k, Eigen::MatrixXd counts);

  int order() const { return order_; }
  int vocab_size() const { return vocab_; }
  double add_k() const { return add_k_; }
  int end_symbol() const { return vocab_; }

  int num_states() const { return static_cast<int>(counts_.rows()); }
  int start_state() const;
  int next_state(int state, WordId w) const;
  /// Log probability of `w` (word or end symbol) after history `state`.
  double log_prob(int state, int w) const { return log_prob_(state, w); }
  double prob(int state, int w) const;

  /// Sum of log conditionals including the end symbol.
  double sentence_log_prob(const WordSeq& words) const;

  const Eigen::MatrixXd& counts() const { return counts_; }

  bool operator==(const LanguageModel& o) const {
    return order_ == o.order_ && vocab_ == o.vocab_ && add_k_ == o.add_k_ && counts_ == o.counts_;
  }

 private:
  int order_ = 2;
  int vocab_ = 0;
  double add_k_ = 0.5;
  Eigen::MatrixXd counts_;    // states x (V + 1)
  Eigen::MatrixXd log_prob_;  // same shape
};

/// Throws TrainingError on an empty transcript list and ConfigError on an
/// order outside 1..3 or a non-positive k.
LanguageModel estimate_lm(const std::vector<WordSeq>& transcripts, int vocab_size, int order = 2,
                          double add_k = 0.5);

std::string lm_to_text(const LanguageModel& lm);
LanguageModel lm_from_text(const std::string& text);

}  // namespace sslasr
