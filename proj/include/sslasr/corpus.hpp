#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sslasr/common.hpp"

namespace sslasr {

struct IntRange {
  int lo = 0;
  int hi = 0;
};

/// Knobs of the synthetic speech-like corpus. `noise_rate` is the difficulty
/// control: every true emission distribution is mixed with the uniform
/// distribution at this rate.
struct GeneratorConfig {
  int num_phones = 16;
  int states_per_phone = 3;
  int alphabet_size = 32;
  int vocab_size = 60;
  IntRange word_phone_len{2, 5};
  IntRange sentence_len{3, 12};
  double emission_concentration = 0.2;
  double noise_rate = 0.2;
  double mean_state_dwell = 2.0;
  int max_state_dwell = 5;
  int num_utterances = 2000;
  std::uint64_t master_seed = 1;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::vector<std::string> words, std::vector<std::vector<int>> pronunciations);

  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(WordId w) const { return words_.at(static_cast<std::size_t>(w)); }
  const std::vector<int>& phones(WordId w) const {
    return prons_.at(static_cast<std::size_t>(w));
  }
  std::optional<WordId> find(const std::string& word) const;
  bool contains(WordId w) const { return w >= 0 && w < size(); }

  /// Throws DataError if any pronunciation is empty or names a phone >= num_phones.
  void validate(int num_phones) const;

  std::string render(const WordSeq& words) const;
  WordSeq parse(const std::string& text) const;

  bool operator==(const Lexicon&) const = default;

 private:
  std::vector<std::string> words_;
  std::vector<std::vector<int>> prons_;
  std::map<std::string, WordId> index_;
};

struct Utterance {
  std::string id;
  SymbolSeq frames;
  std::optional<WordSeq> reference;

  bool operator==(const Utterance&) const = default;
};

struct Corpus {
  GeneratorConfig config;
  Lexicon lexicon;
  std::vector<Utterance> utterances;
};

/// Hidden generating distributions. Kept for diagnostics only.
struct TrueModels {
  Eigen::MatrixXd emissions;   // (num_phones * states_per_phone) x alphabet_size
  Eigen::MatrixXd bigram;      // vocab x vocab, rows sum to 1
};

struct GeneratedCorpus {
  Corpus corpus;
  TrueModels truth;
};

GeneratedCorpus sample_corpus(const GeneratorConfig& cfg);

std::string utterance_id(int index);

struct SplitRatios {
  double seed = 25.0;
  double unlabeled = 65.0;
  double test = 10.0;
};

struct DataSplits {
  std::vector<Utterance> d_seed;
  std::vector<Utterance> d_u;  // references stripped
  std::vector<Utterance> test;
  SplitRatios ratios;
};

/// Simulated annotator over the unlabeled pool. Every `label` call is
/// charged to the annotation budget.
class Oracle {
 public:
  Oracle() = default;
  explicit Oracle(std::map<std::string, WordSeq> labels) : labels_(std::move(labels)) {}

  const WordSeq& label(const std::string& utterance_id);
  /// Evaluation-only access; not charged.
  const WordSeq& peek(const std::string& utterance_id) const;
  bool contains(const std::string& utterance_id) const { return labels_.count(utterance_id) > 0; }
  std::size_t size() const { return labels_.size(); }
  std::size_t budget_used() const { return calls_; }
  const std::map<std::string, WordSeq>& labels() const { return labels_; }

 private:
  std::map<std::string, WordSeq> labels_;
  std::size_t calls_ = 0;
};

struct SplitOutcome {
  DataSplits splits;
  Oracle oracle;
};

/// Shuffles with the "split" stream of `seed`, then partitions. Seed and test
/// sizes are floored; the remainder goes to the unlabeled pool.
SplitOutcome split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

/// Convenience wrapper: `oracle.label(id)`.
const WordSeq& oracle_label(Oracle& oracle, const std::string& utterance_id);

// Files -------------------------------------------------------------------

inline constexpr int kFormatVersion = 1;

std::string corpus_to_text(const Corpus& corpus);
Corpus corpus_from_text(const std::string& text);

std::string splits_to_text(const DataSplits& splits, std::uint64_t seed);
/// Rebuilds splits from a corpus (whose unlabeled records carry no reference).
DataSplits splits_from_text(const std::string& text, const Corpus& corpus);

std::string oracle_to_text(const Oracle& oracle, const Lexicon& lexicon);
Oracle oracle_from_text(const std::string& text, const Lexicon& lexicon);

/// Corpus as written to disk by `gen`: unlabeled-pool records carry no reference.
Corpus strip_unlabeled(const Corpus& corpus, const DataSplits& splits);

}  // namespace sslasr
