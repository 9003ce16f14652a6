#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sslasr/acoustic_model.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/language_model.hpp"

namespace sslasr {

enum class ConfidenceAggregation { kMean, kMin, kGeometricMean };

struct DecodeConfig {
  int nbest = 10;
  /// Divisor on combined log scores before posterior normalization. The
  /// models are exactly generative, so 1 already gives calibrated weights;
  /// larger values flatten the posteriors.
  double acoustic_scale = 1.0;
  /// Exact search: a backward Viterbi pass bounds every partial path and the
  /// forward K-best pass keeps only paths within `search_window` of the best
  /// total, widening the window until K hypotheses are certified.
  bool exact_search = true;
  double search_window = 4.0;
  /// Frame-synchronous beam used when exact_search is off.
  double beam_width = 60.0;
  ConfidenceAggregation aggregation = ConfidenceAggregation::kMean;

  void validate() const;
  std::string canonical() const;
};

struct Hypothesis {
  WordSeq words;
  double score = 0.0;  // acoustic + LM log score

  bool operator==(const Hypothesis&) const = default;
};

struct DecodedUtterance {
  std::string utterance_id;
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // descending score; nbest[0] == best
  std::vector<double> slot_posteriors;
  double confidence = 0.0;
  std::string decoder_model_id;

  bool operator==(const DecodedUtterance&) const = default;
};

struct DecodedPool {
  std::map<std::string, DecodedUtterance> entries;  // ascending id
  std::string model_id;
  std::string config_hash;

  std::size_t size() const { return entries.size(); }
  double mean_confidence() const;
  bool operator==(const DecodedPool&) const = default;
};

/// Search network for one (model, LM, lexicon) triple. Immutable after
/// construction; `decode` may be called concurrently.
class Decoder {
 public:
  Decoder(const AcousticModel& am, const LanguageModel& lm, const Lexicon& lexicon,
          DecodeConfig cfg);
  ~Decoder();
  Decoder(const Decoder&) = delete;
  Decoder& operator=(const Decoder&) = delete;

  /// Up to `nbest` distinct word sequences in descending score order, ties
  /// broken by lexicographic word-id order.
  std::vector<Hypothesis> search(const Utterance& utterance) const;
  DecodedUtterance decode(const Utterance& utterance) const;

  const DecodeConfig& config() const { return cfg_; }
  const std::string& model_id() const { return model_id_; }

 private:
  struct Network;
  std::unique_ptr<Network> net_;
  DecodeConfig cfg_;
  std::string model_id_;
};

DecodedUtterance decode_utterance(const AcousticModel& am, const LanguageModel& lm,
                                  const Lexicon& lexicon, const Utterance& utterance,
                                  const DecodeConfig& cfg);

/// Slot posteriors of the best hypothesis. Weights are proportional to
/// exp(score / acoustic_scale); each competitor is aligned to the best by
/// unit-cost Levenshtein (ties: substitution, insertion, deletion) and its
/// weight counts toward every slot where its aligned word agrees.
std::vector<double> word_posteriors(const std::vector<Hypothesis>& nbest, const DecodeConfig& cfg);

double utterance_confidence(const std::vector<double>& slot_posteriors,
                            ConfidenceAggregation aggregation = ConfidenceAggregation::kMean);

/// Decodes every utterance of `pool`. Results are independent of `threads`.
DecodedPool decode_pool(const AcousticModel& am, const LanguageModel& lm, const Lexicon& lexicon,
                        const std::vector<Utterance>& pool, const DecodeConfig& cfg,
                        int threads = 1);

/// One tab-separated record per utterance: id, confidence (9 decimals),
/// best words, slot posteriors, model id.
std::string pool_to_text(const DecodedPool& pool, const Lexicon& lexicon);
DecodedPool pool_from_text(const std::string& text, const Lexicon& lexicon);

}  // namespace sslasr
