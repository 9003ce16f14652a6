#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sslasr/alignment.hpp"
#include "sslasr/binning.hpp"
#include "sslasr/decoder.hpp"

namespace sslasr {

struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_len = 0;

  int errors() const { return substitutions + deletions + insertions; }
  EditCounts& operator+=(const EditCounts& o);
  bool operator==(const EditCounts&) const = default;
};

/// Minimal S+D+I counts. Among equally cheap alignments the one with the
/// most substitutions wins, so (ref, hyp) and (hyp, ref) agree on S.
EditCounts edit_distance(const WordSeq& ref, const WordSeq& hyp);

/// Pooled WER in percent: 100 * total errors / total reference words.
double corpus_wer(const std::vector<std::pair<WordSeq, WordSeq>>& pairs);

/// Utterance WER in percent against its own reference length.
double utterance_wer(const WordSeq& ref, const WordSeq& hyp);

struct ScatterPoint {
  std::string utterance_id;
  double confidence = 0.0;
  double wer = 0.0;
};

/// One (confidence, utterance WER) point per decoded utterance, ascending id.
std::vector<ScatterPoint> scatter(const DecodedPool& decoded,
                                  const std::map<std::string, WordSeq>& truth);

/// y ~ a*x^2 + b*x + c. A linear fit reports a == 0.
struct RegressionFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double rss = 0.0;

  double operator()(double x) const { return (a * x + b) * x + c; }
};

/// Least squares through the normal equations of the degree-2 design.
RegressionFit fit_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
RegressionFit fit_linear(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Spearman rank correlation with average ranks for ties.
double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Average (fractional) ranks, 1-based.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v);

struct BinHistogram {
  std::vector<Interval> intervals;
  std::vector<std::size_t> counts;
  std::string model_id;
  int iteration = 0;

  std::size_t total() const;
  double fraction(std::size_t bin) const;
};

/// Throws InvariantViolation when the counts do not add up to `pool_size`.
BinHistogram bin_histogram(const std::vector<Bin>& bins, std::size_t pool_size,
                           std::string model_id = {}, int iteration = 0);

// CSV ---------------------------------------------------------------------

std::string scatter_csv(const std::vector<ScatterPoint>& points);

struct TaggedHistogram {
  std::string protocol;
  BinHistogram histogram;
};
std::string bins_csv(const std::vector<TaggedHistogram>& histograms);

}  // namespace sslasr
