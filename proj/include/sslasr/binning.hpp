#pragma once

#include <string>
#include <vector>

#include "sslasr/decoder.hpp"

namespace sslasr {

/// Half-open confidence interval (lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double x) const { return x > lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

/// Ordered partition of (0, 1] into confidence intervals. Self-training
/// consumes the intervals in decreasing confidence; active learning walks the
/// same partition in increasing confidence.
class BinSpec {
 public:
  BinSpec() = default;
  explicit BinSpec(std::vector<Interval> intervals);

  /// (0.95,1], (0.9,0.95], (0.85,0.9], (0.8,0.85], (0,0.8]
  static BinSpec standard();

  const std::vector<Interval>& intervals() const { return intervals_; }
  std::size_t size() const { return intervals_.size(); }
  bool decreasing() const;
  BinSpec reversed() const;

 private:
  std::vector<Interval> intervals_;
};

struct BinMember {
  std::string utterance_id;
  WordSeq label;
  std::string label_model_id;
  double confidence = 0.0;
};

struct Bin {
  Interval interval;
  std::vector<BinMember> members;  // ascending id
};

/// Places every decoded utterance in the unique interval holding its
/// confidence. Throws ContractViolation for a confidence outside (0, 1].
std::vector<Bin> assign_bins(const DecodedPool& decoded, const BinSpec& spec);

std::size_t total_members(const std::vector<Bin>& bins);

/// Fraction of the utterances in `after` that sit in a different bin (by index)
/// than in `before`.
double bin_churn(const std::vector<Bin>& before, const std::vector<Bin>& after);

}  // namespace sslasr
