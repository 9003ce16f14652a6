#include "sslasr/binning.hpp"

#include <algorithm>
#include <map>

namespace sslasr {

BinSpec::BinSpec(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {
  if (intervals_.empty()) throw ConfigError("bins: at least one interval is required");
  for (const auto& iv : intervals_) {
    if (!(iv.lo < iv.hi)) throw ConfigError("bins: every interval needs lo < hi");
  }
  // Must tile (0, 1] when sorted, in either monotone order.
  std::vector<Interval> sorted = intervals_;
  std::sort(sorted.begin(), sorted.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  if (sorted.front().lo != 0.0 || sorted.back().hi != 1.0) {
    throw ConfigError("bins: intervals must cover (0, 1]");
  }
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].lo != sorted[i - 1].hi) {
      throw ConfigError("bins: intervals must be disjoint and contiguous");
    }
  }
  const bool down = intervals_ == std::vector<Interval>(sorted.rbegin(), sorted.rend());
  if (!down && intervals_ != sorted) throw ConfigError("bins: intervals must be monotonically ordered");
}

BinSpec BinSpec::standard() {
  return BinSpec({{0.95, 1.0}, {0.9, 0.95}, {0.85, 0.9}, {0.8, 0.85}, {0.0, 0.8}});
}

bool BinSpec::decreasing() const {
  return intervals_.size() < 2 || intervals_.front().lo > intervals_.back().lo;
}

BinSpec BinSpec::reversed() const {
  return BinSpec(std::vector<Interval>(intervals_.rbegin(), intervals_.rend()));
}

std::vector<Bin> assign_bins(const DecodedPool& decoded, const BinSpec& spec) {
  std::vector<Bin> bins;
  for (const auto& iv : spec.intervals()) bins.push_back(Bin{iv, {}});
  for (const auto& [id, d] : decoded.entries) {
    if (!(d.confidence > 0.0 && d.confidence <= 1.0)) {
      throw ContractViolation("assign_bins: confidence of " + id + " outside (0,1]");
    }
    auto it = std::find_if(bins.begin(), bins.end(), [&](const Bin& b) { return b.interval.contains(d.confidence); });
    it->members.push_back({id, d.best.words, d.decoder_model_id, d.confidence});
  }
  return bins;
}

std::size_t total_members(const std::vector<Bin>& bins) {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.members.size();
  return n;
}

double bin_churn(const std::vector<Bin>& before, const std::vector<Bin>& after) {
  std::map<std::string, std::size_t> where;
  for (std::size_t b = 0; b < before.size(); ++b) {
    for (const auto& m : before[b].members) where[m.utterance_id] = b;
  }
  std::size_t moved = 0, total = 0;
  for (std::size_t b = 0; b < after.size(); ++b) {
    for (const auto& m : after[b].members) {
      ++total;
      auto it = where.find(m.utterance_id);
      if (it == where.end() || it->second != b) ++moved;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(moved) / static_cast<double>(total);
}

}  // namespace sslasr
