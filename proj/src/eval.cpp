#include "sslasr/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace sslasr {

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_len += o.ref_len;
  return *this;
}

// Among minimal alignments take the one with the most substitutions. Since
// D - I = |ref| - |hyp| is fixed, that pins down all three counts, and the
// choice is symmetric: swapping ref and hyp swaps D and I, nothing else.
EditCounts edit_distance(const WordSeq& ref, const WordSeq& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // (errors, -substitutions), compared lexicographically
  using Cost = std::pair<int, int>;
  std::vector<Cost> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {static_cast<int>(j), 0};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {static_cast<int>(i), 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[i - 1] == hyp[j - 1];
      Cost best{prev[j - 1].first + (same ? 0 : 1), prev[j - 1].second - (same ? 0 : 1)};
      best = std::min(best, Cost{prev[j].first + 1, prev[j].second});
      best = std::min(best, Cost{cur[j - 1].first + 1, cur[j - 1].second});
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  EditCounts c;
  c.ref_len = static_cast<int>(n);
  const int errors = prev[m].first;
  c.substitutions = -prev[m].second;
  // errors = S + D + I and D - I = n - m
  const int d_plus_i = errors - c.substitutions;
  const int d_minus_i = static_cast<int>(n) - static_cast<int>(m);
  c.deletions = (d_plus_i + d_minus_i) / 2;
  c.insertions = (d_plus_i - d_minus_i) / 2;
  return c;
}

double corpus_wer(const std::vector<std::pair<WordSeq, WordSeq>>& pairs) {
  EditCounts total;
  for (const auto& [ref, hyp] : pairs) total += edit_distance(ref, hyp);
  if (total.ref_len == 0) throw EvaluationError("corpus_wer: zero total reference length");
  return 100.0 * total.errors() / total.ref_len;
}

double utterance_wer(const WordSeq& ref, const WordSeq& hyp) {
  if (ref.empty()) throw EvaluationError("utterance_wer: empty reference");
  return 100.0 * edit_distance(ref, hyp).errors() / static_cast<double>(ref.size());
}

std::vector<ScatterPoint> scatter(const DecodedPool& decoded,
                                  const std::map<std::string, WordSeq>& truth) {
  std::vector<ScatterPoint> out;
  out.reserve(decoded.size());
  for (const auto& [id, d] : decoded.entries) {
    auto it = truth.find(id);
    if (it == truth.end()) throw EvaluationError("scatter: no reference for " + id);
    out.push_back({id, d.confidence, utterance_wer(it->second, d.best.words)});
  }
  return out;
}

namespace {

RegressionFit fit_polynomial(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int degree) {
  if (x.size() != y.size()) throw EvaluationError("regression: x and y differ in length");
  const std::set<double> distinct(x.data(), x.data() + x.size());
  if (static_cast<int>(distinct.size()) < degree + 1) {
    throw EvaluationError("regression: need at least " + std::to_string(degree + 1) +
                          " distinct abscissae");
  }
  Eigen::MatrixXd design(x.size(), degree + 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double p = 1.0;
    for (int k = degree; k >= 0; --k) {
      design(i, k) = p;
      p *= x[i];
    }
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.rank() < degree + 1) throw EvaluationError("regression: rank-deficient design");
  const Eigen::VectorXd coef = lu.solve(design.transpose() * y);
  RegressionFit fit;
  if (degree == 2) {
    fit.a = coef[0];
    fit.b = coef[1];
    fit.c = coef[2];
  } else {
    fit.b = coef[0];
    fit.c = coef[1];
  }
  fit.rss = (design * coef - y).squaredNorm();
  return fit;
}

}  // namespace

RegressionFit fit_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return fit_polynomial(x, y, 2);
}

RegressionFit fit_linear(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return fit_polynomial(x, y, 1);
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::VectorXd r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw EvaluationError("spearman: x and y differ in length");
  if (x.size() < 2) throw EvaluationError("spearman: need at least 2 points");
  Eigen::VectorXd rx = average_ranks(x);
  Eigen::VectorXd ry = average_ranks(y);
  rx.array() -= rx.mean();
  ry.array() -= ry.mean();
  const double denom = std::sqrt(rx.squaredNorm() * ry.squaredNorm());
  if (denom == 0.0) throw EvaluationError("spearman: constant input has no rank correlation");
  return std::clamp(rx.dot(ry) / denom, -1.0, 1.0);
}

std::size_t BinHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double BinHistogram::fraction(std::size_t bin) const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(counts.at(bin)) / static_cast<double>(n);
}

BinHistogram bin_histogram(const std::vector<Bin>& bins, std::size_t pool_size,
                           std::string model_id, int iteration) {
  BinHistogram h;
  h.model_id = std::move(model_id);
  h.iteration = iteration;
  for (const auto& b : bins) {
    h.intervals.push_back(b.interval);
    h.counts.push_back(b.members.size());
  }
  if (h.total() != pool_size) {
    throw InvariantViolation("histogram-mass-conservation",
                             std::to_string(h.total()) + " binned vs pool of " + std::to_string(pool_size));
  }
  return h;
}

std::string scatter_csv(const std::vector<ScatterPoint>& points) {
  std::string out = "utt_id,confidence,utt_wer\n";
  for (const auto& p : points) out += p.utterance_id + "," + fixed(p.confidence, 6) + "," + fixed(p.wer, 6) + "\n";
  return out;
}

std::string bins_csv(const std::vector<TaggedHistogram>& histograms) {
  std::string out = "protocol,model_id,iteration,bin_index,lo,hi,count\n";
  for (const auto& [protocol, h] : histograms) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out += protocol + "," + h.model_id + "," + std::to_string(h.iteration) + "," + std::to_string(b) + "," +
             fixed(h.intervals[b].lo, 6) + "," + fixed(h.intervals[b].hi, 6) + "," +
             std::to_string(h.counts[b]) + "\n";
    }
  }
  return out;
}

}  // namespace sslasr
