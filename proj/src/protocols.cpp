#include "sslasr/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sslasr {

std::string to_string(ModelSelection m) { return m == ModelSelection::kDev ? "dev" : "test"; }
std::string to_string(AlSelection m) { return m == AlSelection::kAdaptive ? "adaptive" : "static-bins"; }

ModelSelection parse_model_selection(const std::string& s) {
  if (s == "dev") return ModelSelection::kDev;
  if (s == "test") return ModelSelection::kTest;
  throw ConfigError("ssl.model_selection: expected dev or test, got '" + s + "'");
}

AlSelection parse_al_selection(const std::string& s) {
  if (s == "adaptive") return AlSelection::kAdaptive;
  if (s == "static-bins") return AlSelection::kStaticBins;
  throw ConfigError("al.selection_mode: expected adaptive or static-bins, got '" + s + "'");
}

void SslConfig::validate() const {
  if (max_local_iters < 1) throw ConfigError("ssl.max_local_iters: must be >= 1");
  if (max_global_iters < 1) throw ConfigError("ssl.max_global_iters: must be >= 1");
  if (!(local_churn_threshold > 0.0)) throw ConfigError("ssl.local_churn_threshold: must be > 0");
  if (!(global_improvement_threshold > 0.0)) {
    throw ConfigError("ssl.global_improvement_threshold: must be > 0");
  }
}

double WerProfile::best_wer() const {
  double best = seed_wer();
  if (points.size() > 1) {
    best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points.size(); ++i) best = std::min(best, points[i].wer);
  }
  return best;
}

std::optional<double> WerProfile::best_wer(const std::string& prefix) const {
  std::optional<double> best;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].stage_label.rfind(prefix, 0) != 0) continue;
    if (!best || points[i].wer < *best) best = points[i].wer;
  }
  return best;
}

std::string profile_csv(const std::vector<WerProfile>& profiles) {
  std::string out = "protocol,stage_label,model_id,train_fraction,wer\n";
  for (const auto& p : profiles) {
    for (const auto& pt : p.points) {
      out += p.protocol + "," + pt.stage_label + "," + pt.model_id + "," + fixed(pt.train_fraction, 6) + "," +
             fixed(pt.wer, 6) + "\n";
    }
  }
  return out;
}

std::vector<WerProfile> profiles_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "protocol,stage_label,model_id,train_fraction,wer") {
    throw DataError("profile csv: missing or unexpected header");
  }
  std::vector<WerProfile> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw DataError("profile csv: expected 5 fields in '" + line + "'");
    if (out.empty() || out.back().protocol != f[0]) out.push_back({f[0], {}});
    try {
      out.back().points.push_back({f[1], f[2], std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      throw DataError("profile csv: bad number in '" + line + "'");
    }
  }
  return out;
}

// Context -----------------------------------------------------------------

ProtocolContext::ProtocolContext(const Lexicon& lexicon, const DataSplits& splits,
                                 const AcousticModel& init, TrainConfig train, DecodeConfig decode,
                                 int lm_order, double lm_add_k, std::uint64_t master_seed, int threads)
    : lexicon_(&lexicon),
      splits_(&splits),
      init_(init),
      train_(train),
      decode_(decode),
      threads_(threads) {
  train_.validate();
  decode_.validate();
  if (splits.d_seed.empty()) throw DataError("seed set is empty");
  if (splits.test.empty()) throw DataError("test set is empty");

  std::vector<WordSeq> transcripts;
  for (const auto& u : splits.d_seed) {
    if (!u.reference) throw DataError("seed utterance " + u.id + " has no reference");
    transcripts.push_back(*u.reference);
  }
  lm_ = estimate_lm(transcripts, lexicon.size(), lm_order, lm_add_k);

  // Dev carve-out: a seeded, id-sorted draw from the seed set, never trained on.
  std::vector<Utterance> seed = splits.d_seed;
  std::sort(seed.begin(), seed.end(), [](const Utterance& a, const Utterance& b) { return a.id < b.id; });
  auto n_dev = static_cast<std::size_t>(std::floor(train_.dev_fraction * static_cast<double>(seed.size()) + 1e-9));
  n_dev = std::min(n_dev, seed.size() - 1);
  std::vector<std::size_t> order(seed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_stream(master_seed, "dev");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_dev(seed.size(), false);
  for (std::size_t i = 0; i < n_dev; ++i) is_dev[order[i]] = true;
  for (std::size_t i = 0; i < seed.size(); ++i) (is_dev[i] ? dev_ : seed_train_).push_back(seed[i]);

  for (std::size_t i = 0; i < splits.d_u.size(); ++i) pool_index_[splits.d_u[i].id] = i;
}

AcousticModel ProtocolContext::train(const std::vector<LabeledUtterance>& extra) const {
  std::vector<LabeledUtterance> all;
  all.reserve(seed_train_.size() + extra.size());
  for (const auto& u : seed_train_) all.push_back({&u, *u.reference, kGroundTruth});
  all.insert(all.end(), extra.begin(), extra.end());
  return train_supervised(all, *lexicon_, train_, init_);
}

DecodedPool ProtocolContext::decode(const AcousticModel& am, const std::vector<Utterance>& utts) const {
  return decode_pool(am, lm_, *lexicon_, utts, decode_, threads_);
}

double ProtocolContext::wer_on(const AcousticModel& am, const std::vector<Utterance>& utts) const {
  // Scoring only needs the 1-best, which exact search returns for any list size.
  DecodeConfig one = decode_;
  one.nbest = 1;
  const DecodedPool d = decode_pool(am, lm_, *lexicon_, utts, one, threads_);
  std::vector<std::pair<WordSeq, WordSeq>> pairs;
  pairs.reserve(utts.size());
  for (const auto& u : utts) pairs.emplace_back(*u.reference, d.entries.at(u.id).best.words);
  return corpus_wer(pairs);
}

double ProtocolContext::test_wer(const AcousticModel& am) const { return wer_on(am, splits_->test); }

double ProtocolContext::dev_wer(const AcousticModel& am) const {
  if (dev_.empty()) throw EvaluationError("dev set is empty");
  return wer_on(am, dev_);
}

double ProtocolContext::fraction(std::size_t added) const {
  return static_cast<double>(seed_train_.size() + added) /
         static_cast<double>(seed_train_.size() + splits_->d_u.size());
}

const Utterance& ProtocolContext::pool_utterance(const std::string& id) const {
  auto it = pool_index_.find(id);
  if (it == pool_index_.end()) throw LookupError("not in the unlabeled pool: " + id);
  return splits_->d_u[it->second];
}

void audit_labels(const AcousticModel& am, const std::set<std::string>& pool_ids,
                  bool pool_labels_from_oracle) {
  for (const auto& [id, source] : am.label_sources()) {
    if (!pool_ids.count(id)) continue;
    const bool truth = source == kGroundTruth;
    if (truth != pool_labels_from_oracle) {
      throw InvariantViolation("label-hygiene", "pool utterance " + id + " trained with label source '" +
                                                    source + "' in " + am.id());
    }
  }
}

namespace {

std::set<std::string> pool_ids(const ProtocolContext& ctx) {
  std::set<std::string> ids;
  for (const auto& u : ctx.pool()) ids.insert(u.id);
  return ids;
}

std::vector<Utterance> gather(const ProtocolContext& ctx, const std::vector<std::string>& ids) {
  std::vector<Utterance> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(ctx.pool_utterance(id));
  return out;
}

std::vector<LabeledUtterance> pseudo_labels(const ProtocolContext& ctx, const std::vector<Bin>& bins,
                                            std::size_t upto) {
  std::vector<LabeledUtterance> out;
  for (std::size_t b = 0; b < upto && b < bins.size(); ++b) {
    for (const auto& m : bins[b].members) {
      out.push_back({&ctx.pool_utterance(m.utterance_id), m.label, decoded_by(m.label_model_id)});
    }
  }
  return out;
}

}  // namespace

SeedResult run_seed_baseline(const ProtocolContext& ctx) {
  SeedResult r{ctx.train({}), {}, {}};
  r.point = {"seed", r.model.id(), ctx.fraction(0), ctx.test_wer(r.model)};
  if (!ctx.pool().empty()) r.pool_decode = ctx.decode(r.model, ctx.pool());
  return r;
}

ToplineResult run_topline(const ProtocolContext& ctx, const Oracle& oracle) {
  std::vector<LabeledUtterance> extra;
  extra.reserve(ctx.pool().size());
  for (const auto& u : ctx.pool()) extra.push_back({&u, oracle.peek(u.id), kGroundTruth});
  ToplineResult r{ctx.train(extra), {}};
  r.point = {"topline", r.model.id(), ctx.fraction(extra.size()), ctx.test_wer(r.model)};
  return r;
}

NonIterativeResult run_non_iterative(const ProtocolContext& ctx, const SeedResult& seed,
                                     const BinSpec& spec) {
  const auto ids = pool_ids(ctx);
  std::vector<Bin> bins = assign_bins(seed.pool_decode, spec);
  NonIterativeResult r;
  r.histogram = bin_histogram(bins, ctx.pool().size(), seed.model.id(), 0);
  r.profile.protocol = "noniter";
  r.profile.points.push_back(seed.point);

  AcousticModel prev = seed.model;
  bool prev_is_seed = true;
  std::vector<LabeledUtterance> extra;
  for (std::size_t n = 0; n < bins.size(); ++n) {
    auto& bin = bins[n];
    if (bin.members.empty()) {
      r.stage_sizes.push_back(0);
      continue;
    }
    // Only the incoming bin is relabelled, by the newest model; earlier bins
    // keep the labels they were consumed with.
    if (!prev_is_seed) {
      std::vector<std::string> member_ids;
      for (const auto& m : bin.members) member_ids.push_back(m.utterance_id);
      const DecodedPool d = ctx.decode(prev, gather(ctx, member_ids));
      for (auto& m : bin.members) {
        m.label = d.entries.at(m.utterance_id).best.words;
        m.label_model_id = d.model_id;
      }
    }
    for (const auto& m : bin.members) {
      extra.push_back({&ctx.pool_utterance(m.utterance_id), m.label, decoded_by(m.label_model_id)});
    }
    AcousticModel am = ctx.train(extra);
    audit_labels(am, ids, false);
    r.stage_sizes.push_back(bin.members.size());
    r.profile.points.push_back({"B" + std::to_string(n + 1), am.id(), ctx.fraction(extra.size()), ctx.test_wer(am)});
    prev = std::move(am);
    prev_is_seed = false;
  }
  return r;
}

IterativeResult run_iterative(const ProtocolContext& ctx, const SeedResult& seed, const BinSpec& spec,
                              const SslConfig& cfg) {
  cfg.validate();
  if (cfg.model_selection == ModelSelection::kDev && ctx.dev().empty()) {
    throw ConfigError("ssl.model_selection: dev selection needs a nonempty dev carve-out");
  }
  const auto ids = pool_ids(ctx);
  const std::size_t pool_size = ctx.pool().size();
  auto select_wer = [&](const AcousticModel& am, double test_wer) {
    return cfg.model_selection == ModelSelection::kDev ? ctx.dev_wer(am) : test_wer;
  };

  IterativeResult r;
  r.profile.protocol = "iter";
  r.profile.points.push_back(seed.point);

  AcousticModel decoder = seed.model;
  double prev_best = select_wer(seed.model, seed.point.wer);
  for (int g = 1; g <= cfg.max_global_iters; ++g) {
    const DecodedPool opening = g == 1 ? seed.pool_decode : ctx.decode(decoder, ctx.pool());
    std::vector<Bin> bins = assign_bins(opening, spec);
    r.histograms.push_back({g, 0, 0, bin_histogram(bins, pool_size, decoder.id(), 0)});

    std::optional<AcousticModel> best;
    double best_wer = std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n <= bins.size(); ++n) {
      if (bins[n - 1].members.empty()) continue;
      AcousticModel am;
      std::size_t added = 0;
      for (int it = 1; it <= cfg.max_local_iters; ++it) {
        const auto extra = pseudo_labels(ctx, bins, n);
        added = extra.size();
        am = ctx.train(extra);
        audit_labels(am, ids, false);
        std::vector<Bin> next = assign_bins(ctx.decode(am, ctx.pool()), spec);
        const double churn = bin_churn(bins, next);
        bins = std::move(next);
        r.histograms.push_back({g, static_cast<int>(n), it, bin_histogram(bins, pool_size, am.id(), it)});
        if (churn < cfg.local_churn_threshold) break;
      }
      const double wer = ctx.test_wer(am);
      r.profile.points.push_back(
          {"iter" + std::to_string(g) + "-B" + std::to_string(n), am.id(), ctx.fraction(added), wer});
      const double sel = select_wer(am, wer);
      if (sel < best_wer) {
        best_wer = sel;
        best = am;
      }
    }
    r.passes = g;
    if (!best) break;  // nothing to add: the pool is empty
    // Two passes always run; later passes stop once the best model stops improving.
    const double improvement = prev_best - best_wer;
    if (g >= 2 && improvement < cfg.global_improvement_threshold) break;
    prev_best = best_wer;
    decoder = std::move(*best);
  }
  return r;
}

ActiveResult run_active_learning(const ProtocolContext& ctx, const SeedResult& seed, const BinSpec& spec,
                                 const AlConfig& cfg, Oracle& oracle) {
  const auto ids = pool_ids(ctx);
  const std::vector<Bin> seed_bins = assign_bins(seed.pool_decode, spec.reversed());

  ActiveResult r;
  r.profile.protocol = "active";
  r.profile.points.push_back(seed.point);
  r.final_model = seed.model;

  std::set<std::string> remaining = ids;
  std::vector<LabeledUtterance> extra;
  const std::size_t budget_before = oracle.budget_used();
  bool fresh = true;  // the seed decode is still current for the remaining pool
  int stage = 0;
  for (const auto& bin : seed_bins) {
    ++stage;
    const std::size_t size = bin.members.size();
    if (size == 0) continue;
    std::vector<std::string> batch;
    if (cfg.selection_mode == AlSelection::kStaticBins) {
      for (const auto& m : bin.members) batch.push_back(m.utterance_id);
    } else if (size >= remaining.size()) {
      batch.assign(remaining.begin(), remaining.end());
    } else {
      std::vector<std::pair<double, std::string>> ranked;
      if (fresh) {
        for (const auto& id : remaining) ranked.emplace_back(seed.pool_decode.entries.at(id).confidence, id);
      } else {
        const DecodedPool d = ctx.decode(r.final_model, gather(ctx, {remaining.begin(), remaining.end()}));
        for (const auto& [id, du] : d.entries) ranked.emplace_back(du.confidence, id);
      }
      std::sort(ranked.begin(), ranked.end());
      for (std::size_t i = 0; i < size; ++i) batch.push_back(ranked[i].second);
    }
    for (const auto& id : batch) {
      if (!remaining.erase(id)) throw InvariantViolation("al-batch-disjoint", id + " selected twice");
      extra.push_back({&ctx.pool_utterance(id), oracle_label(oracle, id), kGroundTruth});
    }
    if (oracle.budget_used() - budget_before > ids.size()) {
      throw ContractViolation("active learning: annotation budget exceeds the pool size");
    }
    AcousticModel am = ctx.train(extra);
    audit_labels(am, ids, true);
    r.budgets.push_back(extra.size());
    r.profile.points.push_back({"A" + std::to_string(stage), am.id(), ctx.fraction(extra.size()), ctx.test_wer(am)});
    r.final_model = std::move(am);
    fresh = false;
  }
  return r;
}

WerProfile run_random_baseline(const ProtocolContext& ctx, const SeedResult& seed,
                               const std::vector<std::size_t>& budgets, Oracle& oracle,
                               std::uint64_t master_seed) {
  const auto ids = pool_ids(ctx);
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] > ids.size()) throw ContractViolation("random baseline: budget exceeds the pool size");
    if (i > 0 && budgets[i] < budgets[i - 1]) throw ContractViolation("random baseline: budgets must not decrease");
  }
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng = make_stream(master_seed, "random-baseline");
  std::shuffle(order.begin(), order.end(), rng);

  WerProfile p;
  p.protocol = "random";
  p.points.push_back(seed.point);
  std::vector<LabeledUtterance> extra;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    while (extra.size() < budgets[i]) {
      const auto& id = order[extra.size()];
      extra.push_back({&ctx.pool_utterance(id), oracle_label(oracle, id), kGroundTruth});
    }
    if (extra.empty()) {
      p.points.push_back({"R" + std::to_string(i + 1), seed.model.id(), ctx.fraction(0), seed.point.wer});
      continue;
    }
    AcousticModel am = ctx.train(extra);
    audit_labels(am, ids, true);
    p.points.push_back({"R" + std::to_string(i + 1), am.id(), ctx.fraction(extra.size()), ctx.test_wer(am)});
  }
  return p;
}

}  // namespace sslasr
