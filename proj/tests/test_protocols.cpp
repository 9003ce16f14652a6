#include <doctest.h>

#include <memory>

#include "fixtures.hpp"
#include "sslasr/protocols.hpp"

using namespace sslasr;

namespace {

// A small world: generated corpus, its split, and a protocol context.
struct World {
  GeneratedCorpus gc;
  SplitOutcome split;
  AcousticModel init;
  std::unique_ptr<ProtocolContext> ctx;

  World(int utterances, std::uint64_t seed, SplitRatios ratios = {25, 65, 10}, int em = 4) {
    gc = sample_corpus(fixtures::small_config(utterances, seed));
    split = split_corpus(gc.corpus, ratios, seed);
    const auto& g = gc.corpus.config;
    init = flat_start(gc.corpus.lexicon, g.num_phones, g.alphabet_size, g.states_per_phone);
    TrainConfig tc;
    tc.em_iterations = em;
    DecodeConfig dc;
    dc.nbest = 5;
    ctx = std::make_unique<ProtocolContext>(gc.corpus.lexicon, split.splits, init, tc, dc, 2, 0.5, seed);
  }
};

World& shared_world() {
  static World w(240, 5);
  return w;
}

const SeedResult& shared_seed() {
  static SeedResult s = run_seed_baseline(*shared_world().ctx);
  return s;
}

std::set<std::string> all_ids(const std::vector<Bin>& bins) {
  std::set<std::string> s;
  for (const auto& b : bins) {
    for (const auto& m : b.members) s.insert(m.utterance_id);
  }
  return s;
}

}  // namespace

TEST_CASE("context carves dev out of the seed set and never trains on it") {
  auto& w = shared_world();
  const auto& ctx = *w.ctx;
  const std::size_t n_seed = w.split.splits.d_seed.size();
  CHECK(ctx.dev().size() == static_cast<std::size_t>(0.1 * static_cast<double>(n_seed)));
  CHECK(ctx.dev().size() + ctx.seed_train().size() == n_seed);
  std::set<std::string> train;
  for (const auto& u : ctx.seed_train()) train.insert(u.id);
  for (const auto& u : ctx.dev()) CHECK(train.count(u.id) == 0);
  for (const auto& [id, src] : shared_seed().model.label_sources()) {
    CHECK(train.count(id) == 1);
    CHECK(src == kGroundTruth);
  }
  CHECK(ctx.fraction(0) == doctest::Approx(double(ctx.seed_train().size()) / double(ctx.seed_train().size() + ctx.pool().size())));
  CHECK(ctx.fraction(ctx.pool().size()) == 1.0);
  CHECK_THROWS_AS(ctx.pool_utterance(ctx.test().front().id), LookupError);
}

TEST_CASE("seed baseline is deterministic and decodes the whole pool") {
  auto& w = shared_world();
  const auto& s = shared_seed();
  CHECK(s.pool_decode.size() == w.split.splits.d_u.size());
  CHECK(s.point.stage_label == "seed");
  const auto again = run_seed_baseline(*w.ctx);
  CHECK(again.model == s.model);
  CHECK(again.point == s.point);
  CHECK(again.pool_decode == s.pool_decode);
}

TEST_CASE("non-iterative profile: structure, hygiene, accumulation") {
  auto& w = shared_world();
  const auto& s = shared_seed();
  const auto r = run_non_iterative(*w.ctx, s, BinSpec::standard());
  CHECK(r.profile.points.size() <= 6);
  CHECK(r.profile.points.front() == s.point);
  CHECK(r.histogram.total() == w.split.splits.d_u.size());
  CHECK(r.stage_sizes.size() == 5);
  std::size_t nonempty = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(r.stage_sizes[i] == r.histogram.counts[i]);
    nonempty += r.stage_sizes[i] > 0;
  }
  CHECK(r.profile.points.size() == 1 + nonempty);
  for (std::size_t i = 1; i < r.profile.points.size(); ++i) {
    CHECK(r.profile.points[i].train_fraction >= r.profile.points[i - 1].train_fraction);
  }
  CHECK(r.profile.points.back().train_fraction == 1.0);

  const auto one = run_non_iterative(*w.ctx, s, BinSpec({{0.0, 1.0}}));
  REQUIRE(one.profile.points.size() == 2);
  CHECK(one.profile.points[1].stage_label == "B1");
  CHECK(one.profile.points[1].train_fraction == 1.0);
}

TEST_CASE("label hygiene audit catches ground truth in a self-training set") {
  auto& w = shared_world();
  const auto& ctx = *w.ctx;
  const auto& u = ctx.pool().front();
  const std::set<std::string> ids{u.id};
  const auto leaked = ctx.train({{&u, w.split.oracle.peek(u.id), kGroundTruth}});
  CHECK_THROWS_WITH_AS(audit_labels(leaked, ids, false), doctest::Contains("label-hygiene"), InvariantViolation);
  CHECK_NOTHROW(audit_labels(leaked, ids, true));
  const auto decoded = ctx.train({{&u, w.split.oracle.peek(u.id), decoded_by("m")}});
  CHECK_NOTHROW(audit_labels(decoded, ids, false));
  CHECK_THROWS_AS(audit_labels(decoded, ids, true), InvariantViolation);
}

TEST_CASE("active learning ends on the topline model in both modes") {
  auto& w = shared_world();
  const auto& s = shared_seed();
  const auto top = run_topline(*w.ctx, w.split.oracle);
  CHECK(top.point.train_fraction == 1.0);
  for (auto mode : {AlSelection::kAdaptive, AlSelection::kStaticBins}) {
    Oracle oracle = w.split.oracle;
    const auto al = run_active_learning(*w.ctx, s, BinSpec::standard(), {mode}, oracle);
    CHECK(al.final_model == top.model);
    CHECK(al.final_model.fingerprint() == top.model.fingerprint());
    CHECK(al.profile.points.back().wer == top.point.wer);
    CHECK(al.profile.points.back().train_fraction == 1.0);
    CHECK(oracle.budget_used() == w.split.splits.d_u.size());
    CHECK(al.budgets.back() == w.split.splits.d_u.size());
    for (std::size_t i = 1; i < al.budgets.size(); ++i) CHECK(al.budgets[i] > al.budgets[i - 1]);
    audit_labels(al.final_model, {}, true);
  }
}

TEST_CASE("random baseline: zero budget is the seed, full budget the topline") {
  auto& w = shared_world();
  const auto& s = shared_seed();
  const auto top = run_topline(*w.ctx, w.split.oracle);
  Oracle oracle = w.split.oracle;
  const std::size_t n = w.split.splits.d_u.size();
  const auto p = run_random_baseline(*w.ctx, s, {0, n / 2, n}, oracle, 5);
  REQUIRE(p.points.size() == 4);
  CHECK(p.points[1].wer == s.point.wer);
  CHECK(p.points[1].train_fraction == s.point.train_fraction);
  CHECK(p.points[3].wer == top.point.wer);
  CHECK(p.points[3].model_id == top.model.id());
  CHECK(oracle.budget_used() == n);
  Oracle o2 = w.split.oracle;
  CHECK_THROWS_AS(run_random_baseline(*w.ctx, s, {n + 1}, o2, 5), ContractViolation);
  CHECK_THROWS_AS(run_random_baseline(*w.ctx, s, {3, 2}, o2, 5), ContractViolation);
  // Same seed, same draws.
  Oracle o3 = w.split.oracle;
  CHECK(run_random_baseline(*w.ctx, s, {0, n / 2, n}, o3, 5).points == p.points);
}

TEST_CASE("iterative bootstrapping conserves the pool and is reproducible") {
  World w(160, 7, {25, 65, 10}, 3);
  const auto s = run_seed_baseline(*w.ctx);
  SslConfig cfg;
  cfg.max_local_iters = 2;
  cfg.max_global_iters = 2;
  const auto r = run_iterative(*w.ctx, s, BinSpec::standard(), cfg);
  CHECK(r.passes >= 1);
  CHECK(r.passes <= 2);
  CHECK(r.profile.points.front() == s.point);
  for (const auto& h : r.histograms) {
    CHECK(h.histogram.total() == w.split.splits.d_u.size());
    CHECK(h.local <= cfg.max_local_iters);
  }
  CHECK(r.histograms.front().pass == 1);
  CHECK(r.histograms.front().local == 0);
  for (std::size_t i = 1; i < r.profile.points.size(); ++i) {
    CHECK(r.profile.points[i].stage_label.rfind("iter", 0) == 0);
  }
  const auto again = run_iterative(*w.ctx, s, BinSpec::standard(), cfg);
  CHECK(again.profile.points == r.profile.points);
  CHECK(again.histograms.size() == r.histograms.size());

  SslConfig bad;
  bad.max_local_iters = 0;
  CHECK_THROWS_AS(run_iterative(*w.ctx, s, BinSpec::standard(), bad), ConfigError);
}

TEST_CASE("a seed set holding the whole training data makes seed and topline coincide") {
  World w(120, 3, {90, 0, 10}, 3);
  REQUIRE(w.split.splits.d_u.empty());
  const auto s = run_seed_baseline(*w.ctx);
  const auto top = run_topline(*w.ctx, w.split.oracle);
  CHECK(s.model == top.model);
  CHECK(s.point.wer == top.point.wer);
}

TEST_CASE("bins of every protocol partition the pool") {
  auto& w = shared_world();
  const auto& s = shared_seed();
  std::set<std::string> pool;
  for (const auto& u : w.split.splits.d_u) pool.insert(u.id);
  CHECK(all_ids(assign_bins(s.pool_decode, BinSpec::standard())) == pool);
  CHECK(all_ids(assign_bins(s.pool_decode, BinSpec::standard().reversed())) == pool);
}

TEST_CASE("profiles round-trip through csv") {
  WerProfile p{"iter", {{"seed", "m0", 0.25, 30.5}, {"iter1-B1", "m1", 0.5, 29.123456}}};
  const std::string csv = profile_csv({p});
  CHECK(csv == "protocol,stage_label,model_id,train_fraction,wer\niter,seed,m0,0.250000,30.500000\n"
               "iter,iter1-B1,m1,0.500000,29.123456\n");
  const auto back = profiles_from_csv(csv);
  REQUIRE(back.size() == 1);
  CHECK(back[0].points == p.points);
  CHECK(p.best_wer() == doctest::Approx(29.123456));
  CHECK(p.best_wer("iter2") == std::nullopt);
  CHECK_THROWS_AS(profiles_from_csv("nope\n"), DataError);
}
