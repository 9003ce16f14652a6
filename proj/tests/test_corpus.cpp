#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "sslasr/corpus.hpp"

using namespace sslasr;

namespace {

Corpus numbered_corpus(int n) {
  Corpus c;
  c.lexicon = Lexicon({"w000"}, {{0}});
  for (int i = 0; i < n; ++i) c.utterances.push_back({utterance_id(i), {0, 1, 2}, WordSeq{0}});
  return c;
}

std::set<std::string> ids(const std::vector<Utterance>& us) {
  std::set<std::string> s;
  for (const auto& u : us) s.insert(u.id);
  return s;
}

}  // namespace

TEST_CASE("an empty corpus is a configuration error") {
  GeneratorConfig g;
  g.num_utterances = 0;
  CHECK_THROWS_AS(sample_corpus(g), ConfigError);
  g = {};
  g.noise_rate = 1.5;
  CHECK_THROWS_WITH_AS(sample_corpus(g), doctest::Contains("noise_rate"), ConfigError);
  g = {};
  g.sentence_len = {0, 3};
  CHECK_THROWS_AS(sample_corpus(g), ConfigError);
}

TEST_CASE("generation is a pure function of the seed") {
  GeneratorConfig g;
  g.master_seed = 7;
  const auto a = sample_corpus(g), b = sample_corpus(g);
  CHECK(corpus_to_text(a.corpus) == corpus_to_text(b.corpus));
  g.master_seed = 8;
  CHECK(corpus_to_text(sample_corpus(g).corpus) != corpus_to_text(a.corpus));
}

TEST_CASE("default corpus respects its shape bounds") {
  const GeneratorConfig g;
  const auto gc = sample_corpus(g);
  REQUIRE(gc.corpus.utterances.size() == static_cast<std::size_t>(g.num_utterances));
  const int lo_loose = g.sentence_len.lo * 2 * 1;
  const int hi_loose = g.sentence_len.hi * 5 * 5 * 5;
  const int lo = g.sentence_len.lo * g.word_phone_len.lo * g.states_per_phone;
  const int hi = g.sentence_len.hi * g.word_phone_len.hi * g.states_per_phone * g.max_state_dwell;
  std::set<std::vector<int>> prons;
  for (int w = 0; w < gc.corpus.lexicon.size(); ++w) prons.insert(gc.corpus.lexicon.phones(w));
  CHECK(prons.size() == static_cast<std::size_t>(g.vocab_size));
  for (const auto& u : gc.corpus.utterances) {
    const int T = static_cast<int>(u.frames.size());
    CHECK(T >= lo_loose);
    CHECK(T <= hi_loose);
    CHECK(T >= lo);
    CHECK(T <= hi);
    REQUIRE(u.reference);
    CHECK(static_cast<int>(u.reference->size()) >= g.sentence_len.lo);
    CHECK(static_cast<int>(u.reference->size()) <= g.sentence_len.hi);
    for (int f : u.frames) CHECK((f >= 0 && f < g.alphabet_size));
    for (auto w : *u.reference) CHECK(gc.corpus.lexicon.contains(w));
  }
  // Hidden distributions are normalized.
  for (Eigen::Index r = 0; r < gc.truth.emissions.rows(); ++r) CHECK(gc.truth.emissions.row(r).sum() == doctest::Approx(1.0));
  for (Eigen::Index r = 0; r < gc.truth.bigram.rows(); ++r) CHECK(gc.truth.bigram.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("split sizes floor seed and test and give the rest to the pool") {
  auto sizes = [](int n, SplitRatios r) {
    const auto out = split_corpus(numbered_corpus(n), r, 1);
    return std::array<std::size_t, 3>{out.splits.d_seed.size(), out.splits.d_u.size(), out.splits.test.size()};
  };
  CHECK(sizes(100, {25, 65, 10}) == std::array<std::size_t, 3>{25, 65, 10});
  CHECK(sizes(1000, {2.5, 87.5, 10}) == std::array<std::size_t, 3>{25, 875, 100});
  CHECK(sizes(10, {100, 0, 0}) == std::array<std::size_t, 3>{10, 0, 0});
  CHECK(sizes(7, {50, 0, 50}) == std::array<std::size_t, 3>{3, 1, 3});
  CHECK_THROWS_WITH_AS(split_corpus(numbered_corpus(10), {30, 30, 30}, 1), doctest::Contains("ratios must sum to 100"),
                       ConfigError);
  CHECK_THROWS_AS(split_corpus(numbered_corpus(10), {-10, 100, 10}, 1), ConfigError);
}

TEST_CASE("splits partition the corpus and hide pool labels in the oracle") {
  const auto gc = sample_corpus(fixtures::small_config(200, 3));
  const auto out = split_corpus(gc.corpus, {25, 65, 10}, 3);
  const auto& s = out.splits;
  const auto a = ids(s.d_seed), b = ids(s.d_u), c = ids(s.test);
  CHECK(a.size() + b.size() + c.size() == gc.corpus.utterances.size());
  std::set<std::string> all = a;
  all.insert(b.begin(), b.end());
  all.insert(c.begin(), c.end());
  CHECK(all.size() == gc.corpus.utterances.size());
  for (const auto& u : s.d_u) CHECK_FALSE(u.reference.has_value());
  for (const auto& u : s.d_seed) CHECK(u.reference.has_value());
  CHECK(out.oracle.size() == s.d_u.size());
  for (const auto& u : s.d_u) CHECK(out.oracle.contains(u.id));

  // Same seed, same split; different seed, different split.
  const auto again = split_corpus(gc.corpus, {25, 65, 10}, 3);
  CHECK(ids(again.splits.d_seed) == a);
  CHECK(ids(split_corpus(gc.corpus, {25, 65, 10}, 4).splits.d_seed) != a);
}

TEST_CASE("oracle returns references and counts every label call") {
  const auto gc = sample_corpus(fixtures::small_config(100, 2));
  auto out = split_corpus(gc.corpus, {25, 65, 10}, 2);
  std::map<std::string, WordSeq> truth;
  for (const auto& u : gc.corpus.utterances) truth[u.id] = *u.reference;
  for (const auto& u : out.splits.d_u) CHECK(oracle_label(out.oracle, u.id) == truth.at(u.id));
  CHECK(out.oracle.budget_used() == out.splits.d_u.size());
  CHECK_THROWS_AS(oracle_label(out.oracle, out.splits.test.front().id), LookupError);
  (void)out.oracle.peek(out.splits.d_u.front().id);
  CHECK(out.oracle.budget_used() == out.splits.d_u.size());
}

TEST_CASE("corpus, splits and oracle files round-trip") {
  const auto gc = sample_corpus(fixtures::small_config(60, 5));
  const auto out = split_corpus(gc.corpus, {25, 65, 10}, 5);
  const Corpus stripped = strip_unlabeled(gc.corpus, out.splits);
  const std::string text = corpus_to_text(stripped);
  const Corpus back = corpus_from_text(text);
  CHECK(corpus_to_text(back) == text);
  CHECK(back.lexicon == gc.corpus.lexicon);
  CHECK(back.config.master_seed == 5);

  const DataSplits s = splits_from_text(splits_to_text(out.splits, 5), back);
  CHECK(s.d_seed == out.splits.d_seed);
  CHECK(s.d_u == out.splits.d_u);
  CHECK(s.test == out.splits.test);
  for (const auto& u : s.d_u) CHECK_FALSE(u.reference.has_value());
  // The written corpus leaks no pool label.
  std::set<std::string> pool_ids = ids(out.splits.d_u);
  for (const auto& u : back.utterances) CHECK(u.reference.has_value() != (pool_ids.count(u.id) > 0));
  const Oracle o = oracle_from_text(oracle_to_text(out.oracle, gc.corpus.lexicon), gc.corpus.lexicon);
  CHECK(o.labels() == out.oracle.labels());
  CHECK(o.budget_used() == 0);
  CHECK_THROWS_AS(corpus_from_text("{not json"), DataError);
}
