#include "sslasr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace sslasr {

using json = nlohmann::json;

namespace {

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(std::string("generator.") + field + ": " + what);
}

Eigen::VectorXd sample_dirichlet(Rng& rng, int dim, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gamma(rng);
  double total = v.sum();
  if (!(total > 0.0)) {
    // All draws underflowed; collapse onto one coordinate.
    v.setZero();
    v[std::uniform_int_distribution<int>(0, dim - 1)(rng)] = 1.0;
    return v;
  }
  return v / total;
}

int sample_categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& p) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

void GeneratorConfig::validate() const {
  require(num_phones >= 1, "num_phones", "must be >= 1");
  require(states_per_phone >= 1, "states_per_phone", "must be >= 1");
  require(alphabet_size >= 1, "alphabet_size", "must be >= 1");
  require(vocab_size >= 1, "vocab_size", "must be >= 1");
  require(word_phone_len.lo >= 1 && word_phone_len.lo <= word_phone_len.hi, "word_phone_len",
          "range must be nonempty with lower bound >= 1");
  require(sentence_len.lo >= 1 && sentence_len.lo <= sentence_len.hi, "sentence_len",
          "range must be nonempty with lower bound >= 1");
  require(emission_concentration > 0.0, "emission_concentration", "must be positive");
  require(noise_rate >= 0.0 && noise_rate <= 1.0, "noise_rate", "must lie in [0,1]");
  require(mean_state_dwell >= 1.0, "mean_state_dwell", "must be >= 1");
  require(max_state_dwell >= 1, "max_state_dwell", "must be >= 1");
  require(num_utterances >= 1, "num_utterances", "must be >= 1");
}

Lexicon::Lexicon(std::vector<std::string> words, std::vector<std::vector<int>> pronunciations)
    : words_(std::move(words)), prons_(std::move(pronunciations)) {
  if (words_.size() != prons_.size()) {
    throw DataError("lexicon: word and pronunciation counts differ");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<WordId>(i)).second) {
      throw DataError("lexicon: duplicate word '" + words_[i] + "'");
    }
  }
}

std::optional<WordId> Lexicon::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Lexicon::validate(int num_phones) const {
  for (int w = 0; w < size(); ++w) {
    const auto& p = phones(w);
    if (p.empty()) throw DataError("lexicon: empty pronunciation for '" + word(w) + "'");
    for (int ph : p) {
      if (ph < 0 || ph >= num_phones) {
        throw DataError("lexicon: phone " + std::to_string(ph) + " out of range in '" + word(w) +
                        "'");
      }
    }
  }
}

std::string Lexicon::render(const WordSeq& words) const {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += word(words[i]);
  }
  return out;
}

WordSeq Lexicon::parse(const std::string& text) const {
  WordSeq out;
  for (const auto& tok : split_ws(text)) {
    auto w = find(tok);
    if (!w) throw DataError("out-of-vocabulary word '" + tok + "'");
    out.push_back(*w);
  }
  return out;
}

std::string utterance_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%06d", index);
  return buf;
}

GeneratedCorpus sample_corpus(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng = make_stream(cfg.master_seed, "corpus");

  // Lexicon with pairwise distinct pronunciations.
  std::vector<std::string> words;
  std::vector<std::vector<int>> prons;
  std::set<std::vector<int>> seen;
  std::uniform_int_distribution<int> word_len(cfg.word_phone_len.lo, cfg.word_phone_len.hi);
  std::uniform_int_distribution<int> phone(0, cfg.num_phones - 1);
  for (int w = 0; w < cfg.vocab_size; ++w) {
    std::vector<int> pron;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) {
        throw ConfigError("generator.vocab_size: too many words for the phone inventory");
      }
      pron.assign(static_cast<std::size_t>(word_len(rng)), 0);
      for (auto& p : pron) p = phone(rng);
      if (seen.insert(pron).second) break;
    }
    char name[32];
    std::snprintf(name, sizeof name, "w%03d", w);
    words.emplace_back(name);
    prons.push_back(std::move(pron));
  }

  const int num_states = cfg.num_phones * cfg.states_per_phone;
  TrueModels truth;
  truth.emissions.resize(num_states, cfg.alphabet_size);
  const Eigen::VectorXd uniform =
      Eigen::VectorXd::Constant(cfg.alphabet_size, 1.0 / cfg.alphabet_size);
  for (int s = 0; s < num_states; ++s) {
    Eigen::VectorXd p = sample_dirichlet(rng, cfg.alphabet_size, cfg.emission_concentration);
    truth.emissions.row(s) = ((1.0 - cfg.noise_rate) * p + cfg.noise_rate * uniform).transpose();
  }
  truth.bigram.resize(cfg.vocab_size, cfg.vocab_size);
  for (int w = 0; w < cfg.vocab_size; ++w) {
    truth.bigram.row(w) = sample_dirichlet(rng, cfg.vocab_size, 0.5).transpose();
  }

  Corpus corpus;
  corpus.config = cfg;
  corpus.lexicon = Lexicon(std::move(words), std::move(prons));
  corpus.utterances.reserve(static_cast<std::size_t>(cfg.num_utterances));

  std::uniform_int_distribution<int> sent_len(cfg.sentence_len.lo, cfg.sentence_len.hi);
  std::uniform_int_distribution<int> first_word(0, cfg.vocab_size - 1);
  std::geometric_distribution<int> extra_dwell(1.0 / cfg.mean_state_dwell);
  for (int u = 0; u < cfg.num_utterances; ++u) {
    Utterance utt;
    utt.id = utterance_id(u);
    WordSeq ref;
    int len = sent_len(rng);
    for (int i = 0; i < len; ++i) {
      WordId w = i == 0 ? first_word(rng) : sample_categorical(rng, truth.bigram.row(ref.back()));
      ref.push_back(w);
    }
    for (WordId w : ref) {
      for (int ph : corpus.lexicon.phones(w)) {
        for (int s = 0; s < cfg.states_per_phone; ++s) {
          const int state = ph * cfg.states_per_phone + s;
          const int dwell = std::min(1 + extra_dwell(rng), cfg.max_state_dwell);
          for (int f = 0; f < dwell; ++f) {
            utt.frames.push_back(sample_categorical(rng, truth.emissions.row(state)));
          }
        }
      }
    }
    utt.reference = std::move(ref);
    corpus.utterances.push_back(std::move(utt));
  }
  return {std::move(corpus), std::move(truth)};
}

// Splits ------------------------------------------------------------------

const WordSeq& Oracle::label(const std::string& utterance_id) {
  const WordSeq& w = peek(utterance_id);
  ++calls_;
  return w;
}

const WordSeq& Oracle::peek(const std::string& utterance_id) const {
  auto it = labels_.find(utterance_id);
  if (it == labels_.end()) {
    throw LookupError("oracle: '" + utterance_id + "' is not in the unlabeled pool");
  }
  return it->second;
}

const WordSeq& oracle_label(Oracle& oracle, const std::string& utterance_id) {
  return oracle.label(utterance_id);
}

namespace {

std::size_t floor_share(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio / 100.0 + 1e-9));
}

bool by_id_cmp(const Utterance& a, const Utterance& b) { return a.id < b.id; }

}  // namespace

SplitOutcome split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.seed < 0 || ratios.unlabeled < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be nonnegative");
  }
  if (std::abs(ratios.seed + ratios.unlabeled + ratios.test - 100.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 100");
  }
  std::vector<std::size_t> order(corpus.utterances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_stream(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n = order.size();
  const std::size_t n_seed = floor_share(n, ratios.seed);
  const std::size_t n_test = floor_share(n, ratios.test);
  if (n_seed + n_test > n) throw ConfigError("split ratios exceed corpus size");

  SplitOutcome out;
  out.splits.ratios = ratios;
  std::map<std::string, WordSeq> hidden;
  for (std::size_t k = 0; k < n; ++k) {
    const Utterance& u = corpus.utterances[order[k]];
    if (k < n_seed) {
      out.splits.d_seed.push_back(u);
    } else if (k < n_seed + n_test) {
      out.splits.test.push_back(u);
    } else {
      Utterance stripped = u;
      if (stripped.reference) hidden.emplace(u.id, *stripped.reference);
      stripped.reference.reset();
      out.splits.d_u.push_back(std::move(stripped));
    }
  }
  for (auto* part : {&out.splits.d_seed, &out.splits.d_u, &out.splits.test}) {
    std::sort(part->begin(), part->end(), by_id_cmp);
  }
  out.oracle = Oracle(std::move(hidden));
  return out;
}

// Files -------------------------------------------------------------------

namespace {

json config_to_json(const GeneratorConfig& c) {
  return json{{"num_phones", c.num_phones},
              {"states_per_phone", c.states_per_phone},
              {"alphabet_size", c.alphabet_size},
              {"vocab_size", c.vocab_size},
              {"word_phone_len", {c.word_phone_len.lo, c.word_phone_len.hi}},
              {"sentence_len", {c.sentence_len.lo, c.sentence_len.hi}},
              {"emission_concentration", c.emission_concentration},
              {"noise_rate", c.noise_rate},
              {"mean_state_dwell", c.mean_state_dwell},
              {"max_state_dwell", c.max_state_dwell},
              {"num_utterances", c.num_utterances},
              {"master_seed", c.master_seed}};
}

GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig c;
  c.num_phones = j.at("num_phones").get<int>();
  c.states_per_phone = j.at("states_per_phone").get<int>();
  c.alphabet_size = j.at("alphabet_size").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.word_phone_len = {j.at("word_phone_len").at(0).get<int>(), j.at("word_phone_len").at(1).get<int>()};
  c.sentence_len = {j.at("sentence_len").at(0).get<int>(), j.at("sentence_len").at(1).get<int>()};
  c.emission_concentration = j.at("emission_concentration").get<double>();
  c.noise_rate = j.at("noise_rate").get<double>();
  c.mean_state_dwell = j.at("mean_state_dwell").get<double>();
  c.max_state_dwell = j.at("max_state_dwell").get<int>();
  c.num_utterances = j.at("num_utterances").get<int>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  return c;
}

template <typename F>
auto parse_guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

void check_version(const json& j, const std::string& what) {
  if (j.at("format_version").get<int>() != kFormatVersion) {
    throw DataError(what + ": unsupported format_version");
  }
}

}  // namespace

std::string corpus_to_text(const Corpus& corpus) {
  json j;
  j["format_version"] = kFormatVersion;
  j["config"] = config_to_json(corpus.config);
  j["seed"] = corpus.config.master_seed;
  json lex = json::array();
  for (int w = 0; w < corpus.lexicon.size(); ++w) {
    lex.push_back({{"word", corpus.lexicon.word(w)}, {"phones", corpus.lexicon.phones(w)}});
  }
  j["lexicon"] = std::move(lex);
  json utts = json::array();
  for (const auto& u : corpus.utterances) {
    json r{{"id", u.id}, {"frames", join_ints(u.frames)}};
    if (u.reference) r["reference"] = corpus.lexicon.render(*u.reference);
    utts.push_back(std::move(r));
  }
  j["utterances"] = std::move(utts);
  return j.dump(1) + "\n";
}

Corpus corpus_from_text(const std::string& text) {
  return parse_guarded("corpus file", [&] {
    json j = json::parse(text);
    check_version(j, "corpus file");
    Corpus c;
    c.config = config_from_json(j.at("config"));
    std::vector<std::string> words;
    std::vector<std::vector<int>> prons;
    for (const auto& e : j.at("lexicon")) {
      words.push_back(e.at("word").get<std::string>());
      prons.push_back(e.at("phones").get<std::vector<int>>());
    }
    c.lexicon = Lexicon(std::move(words), std::move(prons));
    c.lexicon.validate(c.config.num_phones);
    for (const auto& r : j.at("utterances")) {
      Utterance u;
      u.id = r.at("id").get<std::string>();
      u.frames = parse_ints(r.at("frames").get<std::string>());
      if (u.frames.empty()) throw DataError("utterance " + u.id + " has no frames");
      for (int s : u.frames) {
        if (s < 0 || s >= c.config.alphabet_size) {
          throw DataError("utterance " + u.id + " has symbol outside the alphabet");
        }
      }
      if (r.contains("reference")) u.reference = c.lexicon.parse(r.at("reference").get<std::string>());
      c.utterances.push_back(std::move(u));
    }
    return c;
  });
}

std::string splits_to_text(const DataSplits& splits, std::uint64_t seed) {
  auto ids = [](const std::vector<Utterance>& v) {
    std::vector<std::string> out;
    for (const auto& u : v) out.push_back(u.id);
    return out;
  };
  json j{{"format_version", kFormatVersion},
         {"seed", seed},
         {"ratios", {splits.ratios.seed, splits.ratios.unlabeled, splits.ratios.test}},
         {"d_seed", ids(splits.d_seed)},
         {"d_u", ids(splits.d_u)},
         {"test", ids(splits.test)}};
  return j.dump(1) + "\n";
}

DataSplits splits_from_text(const std::string& text, const Corpus& corpus) {
  return parse_guarded("splits file", [&] {
    json j = json::parse(text);
    check_version(j, "splits file");
    std::map<std::string, const Utterance*> by_id;
    for (const auto& u : corpus.utterances) by_id.emplace(u.id, &u);
    auto collect = [&](const json& arr, bool labeled) {
      std::vector<Utterance> out;
      for (const auto& id : arr) {
        auto it = by_id.find(id.get<std::string>());
        if (it == by_id.end()) throw DataError("splits file names unknown utterance " + id.dump());
        Utterance u = *it->second;
        if (labeled && !u.reference) throw DataError("labeled utterance " + u.id + " lacks a reference");
        if (!labeled) u.reference.reset();
        out.push_back(std::move(u));
      }
      std::sort(out.begin(), out.end(), by_id_cmp);
      return out;
    };
    DataSplits s;
    const auto& r = j.at("ratios");
    s.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
    s.d_seed = collect(j.at("d_seed"), true);
    s.d_u = collect(j.at("d_u"), false);
    s.test = collect(j.at("test"), true);
    return s;
  });
}

std::string oracle_to_text(const Oracle& oracle, const Lexicon& lexicon) {
  json labels = json::object();
  for (const auto& [id, words] : oracle.labels()) labels[id] = lexicon.render(words);
  json j{{"format_version", kFormatVersion}, {"labels", std::move(labels)}};
  return j.dump(1) + "\n";
}

Oracle oracle_from_text(const std::string& text, const Lexicon& lexicon) {
  return parse_guarded("oracle file", [&] {
    json j = json::parse(text);
    check_version(j, "oracle file");
    std::map<std::string, WordSeq> labels;
    for (const auto& [id, words] : j.at("labels").items()) {
      labels.emplace(id, lexicon.parse(words.get<std::string>()));
    }
    return Oracle(std::move(labels));
  });
}

Corpus strip_unlabeled(const Corpus& corpus, const DataSplits& splits) {
  std::set<std::string> pool;
  for (const auto& u : splits.d_u) pool.insert(u.id);
  Corpus out = corpus;
  for (auto& u : out.utterances) {
    if (pool.count(u.id)) u.reference.reset();
  }
  return out;
}

}  // namespace sslasr
