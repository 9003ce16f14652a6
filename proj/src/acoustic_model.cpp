#include "sslasr/acoustic_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

namespace sslasr {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void TrainConfig::validate() const {
  if (em_iterations < 1) throw ConfigError("train.em_iterations: must be >= 1");
  if (!(emission_add > 0.0)) throw ConfigError("train.emission_add: must be positive");
  if (!(transition_add > 0.0)) throw ConfigError("train.transition_add: must be positive");
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) {
    throw ConfigError("train.dev_fraction: must lie in [0,1)");
  }
}

AcousticModel::AcousticModel(int num_phones, int states_per_phone, int alphabet_size)
    : num_phones_(num_phones), states_per_phone_(states_per_phone), alphabet_(alphabet_size) {
  if (num_phones < 1 || states_per_phone < 1 || alphabet_size < 1) {
    throw ConfigError("acoustic model: topology sizes must be >= 1");
  }
  emissions_ = Eigen::MatrixXd::Constant(num_states(), alphabet_, 1.0 / alphabet_);
  self_loop_ = Eigen::VectorXd::Constant(num_states(), 0.5);
}

std::string AcousticModel::id() const {
  return trained_ ? "am-" + hex64(fingerprint_) : std::string("am-flat");
}

void AcousticModel::set_provenance(std::vector<std::pair<std::string, std::string>> sources,
                                   const TrainConfig& cfg, int iterations,
                                   std::vector<double> trace) {
  std::sort(sources.begin(), sources.end());
  label_sources_ = std::move(sources);
  std::string canon;
  for (const auto& [id, src] : label_sources_) canon += id + '\t' + src + '\n';
  fingerprint_ = fnv1a(canon);
  train_config_ = cfg;
  em_iterations_run_ = iterations;
  loglik_trace_ = std::move(trace);
  trained_ = true;
}

void AcousticModel::check_normalized(double tol) const {
  for (int s = 0; s < num_states(); ++s) {
    const double total = emissions_.row(s).sum();
    if (std::abs(total - 1.0) > tol || emissions_.row(s).minCoeff() <= 0.0) {
      throw InvariantViolation("emission-normalization", "state " + std::to_string(s));
    }
    if (!(self_loop_[s] > 0.0 && self_loop_[s] < 1.0)) {
      throw InvariantViolation("transition-normalization", "state " + std::to_string(s));
    }
  }
}

bool AcousticModel::operator==(const AcousticModel& o) const {
  return num_phones_ == o.num_phones_ && states_per_phone_ == o.states_per_phone_ &&
         alphabet_ == o.alphabet_ && emissions_ == o.emissions_ && self_loop_ == o.self_loop_ &&
         trained_ == o.trained_ && fingerprint_ == o.fingerprint_ &&
         em_iterations_run_ == o.em_iterations_run_ && loglik_trace_ == o.loglik_trace_ &&
         label_sources_ == o.label_sources_;
}

ScoringTables::ScoringTables(const AcousticModel& am)
    : log_emission(am.emissions().array().log().matrix()),
      log_self(am.self_loop().array().log().matrix()),
      log_advance((1.0 - am.self_loop().array()).log().matrix()) {
  flat = (am.self_loop().array() == 0.5).all() &&
         (am.emissions().array() == 1.0 / am.alphabet_size()).all();
}

AcousticModel flat_start(const Lexicon& lexicon, int num_phones, int alphabet_size,
                         int states_per_phone) {
  lexicon.validate(num_phones);
  return AcousticModel(num_phones, states_per_phone, alphabet_size);
}

std::uint64_t training_fingerprint(const std::vector<LabeledUtterance>& labeled) {
  AcousticModel probe(1, 1, 1);
  std::vector<std::pair<std::string, std::string>> sources;
  for (const auto& l : labeled) sources.emplace_back(l.utterance->id, l.label_source);
  probe.set_provenance(std::move(sources), {}, 0, {});
  return probe.fingerprint();
}

std::vector<int> state_chain(const AcousticModel& am, const Lexicon& lexicon,
                             const WordSeq& transcript) {
  std::vector<int> chain;
  for (WordId w : transcript) {
    if (!lexicon.contains(w)) throw DataError("word id " + std::to_string(w) + " not in lexicon");
    for (int ph : lexicon.phones(w)) {
      if (ph < 0 || ph >= am.num_phones()) throw DataError("lexicon phone outside the model");
      for (int s = 0; s < am.states_per_phone(); ++s) chain.push_back(am.state_index(ph, s));
    }
  }
  return chain;
}

namespace {

Alignment align_chain(const AcousticModel& am, const ScoringTables& tab,
                      const std::vector<int>& chain, const SymbolSeq& frames) {
  const int T = static_cast<int>(frames.size());
  const int N = static_cast<int>(chain.size());
  if (T == 0) throw AlignmentError("no frames to align");
  if (N == 0) throw AlignmentError("empty transcript");
  if (T < N) {
    throw AlignmentError(std::to_string(T) + " frames cannot cover " + std::to_string(N) +
                         " states");
  }
  for (int f : frames) {
    if (f < 0 || f >= am.alphabet_size()) throw AlignmentError("frame symbol outside the alphabet");
  }

  Alignment out;
  out.state.resize(static_cast<std::size_t>(T));
  out.position.resize(static_cast<std::size_t>(T));

  if (tab.flat) {
    // Every path scores the same under a flat model; take the linear segmentation.
    double ll = 0.0;
    for (int t = 0; t < T; ++t) {
      const int j = static_cast<int>(static_cast<long long>(t) * N / T);
      out.position[static_cast<std::size_t>(t)] = j;
      out.state[static_cast<std::size_t>(t)] = chain[static_cast<std::size_t>(j)];
      ll += tab.log_emission(chain[static_cast<std::size_t>(j)], frames[static_cast<std::size_t>(t)]);
      if (t > 0) {
        const int prev = out.position[static_cast<std::size_t>(t - 1)];
        ll += prev == j ? tab.log_self[chain[static_cast<std::size_t>(j)]]
                        : tab.log_advance[chain[static_cast<std::size_t>(prev)]];
      }
    }
    out.log_likelihood = ll + tab.log_advance[chain.back()];
    return out;
  }

  // Band-limited Viterbi: at frame t only positions in [t - (T - N), t] are reachable.
  const int slack = T - N;
  std::vector<double> prev(static_cast<std::size_t>(N), kNegInf), cur(prev.size(), kNegInf);
  std::vector<std::uint8_t> advanced(static_cast<std::size_t>(T) * static_cast<std::size_t>(N), 0);
  prev[0] = tab.log_emission(chain[0], frames[0]);
  for (int t = 1; t < T; ++t) {
    const int lo = std::max(0, t - slack);
    const int hi = std::min(N - 1, t);
    std::fill(cur.begin(), cur.end(), kNegInf);
    const int sym = frames[static_cast<std::size_t>(t)];
    for (int j = lo; j <= hi; ++j) {
      const int st = chain[static_cast<std::size_t>(j)];
      double stay = prev[static_cast<std::size_t>(j)] + tab.log_self[st];
      double adv = j > 0 ? prev[static_cast<std::size_t>(j - 1)] +
                               tab.log_advance[chain[static_cast<std::size_t>(j - 1)]]
                         : kNegInf;
      const bool take_adv = adv > stay;
      cur[static_cast<std::size_t>(j)] = (take_adv ? adv : stay) + tab.log_emission(st, sym);
      advanced[static_cast<std::size_t>(t) * static_cast<std::size_t>(N) + static_cast<std::size_t>(j)] =
          take_adv;
    }
    std::swap(prev, cur);
  }
  out.log_likelihood = prev[static_cast<std::size_t>(N - 1)] + tab.log_advance[chain.back()];
  int j = N - 1;
  for (int t = T - 1; t >= 0; --t) {
    out.position[static_cast<std::size_t>(t)] = j;
    out.state[static_cast<std::size_t>(t)] = chain[static_cast<std::size_t>(j)];
    if (t > 0 && advanced[static_cast<std::size_t>(t) * static_cast<std::size_t>(N) + static_cast<std::size_t>(j)]) --j;
  }
  return out;
}

}  // namespace

Alignment forced_align(const AcousticModel& am, const Utterance& utterance,
                       const WordSeq& transcript, const Lexicon& lexicon,
                       const LanguageModel* lm) {
  ScoringTables tab(am);
  Alignment a = align_chain(am, tab, state_chain(am, lexicon, transcript), utterance.frames);
  if (lm) a.log_likelihood += lm->sentence_log_prob(transcript);
  return a;
}

AcousticModel train_supervised(const std::vector<LabeledUtterance>& labeled, const Lexicon& lexicon,
                               const TrainConfig& cfg, const AcousticModel& init) {
  cfg.validate();
  if (labeled.empty()) throw TrainingError("train_supervised: empty training set");

  std::vector<const LabeledUtterance*> order;
  order.reserve(labeled.size());
  for (const auto& l : labeled) order.push_back(&l);
  std::sort(order.begin(), order.end(), [](const LabeledUtterance* a, const LabeledUtterance* b) {
    return a->utterance->id < b->utterance->id;
  });
  std::vector<std::vector<int>> chains;
  chains.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && order[i]->utterance->id == order[i - 1]->utterance->id) {
      throw TrainingError("train_supervised: duplicate utterance " + order[i]->utterance->id);
    }
    for (WordId w : order[i]->transcript) {
      if (!lexicon.contains(w)) {
        throw DataError("utterance " + order[i]->utterance->id + ": out-of-vocabulary word id " +
                        std::to_string(w));
      }
    }
    chains.push_back(state_chain(init, lexicon, order[i]->transcript));
  }

  std::vector<std::pair<std::string, std::string>> sources;
  for (const auto* l : order) sources.emplace_back(l->utterance->id, l->label_source);

  AcousticModel model = init;
  const int S = model.num_states();
  const int A = model.alphabet_size();
  std::vector<double> trace;
  for (int it = 0; it < cfg.em_iterations; ++it) {
    ScoringTables tab(model);
    Eigen::MatrixXd emit = Eigen::MatrixXd::Zero(S, A);
    Eigen::VectorXd stay = Eigen::VectorXd::Zero(S);
    Eigen::VectorXd leave = Eigen::VectorXd::Zero(S);
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& frames = order[i]->utterance->frames;
      Alignment a;
      try {
        a = align_chain(model, tab, chains[i], frames);
      } catch (const AlignmentError& e) {
        throw AlignmentError("utterance " + order[i]->utterance->id + ": " + e.what());
      }
      total += a.log_likelihood;
      for (std::size_t t = 0; t < frames.size(); ++t) {
        emit(a.state[t], frames[t]) += 1.0;
        if (t + 1 < frames.size() && a.position[t + 1] == a.position[t]) {
          stay[a.state[t]] += 1.0;
        } else {
          leave[a.state[t]] += 1.0;
        }
      }
    }
    trace.push_back(total);

    const double ke = cfg.emission_add;
    const double kt = cfg.transition_add;
    for (int s = 0; s < S; ++s) {
      const double denom = emit.row(s).sum() + ke * A;
      model.emissions().row(s) = (emit.row(s).array() + ke) / denom;
      model.self_loop()[s] = (stay[s] + kt) / (stay[s] + leave[s] + 2.0 * kt);
    }
    model.set_provenance(sources, cfg, it + 1, trace);
  }
  return model;
}

double corpus_loglik(const AcousticModel& am, const LanguageModel* lm,
                     const std::vector<LabeledUtterance>& labeled, const Lexicon& lexicon) {
  double total = 0.0;
  for (const auto& l : labeled) total += forced_align(am, *l.utterance, l.transcript, lexicon, lm).log_likelihood;
  return total;
}

// Files -------------------------------------------------------------------

std::string model_to_text(const AcousticModel& am) {
  using nlohmann::json;
  json emissions = json::array();
  for (int s = 0; s < am.num_states(); ++s) {
    std::vector<double> row(static_cast<std::size_t>(am.alphabet_size()));
    for (int a = 0; a < am.alphabet_size(); ++a) row[static_cast<std::size_t>(a)] = am.emissions()(s, a);
    emissions.push_back(std::move(row));
  }
  std::vector<double> self(am.self_loop().data(), am.self_loop().data() + am.self_loop().size());
  json sources = json::array();
  for (const auto& [id, src] : am.label_sources()) sources.push_back({id, src});
  const auto& c = am.train_config();
  json j{{"format_version", kFormatVersion},
         {"topology",
          {{"num_phones", am.num_phones()},
           {"states_per_phone", am.states_per_phone()},
           {"alphabet_size", am.alphabet_size()}}},
         {"self_loop", self},
         {"emissions", std::move(emissions)},
         {"trained", am.trained()},
         {"fingerprint", hex64(am.fingerprint())},
         {"provenance",
          {{"train_config",
            {{"em_iterations", c.em_iterations},
             {"emission_add", c.emission_add},
             {"transition_add", c.transition_add},
             {"dev_fraction", c.dev_fraction}}},
           {"em_iterations_run", am.em_iterations_run()},
           {"loglik_trace", am.loglik_trace()},
           {"label_sources", std::move(sources)}}}};
  return j.dump(1) + "\n";
}

AcousticModel model_from_text(const std::string& text) {
  using nlohmann::json;
  try {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw DataError("model file: unsupported format_version");
    }
    const auto& topo = j.at("topology");
    AcousticModel am(topo.at("num_phones").get<int>(), topo.at("states_per_phone").get<int>(),
                     topo.at("alphabet_size").get<int>());
    const auto self = j.at("self_loop").get<std::vector<double>>();
    const auto& em = j.at("emissions");
    if (static_cast<int>(self.size()) != am.num_states() ||
        static_cast<int>(em.size()) != am.num_states()) {
      throw DataError("model file: table sizes disagree with topology");
    }
    for (int s = 0; s < am.num_states(); ++s) {
      am.self_loop()[s] = self[static_cast<std::size_t>(s)];
      const auto row = em.at(static_cast<std::size_t>(s)).get<std::vector<double>>();
      if (static_cast<int>(row.size()) != am.alphabet_size()) {
        throw DataError("model file: emission row has the wrong width");
      }
      for (int a = 0; a < am.alphabet_size(); ++a) am.emissions()(s, a) = row[static_cast<std::size_t>(a)];
    }
    if (j.at("trained").get<bool>()) {
      const auto& p = j.at("provenance");
      const auto& c = p.at("train_config");
      TrainConfig cfg{c.at("em_iterations").get<int>(), c.at("emission_add").get<double>(),
                      c.at("transition_add").get<double>(), c.at("dev_fraction").get<double>()};
      std::vector<std::pair<std::string, std::string>> sources;
      for (const auto& s : p.at("label_sources")) {
        sources.emplace_back(s.at(0).get<std::string>(), s.at(1).get<std::string>());
      }
      am.set_provenance(std::move(sources), cfg, p.at("em_iterations_run").get<int>(),
                        p.at("loglik_trace").get<std::vector<double>>());
      if (hex64(am.fingerprint()) != j.at("fingerprint").get<std::string>()) {
        throw DataError("model file: fingerprint does not match its label sources");
      }
    }
    return am;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

}  // namespace sslasr
