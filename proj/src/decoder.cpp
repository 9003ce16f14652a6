#include "sslasr/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "sslasr/alignment.hpp"

namespace sslasr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kEmptyHistory = 0x6a09e667f3bcc908ULL;

std::uint64_t extend_hash(std::uint64_t h, WordId w) {
  return splitmix64(h ^ splitmix64(static_cast<std::uint64_t>(w) + 1));
}

bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.words < b.words;
}

}  // namespace

void DecodeConfig::validate() const {
  if (nbest < 1) throw ConfigError("decode.nbest: must be >= 1");
  if (!(acoustic_scale > 0.0)) throw ConfigError("decode.acoustic_scale: must be positive");
  if (!(search_window > 0.0)) throw ConfigError("decode.search_window: must be positive");
  if (!(beam_width > 0.0)) throw ConfigError("decode.beam_width: must be positive");
}

std::string DecodeConfig::canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "nbest=" << nbest << ";acoustic_scale=" << acoustic_scale << ";exact=" << exact_search
    << ";window=" << search_window << ";beam=" << beam_width
    << ";aggregation=" << static_cast<int>(aggregation);
  return s.str();
}

double DecodedPool::mean_confidence() const {
  if (entries.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [id, d] : entries) total += d.confidence;
  return total / static_cast<double>(entries.size());
}

// Search network -------------------------------------------------------------
//
// A word instance is a copy of a word's HMM chain specialized to the LM state
// reached after the word, so every token inside an instance shares the same
// future. States of all instances are laid out contiguously.

struct Decoder::Network {
  struct Instance {
    WordId word;
    int lm_after;
    int context;  // index into contexts
    int first;    // first global state
    int length;
  };

  const LanguageModel* lm = nullptr;
  ScoringTables tables;
  int vocab = 0;
  int alphabet = 0;
  std::vector<Instance> instances;
  std::vector<int> contexts;    // distinct lm_after states
  std::vector<int> row;         // phone-state row of each global state
  std::vector<int> owner;       // instance of each global state
  std::vector<double> log_self;
  std::vector<double> log_adv;
  std::vector<double> exit_end;  // per instance: exit + end-of-sentence LM score
  std::vector<double> max_lm;    // per word: best LM score over all contexts
  int num_states = 0;

  Network(const AcousticModel& am, const LanguageModel& lm_, const Lexicon& lexicon)
      : lm(&lm_), tables(am), vocab(lexicon.size()), alphabet(am.alphabet_size()) {
    const int order = lm->order();
    const int ctx_words = order == 3 ? vocab + 1 : 1;
    std::map<int, int> ctx_index;
    for (int last = 0; last < ctx_words; ++last) {
      for (WordId w = 0; w < vocab; ++w) {
        int after = order == 1 ? 0 : order == 2 ? w : last * (vocab + 1) + w;
        auto [it, fresh] = ctx_index.emplace(after, static_cast<int>(contexts.size()));
        if (fresh) contexts.push_back(after);
        const auto& phones = lexicon.phones(w);
        Instance inst{w, after, it->second, num_states,
                      static_cast<int>(phones.size()) * am.states_per_phone()};
        for (int ph : phones) {
          for (int s = 0; s < am.states_per_phone(); ++s) {
            const int r = am.state_index(ph, s);
            row.push_back(r);
            owner.push_back(static_cast<int>(instances.size()));
            log_self.push_back(tables.log_self[r]);
            log_adv.push_back(tables.log_advance[r]);
          }
        }
        num_states += inst.length;
        exit_end.push_back(tables.log_advance[row.back()] + lm->log_prob(after, lm->end_symbol()));
        instances.push_back(inst);
      }
    }
    max_lm.assign(static_cast<std::size_t>(vocab), -std::numeric_limits<double>::infinity());
    for (int ctx : contexts) {
      for (WordId w = 0; w < vocab; ++w) {
        max_lm[static_cast<std::size_t>(w)] = std::max(max_lm[static_cast<std::size_t>(w)], lm->log_prob(ctx, w));
      }
    }
  }

  int instance_of(int lm_state, WordId w) const {
    switch (lm->order()) {
      case 1:
      case 2: return w;
      default: return (lm_state % (vocab + 1)) * vocab + w;
    }
  }
};

namespace {

struct Token {
  double score;
  std::uint64_t hash;
  int node;
};

struct HistoryNode {
  int parent;
  WordId word;
};

// Fixed-capacity per-state token lists, sorted by descending score, with
// distinct histories.
class TokenGrid {
 public:
  TokenGrid(int states, int k)
      : k_(k), tokens_(static_cast<std::size_t>(states) * static_cast<std::size_t>(k)),
        count_(static_cast<std::size_t>(states), 0) {}

  int count(int g) const { return count_[static_cast<std::size_t>(g)]; }
  const Token& at(int g, int i) const { return tokens_[index(g, i)]; }
  const std::vector<int>& active() const { return active_; }

  void clear() {
    for (int g : active_) count_[static_cast<std::size_t>(g)] = 0;
    active_.clear();
  }

  /// Returns the slot written, or nullptr when the token was rejected.
  Token* insert(int g, double score, std::uint64_t hash) {
    int& n = count_[static_cast<std::size_t>(g)];
    Token* base = &tokens_[index(g, 0)];
    for (int i = 0; i < n; ++i) {
      if (base[i].hash == hash) {
        if (score <= base[i].score) return nullptr;
        for (int m = i; m + 1 < n; ++m) base[m] = base[m + 1];
        --n;
        break;
      }
    }
    if (n == k_ && score <= base[n - 1].score) return nullptr;
    int pos = std::min(n, k_ - 1);
    while (pos > 0 && base[pos - 1].score < score) {
      if (pos < k_) base[pos] = base[pos - 1];
      --pos;
    }
    if (n == 0) active_.push_back(g);
    if (n < k_) ++n;
    base[pos] = Token{score, hash, -1};
    return &base[pos];
  }

 private:
  std::size_t index(int g, int i) const {
    return static_cast<std::size_t>(g) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(i);
  }
  int k_;
  std::vector<Token> tokens_;
  std::vector<int> count_;
  std::vector<int> active_;
};

}  // namespace

Decoder::Decoder(const AcousticModel& am, const LanguageModel& lm, const Lexicon& lexicon,
                 DecodeConfig cfg)
    : cfg_(cfg), model_id_(am.id()) {
  cfg_.validate();
  if (lm.vocab_size() != lexicon.size()) {
    throw ConfigError("decoder: language model vocabulary does not match the lexicon");
  }
  if (lexicon.size() == 0) throw ConfigError("decoder: empty lexicon");
  lexicon.validate(am.num_phones());
  net_ = std::make_unique<Network>(am, lm, lexicon);
}

Decoder::~Decoder() = default;

std::vector<Hypothesis> Decoder::search(const Utterance& utterance) const {
  const Network& net = *net_;
  const auto& frames = utterance.frames;
  const int T = static_cast<int>(frames.size());
  if (T == 0) throw DecodeError("utterance " + utterance.id + ": no frames");
  for (int f : frames) {
    if (f < 0 || f >= net.alphabet) {
      throw ConfigError("utterance " + utterance.id + ": symbol outside the model alphabet");
    }
  }
  const LanguageModel& lm = *net.lm;
  const int G = net.num_states;
  const int I = static_cast<int>(net.instances.size());
  const int V = net.vocab;

  // Frame-major emission scores.
  const int R = static_cast<int>(net.tables.log_emission.rows());
  std::vector<double> emit(static_cast<std::size_t>(T) * static_cast<std::size_t>(R));
  for (int t = 0; t < T; ++t) {
    for (int r = 0; r < R; ++r) {
      emit[static_cast<std::size_t>(t) * R + r] = net.tables.log_emission(r, frames[static_cast<std::size_t>(t)]);
    }
  }
  auto E = [&](int t, int g) {
    return emit[static_cast<std::size_t>(t) * R + static_cast<std::size_t>(net.row[static_cast<std::size_t>(g)])];
  };

  // Backward pass: beta(t, g) is the best completion score after frame t.
  std::vector<double> beta;
  double best_total = kNegInf;
  if (cfg_.exact_search) {
    beta.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(G), kNegInf);
    auto B = [&](int t, int g) -> double& {
      return beta[static_cast<std::size_t>(t) * static_cast<std::size_t>(G) + static_cast<std::size_t>(g)];
    };
    std::vector<double> enter(static_cast<std::size_t>(I));
    std::vector<double> cont(net.contexts.size());
    for (int i = 0; i < I; ++i) {
      const auto& inst = net.instances[static_cast<std::size_t>(i)];
      B(T - 1, inst.first + inst.length - 1) = net.exit_end[static_cast<std::size_t>(i)];
    }
    for (int t = T - 2; t >= 0; --t) {
      for (int i = 0; i < I; ++i) {
        const int g0 = net.instances[static_cast<std::size_t>(i)].first;
        enter[static_cast<std::size_t>(i)] = E(t + 1, g0) + B(t + 1, g0);
      }
      for (std::size_t c = 0; c < net.contexts.size(); ++c) {
        const int ctx = net.contexts[c];
        double best = kNegInf;
        for (WordId w = 0; w < V; ++w) {
          best = std::max(best, lm.log_prob(ctx, w) + enter[static_cast<std::size_t>(net.instance_of(ctx, w))]);
        }
        cont[c] = best;
      }
      for (int i = 0; i < I; ++i) {
        const auto& inst = net.instances[static_cast<std::size_t>(i)];
        const int last = inst.first + inst.length - 1;
        for (int g = inst.first; g <= last; ++g) {
          const double stay = net.log_self[static_cast<std::size_t>(g)] + E(t + 1, g) + B(t + 1, g);
          const double adv = g < last ? net.log_adv[static_cast<std::size_t>(g)] + E(t + 1, g + 1) + B(t + 1, g + 1)
                                      : net.log_adv[static_cast<std::size_t>(g)] + cont[static_cast<std::size_t>(inst.context)];
          B(t, g) = std::max(stay, adv);
        }
      }
    }
    const int start = lm.start_state();
    for (WordId w = 0; w < V; ++w) {
      const int g0 = net.instances[static_cast<std::size_t>(net.instance_of(start, w))].first;
      best_total = std::max(best_total, lm.log_prob(start, w) + E(0, g0) + B(0, g0));
    }
    if (best_total == kNegInf) {
      throw DecodeError("utterance " + utterance.id + ": no word sequence fits " +
                        std::to_string(T) + " frames");
    }
  }
  auto bound = [&](int t, int g) {
    return cfg_.exact_search
               ? beta[static_cast<std::size_t>(t) * static_cast<std::size_t>(G) + static_cast<std::size_t>(g)]
               : 0.0;
  };

  const int K = cfg_.nbest;
  double window = cfg_.search_window;
  for (;;) {
    const double threshold =
        cfg_.exact_search && std::isfinite(window)
            ? best_total - window - 1e-9 * (1.0 + std::abs(best_total))
            : kNegInf;
    std::vector<HistoryNode> nodes;
    TokenGrid cur(G, K), next(G, K);
    const int start = lm.start_state();
    for (WordId w = 0; w < V; ++w) {
      const int g0 = net.instances[static_cast<std::size_t>(net.instance_of(start, w))].first;
      const double s = lm.log_prob(start, w) + E(0, g0);
      if (s + bound(0, g0) < threshold) continue;
      if (Token* tok = cur.insert(g0, s, extend_hash(kEmptyHistory, w))) {
        tok->node = static_cast<int>(nodes.size());
        nodes.push_back({-1, w});
      }
    }

    struct Exit {
      double score;
      std::uint64_t hash;
      int node;
      int lm_state;
    };
    std::vector<Exit> exits;
    for (int t = 0; t + 1 < T; ++t) {
      next.clear();
      exits.clear();
      double floor = kNegInf;
      if (!cfg_.exact_search) {
        double top = kNegInf;
        for (int g : cur.active()) top = std::max(top, cur.at(g, 0).score);
        floor = top - cfg_.beam_width;
      }
      for (int g : cur.active()) {
        const auto& inst = net.instances[static_cast<std::size_t>(net.owner[static_cast<std::size_t>(g)])];
        const bool is_last = g == inst.first + inst.length - 1;
        const double self = net.log_self[static_cast<std::size_t>(g)];
        const double adv = net.log_adv[static_cast<std::size_t>(g)];
        const double e_stay = E(t + 1, g);
        const double e_adv = is_last ? 0.0 : E(t + 1, g + 1);
        const double b_stay = bound(t + 1, g);
        const double b_adv = is_last ? 0.0 : bound(t + 1, g + 1);
        for (int k = 0; k < cur.count(g); ++k) {
          const Token& tok = cur.at(g, k);
          if (tok.score < floor) break;
          const double stay = tok.score + self + e_stay;
          if (stay + b_stay >= threshold) {
            if (Token* slot = next.insert(g, stay, tok.hash)) slot->node = tok.node;
          }
          if (is_last) {
            exits.push_back({tok.score + adv, tok.hash, tok.node, inst.lm_after});
          } else {
            const double move = tok.score + adv + e_adv;
            if (move + b_adv >= threshold) {
              if (Token* slot = next.insert(g + 1, move, tok.hash)) slot->node = tok.node;
            }
          }
        }
      }
      std::sort(exits.begin(), exits.end(), [](const Exit& a, const Exit& b) { return a.score > b.score; });
      const bool shared_target = lm.order() < 3;
      for (WordId w = 0; w < V && !exits.empty(); ++w) {
        for (const Exit& x : exits) {
          const int g0 = net.instances[static_cast<std::size_t>(net.instance_of(x.lm_state, w))].first;
          const double base = E(t + 1, g0);
          // Exits are sorted, so once even the most generous LM score cannot
          // reach the window or displace the K-th token, later exits cannot either.
          const double ceiling = x.score + net.max_lm[static_cast<std::size_t>(w)] + base;
          // With a trigram the target instance varies per exit, so only skip.
          const bool hopeless = ceiling + bound(t + 1, g0) < threshold ||
                                (next.count(g0) == K && ceiling <= next.at(g0, K - 1).score);
          if (hopeless && shared_target) break;
          if (hopeless) continue;
          const double s = x.score + lm.log_prob(x.lm_state, w) + base;
          if (s + bound(t + 1, g0) < threshold) continue;
          if (Token* slot = next.insert(g0, s, extend_hash(x.hash, w))) {
            slot->node = static_cast<int>(nodes.size());
            nodes.push_back({x.node, w});
          }
        }
      }
      std::swap(cur, next);
    }

    std::vector<Hypothesis> finals;
    for (int g : cur.active()) {
      const int i = net.owner[static_cast<std::size_t>(g)];
      const auto& inst = net.instances[static_cast<std::size_t>(i)];
      if (g != inst.first + inst.length - 1) continue;
      for (int k = 0; k < cur.count(g); ++k) {
        const Token& tok = cur.at(g, k);
        const double total = tok.score + net.exit_end[static_cast<std::size_t>(i)];
        if (total < threshold) continue;
        Hypothesis h;
        h.score = total;
        for (int n = tok.node; n >= 0; n = nodes[static_cast<std::size_t>(n)].parent) {
          h.words.push_back(nodes[static_cast<std::size_t>(n)].word);
        }
        std::reverse(h.words.begin(), h.words.end());
        finals.push_back(std::move(h));
      }
    }
    std::sort(finals.begin(), finals.end(), hyp_before);
    finals.erase(std::unique(finals.begin(), finals.end(),
                             [](const Hypothesis& a, const Hypothesis& b) { return a.words == b.words; }),
                 finals.end());
    const bool certified = static_cast<int>(finals.size()) >= K || !std::isfinite(threshold);
    if (certified) {
      if (static_cast<int>(finals.size()) > K) finals.resize(static_cast<std::size_t>(K));
      if (finals.empty()) {
        throw DecodeError("utterance " + utterance.id + ": search produced no hypothesis");
      }
      return finals;
    }
    // Fewer than K sequences lie inside the window; widen it and search again.
    window = window < 1e4 ? window * 2.0 : std::numeric_limits<double>::infinity();
  }
}

DecodedUtterance Decoder::decode(const Utterance& utterance) const {
  DecodedUtterance out;
  out.utterance_id = utterance.id;
  out.nbest = search(utterance);
  out.best = out.nbest.front();
  out.slot_posteriors = word_posteriors(out.nbest, cfg_);
  out.confidence = utterance_confidence(out.slot_posteriors, cfg_.aggregation);
  out.decoder_model_id = model_id_;
  return out;
}

DecodedUtterance decode_utterance(const AcousticModel& am, const LanguageModel& lm,
                                  const Lexicon& lexicon, const Utterance& utterance,
                                  const DecodeConfig& cfg) {
  return Decoder(am, lm, lexicon, cfg).decode(utterance);
}

// Confidence -----------------------------------------------------------------

std::vector<double> word_posteriors(const std::vector<Hypothesis>& nbest, const DecodeConfig& cfg) {
  if (nbest.empty()) throw ContractViolation("word_posteriors: empty N-best list");
  std::vector<Hypothesis> sorted = nbest;
  std::sort(sorted.begin(), sorted.end(), hyp_before);
  const Hypothesis& best = sorted.front();

  std::vector<double> weight(sorted.size());
  double z = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    weight[i] = std::exp((sorted[i].score - best.score) / cfg.acoustic_scale);
    z += weight[i];
  }
  std::vector<double> post(best.words.size(), 0.0);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double w = weight[i] / z;
    for (const auto& col : levenshtein_align(best.words, sorted[i].words, kPreferSubInsDel)) {
      if (col.op == EditOp::kMatch) post[static_cast<std::size_t>(col.ref_index)] += w;
    }
  }
  for (double& p : post) p = std::min(p, 1.0);
  return post;
}

double utterance_confidence(const std::vector<double>& slot_posteriors,
                            ConfidenceAggregation aggregation) {
  if (slot_posteriors.empty()) return 0.0;
  for (double p : slot_posteriors) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractViolation("utterance_confidence: posterior outside [0,1]");
    }
  }
  switch (aggregation) {
    case ConfidenceAggregation::kMin:
      return *std::min_element(slot_posteriors.begin(), slot_posteriors.end());
    case ConfidenceAggregation::kGeometricMean: {
      double log_sum = 0.0;
      for (double p : slot_posteriors) log_sum += std::log(p);
      return std::exp(log_sum / static_cast<double>(slot_posteriors.size()));
    }
    case ConfidenceAggregation::kMean:
    default: {
      double sum = 0.0;
      for (double p : slot_posteriors) sum += p;
      return sum / static_cast<double>(slot_posteriors.size());
    }
  }
}

// Pools ------------------------------------------------------------------------

DecodedPool decode_pool(const AcousticModel& am, const LanguageModel& lm, const Lexicon& lexicon,
                        const std::vector<Utterance>& pool, const DecodeConfig& cfg, int threads) {
  if (pool.empty()) throw ContractViolation("decode_pool: empty pool");
  Decoder decoder(am, lm, lexicon, cfg);
  std::vector<DecodedUtterance> results(pool.size());
  std::vector<std::exception_ptr> errors(pool.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < pool.size(); i = next++) {
      try {
        results[i] = decoder.decode(pool[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(pool.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> crew;
    for (int w = 0; w < workers; ++w) crew.emplace_back(work);
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw DecodeError("decode_pool: utterance " + pool[i].id + ": " + e.what());
    }
  }

  DecodedPool out;
  out.model_id = decoder.model_id();
  out.config_hash = hex64(fnv1a(cfg.canonical()));
  for (auto& r : results) {
    std::string id = r.utterance_id;
    if (!out.entries.emplace(id, std::move(r)).second) {
      throw ContractViolation("decode_pool: duplicate utterance id " + id);
    }
  }
  return out;
}

std::string pool_to_text(const DecodedPool& pool, const Lexicon& lexicon) {
  std::string out = "# decoded-pool format_version=" + std::to_string(kFormatVersion) +
                    " model=" + pool.model_id + " config=" + pool.config_hash + "\n";
  for (const auto& [id, d] : pool.entries) {
    out += id;
    out += '\t';
    out += fixed(d.confidence, 9);
    out += '\t';
    out += lexicon.render(d.best.words);
    out += '\t';
    for (std::size_t i = 0; i < d.slot_posteriors.size(); ++i) {
      if (i) out += ' ';
      out += fixed(d.slot_posteriors[i], 9);
    }
    out += '\t';
    out += d.decoder_model_id;
    out += '\n';
  }
  return out;
}

DecodedPool pool_from_text(const std::string& text, const Lexicon& lexicon) {
  DecodedPool pool;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# decoded-pool", 0) != 0) {
    throw DataError("decoded pool: missing header");
  }
  for (const auto& tok : split_ws(line)) {
    if (tok.rfind("model=", 0) == 0) pool.model_id = tok.substr(6);
    if (tok.rfind("config=", 0) == 0) pool.config_hash = tok.substr(7);
    if (tok.rfind("format_version=", 0) == 0 && tok != "format_version=" + std::to_string(kFormatVersion)) {
      throw DataError("decoded pool: unsupported format_version");
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    for (;;) {
      std::size_t tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 5) throw DataError("decoded pool: malformed record '" + line + "'");
    DecodedUtterance d;
    d.utterance_id = fields[0];
    d.confidence = std::stod(fields[1]);
    d.best.words = lexicon.parse(fields[2]);
    for (const auto& p : split_ws(fields[3])) d.slot_posteriors.push_back(std::stod(p));
    d.decoder_model_id = fields[4];
    if (d.slot_posteriors.size() != d.best.words.size()) {
      throw DataError("decoded pool: posterior count mismatch for " + d.utterance_id);
    }
    d.nbest = {d.best};
    pool.entries.emplace(d.utterance_id, std::move(d));
  }
  return pool;
}

}  // namespace sslasr
