#pragma once

#include <random>

#include "sslasr/acoustic_model.hpp"
#include "sslasr/corpus.hpp"
#include "sslasr/language_model.hpp"

namespace fixtures {

// Three one- or two-phone words over three 3-state phones and a 4-symbol
// alphabet: with at most 10 frames no hypothesis has more than 3 words.
inline sslasr::Lexicon toy_lexicon() {
  return sslasr::Lexicon({"a", "b", "c"}, {{0}, {1}, {2, 0}});
}

inline sslasr::AcousticModel random_model(std::mt19937_64& rng, int phones = 3, int states = 3, int alphabet = 4) {
  sslasr::AcousticModel am(phones, states, alphabet);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int s = 0; s < am.num_states(); ++s) {
    double sum = 0.0;
    for (int a = 0; a < alphabet; ++a) sum += am.emissions()(s, a) = u(rng);
    am.emissions().row(s) /= sum;
    am.self_loop()[s] = std::uniform_real_distribution<double>(0.2, 0.8)(rng);
  }
  return am;
}

inline std::vector<int> random_frames(std::mt19937_64& rng, int T, int alphabet = 4) {
  std::uniform_int_distribution<int> d(0, alphabet - 1);
  std::vector<int> f(static_cast<std::size_t>(T));
  for (auto& x : f) x = d(rng);
  return f;
}

inline sslasr::LanguageModel random_lm(std::mt19937_64& rng, int vocab, int order) {
  std::uniform_int_distribution<int> w(0, vocab - 1), len(1, 4);
  std::vector<sslasr::WordSeq> tr(6);
  for (auto& t : tr) {
    t.resize(static_cast<std::size_t>(len(rng)));
    for (auto& x : t) x = w(rng);
  }
  return sslasr::estimate_lm(tr, vocab, order, 0.5);
}

// A small, quick corpus with the default shape.
inline sslasr::GeneratorConfig small_config(int utterances = 300, std::uint64_t seed = 1) {
  sslasr::GeneratorConfig g;
  g.num_utterances = utterances;
  g.master_seed = seed;
  return g;
}

}  // namespace fixtures
