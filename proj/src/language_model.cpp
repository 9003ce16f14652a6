#include "sslasr/language_model.hpp"

#include <cmath>

#include "json.hpp"
#include "sslasr/corpus.hpp"

namespace sslasr {

namespace {

int states_for(int order, int vocab) {
  switch (order) {
    case 1: return 1;
    case 2: return vocab + 1;
    case 3: return (vocab + 1) * (vocab + 1);
    default: throw ConfigError("lm.order: must be 1, 2 or 3");
  }
}

}  // namespace

LanguageModel::LanguageModel(int order, int vocab_size, double add_k, Eigen::MatrixXd counts)
    : order_(order), vocab_(vocab_size), add_k_(add_k), counts_(std::move(counts)) {
  if (!(add_k_ > 0.0)) throw ConfigError("lm.add_k: must be positive");
  if (vocab_ < 1) throw ConfigError("lm: vocabulary must be nonempty");
  if (counts_.rows() != states_for(order_, vocab_) || counts_.cols() != vocab_ + 1) {
    throw DataError("lm: count table has the wrong shape");
  }
  log_prob_.resize(counts_.rows(), counts_.cols());
  const double outcomes = vocab_ + 1;
  for (Eigen::Index s = 0; s < counts_.rows(); ++s) {
    const double denom = counts_.row(s).sum() + add_k_ * outcomes;
    for (Eigen::Index w = 0; w < counts_.cols(); ++w) {
      log_prob_(s, w) = std::log((counts_(s, w) + add_k_) / denom);
    }
  }
}

int LanguageModel::start_state() const {
  switch (order_) {
    case 1: return 0;
    case 2: return vocab_;
    default: return vocab_ * (vocab_ + 1) + vocab_;
  }
}

int LanguageModel::next_state(int state, WordId w) const {
  switch (order_) {
    case 1: return 0;
    case 2: return w;
    default: return (state % (vocab_ + 1)) * (vocab_ + 1) + w;
  }
}

double LanguageModel::prob(int state, int w) const {
  return (counts_(state, w) + add_k_) / (counts_.row(state).sum() + add_k_ * (vocab_ + 1));
}

double LanguageModel::sentence_log_prob(const WordSeq& words) const {
  int s = start_state();
  double total = 0.0;
  for (WordId w : words) {
    total += log_prob(s, w);
    s = next_state(s, w);
  }
  return total + log_prob(s, end_symbol());
}

LanguageModel estimate_lm(const std::vector<WordSeq>& transcripts, int vocab_size, int order,
                          double add_k) {
  if (transcripts.empty()) throw TrainingError("estimate_lm: no transcripts");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(states_for(order, vocab_size), vocab_size + 1);
  LanguageModel shape(order, vocab_size, add_k, counts);
  for (const auto& t : transcripts) {
    int s = shape.start_state();
    for (WordId w : t) {
      if (w < 0 || w >= vocab_size) throw DataError("estimate_lm: word id out of vocabulary");
      counts(s, w) += 1.0;
      s = shape.next_state(s, w);
    }
    counts(s, vocab_size) += 1.0;
  }
  return LanguageModel(order, vocab_size, add_k, std::move(counts));
}

std::string lm_to_text(const LanguageModel& lm) {
  nlohmann::json cells = nlohmann::json::array();
  const auto& c = lm.counts();
  for (Eigen::Index s = 0; s < c.rows(); ++s) {
    for (Eigen::Index w = 0; w < c.cols(); ++w) {
      if (c(s, w) != 0.0) cells.push_back({s, w, c(s, w)});
    }
  }
  nlohmann::json j{{"format_version", kFormatVersion},
                   {"order", lm.order()},
                   {"vocab_size", lm.vocab_size()},
                   {"add_k", lm.add_k()},
                   {"counts", std::move(cells)}};
  return j.dump(1) + "\n";
}

LanguageModel lm_from_text(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    int order = j.at("order").get<int>();
    int vocab = j.at("vocab_size").get<int>();
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(states_for(order, vocab), vocab + 1);
    for (const auto& cell : j.at("counts")) {
      counts(cell.at(0).get<Eigen::Index>(), cell.at(1).get<Eigen::Index>()) = cell.at(2).get<double>();
    }
    return LanguageModel(order, vocab, j.at("add_k").get<double>(), std::move(counts));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("lm file: ") + e.what());
  }
}

}  // namespace sslasr
