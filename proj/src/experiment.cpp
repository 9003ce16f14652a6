#include "sslasr/experiment.hpp"

#include <chrono>
#include <json.hpp>
#include <set>

#include "sslasr/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sslasr {

namespace {

std::string aggregation_name(ConfidenceAggregation a) {
  switch (a) {
    case ConfidenceAggregation::kMin: return "min";
    case ConfidenceAggregation::kGeometricMean: return "geometric-mean";
    case ConfidenceAggregation::kMean: break;
  }
  return "mean";
}

ConfidenceAggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return ConfidenceAggregation::kMean;
  if (s == "min") return ConfidenceAggregation::kMin;
  if (s == "geometric-mean") return ConfidenceAggregation::kGeometricMean;
  throw ConfigError("decode.aggregation: expected mean, min or geometric-mean, got '" + s + "'");
}

// Reads one config object: every key must be known, every value well typed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void read(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    bool ok;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v->is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v->is_number_integer() && (std::is_signed_v<T> || v->is_number_unsigned());
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v->is_number();
    } else {
      ok = v->is_string();
    }
    if (!ok) throw ConfigError(field(key) + ": wrong type (" + std::string(v->type_name()) + ")");
    out = v->get<T>();
  }

  void read_range(const std::string& key, IntRange& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() || !(*v)[1].is_number_integer()) {
      throw ConfigError(field(key) + ": expected [lo, hi] integers");
    }
    out = {(*v)[0].get<int>(), (*v)[1].get<int>()};
  }

  Section child(const std::string& key) {
    const json* v = find(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(field(k) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json config_json(const ExperimentConfig& c) {
  const auto& g = c.generator;
  json bins = json::array();
  for (const auto& iv : c.bins.intervals()) bins.push_back({iv.lo, iv.hi});
  return {
      {"master_seed", c.master_seed},
      {"output_dir", c.output_dir},
      {"protocol", c.protocol},
      {"generator",
       {{"num_phones", g.num_phones},
        {"states_per_phone", g.states_per_phone},
        {"alphabet_size", g.alphabet_size},
        {"vocab_size", g.vocab_size},
        {"word_phone_len", {g.word_phone_len.lo, g.word_phone_len.hi}},
        {"sentence_len", {g.sentence_len.lo, g.sentence_len.hi}},
        {"emission_concentration", g.emission_concentration},
        {"noise_rate", g.noise_rate},
        {"mean_state_dwell", g.mean_state_dwell},
        {"max_state_dwell", g.max_state_dwell},
        {"num_utterances", g.num_utterances}}},
      {"splits", {{"seed", c.splits.seed}, {"unlabeled", c.splits.unlabeled}, {"test", c.splits.test}}},
      {"lm", {{"order", c.lm_order}, {"add_k", c.lm_add_k}}},
      {"train",
       {{"em_iterations", c.train.em_iterations},
        {"emission_add", c.train.emission_add},
        {"transition_add", c.train.transition_add},
        {"dev_fraction", c.train.dev_fraction}}},
      {"decode",
       {{"nbest", c.decode.nbest},
        {"acoustic_scale", c.decode.acoustic_scale},
        {"exact_search", c.decode.exact_search},
        {"search_window", c.decode.search_window},
        {"beam_width", c.decode.beam_width},
        {"aggregation", aggregation_name(c.decode.aggregation)}}},
      {"bins", bins},
      {"ssl",
       {{"max_local_iters", c.ssl.max_local_iters},
        {"local_churn_threshold", c.ssl.local_churn_threshold},
        {"max_global_iters", c.ssl.max_global_iters},
        {"global_improvement_threshold", c.ssl.global_improvement_threshold},
        {"model_selection", to_string(c.ssl.model_selection)}}},
      {"al", {{"selection_mode", to_string(c.al.selection_mode)}}},
  };
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw MissingInputError("missing input file: " + p.string());
}

}  // namespace

void ExperimentConfig::validate() const {
  generator.validate();
  const double sum = splits.seed + splits.unlabeled + splits.test;
  if (splits.seed < 0 || splits.unlabeled < 0 || splits.test < 0 || std::abs(sum - 100.0) > 1e-9) {
    throw ConfigError("splits: ratios must sum to 100");
  }
  if (lm_order < 1 || lm_order > 3) throw ConfigError("lm.order: must be 1, 2 or 3");
  if (!(lm_add_k > 0.0)) throw ConfigError("lm.add_k: must be > 0");
  train.validate();
  decode.validate();
  ssl.validate();
  if (std::find(kProtocols.begin(), kProtocols.end(), protocol) == kProtocols.end()) {
    throw ConfigError("protocol: unknown protocol '" + protocol + "'");
  }
}

std::string config_to_text(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config does not parse: ") + e.what());
  }
  ExperimentConfig c;
  Section root(j, "");
  root.read("master_seed", c.master_seed);
  root.read("output_dir", c.output_dir);
  root.read("protocol", c.protocol);

  Section g = root.child("generator");
  g.read("num_phones", c.generator.num_phones);
  g.read("states_per_phone", c.generator.states_per_phone);
  g.read("alphabet_size", c.generator.alphabet_size);
  g.read("vocab_size", c.generator.vocab_size);
  g.read_range("word_phone_len", c.generator.word_phone_len);
  g.read_range("sentence_len", c.generator.sentence_len);
  g.read("emission_concentration", c.generator.emission_concentration);
  g.read("noise_rate", c.generator.noise_rate);
  g.read("mean_state_dwell", c.generator.mean_state_dwell);
  g.read("max_state_dwell", c.generator.max_state_dwell);
  g.read("num_utterances", c.generator.num_utterances);
  g.finish();

  Section s = root.child("splits");
  s.read("seed", c.splits.seed);
  s.read("unlabeled", c.splits.unlabeled);
  s.read("test", c.splits.test);
  s.finish();

  Section lm = root.child("lm");
  lm.read("order", c.lm_order);
  lm.read("add_k", c.lm_add_k);
  lm.finish();

  Section t = root.child("train");
  t.read("em_iterations", c.train.em_iterations);
  t.read("emission_add", c.train.emission_add);
  t.read("transition_add", c.train.transition_add);
  t.read("dev_fraction", c.train.dev_fraction);
  t.finish();

  Section d = root.child("decode");
  d.read("nbest", c.decode.nbest);
  d.read("acoustic_scale", c.decode.acoustic_scale);
  d.read("exact_search", c.decode.exact_search);
  d.read("search_window", c.decode.search_window);
  d.read("beam_width", c.decode.beam_width);
  std::string agg = aggregation_name(c.decode.aggregation);
  d.read("aggregation", agg);
  c.decode.aggregation = parse_aggregation(agg);
  d.finish();

  if (const json* b = root.find("bins")) {
    if (!b->is_array()) throw ConfigError("bins: expected a list of [lo, hi] pairs");
    std::vector<Interval> ivs;
    for (const auto& iv : *b) {
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number()) {
        throw ConfigError("bins: expected a list of [lo, hi] pairs");
      }
      ivs.push_back({iv[0].get<double>(), iv[1].get<double>()});
    }
    c.bins = BinSpec(std::move(ivs));
    if (!c.bins.decreasing()) throw ConfigError("bins: self-training bins must be in decreasing confidence order");
  }

  Section ssl = root.child("ssl");
  ssl.read("max_local_iters", c.ssl.max_local_iters);
  ssl.read("local_churn_threshold", c.ssl.local_churn_threshold);
  ssl.read("max_global_iters", c.ssl.max_global_iters);
  ssl.read("global_improvement_threshold", c.ssl.global_improvement_threshold);
  std::string sel = to_string(c.ssl.model_selection);
  ssl.read("model_selection", sel);
  c.ssl.model_selection = parse_model_selection(sel);
  ssl.finish();

  Section al = root.child("al");
  std::string mode = to_string(c.al.selection_mode);
  al.read("selection_mode", mode);
  c.al.selection_mode = parse_al_selection(mode);
  al.finish();

  root.finish();
  c.generator.master_seed = c.master_seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  return config_from_text(read_file(path));
}

// gen ---------------------------------------------------------------------

void cmd_gen(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  GeneratorConfig g = cfg.generator;
  g.master_seed = cfg.master_seed;
  const GeneratedCorpus gc = sample_corpus(g);
  const SplitOutcome sp = split_corpus(gc.corpus, cfg.splits, cfg.master_seed);
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "corpus.json", corpus_to_text(strip_unlabeled(gc.corpus, sp.splits)));
  write_file_atomic(out_dir / "splits.json", splits_to_text(sp.splits, cfg.master_seed));
  write_file_atomic(out_dir / "oracle.json", oracle_to_text(sp.oracle, gc.corpus.lexicon));
}

DataBundle load_data(const fs::path& data_dir) {
  for (const char* name : {"corpus.json", "splits.json", "oracle.json"}) require_file(data_dir / name);
  DataBundle b;
  b.corpus = corpus_from_text(read_file(data_dir / "corpus.json"));
  b.splits = splits_from_text(read_file(data_dir / "splits.json"), b.corpus);
  b.oracle = oracle_from_text(read_file(data_dir / "oracle.json"), b.corpus.lexicon);
  b.seed = b.corpus.config.master_seed;
  std::set<std::string> pool;
  for (const auto& u : b.splits.d_u) pool.insert(u.id);
  if (b.oracle.size() != pool.size()) throw DataError("oracle does not cover the unlabeled pool");
  for (const auto& id : pool) {
    if (!b.oracle.contains(id)) throw DataError("oracle has no label for " + id);
  }
  return b;
}

// run ---------------------------------------------------------------------

RunOutcome cmd_run(const ExperimentConfig& cfg_in, const std::string& protocol, const fs::path& data_dir,
                   const fs::path& out_dir, int threads, std::optional<std::uint64_t> seed_override) {
  ExperimentConfig cfg = cfg_in;
  cfg.protocol = protocol;
  cfg.validate();
  if (threads < 1) throw ConfigError("threads: must be >= 1");

  DataBundle data = load_data(data_dir);
  const std::uint64_t seed = seed_override.value_or(data.seed);
  cfg.master_seed = seed;
  cfg.generator = data.corpus.config;
  const auto& gen = data.corpus.config;
  const Lexicon& lex = data.corpus.lexicon;

  json timings = json::object();
  auto t0 = std::chrono::steady_clock::now();
  const ProtocolContext ctx(lex, data.splits, flat_start(lex, gen.num_phones, gen.alphabet_size, gen.states_per_phone),
                            cfg.train, cfg.decode, cfg.lm_order, cfg.lm_add_k, seed, threads);
  const SeedResult seed_r = run_seed_baseline(ctx);
  timings["seed"] = seconds_since(t0);

  RunOutcome out;
  out.seed_wer = seed_r.point.wer;
  const std::size_t pool_size = ctx.pool().size();
  std::vector<TaggedHistogram> hists;
  json bin_iterations = json::array();
  std::size_t budget = 0;

  std::optional<ToplineResult> top;
  if (protocol != "seed") {
    t0 = std::chrono::steady_clock::now();
    top = run_topline(ctx, data.oracle);
    out.topline_wer = top->point.wer;
    timings["topline"] = seconds_since(t0);
  }

  t0 = std::chrono::steady_clock::now();
  if (protocol == "iter") {
    const IterativeResult r = run_iterative(ctx, seed_r, cfg.bins, cfg.ssl);
    int k = 0;
    for (const auto& h : r.histograms) {
      BinHistogram bh = h.histogram;
      bh.iteration = k;
      hists.push_back({protocol, bh});
      bin_iterations.push_back({{"iteration", k}, {"pass", h.pass}, {"stage", h.stage}, {"local", h.local}});
      ++k;
    }
    out.profiles.push_back(r.profile);
  } else {
    hists.push_back({protocol, bin_histogram(assign_bins(seed_r.pool_decode, cfg.bins), pool_size, seed_r.model.id(), 0)});
    bin_iterations.push_back({{"iteration", 0}, {"pass", 0}, {"stage", 0}, {"local", 0}});
    if (protocol == "seed") {
      out.profiles.push_back({"seed", {seed_r.point}});
    } else if (protocol == "topline") {
      out.profiles.push_back({"topline", {seed_r.point, top->point}});
    } else if (protocol == "noniter") {
      out.profiles.push_back(run_non_iterative(ctx, seed_r, cfg.bins).profile);
    } else if (protocol == "active") {
      Oracle oracle = data.oracle;
      const ActiveResult r = run_active_learning(ctx, seed_r, cfg.bins, cfg.al, oracle);
      budget = oracle.budget_used();
      if (!r.budgets.empty() && r.budgets.back() == pool_size) {
        if (r.final_model.fingerprint() != top->model.fingerprint() || !(r.final_model == top->model) ||
            r.profile.points.back().wer != top->point.wer) {
          throw InvariantViolation("al-terminal-equivalence", "final active-learning model differs from the topline");
        }
      }
      out.profiles.push_back(r.profile);
    } else if (protocol == "random") {
      std::vector<std::size_t> budgets;
      std::size_t cum = 0;
      for (const auto& b : assign_bins(seed_r.pool_decode, cfg.bins.reversed())) {
        if (b.members.empty()) continue;
        cum += b.members.size();
        budgets.push_back(cum);
      }
      Oracle oracle = data.oracle;
      out.profiles.push_back(run_random_baseline(ctx, seed_r, budgets, oracle, seed));
      budget = oracle.budget_used();
    }
  }
  timings["protocol"] = seconds_since(t0);

  // Outputs.
  fs::create_directories(out_dir);
  std::map<std::string, std::string> files;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file_atomic(out_dir / name, text);
    files[name] = file_hash(out_dir / name);
  };
  emit("profile.csv", profile_csv(out.profiles));
  emit("bins.csv", bins_csv(hists));
  emit("scatter.csv", scatter_csv(scatter(seed_r.pool_decode, data.oracle.labels())));
  emit("decoded_seed.tsv", pool_to_text(seed_r.pool_decode, lex));
  emit("am_seed.json", model_to_text(seed_r.model));

  json wer_table = json::array();
  for (const auto& p : out.profiles) {
    for (const auto& pt : p.points) {
      wer_table.push_back({{"protocol", p.protocol},
                           {"stage", pt.stage_label},
                           {"model_id", pt.model_id},
                           {"train_fraction", pt.train_fraction},
                           {"wer", pt.wer}});
    }
  }
  json anchors = {{"seed_wer", out.seed_wer}};
  if (top) {
    anchors["topline_wer"] = top->point.wer;
    anchors["topline_model_id"] = top->model.id();
  }
  json data_files = json::object();
  for (const char* name : {"corpus.json", "splits.json", "oracle.json"}) data_files[name] = file_hash(data_dir / name);

  json manifest = {
      {"tool", "sslasr"},
      {"tool_version", kToolVersion},
      {"protocol", protocol},
      {"config", config_json(cfg)},
      {"seeds", {{"master_seed", seed}, {"streams", {"corpus", "split", "dev", "random-baseline"}}}},
      {"data", data_files},
      {"sizes",
       {{"seed_train", ctx.seed_train().size()},
        {"dev", ctx.dev().size()},
        {"unlabeled", pool_size},
        {"test", ctx.test().size()}}},
      {"anchors", anchors},
      {"wer_table", wer_table},
      {"bin_iterations", bin_iterations},
      {"annotation_budget", budget},
      {"timings_sec", timings},
      {"files", files},
  };
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

// report --------------------------------------------------------------------

double gap_recovery(double seed_wer, double best_wer, double topline_wer) {
  if (seed_wer == topline_wer) throw EvaluationError("gap recovery: seed and topline WER coincide");
  return (seed_wer - best_wer) / (seed_wer - topline_wer);
}

ReportSummary cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report: at least one run directory is required");
  ReportSummary s;
  std::set<std::string> protocols;
  for (const auto& dir : run_dirs) {
    require_file(dir / "manifest.json");
    json m;
    try {
      m = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
      throw HashMismatchError(dir.string() + "/manifest.json: unreadable manifest (" + e.what() + ")");
    }
    if (!m.contains("files") || !m["files"].is_object()) {
      throw HashMismatchError(dir.string() + "/manifest.json: no file inventory");
    }
    for (const auto& [name, hash] : m["files"].items()) {
      const fs::path p = dir / name;
      if (!fs::is_regular_file(p)) throw HashMismatchError(p.string() + ": listed in the manifest but missing");
      if (file_hash(p) != hash.get<std::string>()) throw HashMismatchError(p.string() + ": content hash mismatch");
    }
    require_file(dir / "profile.csv");
    for (auto& p : profiles_from_csv(read_file(dir / "profile.csv"))) {
      if (!protocols.insert(p.protocol).second) throw DataError("report: protocol '" + p.protocol + "' appears twice");
      s.profiles.push_back(std::move(p));
    }
    const auto& a = m.at("anchors");
    if (!s.seed_wer) s.seed_wer = a.at("seed_wer").get<double>();
    if (!s.topline_wer && a.contains("topline_wer")) s.topline_wer = a.at("topline_wer").get<double>();
  }

  for (const char* name : {"iter", "noniter"}) {
    for (const auto& p : s.profiles) {
      if (p.protocol == name && !s.best_ssl_wer) s.best_ssl_wer = p.best_wer();
    }
  }
  if (s.seed_wer && s.topline_wer && s.best_ssl_wer && *s.seed_wer != *s.topline_wer) {
    s.gap_recovery = gap_recovery(*s.seed_wer, *s.best_ssl_wer, *s.topline_wer);
  }

  const WerProfile* active = nullptr;
  const WerProfile* random = nullptr;
  for (const auto& p : s.profiles) {
    if (p.protocol == "active") active = &p;
    if (p.protocol == "random") random = &p;
  }
  if (active && random) {
    bool match = active->points.size() == random->points.size();
    for (std::size_t i = 0; match && i < active->points.size(); ++i) {
      match = fixed(active->points[i].train_fraction, 6) == fixed(random->points[i].train_fraction, 6);
    }
    if (!match) throw InvariantViolation("budget-match", "active and random profiles use different budgets");
    s.budget_match = true;
  }

  json summary = json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    summary[key] = v ? json(fixed(*v, 6)) : json(nullptr);
  };
  put("seed_wer", s.seed_wer);
  put("topline_wer", s.topline_wer);
  put("best_ssl_wer", s.best_ssl_wer);
  put("gap_recovery", s.gap_recovery);
  summary["budget_match"] = s.budget_match ? json(*s.budget_match) : json(nullptr);
  json runs = json::array();
  for (const auto& d : run_dirs) runs.push_back(d.filename().string());
  summary["runs"] = runs;

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "report.csv", profile_csv(s.profiles));
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  return s;
}

}  // namespace sslasr
