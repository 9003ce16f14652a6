// End-to-end acceptance run on the default configuration, master seeds 1-3.
// Every experiment goes through the same gen -> run -> report path as the
// command-line tool and is judged from the files it writes. Prints one
// PASS/FAIL line per criterion; exits non-zero if any fails.
//
//   sslasr_acceptance [work_dir]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sslasr/experiment.hpp"

using namespace sslasr;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
const std::vector<std::string> kRunProtocols = {"seed", "noniter", "iter", "active", "random"};

double now_sec() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

json manifest(const fs::path& run) { return json::parse(read_file(run / "manifest.json")); }

WerProfile profile(const fs::path& run) { return profiles_from_csv(read_file(run / "profile.csv")).at(0); }

struct BinRow {
  int iteration;
  int bin;
  std::size_t count;
};

std::vector<BinRow> bins(const fs::path& run) {
  std::vector<BinRow> out;
  const auto text = read_file(run / "bins.csv");
  std::size_t pos = text.find('\n') + 1;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    std::vector<std::string> f;
    std::string line = text.substr(pos, end - pos), cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    out.push_back({std::stoi(f[2]), std::stoi(f[3]), static_cast<std::size_t>(std::stoull(f[6]))});
    pos = end + 1;
  }
  return out;
}

std::size_t top_bin(const std::vector<BinRow>& rows, int iteration) {
  for (const auto& r : rows) {
    if (r.iteration == iteration && r.bin == 0) return r.count;
  }
  throw std::runtime_error("no histogram for iteration " + std::to_string(iteration));
}

// One full execution for one seed: data, every protocol, the report.
struct Execution {
  fs::path root;
  double gen_sec = 0, seed_sec = 0, ssl_sec = 0;
  ReportSummary summary;
};

Execution execute(const fs::path& root, std::uint64_t seed, int threads) {
  Execution e;
  e.root = root;
  ExperimentConfig cfg;
  cfg.master_seed = seed;
  cfg.generator.master_seed = seed;
  double t = now_sec();
  cmd_gen(cfg, root / "data");
  e.gen_sec = now_sec() - t;
  std::vector<fs::path> runs;
  for (const auto& p : kRunProtocols) {
    t = now_sec();
    cmd_run(cfg, p, root / "data", root / p, threads);
    const double dt = now_sec() - t;
    if (p == "seed") e.seed_sec = dt;
    if (p == "noniter" || p == "iter") e.ssl_sec += dt;
    std::printf("  seed %llu: %-8s %7.1f s\n", static_cast<unsigned long long>(seed), p.c_str(), dt);
    std::fflush(stdout);
    if (p != "seed") runs.push_back(root / p);
  }
  e.summary = cmd_report(runs, root / "report");
  return e;
}

struct Verdict {
  bool pass;
  std::string detail;
};

void print(int n, const std::string& name, const Verdict& v) {
  std::printf("criterion %d %-30s %s  %s\n", n, name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Oracle suites -----------------------------------------------------------

std::vector<WordSeq> all_sequences(int max_len, int vocab) {
  std::vector<WordSeq> out{{}};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (static_cast<int>(out[i].size()) == max_len) continue;
    for (int w = 0; w < vocab; ++w) {
      WordSeq s = out[i];
      s.push_back(w);
      out.push_back(s);
    }
  }
  return out;
}

std::size_t edit_distance_suite() {
  const auto seqs = all_sequences(6, 3);
  std::size_t bad = 0;
  for (const auto& a : seqs) {
    for (const auto& b : seqs) {
      if (edit_distance(a, b).errors() != oracle::edit_cost(a, b)) ++bad;
    }
  }
  return bad;
}

std::size_t decoder_suite() {
  std::mt19937_64 rng(99);
  const Lexicon lex = fixtures::toy_lexicon();
  std::size_t bad = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto am = fixtures::random_model(rng);
    const auto lm = fixtures::random_lm(rng, 3, 1 + rep % 3);
    const int T = std::uniform_int_distribution<int>(3, 10)(rng);
    const Utterance u{"u", fixtures::random_frames(rng, T), std::nullopt};
    const auto all = oracle::enumerate_hypotheses(am, lm, lex, u.frames);
    DecodeConfig cfg;
    cfg.nbest = 5;
    const auto got = Decoder(am, lm, lex, cfg).search(u);
    const std::size_t k = std::min<std::size_t>(5, all.size());
    if (got.size() != k) {
      ++bad;
      continue;
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (std::abs(got[i].score - all[i].score) > 1e-9) ++bad;
      // Word sequences must agree wherever the ranking is not a float tie.
      const bool tied = (i > 0 && all[i - 1].score - all[i].score < 1e-9) ||
                        (i + 1 < all.size() && all[i].score - all[i + 1].score < 1e-9);
      if (!tied && got[i].words != all[i].words) ++bad;
    }
    // Forced alignment of every listed transcript against path enumeration.
    for (std::size_t i = 0; i < std::min<std::size_t>(all.size(), 8); ++i) {
      const auto al = forced_align(am, u, all[i].words, lex);
      const double ref = oracle::best_chain_path(am, oracle::chain_of(am, lex, all[i].words), u.frames);
      if (std::abs(al.log_likelihood - ref) > 1e-9) ++bad;
    }
  }
  return bad;
}

std::size_t posterior_suite() {
  std::size_t bad = 0;
  DecodeConfig cfg;
  {
    const auto p = word_posteriors({{{1, 2, 3}, 0.0}, {{1, 5, 3}, std::log(0.4 / 0.6)}}, cfg);
    if (std::abs(p[0] - 1.0) > 1e-6 || std::abs(p[1] - 0.6) > 1e-6 || std::abs(p[2] - 1.0) > 1e-6) ++bad;
  }
  // Competitors one substitution away from the best: each one's weight is
  // lost at exactly its own slot.
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 500; ++rep) {
    cfg.acoustic_scale = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
    const int len = std::uniform_int_distribution<int>(1, 6)(rng);
    WordSeq best(static_cast<std::size_t>(len));
    for (auto& w : best) w = std::uniform_int_distribution<int>(0, 9)(rng);
    std::vector<Hypothesis> nb{{best, 0.0}};
    std::vector<int> slot{-1};
    std::set<WordSeq> seen{best};
    const int n = std::uniform_int_distribution<int>(0, 6)(rng);
    for (int i = 0; i < n; ++i) {
      WordSeq h = best;
      const int s = std::uniform_int_distribution<int>(0, len - 1)(rng);
      h[static_cast<std::size_t>(s)] = 10 + std::uniform_int_distribution<int>(0, 5)(rng);
      if (!seen.insert(h).second) continue;
      nb.push_back({h, -std::uniform_real_distribution<double>(0.0, 6.0)(rng)});
      slot.push_back(s);
    }
    double z = 0;
    for (const auto& h : nb) z += std::exp(h.score / cfg.acoustic_scale);
    std::vector<double> expect(static_cast<std::size_t>(len), 1.0);
    for (std::size_t i = 1; i < nb.size(); ++i) {
      expect[static_cast<std::size_t>(slot[i])] -= std::exp(nb[i].score / cfg.acoustic_scale) / z;
    }
    const auto got = word_posteriors(nb, cfg);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      if (std::abs(got[i] - expect[i]) > 1e-6) ++bad;
    }
  }
  return bad;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sslasr-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  std::setvbuf(stdout, nullptr, _IOLBF, 0);

  std::map<std::uint64_t, Execution> exec;
  std::map<std::uint64_t, double> top_frac_5;
  for (auto seed : kSeeds) {
    exec[seed] = execute(work / ("seed" + std::to_string(seed)), seed, 1);
    // The same seed with a 5% seed split, seed model only.
    ExperimentConfig small;
    small.master_seed = seed;
    small.generator.master_seed = seed;
    small.splits = {5, 85, 10};
    const fs::path r5 = work / ("seed" + std::to_string(seed) + "-5pct");
    cmd_gen(small, r5 / "data");
    cmd_run(small, "seed", r5 / "data", r5 / "seed");
    top_frac_5[seed] = double(top_bin(bins(r5 / "seed"), 0)) / double(manifest(r5 / "seed")["sizes"]["unlabeled"].get<std::size_t>());
  }

  int failed = 0;
  auto report = [&](int n, const std::string& name, const Verdict& v) {
    print(n, name, v);
    failed += !v.pass;
  };

  // 1: confidence vs WER on the seed decode.
  {
    bool ok = true;
    std::string d;
    for (auto seed : kSeeds) {
      const auto& e = exec[seed];
      std::vector<double> c, w;
      const auto text = read_file(e.root / "seed" / "scatter.csv");
      std::size_t pos = text.find('\n') + 1;
      while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        const std::string line = text.substr(pos, end - pos);
        const auto a = line.find(','), b = line.rfind(',');
        c.push_back(std::stod(line.substr(a + 1, b - a - 1)));
        w.push_back(std::stod(line.substr(b + 1)));
        pos = end + 1;
      }
      const Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
      const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
      const double rho = spearman(x, y);
      const double q = fit_quadratic(x, y).rss, l = fit_linear(x, y).rss;
      const double rt = e.gen_sec + e.seed_sec;
      ok &= rho <= -0.5 && q < l && rt < 60.0;
      d += "s" + std::to_string(seed) + ": rho=" + fmt("%.3f", rho) + " rss q/l=" + fmt("%.4f", q / l) +
           " t=" + fmt("%.0fs", rt) + "; ";
    }
    report(1, "confidence-WER correlation", {ok, d});
  }

  // 2: seed-size bin contrast.
  {
    std::vector<double> f5, f25;
    for (auto seed : kSeeds) {
      const auto& run = exec[seed].root / "seed";
      f25.push_back(double(top_bin(bins(run), 0)) / double(manifest(run)["sizes"]["unlabeled"].get<std::size_t>()));
      f5.push_back(top_frac_5[seed]);
    }
    report(2, "seed-size bin contrast",
           {mean(f5) < mean(f25), "top-bin fraction 5%=" + fmt("%.4f", mean(f5)) + " 25%=" + fmt("%.4f", mean(f25))});
  }

  // 3: non-iterative profile.
  {
    std::vector<double> seed_wer, min_wer;
    bool last_ok = true;
    std::string d;
    for (auto seed : kSeeds) {
      const auto p = profile(exec[seed].root / "noniter");
      seed_wer.push_back(p.seed_wer());
      min_wer.push_back(p.best_wer());
      double lo = p.points[0].wer;
      for (const auto& pt : p.points) lo = std::min(lo, pt.wer);
      last_ok &= p.points.back().wer >= lo;
      d += "s" + std::to_string(seed) + ": seed=" + fmt("%.2f", p.seed_wer()) + " min=" + fmt("%.2f", p.best_wer()) +
           " last=" + fmt("%.2f", p.points.back().wer) + "; ";
    }
    d = "avg seed=" + fmt("%.2f", mean(seed_wer)) + " avg min=" + fmt("%.2f", mean(min_wer)) + " | " + d;
    report(3, "non-iterative profile", {mean(min_wer) < mean(seed_wer) - 0.5 && last_ok, d});
  }

  // 4: iterative improvement.
  {
    std::vector<double> non, it1, it2;
    for (auto seed : kSeeds) {
      non.push_back(profile(exec[seed].root / "noniter").best_wer());
      const auto p = profile(exec[seed].root / "iter");
      it1.push_back(p.best_wer("iter1-").value_or(p.seed_wer()));
      it2.push_back(p.best_wer("iter2-").value_or(it1.back()));
    }
    const bool ok = mean(it1) <= mean(non) + 0.1 && mean(it2) <= mean(it1) + 0.1;
    report(4, "iterative improvement",
           {ok, "avg min noniter=" + fmt("%.2f", mean(non)) + " iter1=" + fmt("%.2f", mean(it1)) + " iter2=" +
                    fmt("%.2f", mean(it2))});
  }

  // 5: gap recovery from the report step; SSL runtime.
  {
    std::vector<double> g;
    double worst_rt = 0;
    std::string d;
    for (auto seed : kSeeds) {
      const auto& e = exec[seed];
      g.push_back(e.summary.gap_recovery.value_or(-1e9));
      worst_rt = std::max(worst_rt, e.gen_sec + e.seed_sec + e.ssl_sec);
      d += "s" + std::to_string(seed) + "=" + fmt("%.3f", g.back()) + " ";
    }
    report(5, "gap recovery",
           {mean(g) >= 0.30 && worst_rt < 600.0,
            "avg=" + fmt("%.3f", mean(g)) + " (" + d + ") max SSL runtime=" + fmt("%.0fs", worst_rt)});
  }

  // 6: redistribution in the first bin's local loop; mass conservation.
  {
    bool ok = true;
    std::string d;
    for (auto seed : kSeeds) {
      const fs::path run = exec[seed].root / "iter";
      const auto m = manifest(run);
      const auto rows = bins(run);
      const std::size_t pool = m["sizes"]["unlabeled"].get<std::size_t>();
      std::map<int, std::size_t> mass;
      for (const auto& r : rows) mass[r.iteration] += r.count;
      for (const auto& [it, total] : mass) ok &= total == pool;
      // pass 1: opening decode, then the local iterations of the first stage
      int open = -1, last = -1;
      for (const auto& b : m["bin_iterations"]) {
        if (b["pass"] != 1) continue;
        if (b["stage"] == 0) open = b["iteration"];
        if (b["stage"] == 1) last = b["iteration"];
      }
      ok &= open >= 0 && last >= 0;
      if (open < 0 || last < 0) continue;
      const std::size_t t0 = top_bin(rows, open), tn = top_bin(rows, last);
      ok &= tn >= t0;
      d += "s" + std::to_string(seed) + ": " + std::to_string(t0) + "->" + std::to_string(tn) + "; ";
    }
    report(6, "bin redistribution", {ok, "top bin, AM_1 loop start->end " + d + "mass conserved at every iteration"});
  }

  // 7: active learning vs topline and random.
  {
    std::vector<double> gap70, wins;
    bool exact = true;
    std::string d;
    for (auto seed : kSeeds) {
      const auto& root = exec[seed].root;
      const auto al = profile(root / "active"), rnd = profile(root / "random");
      const auto anchors = manifest(root / "active")["anchors"];
      const double top = anchors["topline_wer"].get<double>();
      double best = std::numeric_limits<double>::infinity();
      for (const auto& pt : al.points) {
        if (pt.train_fraction <= 0.70 + 1e-9) best = std::min(best, pt.wer);
      }
      gap70.push_back(best - top);
      std::size_t matched = 0, won = 0;
      for (std::size_t i = 1; i < al.points.size() && i < rnd.points.size(); ++i) {
        if (fixed(al.points[i].train_fraction, 6) != fixed(rnd.points[i].train_fraction, 6)) continue;
        ++matched;
        won += al.points[i].wer <= rnd.points[i].wer + 0.3;
      }
      wins.push_back(matched ? double(won) / double(matched) : 0.0);
      // the csv carries 6 decimals; the manifest table carries full doubles
      const auto table = manifest(root / "active")["wer_table"];
      const auto& final_pt = table.back();
      exact &= final_pt["wer"].get<double>() == top && final_pt["model_id"] == anchors["topline_model_id"] &&
               al.points.back().train_fraction == 1.0;
      d += "s" + std::to_string(seed) + ": gap@70%=" + fmt("%.2f", gap70.back()) + " wins " + std::to_string(won) + "/" +
           std::to_string(matched) + "; ";
    }
    report(7, "active learning",
           {mean(gap70) <= 1.0 && mean(wins) >= 0.70 && exact,
            "avg gap@70%=" + fmt("%.2f", mean(gap70)) + " avg win rate=" + fmt("%.2f", mean(wins)) +
                " final==topline " + (exact ? "yes" : "no") + " | " + d});
  }

  // 8: oracle equivalence suites.
  {
    const std::size_t ed = edit_distance_suite(), dec = decoder_suite(), post = posterior_suite();
    bool em = true;
    for (auto seed : kSeeds) {
      const auto am = model_from_text(read_file(exec[seed].root / "seed" / "am_seed.json"));
      const auto& tr = am.loglik_trace();
      for (std::size_t i = 1; i < tr.size(); ++i) em &= tr[i] >= tr[i - 1] - 1e-6;
    }
    report(8, "oracle equivalence",
           {ed == 0 && dec == 0 && post == 0 && em,
            "mismatches: edit=" + std::to_string(ed) + " decode/align=" + std::to_string(dec) +
                " posteriors=" + std::to_string(post) + "; EM monotone " + (em ? "yes" : "no")});
  }

  // 9: a second full execution of seed 1, decoding on two threads.
  {
    const auto again = execute(work / "seed1-repeat", 1, 2);
    const auto& first = exec[1];
    bool ok = true;
    std::string diff;
    auto same = [&](const fs::path& rel) {
      const bool eq = file_hash(first.root / rel) == file_hash(again.root / rel);
      if (!eq) diff += rel.string() + " ";
      ok &= eq;
    };
    for (const char* f : {"corpus.json", "splits.json", "oracle.json"}) same(fs::path("data") / f);
    for (const auto& p : kRunProtocols) {
      for (const char* f : {"profile.csv", "bins.csv", "scatter.csv"}) same(fs::path(p) / f);
      const bool eq = manifest(first.root / p)["files"] == manifest(again.root / p)["files"];
      if (!eq) diff += p + "/manifest.files ";
      ok &= eq;
    }
    same("report/report.csv");
    same("report/summary.json");
    report(9, "determinism", {ok, ok ? "all CSVs and manifest hashes identical (1 vs 2 threads)" : "differs: " + diff});
  }

  std::printf("%s: %d of 9 criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}
