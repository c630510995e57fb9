// Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero when any criterion fails.
//
//   acceptance <path-to-toneprobe-cli> [criterion-substring]
//
// TONEPROBE_CORPUS_DIR enables the data-gated check. Expected layout:
//   <dir>/<language>/manifest.csv
//   <dir>/<language>/embeddings/<model>/*.tpeb
// for language in angami, ao, mizo.

#include "oracles.hpp"

#include <toneprobe/evalreport.hpp>
#include <toneprobe/folds.hpp>
#include <toneprobe/pipeline.hpp>
#include <toneprobe/svm.hpp>
#include <toneprobe/synth.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>

using namespace toneprobe;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::pass;
  std::string detail;
};

/// Collects failure reasons; the first few end up in the report line.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }

  Outcome outcome() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < failures.size() && i < 3; ++i) os << (i ? "; " : "") << failures[i];
    if (failures.size() > 3) os << "; +" << failures.size() - 3 << " more";
    for (std::size_t i = 0; i < notes.size(); ++i) os << (failures.empty() && i == 0 ? "" : "; ") << notes[i];
    return {failures.empty() ? Verdict::pass : Verdict::fail, os.str()};
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) { return format_fixed(v, digits); }

std::string cli_path;

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun cli(const std::string& args) {
  const std::string cmd = "\"" + cli_path + "\" -q " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// Writes `spec` and runs `synth` through the CLI.
fs::path synthesize(const nlohmann::json& spec, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "spec.json", spec.dump());
  const auto r = cli("synth --spec " + q(dir / "spec.json") + " --out-dir " + q(dir / "corpus"));
  if (r.status != 0) throw Error("synth failed: " + r.out);
  return dir / "corpus";
}

struct ProtocolRun {
  int best_si = 0;
  double best_si_f1 = 0.0;
  int best_di = 0;
  double best_di_f1 = 0.0;
  std::vector<evalreport::AggregateResult> si;
  std::vector<evalreport::AggregateResult> di;
};

ProtocolRun protocol(const fs::path& corpus_dir, const std::string& model, const std::string& inventory,
                     const fs::path& out, const std::string& extra = {}) {
  const auto r = cli("run-paper-protocol --manifest " + q(corpus_dir / "manifest.csv") + " --emb-dir " +
                     q(corpus_dir / "embeddings" / model) + " --inventory " + inventory + " --out-dir " + q(out) +
                     " " + extra);
  if (r.status != 0) throw Error("run-paper-protocol failed: " + r.out);
  ProtocolRun p;
  std::istringstream lines(r.out);
  std::string word, mode;
  while (lines >> word) {
    if (word != "best_layer") continue;
    int layer = 0;
    double f1 = 0.0;
    lines >> mode >> layer >> f1;
    if (mode == "speaker_independent") {
      p.best_si = layer;
      p.best_si_f1 = f1;
    } else {
      p.best_di = layer;
      p.best_di_f1 = f1;
    }
  }
  p.si = evalreport::aggregate(evalreport::load_results(out / "results_speaker.json"));
  if (fs::exists(out / "results_dialect.json"))
    p.di = evalreport::aggregate(evalreport::load_results(out / "results_dialect.json"));
  return p;
}

double mean_over_layers(const std::vector<evalreport::AggregateResult>& aggs) {
  double s = 0.0;
  for (const auto& a : aggs) s += a.mean_f1;
  return aggs.empty() ? 0.0 : s / static_cast<double>(aggs.size());
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
  return out;
}

nlohmann::json base_spec(std::uint64_t seed) {
  return {{"n_speakers", 8}, {"tokens_per_speaker", 40}, {"dim", 16}, {"n_layers", 12}, {"seed", seed}};
}

// ---------------------------------------------------------------------------
// criteria

Outcome textgrid_round_trip() {
  using namespace textgrid;
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::size_t round_trips = 0;
  for (int i = 0; i < 100; ++i) {
    const auto g = oracle::random_grid(rng);
    for (const auto f : {Format::long_text, Format::short_text}) {
      const std::string text = serialize_textgrid(g, f);
      const auto r = parse_textgrid(text);
      const bool ok = r.ok() && *r.grid == g && serialize_textgrid(*r.grid, f) == text;
      c.expect(ok, cat("grid ", i, (f == Format::long_text ? " long" : " short"), " did not round-trip"));
      round_trips += ok;
    }
  }
  std::size_t crashes = 0, accepted = 0, bad_reports = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string text = serialize_textgrid(oracle::random_grid(rng), i % 2 ? Format::long_text : Format::short_text);
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) text = oracle::mutate(text, rng);
    try {
      const auto r = parse_textgrid(text);
      if (r.ok()) {
        ++accepted;
        bad_reports += !oracle::grid_invariants_hold(*r.grid);
      } else {
        bool fatal = false;
        for (const auto& d : r.diagnostics) fatal = fatal || d.severity == Severity::fatal;
        bad_reports += !fatal;
      }
    } catch (...) {
      ++crashes;
    }
  }
  const double secs = seconds_since(t0);
  c.expect(crashes == 0, cat(crashes, " fuzz inputs threw"));
  c.expect(bad_reports == 0, cat(bad_reports, " fuzz inputs gave inconsistent results"));
  c.expect(secs < 10.0, "runtime " + fmt(secs, 2) + " s >= 10 s");
  c.note(cat(round_trips, "/200 round trips, 10000 fuzzed (", accepted, " accepted), ", fmt(secs, 2), " s"));
  return c.outcome();
}

Outcome duration_threshold() {
  using corpus::ToneToken;
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<ToneToken> fixture = {{"u#1", "u", "s", "d", "H", 1.0, 1.049},
                                          {"u#2", "u", "s", "d", "H", 2.0, 2.050},
                                          {"u#3", "u", "s", "d", "H", 3.0, 3.051}};
  const auto kept = corpus::filter_by_duration(fixture, 0.050).kept;
  c.expect(kept.size() == 2 && kept[0].token_id == "u#2" && kept[1].token_id == "u#3",
           cat("fixture kept ", kept.size(), " tokens"));

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ToneToken> tokens;
    const std::size_t n = rng() % 60;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = u(rng) * 100.0;
      const double dur = (rng() % 4 == 0) ? 0.001 * static_cast<double>(rng() % 200) : u(rng) * 0.2;
      tokens.push_back({cat("u#", i + 1), "u", "s", "d", "H", s, s + dur});
    }
    const double a = u(rng) * 0.1;
    const double b = a + u(rng) * 0.1;
    const auto fa = corpus::filter_by_duration(tokens, a);
    const auto fb = corpus::filter_by_duration(tokens, b);
    violations += corpus::filter_by_duration(fa.kept, a).kept != fa.kept;
    violations += fa.kept.size() + fa.removed != tokens.size();
    std::set<std::string> ids;
    for (const auto& t : fa.kept) ids.insert(t.token_id);
    for (const auto& t : fb.kept) violations += !ids.count(t.token_id);
    // fb must be fa filtered at b
    violations += corpus::filter_by_duration(fa.kept, b).kept != fb.kept;
  }
  const double secs = seconds_since(t0);
  c.expect(violations == 0, cat(violations, " idempotence/monotonicity violations"));
  c.expect(secs < 5.0, "runtime " + fmt(secs, 2) + " s >= 5 s");
  c.note(cat("fixture kept ", kept.size(), ", 1000 random lists, ", fmt(secs, 2), " s"));
  return c.outcome();
}

Outcome pooling_oracle() {
  using namespace embstore;
  Check c;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<float> g(0.0f, 3.0f);
  const auto dir = oracle::scratch_dir("acceptance_pool");
  double worst = 0.0;
  std::size_t compared = 0;
  for (int i = 0; i < 100; ++i) {
    EmbeddingFile f;
    f.utterance_id = cat("utt", i);
    f.num_layers = 1 + static_cast<std::uint32_t>(rng() % 13);
    f.has_layer0 = rng() % 2;
    f.dim = 1 + static_cast<std::uint32_t>(rng() % 32);
    f.num_frames = 5 + static_cast<std::uint32_t>(rng() % 150);
    f.frame_stride = 0.020;
    f.frame_offset = (rng() % 3 == 0) ? 0.005 : 0.0;
    f.resize();
    for (auto& v : f.data) v = g(rng);
    write_embedding_file(f, embedding_path(dir, f.utterance_id));
    const auto back = read_embedding_file(embedding_path(dir, f.utterance_id));

    const double span = f.frame_offset + f.num_frames * f.frame_stride;
    const double start = u(rng) * span * 0.9;
    const double end = std::min(span, start + 0.05 + u(rng) * 0.4);
    const corpus::ToneToken tok{f.utterance_id + "#1", f.utterance_id, "s", "d", "H", start, end};
    const int layer = back.first_layer() + static_cast<int>(rng() % back.num_layers);
    const auto frames = oracle::frames_in(start, end, back.frame_stride, back.frame_offset, back.num_frames);
    const auto p = pool_token(back, tok, layer);
    if (p.has_value() != !frames.empty()) {
      c.expect(false, cat("pair ", i, ": drop decision differs from the centre scan"));
      continue;
    }
    if (!p) continue;
    ++compared;
    const auto expect = oracle::brute_mean(back, layer, frames);
    for (std::size_t j = 0; j < back.dim; ++j) worst = std::max(worst, std::abs(p->vector[j] - expect[j]));

    // constant frames give that frame back
    auto flat = back;
    std::vector<float> row(back.dim);
    for (auto& v : row) v = g(rng);
    for (int l = flat.first_layer(); l <= flat.last_layer(); ++l)
      for (std::size_t k = 0; k < flat.num_frames; ++k) std::copy(row.begin(), row.end(), flat.frame(l, k).begin());
    const auto pf = pool_token(flat, tok, layer);
    c.expect(pf && pf->vector == row, cat("pair ", i, ": constant-frame identity broken"));

    // exact scaling by powers of two, positive and negative
    for (const float k : {2.0f, 0.5f, -4.0f}) {
      auto scaled = back;
      for (auto& v : scaled.data) v *= k;
      const auto ps = pool_token(scaled, tok, layer);
      bool exact = ps.has_value();
      for (std::size_t j = 0; exact && j < back.dim; ++j) exact = ps->vector[j] == k * p->vector[j];
      c.expect(exact, cat("pair ", i, ": scaling by ", k, " not exact"));
    }
  }
  c.expect(worst <= 1e-6, "L-inf error " + std::to_string(worst));
  c.expect(compared >= 90, cat("only ", compared, " non-empty pairs"));
  c.note(cat(compared, " pairs compared, max L-inf ", worst));
  return c.outcome();
}

Outcome fold_invariants() {
  using namespace folds;
  Check c;
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t speakers = 5 + rng() % 46;
    const std::size_t classes = 2 + rng() % 4;
    const auto tokens = oracle::random_tokens(rng, speakers, classes, classes, 80, 1 + rng() % 3);
    const std::uint64_t seed = rng();
    FoldPlan plan;
    try {
      plan = build_speaker_folds(tokens, 4, seed);
    } catch (const std::exception& e) {
      c.expect(false, cat("corpus ", trial, ": ", e.what()));
      continue;
    }
    const auto v = validate_plan(plan, tokens);
    c.expect(v.ok(), cat("corpus ", trial, ": ", v.ok() ? "" : v.violations.front()));
    // independent re-check of partition and group integrity
    std::map<std::string, std::set<std::size_t>> folds_of_speaker;
    std::vector<std::set<std::string>> classes_in(plan.k);
    std::size_t assigned = 0;
    for (const auto& t : tokens) {
      const auto it = plan.assignment.find(t.token_id);
      if (it == plan.assignment.end()) continue;
      ++assigned;
      folds_of_speaker[t.speaker_id].insert(it->second);
      classes_in[it->second].insert(t.tone);
    }
    c.expect(assigned == tokens.size() && plan.assignment.size() == tokens.size(),
             cat("corpus ", trial, ": not a partition"));
    for (const auto& [spk, fs_] : folds_of_speaker) c.expect(fs_.size() == 1, cat("corpus ", trial, ": ", spk, " split"));
    for (std::size_t f = 0; f < plan.k; ++f)
      c.expect(classes_in[f].size() == classes, cat("corpus ", trial, ": fold ", f, " misses a class"));
    auto shuffled = tokens;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    c.expect(serialize_plan(build_speaker_folds(shuffled, 4, seed)) == serialize_plan(plan),
             cat("corpus ", trial, ": serialization not deterministic"));
  }
  // symmetric corpus: 8 speakers with identical class histograms
  std::vector<corpus::ToneToken> sym;
  for (int s = 0; s < 8; ++s)
    for (int i = 0; i < 20; ++i)
      sym.push_back({cat("s", s, "#", i), cat("s", s, "_u"), cat("s", s), "d", std::string(1, "HLRF"[i % 4]), 0, 0.1});
  const auto v = validate_plan(build_speaker_folds(sym, 4, 42), sym);
  double max_div = -1.0;
  if (v.ok()) max_div = *std::max_element(v.stats->divergence.begin(), v.stats->divergence.end());
  c.expect(v.ok() && max_div == 0.0, "symmetric corpus divergence " + std::to_string(max_div));
  c.note("100 corpora, symmetric max divergence " + std::to_string(max_div));
  return c.outcome();
}

Outcome svm_oracle() {
  using namespace svm;
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
  };
  std::mt19937_64 rng(555);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Case> cases;
  for (int i = 0; i < 50; ++i) {
    Case k;
    const std::size_t n = 2 + rng() % 29;
    const std::size_t d = 1 + rng() % 4;
    const double shift = 0.25 * static_cast<double>(rng() % 5);
    for (std::size_t r = 0; r < n; ++r) {
      const int label = r % 2 ? -1 : 1;
      std::vector<double> x(d);
      for (auto& v : x) v = g(rng) + label * shift;
      k.rows.push_back(x);
      k.y.push_back(label);
    }
    cases.push_back(std::move(k));
  }
  const SvmConfig cfg;  // shipped defaults: C 1, tol 1e-4, 1000 epochs
  std::vector<std::future<std::pair<double, std::string>>> jobs;
  for (const auto& k : cases)
    jobs.push_back(std::async(std::launch::async, [&k, &cfg] {
      const auto x = Matrix::from_rows(k.rows);
      const auto m = train_binary(x, k.y, cfg);
      const auto qp = oracle::solve_dual_qp(k.rows, k.y, cfg.C);
      const double primal = primal_objective(m, x, k.y);
      const double rel = std::abs(primal - static_cast<double>(qp.primal)) / static_cast<double>(qp.primal);
      std::string problem;
      std::vector<long double> w(x.cols + 1, 0.0L);
      for (std::size_t i = 0; i < x.rows; ++i) {
        if (m.alpha[i] < 0.0 || m.alpha[i] > cfg.C) problem = "alpha out of [0, C]";
        for (std::size_t j = 0; j < x.cols; ++j) w[j] += m.alpha[i] * k.y[i] * x(i, j);
        w[x.cols] += m.alpha[i] * k.y[i];
      }
      for (std::size_t j = 0; j < x.cols; ++j)
        if (std::abs(static_cast<double>(w[j]) - m.weights[j]) > 1e-6) problem = "w differs from sum alpha y x";
      if (std::abs(static_cast<double>(w[x.cols]) - m.bias) > 1e-6) problem = "bias differs from sum alpha y";
      return std::make_pair(rel, problem);
    }));
  double worst = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto [rel, problem] = jobs[i].get();
    worst = std::max(worst, rel);
    c.expect(rel <= 1e-3, cat("instance ", i, ": relative primal gap ", rel));
    c.expect(problem.empty(), cat("instance ", i, ": ", problem));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime " + fmt(secs, 2) + " s >= 60 s");
  c.note(cat("50 instances at C=1, max relative gap ", worst, ", ", fmt(secs, 2), " s"));
  return c.outcome();
}

Outcome metrics() {
  Check c;
  const auto m = evalreport::confusion_and_metrics({"A", "A", "B", "B"}, {"A", "B", "B", "B"}, {"A", "B"});
  const double want_f1 = (2.0 / 3.0 + 0.8) / 2.0;
  c.expect(std::abs(m.macro_f1 - want_f1) <= 1e-9, "macro-F1 " + std::to_string(m.macro_f1));
  c.expect(m.accuracy == 0.75, "accuracy " + std::to_string(m.accuracy));
  std::vector<evalreport::LayerResult> folds(2);
  folds[0].macro_f1 = 0.6;
  folds[1].macro_f1 = 0.8;
  folds[1].fold = 1;
  const auto a = evalreport::aggregate(folds);
  const double want_std = std::sqrt(0.02);
  c.expect(a.size() == 1 && std::abs(a[0].std_f1 - want_std) <= 1e-9 && std::abs(a[0].mean_f1 - 0.7) <= 1e-12,
           "aggregate mean/std " + (a.empty() ? std::string("none") : fmt(a[0].mean_f1, 12) + "/" + fmt(a[0].std_f1, 12)));
  c.note("macro-F1 " + fmt(m.macro_f1, 12) + ", std " + (a.empty() ? "-" : fmt(a[0].std_f1, 12)));
  return c.outcome();
}

Outcome end_to_end() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = oracle::scratch_dir("acceptance_e2e");
  const std::string inv = "L,H,R,F";

  // one informative layer
  auto one = base_spec(42);
  std::vector<double> sep(12, 0.0);
  sep[6] = 10.0;
  one["class_separation"] = sep;
  const auto p1 = protocol(synthesize(one, root / "one"), "synth", inv, root / "one" / "out");
  c.expect(p1.best_si == 7, cat("informative layer 7, best_layer reported ", p1.best_si));

  // no signal: every layer near chance, averaged over seeds
  const double chance = 1.0 / 4.0;
  std::map<int, double> f1_by_layer, acc_by_layer;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    auto none = base_spec(100 + s);
    none["class_separation"] = std::vector<double>(12, 0.0);
    const auto p = protocol(synthesize(none, root / cat("none", s)), "synth", inv, root / cat("none", s) / "out",
                            cat("--seed ", 100 + s));
    for (const auto& a : p.si) {
      f1_by_layer[a.layer] += a.mean_f1 / seeds;
      acc_by_layer[a.layer] += a.mean_accuracy / seeds;
    }
  }
  double lo = 1.0, hi = 0.0, acc_lo = 1.0, acc_hi = 0.0;
  for (const auto& [layer, f1] : f1_by_layer) {
    lo = std::min(lo, f1);
    hi = std::max(hi, f1);
    acc_lo = std::min(acc_lo, acc_by_layer[layer]);
    acc_hi = std::max(acc_hi, acc_by_layer[layer]);
    c.expect(std::abs(f1 - chance) <= 0.05, cat("separation 0: layer ", layer, " macro-F1 ", fmt(f1), " vs chance ",
                                               fmt(chance, 2)));
  }

  // full separation
  auto full = base_spec(7);
  full["class_separation"] = std::vector<double>(12, 10.0);
  full["noise_std"] = 0.1;
  const auto p3 = protocol(synthesize(full, root / "full"), "synth", inv, root / "full" / "out");
  double full_min = 1.0;
  for (const auto& a : p3.si) full_min = std::min(full_min, a.mean_f1);
  c.expect(p3.si.size() == 12 && full_min >= 0.99, "full separation min macro-F1 " + fmt(full_min));

  const double secs = seconds_since(t0);
  c.expect(secs < 300.0, "runtime " + fmt(secs, 1) + " s >= 300 s");
  c.note(cat("best layer ", p1.best_si, "; separation 0 macro-F1 ", fmt(lo), "..", fmt(hi), " (accuracy ",
             fmt(acc_lo), "..", fmt(acc_hi), "); full separation min ", fmt(full_min), "; ", fmt(secs, 1), " s"));
  return c.outcome();
}

nlohmann::json dialect_spec() {
  auto s = base_spec(11);
  s["n_speakers"] = 9;
  s["n_dialects"] = 3;
  s["class_separation"] = std::vector<double>(12, 1.0);
  s["dialect_permutations"] = {{0, 1, 2, 3}, {0, 1, 2, 3}, {1, 2, 3, 0}};
  return s;
}

Outcome dialect_ordering() {
  Check c;
  const auto root = oracle::scratch_dir("acceptance_di");
  const auto p = protocol(synthesize(dialect_spec(), root), "synth", "L,H,R,F", root / "out", "--dialect");
  const double si = mean_over_layers(p.si);
  const double di = mean_over_layers(p.di);
  c.expect(!p.di.empty(), "no dialect-independent results");
  c.expect(di < si, "DI " + fmt(di) + " not below SI " + fmt(si));
  c.expect(p.best_di_f1 < p.best_si_f1, "best-layer DI " + fmt(p.best_di_f1) + " not below SI " + fmt(p.best_si_f1));
  c.note("mean over layers SI " + fmt(si) + ", DI " + fmt(di) + "; best layer SI " + fmt(p.best_si_f1) + ", DI " +
         fmt(p.best_di_f1));
  return c.outcome();
}

Outcome determinism() {
  Check c;
  const auto root = oracle::scratch_dir("acceptance_jobs");
  const auto corpus_dir = synthesize(dialect_spec(), root);
  std::map<std::string, std::string> first;
  for (const int jobs : {1, 8}) {
    const auto out = root / "out";
    fs::remove_all(out);
    const auto r = cli(cat("-j ", jobs, " run-paper-protocol --manifest ", q(corpus_dir / "manifest.csv"),
                           " --emb-dir ", q(corpus_dir / "embeddings" / "synth"),
                           " --inventory L,H,R,F --dialect --out-dir ", q(out)));
    c.expect(r.status == 0, cat("--jobs ", jobs, " failed: ", r.out));
    if (r.status != 0) return c.outcome();
    if (jobs == 1) {
      first = snapshot(out);
      continue;
    }
    const auto second = snapshot(out);
    c.expect(first.size() == second.size(), "file sets differ");
    for (const auto& [name, bytes] : first) {
      const auto it = second.find(name);
      c.expect(it != second.end() && it->second == bytes, name + " differs");
    }
  }
  c.note(cat(first.size(), " output files compared byte for byte"));
  return c.outcome();
}

struct ReferenceCounts {
  std::string language;
  std::vector<std::pair<std::string, std::size_t>> counts;
  std::size_t total;
};

Outcome data_gated() {
  const char* env = std::getenv("TONEPROBE_CORPUS_DIR");
  if (!env || !*env) return {Verdict::skip, "TONEPROBE_CORPUS_DIR not set"};
  const fs::path root = env;
  const std::vector<ReferenceCounts> table = {
      {"angami", {{"T1", 3699}, {"T2", 6323}, {"T3", 5404}, {"T4", 3369}}, 18795},
      {"ao", {{"L", 5426}, {"M", 7367}, {"H", 4585}}, 17378},
      {"mizo", {{"L", 3040}, {"H", 3643}, {"R", 2551}, {"F", 3816}}, 13050},
  };
  Check c;
  std::size_t languages = 0, models = 0;
  for (const auto& row : table) {
    const fs::path dir = root / row.language;
    if (!fs::exists(dir / "manifest.csv")) continue;
    ++languages;
    const auto out = oracle::scratch_dir("acceptance_data_" + row.language);
    const auto r = cli("ingest --manifest " + q(dir / "manifest.csv") + " --inventory " + row.language + " --out " +
                       q(out / "tokens.csv"));
    c.expect(r.status == 0, row.language + ": ingest failed");
    if (r.status != 0) continue;
    const auto acc = parse_csv(read_file(out / "tokens.accounting.csv"));
    std::map<std::string, std::size_t> got;
    for (const auto& line : acc.rows) got[line.at(0)] = std::stoul(line.at(1));
    for (const auto& [tone, n] : row.counts)
      c.expect(got[tone] == n, cat(row.language, " ", tone, ": ", got[tone], " tokens, expected ", n));
    c.expect(got["total"] == row.total, cat(row.language, " total ", got["total"], ", expected ", row.total));
    if (!fs::exists(dir / "embeddings")) continue;
    for (const auto& model : fs::directory_iterator(dir / "embeddings")) {
      if (!model.is_directory()) continue;
      ++models;
      const auto name = model.path().filename().string();
      const auto p = protocol(dir, name, row.language, out / name);
      c.expect(p.best_si >= 4 && p.best_si <= 8, cat(row.language, "/", name, ": best layer ", p.best_si));
    }
  }
  if (languages == 0) return {Verdict::skip, "no <language>/manifest.csv under " + root.string()};
  c.note(cat(languages, " languages, ", models, " model sweeps"));
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  cli_path = argc > 1 ? argv[1] : "toneprobe";
  const std::string filter = argc > 2 ? argv[2] : "";
  log_threshold() = LogLevel::warn;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"textgrid-round-trip", textgrid_round_trip},
      {"duration-threshold", duration_threshold},
      {"pooling-oracle", pooling_oracle},
      {"fold-invariants", fold_invariants},
      {"svm-oracle-equivalence", svm_oracle},
      {"metrics-correctness", metrics},
      {"end-to-end-synthetic", end_to_end},
      {"dialect-vs-speaker-ordering", dialect_ordering},
      {"jobs-determinism", determinism},
      {"real-corpus-counts-and-peak", data_gated},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Verdict::fail, cat("exception: ", e.what())};
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failed += o.verdict == Verdict::fail;
    std::cout << tag << " " << name << " (" << o.detail << ")" << std::endl;
  }
  return failed ? 1 : 0;
}
