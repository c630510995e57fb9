#pragma once

// Pipeline stages behind the command-line tool. Each stage reads its inputs,
// writes its outputs, and records its fully resolved settings next to them
// (`<output>.run.json`, or `run_config.json` inside an output directory).
// The worker count is deliberately left out of the recorded settings: it
// changes wall time only.

#include <toneprobe/common.hpp>
#include <toneprobe/corpus.hpp>
#include <toneprobe/embstore.hpp>
#include <toneprobe/evalreport.hpp>
#include <toneprobe/folds.hpp>
#include <toneprobe/svm.hpp>
#include <toneprobe/synth.hpp>

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace toneprobe::pipeline {

namespace fs = std::filesystem;

/// Parses "1..12", "1-12", "3" or "1,4,7..9" into a sorted unique list.
inline std::vector<int> parse_layers(std::string_view spec) {
  std::vector<int> out;
  for (const auto& raw : split(spec, ',')) {
    const auto part = trim(raw);
    if (part.empty()) continue;
    std::size_t sep = part.find("..");
    std::size_t sep_len = 2;
    if (sep == std::string_view::npos) {
      sep = part.find('-', 1);
      sep_len = 1;
    }
    if (sep == std::string_view::npos) {
      const auto v = parse_int<int>(part);
      if (!v || *v < 0) throw InvalidArgument(cat("bad layer '", part, "'"));
      out.push_back(*v);
      continue;
    }
    const auto lo = parse_int<int>(part.substr(0, sep));
    const auto hi = parse_int<int>(part.substr(sep + sep_len));
    if (!lo || !hi || *lo < 0 || *hi < *lo) throw InvalidArgument(cat("bad layer range '", part, "'"));
    for (int l = *lo; l <= *hi; ++l) out.push_back(l);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw InvalidArgument(cat("empty layer list '", spec, "'"));
  return out;
}

inline fs::path sibling(const fs::path& p, std::string_view suffix) {
  fs::path out = p;
  out.replace_extension();
  out += std::string(suffix);
  return out;
}

inline void write_run_config(const fs::path& path, const std::string& subcommand, nlohmann::json settings) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["settings"] = std::move(settings);
  write_file(path, j.dump(2) + "\n");
}

inline nlohmann::json svm_json(const svm::SvmConfig& c) {
  return {{"C", c.C}, {"tol", c.tolerance}, {"max_epochs", c.max_epochs}, {"seed", c.seed}, {"standardize", c.standardize}};
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  fs::path manifest;
  std::string tier = "tones";
  double min_duration = corpus::kDefaultMinDuration;
  std::string inventory;  // language name or comma list
  std::string language;
  fs::path out;             // token CSV
  fs::path accounting_out;  // default: <out>.accounting.csv
  unsigned jobs = 1;
};

struct IngestSummary {
  std::vector<corpus::ToneToken> tokens;
  corpus::CorpusAccounting accounting;
  std::size_t extracted = 0;
  std::size_t removed = 0;
  std::vector<std::string> warnings;
};

inline IngestSummary run_ingest(const IngestOptions& opt) {
  const auto inventory = corpus::ToneInventory::from_spec(opt.inventory);
  const auto manifest = corpus::load_manifest(opt.manifest, opt.language.empty() ? inventory.language : opt.language);
  auto extracted = corpus::extract_tokens(manifest, opt.tier, inventory, opt.jobs);
  for (const auto& w : extracted.warnings) log(LogLevel::warn, w);
  auto filtered = corpus::filter_by_duration(extracted.tokens, opt.min_duration);

  IngestSummary s;
  s.extracted = extracted.tokens.size();
  s.removed = filtered.removed;
  s.tokens = std::move(filtered.kept);
  s.accounting = corpus::accounting(s.tokens, &inventory);
  s.warnings = std::move(extracted.warnings);

  const fs::path acc_path = opt.accounting_out.empty() ? sibling(opt.out, ".accounting.csv") : opt.accounting_out;
  write_file(opt.out, corpus::serialize_tokens(s.tokens));
  write_file(acc_path, corpus::serialize_accounting(s.accounting));
  write_run_config(sibling(opt.out, ".run.json"), "ingest",
                   {{"manifest", opt.manifest.generic_string()},
                    {"tier", opt.tier},
                    {"min_dur", opt.min_duration},
                    {"inventory", inventory.labels},
                    {"language", manifest.language},
                    {"out", opt.out.generic_string()},
                    {"accounting", acc_path.generic_string()},
                    {"tokens_extracted", s.extracted},
                    {"tokens_removed_below_min_dur", s.removed},
                    {"tokens_kept", s.tokens.size()},
                    {"warnings", s.warnings.size()}});
  log(LogLevel::info, "ingest: ", s.extracted, " tokens extracted, ", s.removed, " below ", opt.min_duration,
      " s removed, ", s.tokens.size(), " kept");
  return s;
}

// ---------------------------------------------------------------------------
// pool

struct PoolOptions {
  fs::path tokens;
  fs::path emb_dir;
  std::vector<int> layers = parse_layers("1..12");
  fs::path out;  // feature table (.tpf)
  std::string model_tag;  // default: emb_dir name
  std::string language;
  unsigned jobs = 1;
};

struct PoolSummary {
  embstore::PoolResult pooled;
  std::vector<corpus::ToneToken> kept_tokens;
};

inline std::string default_model_tag(const fs::path& emb_dir) {
  const auto p = emb_dir.lexically_normal();
  auto name = p.filename().string();
  if (name.empty()) name = p.parent_path().filename().string();
  return name.empty() ? "model" : name;
}

inline PoolSummary run_pool(const PoolOptions& opt) {
  const auto tokens = corpus::load_tokens(opt.tokens);
  PoolSummary s;
  s.pooled = embstore::pool_corpus(tokens, opt.emb_dir, opt.layers, opt.jobs);
  s.pooled.table.model_tag = opt.model_tag.empty() ? default_model_tag(opt.emb_dir) : opt.model_tag;
  s.pooled.table.language = opt.language;
  std::set<std::string> dropped;
  for (const auto& d : s.pooled.drops) dropped.insert(d.token_id);
  for (const auto& t : tokens)
    if (!dropped.count(t.token_id)) s.kept_tokens.push_back(t);

  embstore::write_feature_table(s.pooled.table, opt.out);
  write_file(sibling(opt.out, ".drops.csv"), embstore::serialize_drops(s.pooled.drops));
  write_file(sibling(opt.out, ".tokens.csv"), corpus::serialize_tokens(s.kept_tokens));
  write_run_config(sibling(opt.out, ".run.json"), "pool",
                   {{"tokens", opt.tokens.generic_string()},
                    {"emb_dir", opt.emb_dir.generic_string()},
                    {"layers", opt.layers},
                    {"model_tag", s.pooled.table.model_tag},
                    {"language", opt.language},
                    {"out", opt.out.generic_string()},
                    {"dim", s.pooled.table.dim},
                    {"rows", s.pooled.table.rows.size()},
                    {"dropped_tokens", s.pooled.drops.size()}});
  log(LogLevel::info, "pool: ", s.pooled.table.rows.size(), " feature rows (dim ", s.pooled.table.dim, "), ",
      s.pooled.drops.size(), " tokens dropped");
  return s;
}

// ---------------------------------------------------------------------------
// folds

struct FoldsOptions {
  fs::path tokens;
  folds::FoldMode mode = folds::FoldMode::speaker_independent;
  std::size_t k = folds::kDefaultFolds;
  std::size_t train_dialects = 0;
  std::uint64_t seed = folds::kDefaultSeed;
  fs::path out;
};

inline folds::FoldPlan run_folds(const FoldsOptions& opt) {
  const auto tokens = corpus::load_tokens(opt.tokens);
  const auto plan = opt.mode == folds::FoldMode::speaker_independent
                        ? folds::build_speaker_folds(tokens, opt.k, opt.seed)
                        : folds::build_dialect_folds(tokens, opt.train_dialects);
  const auto check = folds::validate_plan(plan, tokens);
  if (!check.ok()) throw Error(cat("fold plan failed validation: ", check.violations.front()));
  write_file(opt.out, folds::serialize_plan(plan));
  std::vector<double> divergence = check.stats->divergence;
  write_run_config(sibling(opt.out, ".run.json"), "folds",
                   {{"tokens", opt.tokens.generic_string()},
                    {"mode", folds::to_string(opt.mode)},
                    {"k", plan.k},
                    {"train_dialects", opt.train_dialects},
                    {"seed", opt.seed},
                    {"out", opt.out.generic_string()},
                    {"instances", plan.instances.size()},
                    {"fold_class_counts", check.stats->counts},
                    {"fold_divergence_l1", divergence}});
  log(LogLevel::info, "folds: ", folds::to_string(plan.mode), " plan with ", plan.k, " folds, ",
      plan.instances.size(), " evaluation instances, max class divergence ", check.stats->max_divergence());
  return plan;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  fs::path features;
  fs::path plan;
  svm::SvmConfig svm;
  std::vector<int> layers;  // empty = all in the table
  fs::path out;             // results JSON
  fs::path models_out;      // optional directory for per-cell model JSON
  std::string model_tag;
  std::string language;
  unsigned jobs = 1;
};

inline std::vector<evalreport::LayerResult> run_eval(const EvalOptions& opt) {
  const auto table = embstore::read_feature_table(opt.features);
  const auto plan = folds::load_plan(opt.plan);
  evalreport::SweepConfig cfg{opt.layers, opt.svm, opt.jobs, opt.model_tag, opt.language};
  const auto results = evalreport::run_sweep(table, plan, cfg);

  const nlohmann::json settings = {{"features", opt.features.generic_string()},
                                   {"plan", opt.plan.generic_string()},
                                   {"svm", svm_json(opt.svm)},
                                   {"layers", cfg.layers.empty() ? table.layers() : cfg.layers},
                                   {"model_tag", results.front().model_tag},
                                   {"language", results.front().language},
                                   {"mode", folds::to_string(plan.mode)},
                                   {"out", opt.out.generic_string()}};
  write_file(opt.out, evalreport::serialize_results(results, settings));
  write_file(sibling(opt.out, ".long.csv"), evalreport::long_csv(results));
  write_run_config(sibling(opt.out, ".run.json"), "eval", settings);

  if (!opt.models_out.empty()) {
    const auto layers = cfg.layers.empty() ? table.layers() : cfg.layers;
    for (const int layer : layers)
      for (std::size_t f = 0; f < plan.instances.size(); ++f) {
        const auto model = evalreport::train_cell(table, plan, layer, f, opt.svm);
        write_file(opt.models_out / cat("model_layer", layer, "_fold", f, ".json"),
                   svm::to_json(model).dump(1) + "\n");
      }
  }
  log(LogLevel::info, "eval: ", results.size(), " (layer, fold) results");
  return results;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::vector<fs::path> results;
  fs::path out_dir;
};

inline std::vector<fs::path> run_report(const ReportOptions& opt) {
  std::vector<evalreport::LayerResult> all;
  for (const auto& p : opt.results) {
    auto rs = evalreport::load_results(p);
    std::move(rs.begin(), rs.end(), std::back_inserter(all));
  }
  if (all.empty()) throw InvalidArgument("no results to report");
  auto files = evalreport::emit_reports(all, opt.out_dir);
  std::vector<std::string> inputs;
  for (const auto& p : opt.results) inputs.push_back(p.generic_string());
  write_run_config(opt.out_dir / "run_config.json", "report",
                   {{"results", inputs}, {"out_dir", opt.out_dir.generic_string()}});
  log(LogLevel::info, "report: wrote ", files.size(), " files to ", opt.out_dir.string());
  return files;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  fs::path spec;
  fs::path out_dir;
};

inline synth::SynthCorpus run_synth(const SynthOptions& opt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(opt.spec));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(cat(opt.spec.string(), ": ", e.what()));
  }
  const auto spec = synth::spec_from_json(j);
  auto corpus = synth::generate(spec, opt.out_dir);
  write_run_config(opt.out_dir / "run_config.json", "synth", {{"spec", synth::to_json(spec)}});
  log(LogLevel::info, "synth: ", corpus.manifest.entries.size(), " utterances, ", corpus.tokens.size(), " tokens");
  return corpus;
}

// ---------------------------------------------------------------------------
// protocol: ingest -> pool -> folds -> eval -> report for one model directory

struct ProtocolOptions {
  fs::path manifest;
  fs::path emb_dir;
  std::string tier = "tones";
  std::string inventory;
  std::string language;
  std::string model_tag;
  double min_duration = corpus::kDefaultMinDuration;
  std::vector<int> layers = parse_layers("1..12");
  std::size_t k = folds::kDefaultFolds;
  std::uint64_t seed = folds::kDefaultSeed;
  svm::SvmConfig svm;
  bool dialect = false;
  std::size_t train_dialects = 0;
  fs::path out_dir;
  unsigned jobs = 1;
};

struct ProtocolSummary {
  std::vector<evalreport::BestLayer> best;  // speaker mode first, then dialect mode
  std::vector<evalreport::AggregateResult> speaker_aggregates;
  std::vector<evalreport::AggregateResult> dialect_aggregates;
};

inline ProtocolSummary run_paper_protocol(const ProtocolOptions& opt) {
  const fs::path& dir = opt.out_dir;
  const std::string language = opt.language.empty() ? corpus::ToneInventory::from_spec(opt.inventory).language
                                                     : opt.language;
  run_ingest({opt.manifest, opt.tier, opt.min_duration, opt.inventory, language, dir / "tokens.csv",
              dir / "accounting.csv", opt.jobs});
  PoolOptions pool{dir / "tokens.csv", opt.emb_dir, opt.layers, dir / "features.tpf", opt.model_tag, language, opt.jobs};
  run_pool(pool);
  const fs::path kept = sibling(pool.out, ".tokens.csv");

  ProtocolSummary summary;
  std::vector<fs::path> result_files;
  const auto evaluate = [&](folds::FoldMode mode) {
    const std::string tag = mode == folds::FoldMode::speaker_independent ? "speaker" : "dialect";
    const fs::path plan_path = dir / ("plan_" + tag + ".json");
    run_folds({kept, mode, opt.k, opt.train_dialects, opt.seed, plan_path});
    const fs::path results_path = dir / ("results_" + tag + ".json");
    const auto results = run_eval({dir / "features.tpf", plan_path, opt.svm, opt.layers, results_path, {}, {}, {},
                                   opt.jobs});
    result_files.push_back(results_path);
    const auto aggs = evalreport::aggregate(results);
    summary.best.push_back(evalreport::best_layer(aggs));
    log(LogLevel::info, tag, "-independent best layer: ", summary.best.back().layer, " (mean macro-F1 ",
        format_fixed(summary.best.back().mean_f1, 4), ")");
    return aggs;
  };
  summary.speaker_aggregates = evaluate(folds::FoldMode::speaker_independent);
  if (opt.dialect) summary.dialect_aggregates = evaluate(folds::FoldMode::dialect_independent);
  run_report({result_files, dir / "reports"});
  write_run_config(dir / "run_config.json", "run-paper-protocol",
                   {{"manifest", opt.manifest.generic_string()},
                    {"emb_dir", opt.emb_dir.generic_string()},
                    {"tier", opt.tier},
                    {"inventory", opt.inventory},
                    {"language", language},
                    {"model_tag", opt.model_tag.empty() ? default_model_tag(opt.emb_dir) : opt.model_tag},
                    {"min_dur", opt.min_duration},
                    {"layers", opt.layers},
                    {"k", opt.k},
                    {"seed", opt.seed},
                    {"svm", svm_json(opt.svm)},
                    {"dialect", opt.dialect},
                    {"train_dialects", opt.train_dialects},
                    {"out_dir", opt.out_dir.generic_string()}});
  return summary;
}

}  // namespace toneprobe::pipeline
