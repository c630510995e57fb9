// toneprobe: layer-wise tone probing of speech model embeddings.

#include <toneprobe/pipeline.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace tp = toneprobe;
namespace pl = toneprobe::pipeline;

namespace {

/// Seed precedence: explicit flag, then TONEPROBE_SEED, then the default.
std::uint64_t effective_seed(const CLI::Option* flag, std::uint64_t value) {
  if (flag->count() > 0) return value;
  if (const char* env = std::getenv("TONEPROBE_SEED"); env && *env) {
    const auto parsed = tp::parse_int<std::uint64_t>(env);
    if (!parsed) throw tp::InvalidArgument(tp::cat("TONEPROBE_SEED is not an unsigned integer: '", env, "'"));
    return *parsed;
  }
  return value;
}

void add_svm_flags(CLI::App* cmd, tp::svm::SvmConfig& svm, bool& no_standardize) {
  cmd->add_option("--C", svm.C, "SVM regularization constant")->capture_default_str();
  cmd->add_option("--tol", svm.tolerance, "dual coordinate descent tolerance")->capture_default_str();
  cmd->add_option("--max-epochs", svm.max_epochs, "maximum solver epochs")->capture_default_str();
  cmd->add_flag("--no-standardize", no_standardize, "train on raw features");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toneprobe: probe speech-model layers for lexical tone"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with flag values");
  unsigned jobs = tp::default_jobs();
  bool verbose = false;
  bool quiet = false;
  app.add_option("--jobs,-j", jobs, "worker threads (wall time only)")->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", verbose, "debug logging");
  app.add_flag("--quiet,-q", quiet, "warnings and errors only");

  // ingest
  pl::IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "TextGrids -> tone token CSV + accounting");
  c_ingest->add_option("--manifest", ingest.manifest, "manifest CSV")->required();
  c_ingest->add_option("--tier", ingest.tier, "tone tier name")->capture_default_str();
  c_ingest->add_option("--min-dur", ingest.min_duration, "minimum token duration (s)")->capture_default_str();
  c_ingest->add_option("--inventory", ingest.inventory, "angami|ao|mizo or comma-separated labels")->required();
  c_ingest->add_option("--language", ingest.language, "language tag (default: from inventory)");
  c_ingest->add_option("--out", ingest.out, "token CSV")->required();
  c_ingest->add_option("--accounting", ingest.accounting_out, "accounting CSV (default: <out>.accounting.csv)");

  // pool
  pl::PoolOptions pool;
  std::string pool_layers = "1..12";
  auto* c_pool = app.add_subcommand("pool", "mean-pool embeddings per token and layer");
  c_pool->add_option("--tokens", pool.tokens, "token CSV")->required();
  c_pool->add_option("--emb-dir", pool.emb_dir, "directory of .tpeb files for one model")->required();
  c_pool->add_option("--layers", pool_layers, "layers, e.g. 1..12 or 1,4,8")->capture_default_str();
  c_pool->add_option("--model-tag", pool.model_tag, "model tag (default: emb-dir name)");
  c_pool->add_option("--language", pool.language, "language tag");
  c_pool->add_option("--out", pool.out, "feature table (.tpf)")->required();

  // folds
  pl::FoldsOptions folds;
  std::string folds_mode = "speaker";
  auto* c_folds = app.add_subcommand("folds", "build a speaker- or dialect-independent fold plan");
  c_folds->add_option("--tokens", folds.tokens, "token CSV")->required();
  c_folds->add_option("--mode", folds_mode, "speaker|dialect")->capture_default_str();
  c_folds->add_option("--k", folds.k, "number of speaker folds")->capture_default_str();
  c_folds->add_option("--train-dialects", folds.train_dialects, "dialects per training set (0 = all others)")
      ->capture_default_str();
  auto* folds_seed = c_folds->add_option("--seed", folds.seed, "fold assignment seed")->capture_default_str();
  c_folds->add_option("--out", folds.out, "fold plan JSON")->required();

  // eval
  pl::EvalOptions eval;
  bool eval_no_std = false;
  std::string eval_layers;
  auto* c_eval = app.add_subcommand("eval", "train and score the probe for every layer and fold");
  c_eval->add_option("--features", eval.features, "feature table (.tpf)")->required();
  c_eval->add_option("--plan", eval.plan, "fold plan JSON")->required();
  add_svm_flags(c_eval, eval.svm, eval_no_std);
  auto* eval_seed = c_eval->add_option("--seed", eval.svm.seed, "solver seed")->capture_default_str();
  c_eval->add_option("--layers", eval_layers, "subset of layers (default: all in the table)");
  c_eval->add_option("--model-tag", eval.model_tag, "override model tag");
  c_eval->add_option("--language", eval.language, "override language tag");
  c_eval->add_option("--models-out", eval.models_out, "directory for per-cell model JSON");
  c_eval->add_option("--out", eval.out, "results JSON")->required();

  // report
  pl::ReportOptions report;
  auto* c_report = app.add_subcommand("report", "aggregate results into CSV tables and SVG figures");
  c_report->add_option("--results", report.results, "results JSON (repeatable)")->required();
  c_report->add_option("--out-dir", report.out_dir, "output directory")->required();

  // synth
  pl::SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus with known structure");
  c_synth->add_option("--spec", synth.spec, "generator spec JSON")->required();
  c_synth->add_option("--out-dir", synth.out_dir, "output directory")->required();

  // run-paper-protocol
  pl::ProtocolOptions proto;
  bool proto_no_std = false;
  std::string proto_layers = "1..12";
  auto* c_proto = app.add_subcommand("run-paper-protocol", "ingest, pool, folds, eval and report in one go");
  c_proto->add_option("--manifest", proto.manifest, "manifest CSV")->required();
  c_proto->add_option("--emb-dir", proto.emb_dir, "directory of .tpeb files for one model")->required();
  c_proto->add_option("--tier", proto.tier, "tone tier name")->capture_default_str();
  c_proto->add_option("--inventory", proto.inventory, "angami|ao|mizo or comma-separated labels")->required();
  c_proto->add_option("--language", proto.language, "language tag");
  c_proto->add_option("--model-tag", proto.model_tag, "model tag (default: emb-dir name)");
  c_proto->add_option("--min-dur", proto.min_duration, "minimum token duration (s)")->capture_default_str();
  c_proto->add_option("--layers", proto_layers, "layers")->capture_default_str();
  c_proto->add_option("--k", proto.k, "number of speaker folds")->capture_default_str();
  auto* proto_seed = c_proto->add_option("--seed", proto.seed, "fold and solver seed")->capture_default_str();
  add_svm_flags(c_proto, proto.svm, proto_no_std);
  c_proto->add_flag("--dialect", proto.dialect, "also run the dialect-independent setting");
  c_proto->add_option("--train-dialects", proto.train_dialects, "dialects per training set (0 = all others)")
      ->capture_default_str();
  c_proto->add_option("--out-dir", proto.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (verbose) tp::log_threshold() = tp::LogLevel::debug;
  if (quiet) tp::log_threshold() = tp::LogLevel::warn;

  try {
    if (*c_ingest) {
      ingest.jobs = jobs;
      pl::run_ingest(ingest);
    } else if (*c_pool) {
      pool.layers = pl::parse_layers(pool_layers);
      pool.jobs = jobs;
      pl::run_pool(pool);
    } else if (*c_folds) {
      folds.mode = tp::folds::parse_mode(folds_mode);
      folds.seed = effective_seed(folds_seed, folds.seed);
      pl::run_folds(folds);
    } else if (*c_eval) {
      eval.svm.standardize = !eval_no_std;
      eval.svm.seed = effective_seed(eval_seed, eval.svm.seed);
      if (!eval_layers.empty()) eval.layers = pl::parse_layers(eval_layers);
      eval.jobs = jobs;
      pl::run_eval(eval);
    } else if (*c_report) {
      pl::run_report(report);
    } else if (*c_synth) {
      pl::run_synth(synth);
    } else if (*c_proto) {
      proto.seed = effective_seed(proto_seed, proto.seed);
      proto.svm.seed = proto.seed;
      proto.svm.standardize = !proto_no_std;
      proto.layers = pl::parse_layers(proto_layers);
      proto.jobs = jobs;
      const auto summary = pl::run_paper_protocol(proto);
      std::cout << "best_layer speaker_independent " << summary.best.front().layer << " "
                << tp::format_fixed(summary.best.front().mean_f1, 6) << "\n";
      if (summary.best.size() > 1)
        std::cout << "best_layer dialect_independent " << summary.best.back().layer << " "
                  << tp::format_fixed(summary.best.back().mean_f1, 6) << "\n";
    }
  } catch (const std::exception& e) {
    tp::log(tp::LogLevel::error, e.what());
    return 1;
  }
  return 0;
}
