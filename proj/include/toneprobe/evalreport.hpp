#pragma once

// Layer x fold probing sweep, classification metrics, fold aggregation and
// report emission (CSV tables plus static SVG figures).

#include <toneprobe/common.hpp>
#include <toneprobe/embstore.hpp>
#include <toneprobe/folds.hpp>
#include <toneprobe/svm.hpp>

#include <json.hpp>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace toneprobe::evalreport {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// metrics

struct Metrics {
  std::vector<std::vector<std::size_t>> confusion;  // rows = true, columns = predicted
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
};

/// Confusion matrix, accuracy, macro-F1 (absent classes score F1 = 0) and
/// per-class recall (0 for an empty true row).
inline Metrics confusion_and_metrics(const std::vector<std::string>& truth, const std::vector<std::string>& predicted,
                                     const std::vector<std::string>& classes) {
  if (truth.size() != predicted.size())
    throw InvalidArgument(cat("label lists differ in length (", truth.size(), " vs ", predicted.size(), ")"));
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(classes[c], c);
  const auto lookup = [&](const std::string& label) {
    const auto it = index.find(label);
    if (it == index.end()) throw InvalidArgument(cat("unknown label '", label, "'"));
    return it->second;
  };

  const std::size_t k = classes.size();
  Metrics m;
  m.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++m.confusion[lookup(truth[i])][lookup(predicted[i])];

  std::size_t diag = 0;
  for (std::size_t c = 0; c < k; ++c) diag += m.confusion[c][c];
  m.accuracy = truth.empty() ? 0.0 : static_cast<double>(diag) / static_cast<double>(truth.size());

  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0;
    std::size_t col = 0;
    for (std::size_t o = 0; o < k; ++o) {
      row += m.confusion[c][o];
      col += m.confusion[o][c];
    }
    const double tp = static_cast<double>(m.confusion[c][c]);
    const double recall = row ? tp / static_cast<double>(row) : 0.0;
    const double precision = col ? tp / static_cast<double>(col) : 0.0;
    const double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.per_class_recall.push_back(recall);
    m.per_class_f1.push_back(f1);
    f1_sum += f1;
  }
  m.macro_f1 = k ? f1_sum / static_cast<double>(k) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// results

struct LayerResult {
  std::string model_tag;
  std::string language;
  std::string mode;
  int layer = 0;
  std::size_t fold = 0;  // evaluation instance index
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> per_class_recall;

  auto key() const { return std::tie(model_tag, language, mode, layer, fold); }
};

struct AggregateResult {
  std::string model_tag;
  std::string language;
  std::string mode;
  int layer = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  std::size_t n_folds = 0;
  bool single_fold = false;  // std undefined, reported as 0
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and sample standard deviation (n - 1 divisor; 0 for a single value).
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (const double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

/// Groups by (model, language, mode, layer), sorted by that key.
inline std::vector<AggregateResult> aggregate(const std::vector<LayerResult>& results) {
  std::map<std::tuple<std::string, std::string, std::string, int>, std::vector<const LayerResult*>> groups;
  for (const auto& r : results) groups[{r.model_tag, r.language, r.mode, r.layer}].push_back(&r);
  std::vector<AggregateResult> out;
  for (const auto& [key, rs] : groups) {
    // fold order must not matter, so sum in a canonical order
    std::vector<const LayerResult*> sorted = rs;
    std::sort(sorted.begin(), sorted.end(), [](const LayerResult* a, const LayerResult* b) {
      return std::tie(a->fold, a->accuracy, a->macro_f1) < std::tie(b->fold, b->accuracy, b->macro_f1);
    });
    std::vector<double> acc;
    std::vector<double> f1;
    for (const auto* r : sorted) {
      acc.push_back(r->accuracy);
      f1.push_back(r->macro_f1);
    }
    const auto a = mean_std(acc);
    const auto f = mean_std(f1);
    out.push_back(AggregateResult{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), a.mean,
                                  a.std, f.mean, f.std, sorted.size(), sorted.size() < 2});
  }
  return out;
}

struct BestLayer {
  int layer = 0;
  double mean_f1 = 0.0;
};

/// Highest mean F1; ties go to the lowest layer.
inline BestLayer best_layer(const std::vector<AggregateResult>& aggregates) {
  if (aggregates.empty()) throw InvalidArgument("best_layer needs at least one layer");
  const AggregateResult* best = nullptr;
  for (const auto& a : aggregates)
    if (!best || a.mean_f1 > best->mean_f1 || (a.mean_f1 == best->mean_f1 && a.layer < best->layer)) best = &a;
  return {best->layer, best->mean_f1};
}

// ---------------------------------------------------------------------------
// sweep

struct SweepConfig {
  std::vector<int> layers;  // empty = every layer in the table
  svm::SvmConfig svm;
  unsigned jobs = 1;
  std::string model_tag;  // empty = take from the table
  std::string language;   // empty = take from the table
};

namespace detail {

struct LayerIndex {
  std::vector<const embstore::PooledFeature*> rows;  // plan token order
};

/// Feature rows of one layer, one per plan token, in token-id order.
inline LayerIndex index_layer(const embstore::FeatureTable& table, const folds::FoldPlan& plan, int layer) {
  std::map<std::string_view, const embstore::PooledFeature*> by_token;
  for (const auto& r : table.rows)
    if (r.layer == layer) by_token.emplace(r.token_id, &r);
  LayerIndex idx;
  for (const auto& [token, fold] : plan.assignment) {
    const auto it = by_token.find(token);
    if (it == by_token.end())
      throw InvalidArgument(cat("missing features for plan token '", token, "' at layer ", layer));
    idx.rows.push_back(it->second);
  }
  return idx;
}

inline svm::Matrix to_matrix(const std::vector<const embstore::PooledFeature*>& rows, std::size_t dim) {
  svm::Matrix m(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = rows[i]->vector[j];
  return m;
}

struct Split {
  std::vector<const embstore::PooledFeature*> train;
  std::vector<const embstore::PooledFeature*> test;
};

inline Split split_rows(const LayerIndex& idx, const folds::FoldPlan& plan, const folds::EvalInstance& inst) {
  Split s;
  std::size_t i = 0;
  for (const auto& [token, fold] : plan.assignment) {
    const auto* row = idx.rows[i++];
    if (fold == inst.test_fold)
      s.test.push_back(row);
    else if (std::find(inst.train_folds.begin(), inst.train_folds.end(), fold) != inst.train_folds.end())
      s.train.push_back(row);
  }
  return s;
}

inline std::vector<std::string> labels_of(const std::vector<const embstore::PooledFeature*>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto* r : rows) out.push_back(r->tone);
  return out;
}

inline std::vector<std::string> plan_classes(const embstore::FeatureTable& table, const folds::FoldPlan& plan) {
  std::set<std::string> s;
  for (const auto& r : table.rows)
    if (plan.assignment.count(r.token_id)) s.insert(r.tone);
  return {s.begin(), s.end()};
}

}  // namespace detail

/// Trains the probe for one (layer, instance) cell using training-fold rows only.
inline svm::OvrModel train_cell(const embstore::FeatureTable& table, const folds::FoldPlan& plan, int layer,
                                std::size_t instance, const svm::SvmConfig& cfg) {
  const auto idx = detail::index_layer(table, plan, layer);
  const auto split = detail::split_rows(idx, plan, plan.instances.at(instance));
  return svm::train_ovr(detail::to_matrix(split.train, table.dim), detail::labels_of(split.train), cfg,
                        detail::plan_classes(table, plan));
}

/// For each requested layer and each plan instance: train on the instance's
/// training folds, evaluate on its test fold. Output is sorted by
/// (model, language, mode, layer, fold) and does not depend on `jobs`.
inline std::vector<LayerResult> run_sweep(const embstore::FeatureTable& table, const folds::FoldPlan& plan,
                                          const SweepConfig& cfg) {
  const std::vector<int> layers = cfg.layers.empty() ? table.layers() : cfg.layers;
  if (layers.empty()) throw InvalidArgument("no layers to evaluate");
  if (plan.instances.empty()) throw InvalidArgument("fold plan has no evaluation instances");
  const auto classes = detail::plan_classes(table, plan);
  const std::string model_tag = cfg.model_tag.empty() ? table.model_tag : cfg.model_tag;
  const std::string language = cfg.language.empty() ? table.language : cfg.language;

  std::vector<detail::LayerIndex> indices(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) indices[l] = detail::index_layer(table, plan, layers[l]);

  const std::size_t n_inst = plan.instances.size();
  std::vector<LayerResult> results(layers.size() * n_inst);
  parallel_for(results.size(), cfg.jobs, [&](std::size_t task) {
    const std::size_t l = task / n_inst;
    const std::size_t f = task % n_inst;
    const auto split = detail::split_rows(indices[l], plan, plan.instances[f]);
    if (split.test.empty()) throw InvalidArgument(cat("evaluation instance ", f, " has an empty test fold"));
    const auto model = svm::train_ovr(detail::to_matrix(split.train, table.dim), detail::labels_of(split.train),
                                      cfg.svm, classes);
    const auto predicted = model.predict(detail::to_matrix(split.test, table.dim));
    const auto m = confusion_and_metrics(detail::labels_of(split.test), predicted, classes);
    results[task] = LayerResult{model_tag, language, folds::to_string(plan.mode), layers[l], f, split.test.size(),
                                m.accuracy, m.macro_f1, classes, m.confusion, m.per_class_recall};
  });
  std::sort(results.begin(), results.end(), [](const LayerResult& a, const LayerResult& b) { return a.key() < b.key(); });
  return results;
}

// ---------------------------------------------------------------------------
// results file (JSON)

inline nlohmann::json to_json(const LayerResult& r) {
  return {{"model_tag", r.model_tag}, {"language", r.language},     {"mode", r.mode},
          {"layer", r.layer},         {"fold", r.fold},             {"n_test", r.n_test},
          {"accuracy", r.accuracy},   {"macro_f1", r.macro_f1},     {"classes", r.classes},
          {"confusion", r.confusion}, {"per_class_recall", r.per_class_recall}};
}

inline LayerResult layer_result_from_json(const nlohmann::json& j) {
  LayerResult r;
  r.model_tag = j.at("model_tag").get<std::string>();
  r.language = j.at("language").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.layer = j.at("layer").get<int>();
  r.fold = j.at("fold").get<std::size_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.classes = j.at("classes").get<std::vector<std::string>>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
  return r;
}

inline std::string serialize_results(const std::vector<LayerResult>& results, const nlohmann::json& metadata = {}) {
  nlohmann::json j;
  j["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  auto arr = nlohmann::json::array();
  for (const auto& r : results) arr.push_back(to_json(r));
  j["results"] = std::move(arr);
  return j.dump(1) + "\n";
}

inline std::vector<LayerResult> load_results(const fs::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    std::vector<LayerResult> out;
    for (const auto& r : j.at("results")) out.push_back(layer_result_from_json(r));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(cat(path.string(), ": malformed results file: ", e.what()));
  }
}

// ---------------------------------------------------------------------------
// tables

inline std::string long_csv(const std::vector<LayerResult>& results) {
  std::ostringstream os;
  os << "model_tag,language,mode,layer,fold,n_test,accuracy,macro_f1\n";
  for (const auto& r : results)
    write_csv_row(os, {r.model_tag, r.language, r.mode, std::to_string(r.layer), std::to_string(r.fold),
                       std::to_string(r.n_test), format_fixed(r.accuracy, 6), format_fixed(r.macro_f1, 6)});
  return os.str();
}

inline std::string aggregate_csv(const std::vector<AggregateResult>& aggs) {
  std::ostringstream os;
  os << "model_tag,language,mode,layer,mean_accuracy,std_accuracy,mean_f1,std_f1,n_folds\n";
  for (const auto& a : aggs)
    write_csv_row(os, {a.model_tag, a.language, a.mode, std::to_string(a.layer), format_fixed(a.mean_accuracy, 6),
                       format_fixed(a.std_accuracy, 6), format_fixed(a.mean_f1, 6), format_fixed(a.std_f1, 6),
                       std::to_string(a.n_folds)});
  return os.str();
}

struct HeatmapCell {
  std::string model_tag;
  std::string language;
  std::string mode;
  std::string tone;
  int layer = 0;
  double accuracy_pct = 0.0;
};

/// Per-(tone, layer) recall x 100, averaged over the folds whose test set
/// contains that tone. Tones follow the results' class order.
inline std::vector<HeatmapCell> tone_layer_heatmap(const std::vector<LayerResult>& results) {
  std::map<std::tuple<std::string, std::string, std::string, std::size_t, int>, std::vector<double>> cells;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<std::string>> classes;
  for (const auto& r : results) {
    classes.try_emplace({r.model_tag, r.language, r.mode}, r.classes);
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
      std::size_t row = 0;
      for (const auto v : r.confusion[c]) row += v;
      if (row == 0) continue;
      cells[{r.model_tag, r.language, r.mode, c, r.layer}].push_back(r.per_class_recall[c]);
    }
  }
  std::vector<HeatmapCell> out;
  for (const auto& [key, recalls] : cells) {
    const auto& [model, lang, mode, c, layer] = key;
    double sum = 0.0;
    for (const double v : recalls) sum += v;
    out.push_back(HeatmapCell{model, lang, mode, classes[{model, lang, mode}][c], layer,
                              100.0 * sum / static_cast<double>(recalls.size())});
  }
  return out;
}

inline std::string heatmap_csv(const std::vector<HeatmapCell>& cells) {
  std::ostringstream os;
  os << "model_tag,language,tone,layer,accuracy_pct\n";
  for (const auto& c : cells)
    write_csv_row(os, {c.model_tag, c.language, c.tone, std::to_string(c.layer), format_fixed(c.accuracy_pct, 4)});
  return os.str();
}

// ---------------------------------------------------------------------------
// SVG figures

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string file_safe(std::string_view s) {
  std::string out;
  for (const char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_');
  return out.empty() ? "_" : out;
}

inline const char* palette(std::size_t i) {
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};
  return colors[i % 7];
}

inline std::string num(double v) { return format_fixed(v, 2); }

inline std::string star_path(double cx, double cy, double r) {
  std::string d;
  for (int i = 0; i < 10; ++i) {
    const double radius = (i % 2 == 0) ? r : r * 0.45;
    const double a = -M_PI / 2 + i * M_PI / 5;
    d += (i == 0 ? "M" : "L") + num(cx + radius * std::cos(a)) + "," + num(cy + radius * std::sin(a));
  }
  return d + "Z";
}

}  // namespace detail

/// Mean macro-F1 per layer, one line per language, +-1 std band and a star on
/// each language's best layer.
inline std::string layer_curve_svg(const std::vector<AggregateResult>& aggs, const std::string& title) {
  using detail::num;
  std::map<std::string, std::vector<const AggregateResult*>> by_lang;
  int lo = 1 << 30;
  int hi = -(1 << 30);
  for (const auto& a : aggs) {
    by_lang[a.language].push_back(&a);
    lo = std::min(lo, a.layer);
    hi = std::max(hi, a.layer);
  }
  const double w = 640, h = 400, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  const auto px = [&](int layer) { return left + (hi == lo ? pw / 2 : pw * (layer - lo) / double(hi - lo)); };
  const auto py = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::xml_escape(title)
     << "</text>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double y = py(t / 10.0);
    os << "<line x1=\"" << left << "\" y1=\"" << num(y) << "\" x2=\"" << left + pw << "\" y2=\"" << num(y)
       << "\" stroke=\"#e0e0e0\"/>\n<text x=\"" << left - 8 << "\" y=\"" << num(y + 4)
       << "\" text-anchor=\"end\">" << num(t / 10.0) << "</text>\n";
  }
  for (int l = lo; l <= hi; ++l)
    os << "<text x=\"" << num(px(l)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << l << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">layer</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">macro-F1</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  std::size_t series = 0;
  for (const auto& [lang, rows] : by_lang) {
    std::vector<const AggregateResult*> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->layer < b->layer; });
    const char* color = detail::palette(series);
    std::string band;
    for (const auto* a : sorted) band += num(px(a->layer)) + "," + num(py(a->mean_f1 + a->std_f1)) + " ";
    for (auto it = sorted.rbegin(); it != sorted.rend(); ++it)
      band += num(px((*it)->layer)) + "," + num(py((*it)->mean_f1 - (*it)->std_f1)) + " ";
    os << "<polygon points=\"" << band << "\" fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    std::string line;
    for (const auto* a : sorted) line += num(px(a->layer)) + "," + num(py(a->mean_f1)) + " ";
    os << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    std::vector<AggregateResult> plain;
    for (const auto* a : sorted) plain.push_back(*a);
    const auto best = best_layer(plain);
    os << "<path d=\"" << detail::star_path(px(best.layer), py(best.mean_f1), 9) << "\" fill=\"" << color
       << "\" stroke=\"black\" stroke-width=\"0.6\"><title>best layer " << best.layer << ": " << num(best.mean_f1)
       << "</title></path>\n";
    const double ly = top + 14 + 20.0 * static_cast<double>(series);
    os << "<line x1=\"" << left + pw + 14 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 38 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n<text x=\"" << left + pw + 44 << "\" y=\"" << ly + 4
       << "\">" << detail::xml_escape(lang) << " (best " << best.layer << ")</text>\n";
    ++series;
  }
  os << "</svg>\n";
  return os.str();
}

/// Tone x layer grid of accuracy percentages for one model/language/mode.
inline std::string heatmap_svg(const std::vector<HeatmapCell>& cells, const std::string& title) {
  using detail::num;
  std::vector<std::string> tones;
  std::set<int> layer_set;
  for (const auto& c : cells) {
    if (std::find(tones.begin(), tones.end(), c.tone) == tones.end()) tones.push_back(c.tone);
    layer_set.insert(c.layer);
  }
  std::sort(tones.begin(), tones.end());
  const std::vector<int> layers(layer_set.begin(), layer_set.end());
  const double cell = 40, left = 60, top = 50;
  const double w = left + cell * static_cast<double>(layers.size()) + 20;
  const double h = top + cell * static_cast<double>(tones.size()) + 50;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::xml_escape(title)
     << "</text>\n";
  for (const auto& c : cells) {
    const auto ti = static_cast<double>(std::find(tones.begin(), tones.end(), c.tone) - tones.begin());
    const auto li = static_cast<double>(std::find(layers.begin(), layers.end(), c.layer) - layers.begin());
    const double v = std::clamp(c.accuracy_pct / 100.0, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(247 - v * (247 - 8)));
    const int g = static_cast<int>(std::lround(251 - v * (251 - 48)));
    const int b = static_cast<int>(std::lround(255 - v * (255 - 107)));
    const double x = left + li * cell;
    const double y = top + ti * cell;
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << cell << "\" height=\"" << cell
       << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\" stroke=\"white\"/>\n";
    os << "<text x=\"" << num(x + cell / 2) << "\" y=\"" << num(y + cell / 2 + 4) << "\" text-anchor=\"middle\" fill=\""
       << (v > 0.55 ? "white" : "black") << "\">" << format_fixed(c.accuracy_pct, 0) << "</text>\n";
  }
  for (std::size_t t = 0; t < tones.size(); ++t)
    os << "<text x=\"" << left - 8 << "\" y=\"" << num(top + cell * static_cast<double>(t) + cell / 2 + 4)
       << "\" text-anchor=\"end\">" << detail::xml_escape(tones[t]) << "</text>\n";
  for (std::size_t l = 0; l < layers.size(); ++l)
    os << "<text x=\"" << num(left + cell * static_cast<double>(l) + cell / 2) << "\" y=\""
       << num(top + cell * static_cast<double>(tones.size()) + 16) << "\" text-anchor=\"middle\">" << layers[l]
       << "</text>\n";
  os << "<text x=\"" << num(left + cell * static_cast<double>(layers.size()) / 2) << "\" y=\"" << num(h - 10)
     << "\" text-anchor=\"middle\">layer</text>\n";
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// emission

/// Writes results_long.csv, aggregate.csv, best_layers.csv, and per model and
/// mode a layer-curve SVG, a heatmap CSV and one heatmap SVG per language.
/// Returns the written paths in write order.
inline std::vector<fs::path> emit_reports(const std::vector<LayerResult>& results, const fs::path& out_dir) {
  if (results.empty()) throw InvalidArgument("no results to report");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw Error(cat("cannot create output directory '", out_dir.string(), "'"));

  std::vector<LayerResult> sorted = results;
  std::sort(sorted.begin(), sorted.end(), [](const LayerResult& a, const LayerResult& b) { return a.key() < b.key(); });
  const auto aggs = aggregate(sorted);
  const auto cells = tone_layer_heatmap(sorted);

  std::vector<fs::path> written;
  const auto emit = [&](const fs::path& p, const std::string& content) {
    write_file(p, content);
    written.push_back(p);
  };
  emit(out_dir / "results_long.csv", long_csv(sorted));
  emit(out_dir / "aggregate.csv", aggregate_csv(aggs));

  std::map<std::tuple<std::string, std::string, std::string>, std::vector<AggregateResult>> per_curve;
  for (const auto& a : aggs) per_curve[{a.model_tag, a.language, a.mode}].push_back(a);
  std::ostringstream best;
  best << "model_tag,language,mode,layer,mean_f1\n";
  for (const auto& [key, group] : per_curve) {
    const auto b = best_layer(group);
    write_csv_row(best, {std::get<0>(key), std::get<1>(key), std::get<2>(key), std::to_string(b.layer),
                         format_fixed(b.mean_f1, 6)});
  }
  emit(out_dir / "best_layers.csv", best.str());

  std::map<std::pair<std::string, std::string>, std::vector<AggregateResult>> per_model;
  for (const auto& a : aggs) per_model[{a.model_tag, a.mode}].push_back(a);
  for (const auto& [key, group] : per_model) {
    const auto stem = detail::file_safe(key.first) + "_" + detail::file_safe(key.second);
    emit(out_dir / ("layer_curve_" + stem + ".svg"),
         layer_curve_svg(group, key.first + " (" + key.second + "): layer-wise macro-F1"));

    std::vector<HeatmapCell> model_cells;
    for (const auto& c : cells)
      if (c.model_tag == key.first && c.mode == key.second) model_cells.push_back(c);
    emit(out_dir / ("heatmap_" + stem + ".csv"), heatmap_csv(model_cells));
    std::map<std::string, std::vector<HeatmapCell>> by_lang;
    for (const auto& c : model_cells) by_lang[c.language].push_back(c);
    for (const auto& [lang, lang_cells] : by_lang)
      emit(out_dir / ("heatmap_" + detail::file_safe(key.first) + "_" + detail::file_safe(lang) + "_" +
                      detail::file_safe(key.second) + ".svg"),
           heatmap_svg(lang_cells, key.first + " / " + lang + " (" + key.second + "): tone accuracy %"));
  }
  return written;
}

}  // namespace toneprobe::evalreport
