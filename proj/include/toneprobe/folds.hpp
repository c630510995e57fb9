#pragma once

// Cross-validation fold plans with group integrity: speaker-independent
// stratified K-fold, and dialect-independent hold-one-dialect-out.

#include <toneprobe/common.hpp>
#include <toneprobe/corpus.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace toneprobe::folds {

using corpus::ToneToken;

inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr int kDefaultFolds = 4;

enum class FoldMode { speaker_independent, dialect_independent };

inline std::string to_string(FoldMode m) {
  return m == FoldMode::speaker_independent ? "speaker_independent" : "dialect_independent";
}

inline FoldMode parse_mode(std::string_view s) {
  if (s == "speaker_independent" || s == "speaker") return FoldMode::speaker_independent;
  if (s == "dialect_independent" || s == "dialect") return FoldMode::dialect_independent;
  throw InvalidArgument(cat("unknown fold mode '", s, "'"));
}

/// One train/evaluate split: train on `train_folds`, test on `test_fold`.
struct EvalInstance {
  std::size_t test_fold = 0;
  std::vector<std::size_t> train_folds;

  bool operator==(const EvalInstance&) const = default;
};

struct FoldPlan {
  FoldMode mode = FoldMode::speaker_independent;
  std::size_t k = 0;
  std::uint64_t seed = kDefaultSeed;
  std::size_t train_dialects = 0;  // dialect mode only; 0 = all remaining dialects
  std::map<std::string, std::size_t> assignment;  // token_id -> fold
  std::map<std::string, std::size_t> group_map;   // speaker or dialect -> fold
  std::vector<EvalInstance> instances;

  bool operator==(const FoldPlan&) const = default;
};

inline const std::string& group_of(const ToneToken& t, FoldMode mode) {
  return mode == FoldMode::speaker_independent ? t.speaker_id : t.dialect;
}

/// Sorted distinct tone labels.
inline std::vector<std::string> class_list(const std::vector<ToneToken>& tokens) {
  std::set<std::string> s;
  for (const auto& t : tokens) s.insert(t.tone);
  return {s.begin(), s.end()};
}

/// L1 distance between a fold's class proportions and the global ones.
/// An empty fold has divergence 0.
inline double l1_divergence(const std::vector<double>& counts, const std::vector<double>& global_props) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double d = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) d += std::abs(counts[c] / total - global_props[c]);
  return d;
}

namespace detail {

struct Objective {
  double max_div = 0.0;
  double sum_div = 0.0;
};

inline constexpr double kEps = 1e-12;

/// True when a is strictly better than b.
inline bool better(const Objective& a, const Objective& b) {
  if (a.max_div < b.max_div - kEps) return true;
  if (a.max_div > b.max_div + kEps) return false;
  return a.sum_div < b.sum_div - kEps;
}

inline bool same(const Objective& a, const Objective& b) { return !better(a, b) && !better(b, a); }

class FoldState {
 public:
  FoldState(std::size_t k, std::size_t n_classes, std::vector<double> global_props)
      : counts_(k, std::vector<double>(n_classes, 0.0)), sizes_(k, 0.0), global_(std::move(global_props)) {}

  void add(std::size_t f, const std::vector<double>& mix, double sign = 1.0) {
    for (std::size_t c = 0; c < mix.size(); ++c) counts_[f][c] += sign * mix[c];
    sizes_[f] += sign * std::accumulate(mix.begin(), mix.end(), 0.0);
  }

  double size(std::size_t f) const { return sizes_[f]; }
  std::size_t k() const { return counts_.size(); }

  Objective objective() const {
    Objective o;
    for (const auto& c : counts_) {
      const double d = l1_divergence(c, global_);
      o.max_div = std::max(o.max_div, d);
      o.sum_div += d;
    }
    return o;
  }

 private:
  std::vector<std::vector<double>> counts_;
  std::vector<double> sizes_;
  std::vector<double> global_;
};

inline void fill_cross_instances(FoldPlan& plan) {
  plan.instances.clear();
  for (std::size_t f = 0; f < plan.k; ++f) {
    EvalInstance inst{f, {}};
    for (std::size_t g = 0; g < plan.k; ++g)
      if (g != f) inst.train_folds.push_back(g);
    plan.instances.push_back(std::move(inst));
  }
}

}  // namespace detail

/// Speaker-disjoint folds with class proportions kept close to the global mix.
///
/// Speakers are visited largest-first (ties in a seeded shuffled order). The
/// first k seed one fold each; every later speaker joins the fold that gives
/// the smallest (max, then summed) per-fold L1 divergence, ties going to the
/// smaller fold. A local search then applies single-speaker moves and
/// pairwise swaps while they strictly reduce the same objective.
inline FoldPlan build_speaker_folds(const std::vector<ToneToken>& tokens, std::size_t k = kDefaultFolds,
                                    std::uint64_t seed = kDefaultSeed) {
  if (k < 2) throw InvalidArgument("need at least 2 folds");
  const auto classes = class_list(tokens);
  std::map<std::string, std::size_t> class_index;
  for (std::size_t c = 0; c < classes.size(); ++c) class_index[classes[c]] = c;

  std::map<std::string, std::vector<double>> mix_by_speaker;
  std::vector<double> global(classes.size(), 0.0);
  for (const auto& t : tokens) {
    auto& mix = mix_by_speaker.try_emplace(t.speaker_id, classes.size(), 0.0).first->second;
    mix[class_index[t.tone]] += 1.0;
    global[class_index[t.tone]] += 1.0;
  }
  if (mix_by_speaker.size() < k)
    throw InvalidArgument(cat("speaker-independent folds need at least ", k, " speakers, found ", mix_by_speaker.size()));
  for (auto& g : global) g /= static_cast<double>(tokens.size());

  struct Speaker {
    std::string id;
    std::vector<double> mix;
    double total;
  };
  std::vector<Speaker> speakers;
  for (auto& [id, mix] : mix_by_speaker)
    speakers.push_back({id, mix, std::accumulate(mix.begin(), mix.end(), 0.0)});
  std::mt19937_64 rng(seed);
  std::shuffle(speakers.begin(), speakers.end(), rng);
  std::stable_sort(speakers.begin(), speakers.end(),
                   [](const Speaker& a, const Speaker& b) { return a.total > b.total; });

  detail::FoldState state(k, classes.size(), global);
  std::vector<std::size_t> fold_of(speakers.size(), 0);
  std::vector<std::size_t> members(k, 0);
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    if (s < k) {
      fold_of[s] = s;
    } else {
      std::size_t best = 0;
      detail::Objective best_obj;
      double best_size = 0.0;
      for (std::size_t f = 0; f < k; ++f) {
        state.add(f, speakers[s].mix);
        const auto obj = state.objective();
        const double size = state.size(f);
        state.add(f, speakers[s].mix, -1.0);
        if (f == 0 || detail::better(obj, best_obj) || (detail::same(obj, best_obj) && size < best_size)) {
          best = f;
          best_obj = obj;
          best_size = size;
        }
      }
      fold_of[s] = best;
    }
    state.add(fold_of[s], speakers[s].mix);
    ++members[fold_of[s]];
  }

  // local search: moves, then swaps, until no strict improvement
  const std::size_t max_rounds = 10 * speakers.size() + 100;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    bool improved = false;
    const auto current = state.objective();
    for (std::size_t s = 0; s < speakers.size() && !improved; ++s) {
      const std::size_t from = fold_of[s];
      if (members[from] <= 1) continue;
      for (std::size_t to = 0; to < k && !improved; ++to) {
        if (to == from) continue;
        state.add(from, speakers[s].mix, -1.0);
        state.add(to, speakers[s].mix);
        if (detail::better(state.objective(), current)) {
          fold_of[s] = to;
          --members[from];
          ++members[to];
          improved = true;
        } else {
          state.add(to, speakers[s].mix, -1.0);
          state.add(from, speakers[s].mix);
        }
      }
    }
    for (std::size_t a = 0; a < speakers.size() && !improved; ++a) {
      for (std::size_t b = a + 1; b < speakers.size() && !improved; ++b) {
        const std::size_t fa = fold_of[a];
        const std::size_t fb = fold_of[b];
        if (fa == fb) continue;
        state.add(fa, speakers[a].mix, -1.0);
        state.add(fb, speakers[b].mix, -1.0);
        state.add(fb, speakers[a].mix);
        state.add(fa, speakers[b].mix);
        if (detail::better(state.objective(), current)) {
          std::swap(fold_of[a], fold_of[b]);
          improved = true;
        } else {
          state.add(fa, speakers[b].mix, -1.0);
          state.add(fb, speakers[a].mix, -1.0);
          state.add(fb, speakers[b].mix);
          state.add(fa, speakers[a].mix);
        }
      }
    }
    if (!improved) break;
  }

  FoldPlan plan;
  plan.mode = FoldMode::speaker_independent;
  plan.k = k;
  plan.seed = seed;
  for (std::size_t s = 0; s < speakers.size(); ++s) plan.group_map[speakers[s].id] = fold_of[s];
  for (const auto& t : tokens) plan.assignment[t.token_id] = plan.group_map[t.speaker_id];
  detail::fill_cross_instances(plan);

  // every class must reach every fold
  std::vector<std::vector<std::size_t>> seen(k, std::vector<std::size_t>(classes.size(), 0));
  for (const auto& t : tokens) ++seen[plan.assignment[t.token_id]][class_index[t.tone]];
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (seen[f][c] == 0)
        throw InvalidArgument(cat("class '", classes[c], "' cannot be represented in every fold (fold ", f,
                                  " has none); too few speakers carry it"));
  return plan;
}

/// One fold per dialect (sorted by name). With train_dialects == 0 each
/// dialect is tested against a model trained on all others; otherwise every
/// combination of exactly `train_dialects` other dialects is enumerated.
inline FoldPlan build_dialect_folds(const std::vector<ToneToken>& tokens, std::size_t train_dialects = 0) {
  std::set<std::string> names;
  for (const auto& t : tokens) names.insert(t.dialect);
  const std::size_t n = names.size();
  if (n < 2) throw InvalidArgument(cat("dialect-independent folds need at least 2 dialects, found ", n));
  if (train_dialects >= n)
    throw InvalidArgument(cat("cannot train on ", train_dialects, " dialects when only ", n, " exist"));

  FoldPlan plan;
  plan.mode = FoldMode::dialect_independent;
  plan.k = n;
  plan.seed = 0;
  plan.train_dialects = train_dialects;
  std::size_t f = 0;
  for (const auto& d : names) plan.group_map[d] = f++;
  for (const auto& t : tokens) plan.assignment[t.token_id] = plan.group_map[t.dialect];

  if (train_dialects == 0) {
    detail::fill_cross_instances(plan);
    return plan;
  }
  for (std::size_t test = 0; test < n; ++test) {
    std::vector<std::size_t> others;
    for (std::size_t g = 0; g < n; ++g)
      if (g != test) others.push_back(g);
    // lexicographic combinations of size train_dialects
    std::vector<bool> pick(others.size(), false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(train_dialects), true);
    do {
      EvalInstance inst{test, {}};
      for (std::size_t i = 0; i < others.size(); ++i)
        if (pick[i]) inst.train_folds.push_back(others[i]);
      plan.instances.push_back(std::move(inst));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// validation

struct FoldStats {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;  // [fold][class]
  std::vector<double> divergence;                // per fold, L1
  std::size_t total = 0;

  double max_divergence() const {
    return divergence.empty() ? 0.0 : *std::max_element(divergence.begin(), divergence.end());
  }
};

struct ValidationResult {
  std::optional<FoldStats> stats;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

/// Recomputes every plan invariant from scratch against `tokens`.
inline ValidationResult validate_plan(const FoldPlan& plan, const std::vector<ToneToken>& tokens) {
  ValidationResult out;
  auto& v = out.violations;
  if (plan.k < 2) v.push_back(cat("plan has k = ", plan.k, "; need at least 2 folds"));

  std::set<std::string> token_ids;
  std::map<std::string, std::set<std::size_t>> folds_of_group;
  for (const auto& t : tokens) {
    token_ids.insert(t.token_id);
    const auto it = plan.assignment.find(t.token_id);
    if (it == plan.assignment.end()) {
      v.push_back(cat("unassigned token '", t.token_id, "'"));
      continue;
    }
    if (it->second >= plan.k) {
      v.push_back(cat("token '", t.token_id, "' assigned to fold ", it->second, " outside [0, ", plan.k, ")"));
      continue;
    }
    folds_of_group[group_of(t, plan.mode)].insert(it->second);
  }
  for (const auto& [id, fold] : plan.assignment)
    if (!token_ids.count(id)) v.push_back(cat("plan assigns unknown token '", id, "'"));

  const char* group_kind = plan.mode == FoldMode::speaker_independent ? "speaker" : "dialect";
  for (const auto& [group, fs] : folds_of_group) {
    if (fs.size() > 1) v.push_back(cat(group_kind, " '", group, "' is split across ", fs.size(), " folds"));
    const auto gm = plan.group_map.find(group);
    if (gm != plan.group_map.end() && fs.size() == 1 && gm->second != *fs.begin())
      v.push_back(cat(group_kind, " '", group, "' maps to fold ", gm->second, " but its tokens are in fold ", *fs.begin()));
  }

  FoldStats stats;
  stats.classes = class_list(tokens);
  std::map<std::string, std::size_t> ci;
  for (std::size_t c = 0; c < stats.classes.size(); ++c) ci[stats.classes[c]] = c;
  stats.counts.assign(plan.k, std::vector<std::size_t>(stats.classes.size(), 0));
  std::vector<double> global(stats.classes.size(), 0.0);
  for (const auto& t : tokens) {
    global[ci[t.tone]] += 1.0;
    const auto it = plan.assignment.find(t.token_id);
    if (it == plan.assignment.end() || it->second >= plan.k) continue;
    ++stats.counts[it->second][ci[t.tone]];
    ++stats.total;
  }
  for (auto& g : global) g /= tokens.empty() ? 1.0 : static_cast<double>(tokens.size());
  for (std::size_t f = 0; f < plan.k; ++f) {
    std::vector<double> c(stats.counts[f].begin(), stats.counts[f].end());
    stats.divergence.push_back(l1_divergence(c, global));
    const bool empty = std::all_of(c.begin(), c.end(), [](double x) { return x == 0.0; });
    if (empty) v.push_back(cat("fold ", f, " is empty"));
    if (plan.mode == FoldMode::speaker_independent && !empty)
      for (std::size_t k = 0; k < c.size(); ++k)
        if (c[k] == 0.0) v.push_back(cat("fold ", f, " is missing class '", stats.classes[k], "'"));
  }
  for (const auto& inst : plan.instances) {
    if (inst.test_fold >= plan.k) v.push_back(cat("instance tests on fold ", inst.test_fold, " outside the plan"));
    for (const auto f : inst.train_folds) {
      if (f >= plan.k) v.push_back(cat("instance trains on fold ", f, " outside the plan"));
      if (f == inst.test_fold) v.push_back(cat("instance trains and tests on fold ", f));
    }
  }
  if (v.empty()) out.stats = std::move(stats);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json j;
  j["mode"] = to_string(plan.mode);
  j["k"] = plan.k;
  j["seed"] = plan.seed;
  j["train_dialects"] = plan.train_dialects;
  j["groups"] = plan.group_map;
  j["tokens"] = plan.assignment;
  auto inst = nlohmann::json::array();
  for (const auto& i : plan.instances) inst.push_back({{"test", i.test_fold}, {"train", i.train_folds}});
  j["instances"] = std::move(inst);
  return j;
}

inline std::string serialize_plan(const FoldPlan& plan) { return to_json(plan).dump(2) + "\n"; }

inline FoldPlan plan_from_json(const nlohmann::json& j) {
  try {
    FoldPlan plan;
    plan.mode = parse_mode(j.at("mode").get<std::string>());
    plan.k = j.at("k").get<std::size_t>();
    plan.seed = j.value("seed", std::uint64_t{0});
    plan.train_dialects = j.value("train_dialects", std::size_t{0});
    plan.group_map = j.at("groups").get<std::map<std::string, std::size_t>>();
    plan.assignment = j.at("tokens").get<std::map<std::string, std::size_t>>();
    if (j.contains("instances")) {
      for (const auto& i : j.at("instances"))
        plan.instances.push_back({i.at("test").get<std::size_t>(), i.at("train").get<std::vector<std::size_t>>()});
    } else {
      detail::fill_cross_instances(plan);
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(cat("malformed fold plan: ", e.what()));
  }
}

inline FoldPlan load_plan(const std::filesystem::path& path) {
  try {
    return plan_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(cat(path.string(), ": ", e.what()));
  }
}

}  // namespace toneprobe::folds
