#pragma once

// Reference computations for the test suites. These deliberately avoid the
// library's own helpers: straight loops, long double where it matters, and
// no shared code with the code under test.

#include <toneprobe/corpus.hpp>
#include <toneprobe/embstore.hpp>
#include <toneprobe/textgrid.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// frames and pooling

/// Frame indices whose centre lies in [start, end), found by scanning.
inline std::vector<std::size_t> frames_in(double start, double end, double stride, double offset,
                                          std::size_t num_frames) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_frames; ++i) {
    const long double centre = static_cast<long double>(offset) + static_cast<long double>(i) * stride +
                               static_cast<long double>(stride) / 2;
    if (centre >= start && centre < end) out.push_back(i);
  }
  return out;
}

/// Elementwise mean of the listed frames, accumulated in long double.
inline std::vector<double> brute_mean(const toneprobe::embstore::EmbeddingFile& f, int layer,
                                      const std::vector<std::size_t>& frames) {
  std::vector<long double> acc(f.dim, 0.0L);
  const std::size_t block = static_cast<std::size_t>(layer - (f.has_layer0 ? 0 : 1));
  for (const auto i : frames)
    for (std::size_t j = 0; j < f.dim; ++j)
      acc[j] += f.data[block * f.num_frames * f.dim + i * f.dim + j];
  std::vector<double> out(f.dim);
  for (std::size_t j = 0; j < f.dim; ++j) out[j] = static_cast<double>(acc[j] / frames.size());
  return out;
}

// ---------------------------------------------------------------------------
// SVM dual QP

struct QpSolution {
  std::vector<long double> alpha;
  std::vector<long double> w;  // augmented: last entry is the bias
  long double primal = 0.0L;
  long double dual = 0.0L;
};

/// Solves max sum(a) - 1/2 a'Qa, 0 <= a <= C, Q_ij = y_i y_j (x_i.x_j + 1),
/// by accelerated projected gradient with restarts, then reports the primal
/// objective of w = sum a_i y_i [x_i, 1].
inline QpSolution solve_dual_qp(const std::vector<std::vector<double>>& x, const std::vector<int>& y, double C,
                                std::size_t iterations = 200000) {
  const std::size_t n = x.size();
  const std::size_t d = n ? x[0].size() : 0;
  std::vector<std::vector<long double>> q(n, std::vector<long double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double dot = 1.0L;
      for (std::size_t k = 0; k < d; ++k) dot += static_cast<long double>(x[i][k]) * x[j][k];
      q[i][j] = y[i] * y[j] * dot;
    }
  // Lipschitz bound: largest row abs sum
  long double lip = 0.0L;
  for (const auto& row : q) {
    long double s = 0.0L;
    for (const auto v : row) s += std::fabs(v);
    lip = std::max(lip, s);
  }
  const long double step = 1.0L / std::max(lip, 1e-12L);
  const auto grad = [&](const std::vector<long double>& a) {
    std::vector<long double> g(n, 1.0L);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i] -= q[i][j] * a[j];
    return g;
  };
  const auto dual_value = [&](const std::vector<long double>& a) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      s += a[i];
      for (std::size_t j = 0; j < n; ++j) s -= 0.5L * a[i] * q[i][j] * a[j];
    }
    return s;
  };
  const auto project = [&](long double v) { return std::clamp(v, 0.0L, static_cast<long double>(C)); };

  std::vector<long double> a(n, 0.0L), prev = a, z = a;
  long double t = 1.0L;
  long double best = dual_value(a);
  for (std::size_t it = 0; it < iterations; ++it) {
    const auto g = grad(z);
    std::vector<long double> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = project(z[i] + step * g[i]);
    const long double val = dual_value(next);
    if (val < best) {  // restart momentum
      t = 1.0L;
      z = a;
      continue;
    }
    best = val;
    const long double t_next = (1.0L + std::sqrt(1.0L + 4.0L * t * t)) / 2.0L;
    for (std::size_t i = 0; i < n; ++i) z[i] = next[i] + ((t - 1.0L) / t_next) * (next[i] - a[i]);
    for (auto& v : z) v = project(v);
    prev = a;
    a = next;
    t = t_next;
    // stationarity check on the projected gradient
    if (it % 256 == 0) {
      const auto ga = grad(a);
      long double viol = 0.0L;
      for (std::size_t i = 0; i < n; ++i) {
        long double pg = ga[i];
        if (a[i] <= 0.0L) pg = std::max(pg, 0.0L);
        else if (a[i] >= C) pg = std::min(pg, 0.0L);
        viol = std::max(viol, std::fabs(pg));
      }
      if (viol < 1e-13L) break;
    }
  }

  QpSolution s;
  s.alpha = a;
  s.w.assign(d + 1, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) s.w[k] += a[i] * y[i] * x[i][k];
    s.w[d] += a[i] * y[i];
  }
  long double reg = 0.0L;
  for (const auto v : s.w) reg += v * v;
  long double loss = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    long double f = s.w[d];
    for (std::size_t k = 0; k < d; ++k) f += s.w[k] * x[i][k];
    loss += std::max(0.0L, 1.0L - y[i] * f);
  }
  s.primal = 0.5L * reg + C * loss;
  s.dual = dual_value(a);
  return s;
}

// ---------------------------------------------------------------------------
// metrics

/// F1 for one class from raw counts; 0 when precision + recall is 0.
inline double f1_from_counts(double tp, double fp, double fn) {
  const double p = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  const double r = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
  return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
}

// ---------------------------------------------------------------------------
// fold baseline

/// Max per-fold L1 divergence of a speaker -> fold assignment.
inline double max_divergence(const std::vector<toneprobe::corpus::ToneToken>& tokens,
                             const std::map<std::string, std::size_t>& fold_of_speaker, std::size_t k) {
  std::map<std::string, double> global;
  std::vector<std::map<std::string, double>> per(k);
  for (const auto& t : tokens) {
    global[t.tone] += 1;
    per[fold_of_speaker.at(t.speaker_id)][t.tone] += 1;
  }
  double worst = 0.0;
  for (const auto& fold : per) {
    double n = 0;
    for (const auto& [c, v] : fold) n += v;
    if (n == 0) continue;
    double d = 0;
    for (const auto& [c, g] : global) {
      const auto it = fold.find(c);
      d += std::fabs((it == fold.end() ? 0.0 : it->second) / n - g / static_cast<double>(tokens.size()));
    }
    worst = std::max(worst, d);
  }
  return worst;
}

/// Best max-divergence over `trials` uniformly random speaker assignments
/// that leave no fold empty.
inline double best_random_divergence(const std::vector<toneprobe::corpus::ToneToken>& tokens, std::size_t k,
                                     std::size_t trials, std::uint64_t seed) {
  std::set<std::string> speakers;
  for (const auto& t : tokens) speakers.insert(t.speaker_id);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  double best = 1e300;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::map<std::string, std::size_t> assign;
    std::vector<int> used(k, 0);
    do {
      std::fill(used.begin(), used.end(), 0);
      for (const auto& s : speakers) {
        assign[s] = pick(rng);
        used[assign[s]] = 1;
      }
    } while (std::find(used.begin(), used.end(), 0) != used.end());
    best = std::min(best, max_divergence(tokens, assign, k));
  }
  return best;
}

// ---------------------------------------------------------------------------
// corpora

/// Random tokens: `n_speakers` speakers with random class mixes over `n_classes`.
inline std::vector<toneprobe::corpus::ToneToken> random_tokens(std::mt19937_64& rng, std::size_t n_speakers,
                                                               std::size_t n_classes, std::size_t min_per_speaker,
                                                               std::size_t max_per_speaker,
                                                               std::size_t n_dialects = 1) {
  std::vector<toneprobe::corpus::ToneToken> out;
  std::uniform_int_distribution<std::size_t> count(min_per_speaker, max_per_speaker);
  std::uniform_int_distribution<std::size_t> cls(0, n_classes - 1);
  for (std::size_t s = 0; s < n_speakers; ++s) {
    const std::string spk = "s" + std::to_string(s);
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      // cycle through classes first so every speaker covers every class
      const std::size_t c = i < n_classes ? i : cls(rng);
      out.push_back({spk + "_u#" + std::to_string(i + 1), spk + "_u", spk, "d" + std::to_string(s % n_dialects),
                     "T" + std::to_string(c + 1), 0.1 * i, 0.1 * i + 0.08});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// TextGrids

/// Random valid grid: 1-3 interval tiers tiling [xmin, xmax], labels drawn
/// from a small alphabet that includes quotes and non-ASCII text.
inline toneprobe::textgrid::TextGrid random_grid(std::mt19937_64& rng) {
  using namespace toneprobe::textgrid;
  static const std::vector<std::string> labels = {"", "H", "L", "R", "F", "T1", "say \"hi\"", "ɛ̃", "a b", "音"};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> n_tiers(1, 3);
  std::uniform_int_distribution<int> n_iv(1, 12);
  std::uniform_int_distribution<std::size_t> lab(0, labels.size() - 1);
  TextGrid g;
  g.xmin = std::floor(u(rng) * 3) * 0.5;
  double t = g.xmin;
  std::vector<double> cuts;
  const int n = n_iv(rng);
  for (int i = 0; i < n; ++i) {
    t += 0.01 + u(rng) * 0.4;
    cuts.push_back(t);
  }
  g.xmax = cuts.back();
  const int tiers = n_tiers(rng);
  for (int k = 0; k < tiers; ++k) {
    IntervalTier tier{k == 0 ? "tones" : "tier" + std::to_string(k), g.xmin, g.xmax, {}};
    double start = g.xmin;
    for (const double c : cuts) {
      if (c != g.xmax && u(rng) < 0.3) continue;  // merge some intervals
      tier.intervals.push_back({start, c, labels[lab(rng)]});
      start = c;
    }
    g.tiers.push_back(std::move(tier));
  }
  return g;
}

/// One random byte-level edit of `s`.
inline std::string mutate(const std::string& s, std::mt19937_64& rng) {
  static const std::string interesting[] = {"\"", "=", "<", ">", "[", "]", "\n", "-1", "1e309", "nan", "9999999999",
                                            "<absent>", "item", "size = 0", "\xff\xfe", "\xef\xbb\xbf", "!", "\r\n",
                                            "intervals [0]:", "xmin = x", "0.5", "\0"};
  std::string out = s;
  std::uniform_int_distribution<int> op(0, 7);
  std::uniform_int_distribution<std::size_t> pos(0, out.empty() ? 0 : out.size() - 1);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(interesting) - 1);
  switch (op(rng)) {
    case 0:
      if (!out.empty()) out[pos(rng)] = static_cast<char>(byte(rng));
      break;
    case 1:
      out.insert(pos(rng), 1, static_cast<char>(byte(rng)));
      break;
    case 2:
      if (!out.empty()) out.erase(pos(rng), 1 + pos(rng) % 8);
      break;
    case 3:
      out.resize(pos(rng));
      break;
    case 4:
      out.insert(pos(rng), interesting[pick(rng)]);
      break;
    case 5: {  // duplicate a chunk
      const std::size_t a = pos(rng);
      const std::size_t len = std::min<std::size_t>(1 + pos(rng) % 64, out.size() - std::min(a, out.size()));
      out.insert(pos(rng), out.substr(a, len));
      break;
    }
    case 6: {  // swap two lines
      std::vector<std::string> lines;
      std::size_t b = 0;
      for (std::size_t i = 0; i <= out.size(); ++i)
        if (i == out.size() || out[i] == '\n') {
          lines.push_back(out.substr(b, i - b));
          b = i + 1;
        }
      if (lines.size() > 1) {
        std::uniform_int_distribution<std::size_t> l(0, lines.size() - 1);
        std::swap(lines[l(rng)], lines[l(rng)]);
      }
      out.clear();
      for (std::size_t i = 0; i < lines.size(); ++i) out += lines[i] + (i + 1 < lines.size() ? "\n" : "");
      break;
    }
    default: {  // replace a digit
      for (int tries = 0; tries < 16 && !out.empty(); ++tries) {
        const std::size_t p = pos(rng);
        if (out[p] >= '0' && out[p] <= '9') {
          out[p] = static_cast<char>('0' + byte(rng) % 10);
          break;
        }
      }
    }
  }
  return out;
}

/// True when the grid satisfies the documented invariants.
inline bool grid_invariants_hold(const toneprobe::textgrid::TextGrid& g) {
  if (!(g.xmin <= g.xmax)) return false;
  for (const auto& tier : g.tiers) {
    if (tier.xmin < g.xmin - 1e-6 || tier.xmax > g.xmax + 1e-6) return false;
    for (std::size_t i = 0; i < tier.intervals.size(); ++i) {
      const auto& iv = tier.intervals[i];
      if (!std::isfinite(iv.start) || !std::isfinite(iv.end)) return false;
      if (iv.start > iv.end) return false;
      if (iv.start == iv.end && !iv.label.empty()) {
        bool blank = true;
        for (const char c : iv.label) blank = blank && (c == ' ' || c == '\t');
        if (!blank) return false;
      }
      if (i + 1 < tier.intervals.size() && iv.end > tier.intervals[i + 1].start + 1e-6) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// misc

/// Fresh empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("toneprobe_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
