#pragma once

// Linear SVM probe: per-feature standardization, L2-regularized L1-hinge
// binary SVMs trained by dual coordinate descent, and a one-vs-rest
// multi-class wrapper.
//
// The bias is folded into the weights by appending a constant 1 to every
// input, so each binary problem is
//   min_w  1/2 |w|^2 + C * sum_i max(0, 1 - y_i w.x~_i)
// with dual
//   max_a  sum_i a_i - 1/2 |sum_i a_i y_i x~_i|^2,   0 <= a_i <= C.

#include <toneprobe/common.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace toneprobe::svm {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rs) {
    Matrix m(rs.size(), rs.empty() ? 0 : rs.front().size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (rs[i].size() != m.cols) throw InvalidArgument("ragged matrix rows");
      std::copy(rs[i].begin(), rs[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct SvmConfig {
  double C = 1.0;
  double tolerance = 1e-4;
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 42;
  bool standardize = true;
};

// ---------------------------------------------------------------------------
// standardization

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std; 1 for constant columns

  static Standardizer identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  static Standardizer fit(const Matrix& x) {
    if (x.rows == 0) throw InvalidArgument("cannot fit a standardizer on zero rows");
    Standardizer s{std::vector<double>(x.cols, 0.0), std::vector<double>(x.cols, 0.0)};
    const double n = static_cast<double>(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) s.mean[j] += x(i, j);
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) {
        const double d = x(i, j) - s.mean[j];
        s.scale[j] += d * d;
      }
    for (auto& sc : s.scale) {
      sc = std::sqrt(sc / n);
      if (!(sc > 0.0) || !std::isfinite(sc)) sc = 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& x) const {
    if (x.cols != mean.size())
      throw InvalidArgument(cat("standardizer expects ", mean.size(), " columns, got ", x.cols));
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = (x(i, j) - mean[j]) / scale[j];
    return out;
  }
};

// ---------------------------------------------------------------------------
// binary SVM

struct BinarySvm {
  std::vector<double> weights;  // feature weights, without bias
  double bias = 0.0;
  double C = 1.0;
  double tolerance = 1e-4;
  std::size_t epochs_run = 0;
  bool converged = false;
  std::vector<double> alpha;       // dual variables, one per training row
  std::vector<double> dual_trace;  // dual objective after each epoch

  double decision(std::span<const double> x) const {
    double s = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * x[j];
    return s;
  }
};

/// Primal objective 1/2 |w~|^2 + C sum hinge for a bias-augmented model.
inline double primal_objective(const BinarySvm& m, const Matrix& x, std::span<const int> y) {
  double reg = m.bias * m.bias;
  for (const double w : m.weights) reg += w * w;
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) loss += std::max(0.0, 1.0 - y[i] * m.decision(x.row(i)));
  return 0.5 * reg + m.C * loss;
}

/// Dual coordinate descent. Stops when the largest projected-gradient
/// magnitude seen over a full epoch drops below `tolerance`, or after
/// `max_epochs`. Each epoch visits the rows in a fresh seeded permutation.
inline BinarySvm train_binary(const Matrix& x, std::span<const int> y, const SvmConfig& cfg) {
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  if (y.size() != n) throw InvalidArgument("label count differs from row count");
  if (!(cfg.C > 0.0)) throw InvalidArgument("C must be positive");
  if (!(cfg.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (cfg.max_epochs < 1) throw InvalidArgument("max_epochs must be at least 1");
  bool has_pos = false;
  bool has_neg = false;
  for (const int label : y) {
    if (label == 1) has_pos = true;
    else if (label == -1) has_neg = true;
    else throw InvalidArgument("binary labels must be +1 or -1");
  }
  if (n < 2 || !has_pos || !has_neg) throw InvalidArgument("binary SVM needs both classes in the training rows");
  for (const double v : x.data)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite feature value");

  BinarySvm m;
  m.C = cfg.C;
  m.tolerance = cfg.tolerance;
  m.weights.assign(d, 0.0);
  m.alpha.assign(n, 0.0);
  std::vector<double> qii(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (const double v : x.row(i)) qii[i] += v * v;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  double alpha_sum = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_violation = 0.0;
    for (const std::size_t i : order) {
      const auto xi = x.row(i);
      const double yi = y[i];
      const double g = yi * m.decision(xi) - 1.0;
      double& a = m.alpha[i];
      double pg = g;
      if (a <= 0.0) pg = std::min(g, 0.0);
      else if (a >= cfg.C) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg == 0.0) continue;
      const double next = std::clamp(a - g / qii[i], 0.0, cfg.C);
      const double step = (next - a) * yi;
      if (step == 0.0) continue;
      alpha_sum += next - a;
      a = next;
      for (std::size_t j = 0; j < d; ++j) m.weights[j] += step * xi[j];
      m.bias += step;
    }
    ++m.epochs_run;
    double wnorm = m.bias * m.bias;
    for (const double w : m.weights) wnorm += w * w;
    m.dual_trace.push_back(alpha_sum - 0.5 * wnorm);
    if (max_violation < cfg.tolerance) {
      m.converged = true;
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// one-vs-rest

struct OvrModel {
  std::vector<std::string> classes;  // lexicographic
  std::vector<BinarySvm> models;     // parallel to classes
  Standardizer standardizer;

  std::size_t dim() const { return standardizer.mean.size(); }

  /// n x |classes| scores w_c . [standardized x, 1].
  Matrix decision_values(const Matrix& x) const {
    if (x.cols != dim()) throw InvalidArgument(cat("model expects ", dim(), " features, got ", x.cols));
    const Matrix z = standardizer.apply(x);
    Matrix out(x.rows, classes.size());
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t c = 0; c < classes.size(); ++c) out(i, c) = models[c].decision(z.row(i));
    return out;
  }

  /// Argmax class index per row; ties go to the earliest class.
  std::vector<std::size_t> predict_index(const Matrix& x) const {
    const Matrix dv = decision_values(x);
    std::vector<std::size_t> out(x.rows, 0);
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t c = 1; c < classes.size(); ++c)
        if (dv(i, c) > dv(i, out[i])) out[i] = c;
    }
    return out;
  }

  std::vector<std::string> predict(const Matrix& x) const {
    std::vector<std::string> out;
    for (const auto c : predict_index(x)) out.push_back(classes[c]);
    return out;
  }
};

/// Seed for the binary problem of class `c`, derived from the run seed.
inline std::uint64_t class_seed(std::uint64_t seed, std::size_t c) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (c + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Fits the standardizer on `x` (training rows only), then one binary SVM per
/// class. `classes` fixes the class set; every one of them must occur in
/// `labels`. When empty, the sorted distinct labels are used.
inline OvrModel train_ovr(const Matrix& x, const std::vector<std::string>& labels, const SvmConfig& cfg,
                          std::vector<std::string> classes = {}) {
  if (labels.size() != x.rows) throw InvalidArgument("label count differs from row count");
  const std::set<std::string> present(labels.begin(), labels.end());
  if (classes.empty()) classes.assign(present.begin(), present.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (const auto& c : classes)
    if (!present.count(c)) throw InvalidArgument(cat("class '", c, "' is absent from the training rows"));
  for (const auto& l : present)
    if (!std::binary_search(classes.begin(), classes.end(), l))
      throw InvalidArgument(cat("training label '", l, "' is not among the model classes"));
  if (classes.size() < 2) throw InvalidArgument("one-vs-rest training needs at least 2 classes");

  OvrModel model;
  model.classes = classes;
  model.standardizer = cfg.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols);
  const Matrix z = cfg.standardize ? model.standardizer.apply(x) : x;
  std::vector<int> y(x.rows);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (std::size_t i = 0; i < x.rows; ++i) y[i] = labels[i] == classes[c] ? 1 : -1;
    SvmConfig binary_cfg = cfg;
    binary_cfg.seed = class_seed(cfg.seed, c);
    model.models.push_back(train_binary(z, y, binary_cfg));
  }
  return model;
}

inline nlohmann::json to_json(const OvrModel& m) {
  nlohmann::json j;
  j["classes"] = m.classes;
  j["means"] = m.standardizer.mean;
  j["scales"] = m.standardizer.scale;
  auto per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    const auto& b = m.models[c];
    per_class.push_back({{"class", m.classes[c]},
                         {"weights", b.weights},
                         {"bias", b.bias},
                         {"C", b.C},
                         {"epochs_run", b.epochs_run},
                         {"converged", b.converged}});
  }
  j["models"] = std::move(per_class);
  return j;
}

}  // namespace toneprobe::svm
