#ifndef OCT3D_BASELINES_HPP
#define OCT3D_BASELINES_HPP

#include <oct3d/data.hpp>
#include <oct3d/features.hpp>
#include <oct3d/metrics.hpp>
#include <oct3d/parallel.hpp>
#include <oct3d/random.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace oct3d {

using FeatureMatrix = std::vector<FeatureVector>;

/// Per-feature mean and population standard deviation of the training rows.
struct Standardizer {
  FeatureVector mean{}, scale{};

  static Standardizer fit(std::span<const FeatureVector> rows) {
    if (rows.size() < 2) throw ValueError("standardizer needs at least 2 training rows");
    Standardizer s;
    const double n = static_cast<double>(rows.size());
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      double m = 0;
      for (const auto& r : rows) m += r[k];
      m /= n;
      double v = 0;
      for (const auto& r : rows) v += (r[k] - m) * (r[k] - m);
      v /= n;
      if (!(v > 0)) throw ValueError("feature " + feature_names()[k] + " has zero variance in the training rows");
      s.mean[k] = m;
      s.scale[k] = std::sqrt(v);
    }
    return s;
  }

  FeatureVector apply(const FeatureVector& x) const {
    FeatureVector out;
    for (std::size_t k = 0; k < kNumFeatures; ++k) out[k] = (x[k] - mean[k]) / scale[k];
    return out;
  }

  FeatureMatrix apply(std::span<const FeatureVector> rows) const {
    FeatureMatrix out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply(r));
    return out;
  }
};

namespace detail {

inline void check_binary(std::span<const FeatureVector> X, std::span<const int> y) {
  if (X.size() != y.size()) throw ShapeError("feature rows and labels differ in length");
  bool seen[2] = {false, false};
  for (int v : y) {
    if (v != 0 && v != 1) throw ValueError("labels must be 0 or 1");
    seen[v] = true;
  }
  if (!seen[0] || !seen[1]) throw ValueError("training labels contain a single class");
}

inline double dot(const FeatureVector& a, const FeatureVector& b) {
  double s = 0;
  for (std::size_t k = 0; k < kNumFeatures; ++k) s += a[k] * b[k];
  return s;
}

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
  if (z >= 0) return 1 / (1 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1 + e);
}

}  // namespace detail

struct LogisticModel {
  FeatureVector w{};
  double b = 0;
  std::vector<double> loss_history;  // objective after each accepted step, starting at the initial point

  double predict(const FeatureVector& x) const { return detail::sigmoid(detail::dot(w, x) + b); }
};

/// Mean log-loss + lambda * |w|^2 (bias unpenalized).
inline double logistic_objective(std::span<const FeatureVector> X, std::span<const int> y, const FeatureVector& w,
                                 double b, double lambda) {
  double loss = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double z = detail::dot(w, X[i]) + b;
    loss += detail::softplus(z) - y[i] * z;
  }
  return loss / static_cast<double>(X.size()) + lambda * detail::dot(w, w);
}

/// Full-batch gradient descent with Armijo backtracking.
inline LogisticModel logistic_fit(std::span<const FeatureVector> X, std::span<const int> y, double lambda,
                                  std::size_t max_iter = 2000, double tol = 1e-6) {
  detail::check_binary(X, y);
  if (!(lambda >= 0)) throw ValueError("logistic regularization must be >= 0");
  LogisticModel m;
  const double n = static_cast<double>(X.size());
  double f = logistic_objective(X, y, m.w, m.b, lambda);
  m.loss_history.push_back(f);
  double step = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    FeatureVector gw{};
    double gb = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double r = detail::sigmoid(detail::dot(m.w, X[i]) + m.b) - y[i];
      for (std::size_t k = 0; k < kNumFeatures; ++k) gw[k] += r * X[i][k];
      gb += r;
    }
    for (std::size_t k = 0; k < kNumFeatures; ++k) gw[k] = gw[k] / n + 2 * lambda * m.w[k];
    gb /= n;
    const double g2 = detail::dot(gw, gw) + gb * gb;
    if (std::sqrt(g2) < tol) break;
    step = std::min(step * 2, 1e3);
    bool accepted = false;
    while (step > 1e-12) {
      FeatureVector w = m.w;
      for (std::size_t k = 0; k < kNumFeatures; ++k) w[k] -= step * gw[k];
      const double b = m.b - step * gb;
      const double fn = logistic_objective(X, y, w, b, lambda);
      if (fn <= f - 1e-4 * step * g2) {
        m.w = w;
        m.b = b;
        f = fn;
        accepted = true;
        break;
      }
      step /= 2;
    }
    if (!accepted) break;
    m.loss_history.push_back(f);
  }
  return m;
}

struct GaussianNB {
  std::array<double, 2> log_prior{};
  std::array<FeatureVector, 2> mean{}, var{};

  /// Posterior class probabilities for one row.
  std::array<double, 2> posterior(const FeatureVector& x) const {
    std::array<double, 2> ll{};
    for (int c = 0; c < 2; ++c) {
      double s = log_prior[c];
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const double d = x[k] - mean[c][k];
        s -= 0.5 * (std::log(2 * std::numbers::pi * var[c][k]) + d * d / var[c][k]);
      }
      ll[c] = s;
    }
    const double mx = std::max(ll[0], ll[1]);
    const double e0 = std::exp(ll[0] - mx), e1 = std::exp(ll[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
  }

  double predict(const FeatureVector& x) const { return posterior(x)[1]; }
};

/// Per-class Gaussians; every variance gets smoothing * (largest feature variance) added.
inline GaussianNB gaussian_nb_fit(std::span<const FeatureVector> X, std::span<const int> y, double smoothing) {
  detail::check_binary(X, y);
  if (!(smoothing >= 0)) throw ValueError("naive Bayes smoothing must be >= 0");
  GaussianNB nb;
  double max_var = 0;
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    double m = 0, v = 0;
    for (const auto& r : X) m += r[k];
    m /= static_cast<double>(X.size());
    for (const auto& r : X) v += (r[k] - m) * (r[k] - m);
    max_var = std::max(max_var, v / static_cast<double>(X.size()));
  }
  const double eps = smoothing * max_var;
  for (int c = 0; c < 2; ++c) {
    std::size_t count = 0;
    FeatureVector m{}, v{};
    for (std::size_t i = 0; i < X.size(); ++i)
      if (y[i] == c) {
        ++count;
        for (std::size_t k = 0; k < kNumFeatures; ++k) m[k] += X[i][k];
      }
    for (auto& e : m) e /= static_cast<double>(count);
    for (std::size_t i = 0; i < X.size(); ++i)
      if (y[i] == c)
        for (std::size_t k = 0; k < kNumFeatures; ++k) v[k] += (X[i][k] - m[k]) * (X[i][k] - m[k]);
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      v[k] = v[k] / static_cast<double>(count) + eps;
      if (!(v[k] > 0))
        throw ValueError("naive Bayes variance of " + feature_names()[k] + " is zero; increase smoothing");
    }
    nb.log_prior[c] = std::log(static_cast<double>(count) / static_cast<double>(X.size()));
    nb.mean[c] = m;
    nb.var[c] = v;
  }
  return nb;
}

struct LinearSvm {
  FeatureVector w{};
  double b = 0;

  /// Signed margin w.x + b, used as the ranking score.
  double margin(const FeatureVector& x) const { return detail::dot(w, x) + b; }
  double predict(const FeatureVector& x) const { return margin(x); }
};

/// reg/2 |(w,b)|^2 + mean hinge loss.
inline double svm_objective(std::span<const FeatureVector> X, std::span<const int> y, const LinearSvm& m, double reg) {
  double h = 0;
  for (std::size_t i = 0; i < X.size(); ++i) h += std::max(0.0, 1 - (2 * y[i] - 1) * m.margin(X[i]));
  return 0.5 * reg * (detail::dot(m.w, m.w) + m.b * m.b) + h / static_cast<double>(X.size());
}

/// Deterministic full-batch subgradient descent (Pegasos step 1/(reg t) with
/// projection); the bias is treated as a weight on a constant feature. The
/// best iterate by objective is returned.
inline LinearSvm linear_svm_fit(std::span<const FeatureVector> X, std::span<const int> y, double reg,
                                std::size_t iterations = 2000) {
  detail::check_binary(X, y);
  if (!(reg > 0)) throw ValueError("SVM regularization must be > 0");
  const double n = static_cast<double>(X.size());
  const double radius = 1 / std::sqrt(reg);
  LinearSvm cur, best;
  double best_obj = svm_objective(X, y, cur, reg);
  for (std::size_t t = 1; t <= iterations; ++t) {
    const double eta = 1 / (reg * static_cast<double>(t));
    FeatureVector g{};
    double gb = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double s = 2.0 * y[i] - 1;
      if (s * cur.margin(X[i]) < 1) {
        for (std::size_t k = 0; k < kNumFeatures; ++k) g[k] += s * X[i][k];
        gb += s;
      }
    }
    const double shrink = 1 - eta * reg;
    for (std::size_t k = 0; k < kNumFeatures; ++k) cur.w[k] = shrink * cur.w[k] + eta * g[k] / n;
    cur.b = shrink * cur.b + eta * gb / n;
    const double norm = std::sqrt(detail::dot(cur.w, cur.w) + cur.b * cur.b);
    if (norm > radius) {
      for (auto& v : cur.w) v *= radius / norm;
      cur.b *= radius / norm;
    }
    const double obj = svm_objective(X, y, cur, reg);
    if (obj < best_obj) {
      best_obj = obj;
      best = cur;
    }
  }
  return best;
}

enum class ClassifierKind { logistic, naive_bayes, linear_svm };

inline std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::logistic: return "logistic";
    case ClassifierKind::naive_bayes: return "naive_bayes";
    case ClassifierKind::linear_svm: return "linear_svm";
  }
  return "?";
}

inline std::string display_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::logistic: return "Logistic Regression";
    case ClassifierKind::naive_bayes: return "Naive Bayes";
    case ClassifierKind::linear_svm: return "SVM (linear)";
  }
  return "?";
}

inline ClassifierKind parse_classifier_kind(const std::string& s) {
  if (s == "logistic" || s == "lr") return ClassifierKind::logistic;
  if (s == "naive_bayes" || s == "nb") return ClassifierKind::naive_bayes;
  if (s == "linear_svm" || s == "svm") return ClassifierKind::linear_svm;
  throw ValueError("unknown classifier '" + s + "' (expected logistic, naive_bayes or linear_svm)");
}

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::logistic;
  double param = 1e-2;  // lambda, smoothing factor or SVM regularization
  std::size_t iterations = 2000;

  std::string describe() const {
    char buf[64];
    const char* key = kind == ClassifierKind::naive_bayes ? "smoothing" : kind == ClassifierKind::logistic ? "lambda" : "reg";
    std::snprintf(buf, sizeof buf, "%s=%.6g", key, param);
    return buf;
  }
};

inline ClassifierConfig sample_config(ClassifierKind kind, Rng& rng) {
  ClassifierConfig c;
  c.kind = kind;
  switch (kind) {
    case ClassifierKind::logistic: c.param = log_uniform(rng, 1e-6, 1e2); break;
    case ClassifierKind::naive_bayes: c.param = log_uniform(rng, 1e-12, 1e-6); break;
    case ClassifierKind::linear_svm: c.param = log_uniform(rng, 1e-6, 1e2); break;
  }
  return c;
}

/// A fitted classifier of any kind; score() is P(glaucoma) or the SVM margin.
struct FittedClassifier {
  ClassifierKind kind = ClassifierKind::logistic;
  LogisticModel logistic;
  GaussianNB nb;
  LinearSvm svm;

  double score(const FeatureVector& x) const {
    switch (kind) {
      case ClassifierKind::logistic: return logistic.predict(x);
      case ClassifierKind::naive_bayes: return nb.predict(x);
      case ClassifierKind::linear_svm: return svm.margin(x);
    }
    return 0;
  }

  std::vector<double> scores(std::span<const FeatureVector> X) const {
    std::vector<double> s;
    s.reserve(X.size());
    for (const auto& x : X) s.push_back(score(x));
    return s;
  }
};

inline FittedClassifier fit_classifier(const ClassifierConfig& cfg, std::span<const FeatureVector> X,
                                       std::span<const int> y) {
  FittedClassifier f;
  f.kind = cfg.kind;
  switch (cfg.kind) {
    case ClassifierKind::logistic: f.logistic = logistic_fit(X, y, cfg.param, cfg.iterations); break;
    case ClassifierKind::naive_bayes: f.nb = gaussian_nb_fit(X, y, cfg.param); break;
    case ClassifierKind::linear_svm: f.svm = linear_svm_fit(X, y, cfg.param, cfg.iterations); break;
  }
  return f;
}

struct SearchTrial {
  std::size_t fold = 0, trial = 0;
  ClassifierConfig config;
  double val_auc = NAN, test_auc = NAN;
  bool skipped = false;
  std::string error;
};

struct SearchReport {
  ClassifierKind kind = ClassifierKind::logistic;
  std::vector<SearchTrial> trials;  // fold-major
  std::vector<SearchTrial> best;    // one per fold
  std::size_t skipped = 0;
  MeanStd val, test;
};

/// Rows of one split partition, standardized with statistics of the training rows only.
struct FoldData {
  Standardizer standardizer;
  FeatureMatrix train, val, test;
  std::vector<int> y_train, y_val, y_test;
};

inline FoldData prepare_fold(const FeatureTable& table, const SplitPlan& plan) {
  FoldData d;
  auto gather = [&](const std::vector<std::size_t>& idx, FeatureMatrix& X, std::vector<int>& y) {
    for (auto i : idx) {
      if (i >= table.size()) throw ValueError("split index " + std::to_string(i) + " beyond feature table");
      X.push_back(table.rows[i].values);
      y.push_back(table.rows[i].label);
    }
  };
  FeatureMatrix raw_train, raw_val, raw_test;
  gather(plan.train, raw_train, d.y_train);
  gather(plan.val, raw_val, d.y_val);
  gather(plan.test, raw_test, d.y_test);
  d.standardizer = Standardizer::fit(raw_train);
  d.train = d.standardizer.apply(raw_train);
  d.val = d.standardizer.apply(raw_val);
  d.test = d.standardizer.apply(raw_test);
  return d;
}

inline constexpr std::uint64_t kSearchStream = 0x53524348;

/// Random hyperparameter search: per fold, n_trials sampled configs are fitted on
/// train, ranked by validation AUC (ties keep the earliest trial) and the winner's
/// test AUC is reported.
inline SearchReport random_search(ClassifierKind kind, const FeatureTable& table, const std::vector<SplitPlan>& plans,
                                  std::size_t n_trials = 1000, std::uint64_t seed = 0, std::size_t workers = 1) {
  if (n_trials == 0) throw ValueError("random search needs at least one trial");
  if (plans.empty()) throw ValueError("random search needs at least one split");
  SearchReport rep;
  rep.kind = kind;
  std::vector<double> vals, tests;
  for (std::size_t f = 0; f < plans.size(); ++f) {
    const auto fold = prepare_fold(table, plans[f]);
    std::vector<SearchTrial> trials(n_trials);
    parallel_for(n_trials, workers, [&](std::size_t, std::size_t t) {
      auto& tr = trials[t];
      tr.fold = plans[f].repeat;
      tr.trial = t;
      auto rng = make_rng({seed, plans[f].repeat, t, kSearchStream});
      tr.config = sample_config(kind, rng);
      try {
        const auto model = fit_classifier(tr.config, fold.train, fold.y_train);
        tr.val_auc = roc_auc(model.scores(fold.val), fold.y_val).auc;
        tr.test_auc = roc_auc(model.scores(fold.test), fold.y_test).auc;
      } catch (const Error& e) {
        tr.skipped = true;
        tr.error = e.what();
      }
    });
    const SearchTrial* best = nullptr;
    for (const auto& tr : trials) {
      if (tr.skipped) {
        ++rep.skipped;
        continue;
      }
      if (!best || tr.val_auc > best->val_auc) best = &tr;
    }
    if (!best)
      throw ValueError("every trial failed in fold " + std::to_string(plans[f].repeat) + ": " + trials.front().error);
    rep.best.push_back(*best);
    vals.push_back(best->val_auc);
    tests.push_back(best->test_auc);
    rep.trials.insert(rep.trials.end(), trials.begin(), trials.end());
  }
  rep.val = mean_std(vals);
  rep.test = mean_std(tests);
  return rep;
}

inline void write_search_trials(const SearchReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "fold,trial,config,val_auc,test_auc\n";
  char buf[160];
  for (const auto& t : r.trials) {
    if (t.skipped)
      std::snprintf(buf, sizeof buf, "%zu,%zu,%s,skipped,skipped\n", t.fold, t.trial, t.config.describe().c_str());
    else
      std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.9g,%.9g\n", t.fold, t.trial, t.config.describe().c_str(), t.val_auc,
                    t.test_auc);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace oct3d

#endif  // OCT3D_BASELINES_HPP
