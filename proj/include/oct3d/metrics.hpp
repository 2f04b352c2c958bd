#ifndef OCT3D_METRICS_HPP
#define OCT3D_METRICS_HPP

#include <oct3d/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace oct3d {

struct RocPoint {
  double threshold;  // scores >= threshold are called positive; +inf for the origin
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0;
};

/// ROC curve over the distinct scores in descending order (tied scores move
/// as one step) and its trapezoid area
///   AUC = 1/2 * sum_k (X_k - X_{k-1}) (Y_k + Y_{k-1}).
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ValueError("roc_auc got " + std::to_string(scores.size()) + " scores and " +
                     std::to_string(labels.size()) + " labels");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ValueError("roc_auc: score " + std::to_string(i) + " is not finite");
    if (labels[i] != 0 && labels[i] != 1) throw ValueError("roc_auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw ValueError("AUC undefined: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve c;
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
    const RocPoint p{s, static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)};
    const RocPoint& q = c.points.back();
    area += (p.fpr - q.fpr) * (p.tpr + q.tpr);
    c.points.push_back(p);
  }
  c.auc = 0.5 * area;
  return c;
}

inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return roc_auc(std::span<const double>(scores), std::span<const int>(labels));
}

/// Writes "threshold,fpr,tpr" rows.
inline void write_roc(const RocCurve& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : c.points) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.threshold, p.fpr, p.tpr);
    out << buf;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
  bool std_defined = false;  // false for a single value, where std is reported as 0
};

inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) throw ValueError("mean_std of an empty list");
  MeanStd r;
  r.n = v.size();
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() >= 2) {
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    r.std_defined = true;
  }
  return r;
}

inline MeanStd mean_std(const std::vector<double>& v) { return mean_std(std::span<const double>(v)); }

/// "0.89±0.028": mean to 2 decimals, std to 3; a single value gets a "(n=1)" mark.
inline std::string format_mean_std(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.3f%s", m.mean, m.std, m.std_defined ? "" : " (n=1)");
  return buf;
}

}  // namespace oct3d

#endif  // OCT3D_METRICS_HPP
