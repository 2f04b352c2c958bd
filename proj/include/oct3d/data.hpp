#ifndef OCT3D_DATA_HPP
#define OCT3D_DATA_HPP

#include <oct3d/augment.hpp>
#include <oct3d/error.hpp>
#include <oct3d/parallel.hpp>
#include <oct3d/random.hpp>
#include <oct3d/tensor.hpp>
#include <oct3d/volume_io.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace oct3d {

enum class Partition { train = 0, val = 1, test = 2 };

inline const char* to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

/// One patient-disjoint train/validation/test split; entries are indices
/// into Manifest::records, ascending.
struct SplitPlan {
  std::size_t repeat = 1;  // 1-based
  std::uint64_t seed = 0;
  std::vector<std::size_t> train, val, test;

  const std::vector<std::size_t>& part(Partition p) const {
    return p == Partition::train ? train : p == Partition::val ? val : test;
  }
  std::vector<std::size_t>& part(Partition p) {
    return p == Partition::train ? train : p == Partition::val ? val : test;
  }
};

namespace detail {

// Splits `total` into integer parts proportional to `fracs` (largest remainder,
// ties to the earlier part).
inline std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fracs) {
  std::array<std::size_t, 3> out{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fracs[i] * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(out[i]);
    used += out[i];
  }
  while (used < total) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++out[best];
    rem[best] = -1;
    ++used;
  }
  return out;
}

}  // namespace detail

/// Patients keyed by id with their record indices, in first-appearance order.
struct PatientGroup {
  std::string id;
  std::vector<std::size_t> records;
  int label = 0;  // majority label of the eyes; ties count as glaucoma
};

inline std::vector<PatientGroup> group_by_patient(const Manifest& m) {
  std::vector<PatientGroup> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (r.patient_id.empty()) throw ValueError("record " + std::to_string(i) + " has no patient_id");
    auto [it, fresh] = index.emplace(r.patient_id, groups.size());
    if (fresh) groups.push_back({r.patient_id, {}, 0});
    groups[it->second].records.push_back(i);
  }
  for (auto& g : groups) {
    std::size_t pos = 0;
    for (auto i : g.records) pos += static_cast<std::size_t>(m.records[i].label == 1);
    g.label = 2 * pos >= g.records.size() ? 1 : 0;
  }
  return groups;
}

/// `n_repeats` independent patient-grouped, class-stratified random splits.
/// Repeat r (1-based) shuffles with its own stream derived from (seed, r).
/// Within a class, patients are dealt in shuffled order to the partition whose
/// record count is furthest below its target.
inline std::vector<SplitPlan> make_splits(const Manifest& m, std::size_t n_repeats = 5,
                                          std::array<double, 3> fracs = {0.8, 0.1, 0.1}, std::uint64_t seed = 0) {
  if (m.records.empty()) throw ValueError("cannot split an empty manifest");
  if (n_repeats == 0) throw ValueError("n_repeats must be >= 1");
  const double fsum = fracs[0] + fracs[1] + fracs[2];
  for (double f : fracs)
    if (!(f >= 0)) throw ValueError("split fractions must be >= 0");
  if (std::abs(fsum - 1.0) > 1e-9) throw ValueError("split fractions must sum to 1");

  const auto groups = group_by_patient(m);
  std::array<std::vector<std::size_t>, 2> by_class;
  std::array<std::size_t, 2> class_records{};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    by_class[groups[g].label].push_back(g);
    class_records[groups[g].label] += groups[g].records.size();
  }

  std::vector<SplitPlan> plans;
  for (std::size_t r = 1; r <= n_repeats; ++r) {
    SplitPlan plan;
    plan.repeat = r;
    plan.seed = seed + r - 1;
    Rng rng = make_rng({seed + r - 1, 0x53504c54u});
    for (int c = 0; c < 2; ++c) {
      auto order = by_class[c];
      std::shuffle(order.begin(), order.end(), rng);
      const auto target = detail::apportion(class_records[c], fracs);
      std::array<long, 3> have{};
      // an empty partition with a nonzero target is served first, then the largest deficit
      auto unfilled = [&](int p) {
        const bool starving = have[p] == 0 && target[p] > 0;
        return std::pair<bool, long>{starving, static_cast<long>(target[p]) - have[p]};
      };
      for (auto g : order) {
        int best = 0;
        for (int p = 1; p < 3; ++p)
          if (unfilled(p) > unfilled(best)) best = p;
        auto& dst = plan.part(static_cast<Partition>(best));
        dst.insert(dst.end(), groups[g].records.begin(), groups[g].records.end());
        have[best] += static_cast<long>(groups[g].records.size());
      }
    }
    for (auto p : {Partition::train, Partition::val, Partition::test}) {
      auto& idx = plan.part(p);
      std::sort(idx.begin(), idx.end());
      std::array<bool, 2> present{};
      for (auto i : idx) present[m.records[i].label] = true;
      if (fracs[static_cast<int>(p)] > 0 && !(present[0] && present[1]))
        throw ValueError(std::string("split repeat ") + std::to_string(r) + ": partition " + to_string(p) +
                         " lacks a class (too few patients)");
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

/// Audit format: "record_index,partition,repeat".
inline void write_splits(const std::vector<SplitPlan>& plans, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "record_index,partition,repeat\n";
  for (const auto& plan : plans) {
    std::vector<std::pair<std::size_t, Partition>> rows;
    for (auto p : {Partition::train, Partition::val, Partition::test})
      for (auto i : plan.part(p)) rows.emplace_back(i, p);
    std::sort(rows.begin(), rows.end());
    for (const auto& [i, p] : rows) out << i << ',' << to_string(p) << ',' << plan.repeat << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<SplitPlan> read_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (detail::trim(line) != "record_index,partition,repeat")
    throw ParseError(path.string() + ":1: expected header \"record_index,partition,repeat\"");
  std::map<std::size_t, SplitPlan> plans;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(detail::trim(line));
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != 3) throw ParseError(where + "expected 3 fields");
    Partition p;
    if (cells[1] == "train")
      p = Partition::train;
    else if (cells[1] == "val")
      p = Partition::val;
    else if (cells[1] == "test")
      p = Partition::test;
    else
      throw ParseError(where + "unknown partition '" + cells[1] + "'");
    try {
      const auto idx = static_cast<std::size_t>(detail::parse_int(cells[0]));
      const auto rep = static_cast<std::size_t>(detail::parse_int(cells[2]));
      auto& plan = plans[rep];
      plan.repeat = rep;
      plan.part(p).push_back(idx);
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
  }
  std::vector<SplitPlan> out;
  for (auto& [rep, plan] : plans) {
    for (auto part : {Partition::train, Partition::val, Partition::test})
      std::sort(plan.part(part).begin(), plan.part(part).end());
    out.push_back(std::move(plan));
  }
  return out;
}

/// Per-epoch class balancing by down-sampling.
struct EpochSampler {
  std::size_t epoch = 0;
  std::vector<std::size_t> indices;  // positions into the label list given to epoch_indices
};

/// Keeps every minority-class item, draws as many majority-class items
/// without replacement, and shuffles. The draw depends only on (seed, epoch).
inline EpochSampler epoch_indices(const std::vector<int>& labels, std::size_t epoch, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> cls;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValueError("labels must be 0 or 1");
    cls[labels[i]].push_back(i);
  }
  if (cls[0].empty() || cls[1].empty()) throw ValueError("epoch sampling needs both classes in the training set");
  Rng rng = make_rng({seed, epoch, 0x45504f43u});
  const int minority = cls[0].size() <= cls[1].size() ? 0 : 1;
  auto& major = cls[1 - minority];
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(cls[minority].size());
  EpochSampler s{epoch, cls[minority]};
  s.indices.insert(s.indices.end(), major.begin(), major.end());
  std::shuffle(s.indices.begin(), s.indices.end(), rng);
  return s;
}

/// [begin, end) ranges covering n items in batches of `batch_size`; the last
/// batch may be short. With `merge_singleton`, a final batch of one item is
/// folded into the previous batch (batchnorm cannot train on one sample).
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size,
                                                                     bool merge_singleton = false) {
  if (batch_size == 0) throw ValueError("batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  if (merge_singleton && out.size() >= 2 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

/// Loaded, resampled volumes for a set of records, keyed by record index.
class ExampleStore {
 public:
  ExampleStore(const Manifest& m, Shape dims) : manifest_(&m), dims_(std::move(dims)), cache_(m.records.size()) {}

  /// Loads the given records (in parallel) if not yet cached.
  void preload(const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> todo;
    for (auto i : idx)
      if (!cache_.at(i)) todo.push_back(i);
    std::vector<Tensor<float>> loaded(todo.size());
    parallel_for(todo.size(), worker_count(), [&](std::size_t, std::size_t k) {
      loaded[k] = load_example(manifest_->records[todo[k]], dims_).first;
    });
    for (std::size_t k = 0; k < todo.size(); ++k) cache_[todo[k]] = std::move(loaded[k]);
  }

  const Tensor<float>& get(std::size_t i) {
    if (!cache_.at(i)) cache_[i] = load_example(manifest_->records[i], dims_).first;
    return *cache_[i];
  }
  int label(std::size_t i) const { return manifest_->records.at(i).label; }
  const Shape& dims() const { return dims_; }
  const Manifest& manifest() const { return *manifest_; }

 private:
  const Manifest* manifest_;
  Shape dims_;
  std::vector<std::optional<Tensor<float>>> cache_;
};

struct Batch {
  Tensor<float> x;        // [N, 1, D, H, W]
  Tensor<float> targets;  // [N, 2], rows sum to 1
  std::vector<std::size_t> records;
};

inline std::vector<float> one_hot(int label) { return label ? std::vector<float>{0, 1} : std::vector<float>{1, 0}; }

/// Stacks the given records into a batch. With augmentation enabled, sample
/// k draws from its own stream (seed, epoch, batch, k); mixup partners come
/// from a per-batch permutation.
inline Batch assemble_batch(ExampleStore& store, const std::vector<std::size_t>& records, const AugmentConfig& aug,
                            std::uint64_t seed, std::size_t epoch, std::size_t batch_index) {
  if (records.empty()) throw ValueError("empty batch");
  const Shape& dims = store.dims();
  const std::size_t N = records.size(), V = shape_numel(dims);
  Batch b{Tensor<float>({N, 1, dims[0], dims[1], dims[2]}), Tensor<float>({N, 2}), records};
  std::vector<Tensor<float>> xs(N);
  std::vector<std::vector<float>> ys(N);
  for (std::size_t k = 0; k < N; ++k) {
    ys[k] = one_hot(store.label(records[k]));
    if (aug.enabled) {
      Rng rng = make_rng({seed, epoch, batch_index, k, 0x41554721u});
      xs[k] = augment_volume(store.get(records[k]), aug, rng);
    }
  }
  if (aug.enabled && aug.mixup_enabled && N >= 2) {
    Rng brng = make_rng({seed, epoch, batch_index, 0x4d495855u});
    std::vector<std::size_t> partner(N);
    std::iota(partner.begin(), partner.end(), 0);
    std::shuffle(partner.begin(), partner.end(), brng);
    std::vector<Tensor<float>> mixed_x(N);
    std::vector<std::vector<float>> mixed_y(N);
    for (std::size_t k = 0; k < N; ++k) {
      const double lam = sample_beta(brng, aug.mixup_alpha, aug.mixup_alpha);
      auto mx = mixup_forced(xs[k], ys[k], xs[partner[k]], ys[partner[k]], lam);
      mixed_x[k] = std::move(mx.x);
      mixed_y[k] = std::move(mx.y);
    }
    xs = std::move(mixed_x);
    ys = std::move(mixed_y);
  }
  for (std::size_t k = 0; k < N; ++k) {
    const Tensor<float>& v = aug.enabled ? xs[k] : store.get(records[k]);
    std::copy(v.data(), v.data() + V, b.x.data() + k * V);
    // renormalize so float rounding cannot push a row off the simplex
    const float s = ys[k][0] + ys[k][1];
    b.targets[k * 2] = ys[k][0] / s;
    b.targets[k * 2 + 1] = ys[k][1] / s;
  }
  return b;
}

/// Lazily assembled batches over one epoch's sample order.
class BatchStream {
 public:
  /// `order` holds record indices in visiting order.
  BatchStream(ExampleStore& store, std::vector<std::size_t> order, std::size_t batch_size, const AugmentConfig& aug,
              std::uint64_t seed, std::size_t epoch, bool merge_singleton = false)
      : store_(&store), order_(std::move(order)), ranges_(batch_ranges(order_.size(), batch_size, merge_singleton)),
        aug_(aug), seed_(seed), epoch_(epoch) {}

  std::size_t size() const { return ranges_.size(); }
  bool done() const { return next_ >= ranges_.size(); }

  Batch next() {
    if (done()) throw Error("batch stream exhausted");
    const auto [lo, hi] = ranges_[next_];
    std::vector<std::size_t> recs(order_.begin() + static_cast<long>(lo), order_.begin() + static_cast<long>(hi));
    return assemble_batch(*store_, recs, aug_, seed_, epoch_, next_++);
  }

 private:
  ExampleStore* store_;
  std::vector<std::size_t> order_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
  AugmentConfig aug_;
  std::uint64_t seed_;
  std::size_t epoch_;
  std::size_t next_ = 0;
};

}  // namespace oct3d

#endif  // OCT3D_DATA_HPP
