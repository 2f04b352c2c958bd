#ifndef OCT3D_TRAINER_HPP
#define OCT3D_TRAINER_HPP

#include <oct3d/augment.hpp>
#include <oct3d/binary_io.hpp>
#include <oct3d/data.hpp>
#include <oct3d/error.hpp>
#include <oct3d/metrics.hpp>
#include <oct3d/nn/checkpoint.hpp>
#include <oct3d/nn/model.hpp>
#include <oct3d/optim.hpp>
#include <oct3d/parallel.hpp>
#include <oct3d/random.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace oct3d {

/// Raised when training diverges; carries the failing (epoch, batch).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_, batch_;
};

struct TrainConfig {
  nn::ModelSpec model = nn::ModelSpec::standard();
  OptimizerConfig optimizer{};  // nadam, lr 1e-4
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  AugmentConfig augment{};
  Shape dims{32, 32, 64};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";

  void validate() const {
    model.validate();
    if (epochs < 1) throw ValueError("epochs must be >= 1");
    if (batch_size < 2) throw ValueError("batch_size must be >= 2 (batchnorm needs batch statistics)");
    if (!(optimizer.lr > 0)) throw ValueError("learning rate must be > 0");
    if (dims.size() != 3 || dims[0] == 0 || dims[1] == 0 || dims[2] == 0)
      throw ValueError("input dims must be three positive extents");
    augment.validate();
  }
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_auc = 0;
  bool improved = false;
  double seconds = 0;
};

struct RepeatResult {
  std::size_t repeat = 1;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_auc = -1;
  double test_auc = NAN;
  std::filesystem::path checkpoint;
  std::vector<std::size_t> test_records;
  std::vector<double> test_scores;
};

struct RunReport {
  bool augmentation = false;
  std::vector<RepeatResult> repeats;
  MeanStd val, test;
};

/// Called with one human-readable line per epoch and milestone.
using ProgressFn = std::function<void(const std::string&)>;

inline constexpr std::uint64_t kInitStream = 0x494e4954;

struct EvalResult {
  double auc = NAN;
  std::vector<double> probabilities;  // glaucoma-class probability per record
};

/// Glaucoma-class probability of each record, computed one record at a time in
/// eval mode so scores do not depend on grouping.
inline std::vector<double> predict_records(const nn::ModelSpec& spec, const nn::ModelParams<float>& params,
                                           ExampleStore& store, const std::vector<std::size_t>& records) {
  store.preload(records);
  std::vector<double> out(records.size());
  const Shape& d = store.dims();
  parallel_for(records.size(), worker_count(), [&](std::size_t, std::size_t i) {
    const auto& v = store.get(records[i]);
    const Tensor<float> x({1, 1, d[0], d[1], d[2]}, std::vector<float>(v.values().begin(), v.values().end()));
    out[i] = nn::model_predict(spec, params, x).probabilities[1];
  });
  return out;
}

inline std::vector<int> record_labels(const ExampleStore& store, const std::vector<std::size_t>& records) {
  std::vector<int> y;
  y.reserve(records.size());
  for (auto r : records) y.push_back(store.label(r));
  return y;
}

/// Scores a checkpoint on a subset of a manifest.
inline EvalResult evaluate(const std::filesystem::path& checkpoint, ExampleStore& store,
                           const std::vector<std::size_t>& records) {
  const auto m = nn::load_checkpoint(checkpoint);
  EvalResult r;
  r.probabilities = predict_records(m.spec, m.params, store, records);
  r.auc = roc_auc(r.probabilities, record_labels(store, records)).auc;
  return r;
}

inline std::filesystem::path repeat_dir(const TrainConfig& cfg, std::size_t repeat) {
  return cfg.out_dir / ("repeat_" + std::to_string(repeat));
}

namespace detail {

inline void write_history(const RepeatResult& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_auc,improved\n";
  char buf[128];
  for (const auto& e : r.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%d\n", e.epoch, e.train_loss, e.val_auc, e.improved ? 1 : 0);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace detail

/// One training run on one split. Test records are read only after the last
/// epoch, through the best-validation checkpoint.
inline RepeatResult train_one(const TrainConfig& cfg, ExampleStore& store, const SplitPlan& plan,
                              const ProgressFn& progress = {}) {
  cfg.validate();
  if (plan.train.empty() || plan.val.empty() || plan.test.empty())
    throw ValueError("split " + std::to_string(plan.repeat) + " has an empty partition");
  RepeatResult res;
  res.repeat = plan.repeat;
  const auto dir = repeat_dir(cfg, plan.repeat);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  res.checkpoint = dir / "best.ckpt";
  const auto staging = dir / "best.ckpt.tmp";

  auto rng = make_rng({cfg.seed, plan.repeat, kInitStream});
  auto params = nn::init_params<float>(cfg.model, rng);
  std::vector<Tensor<float>*> slots;
  for (auto& nt : nn::trainable(params)) slots.push_back(nt.tensor);
  std::vector<const Tensor<float>*> cslots(slots.begin(), slots.end());
  auto opt = make_optimizer_state<float>(cfg.optimizer, cslots);

  const auto train_labels = record_labels(store, plan.train);
  const std::uint64_t run_seed = cfg.seed * 1000003ull + plan.repeat;
  store.preload(plan.train);
  store.preload(plan.val);
  const auto y_val = record_labels(store, plan.val);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sample = epoch_indices(train_labels, epoch, run_seed);
    std::vector<std::size_t> order;
    order.reserve(sample.indices.size());
    for (auto i : sample.indices) order.push_back(plan.train[i]);
    BatchStream stream(store, std::move(order), cfg.batch_size, cfg.augment, run_seed, epoch, true);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; !stream.done(); ++b) {
      const auto batch = stream.next();
      nn::ForwardTrace<float> trace;
      const auto out = nn::model_forward(cfg.model, params, batch.x, nn::Mode::train, &trace);
      const auto loss = nn::softmax_xent(out.logits, batch.targets);
      if (!std::isfinite(loss.loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(b + 1),
                            epoch, b + 1);
      const auto grads = nn::model_backward(cfg.model, params, trace, loss.grad_logits);
      const auto glist = grads.list();
      optimizer_step<float>(opt, slots, glist);
      for (const auto& nt : nn::all_tensors(std::as_const(params)))
        for (float v : nt.tensor->values())
          if (!std::isfinite(v))
            throw TrainingError("non-finite " + nt.name + " after update at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(b + 1),
                                epoch, b + 1);
      loss_sum += loss.loss * static_cast<double>(batch.records.size());
      seen += batch.records.size();
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.val_auc = roc_auc(predict_records(cfg.model, params, store, plan.val), y_val).auc;
    // strictly greater: on ties the earlier epoch keeps the checkpoint
    if (log.val_auc > res.best_val_auc) {
      log.improved = true;
      res.best_val_auc = log.val_auc;
      res.best_epoch = epoch;
      nn::save_checkpoint(staging, cfg.model, params, &opt);
      std::filesystem::rename(staging, res.checkpoint);
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.epochs.push_back(log);
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "repeat %zu epoch %zu/%zu loss %.4f val_auc %.4f%s (%.1fs)", plan.repeat, epoch,
                    cfg.epochs, log.train_loss, log.val_auc, log.improved ? " *" : "", log.seconds);
      progress(buf);
    }
  }
  detail::write_history(res, dir / "history.csv");

  const auto ev = evaluate(res.checkpoint, store, plan.test);
  res.test_auc = ev.auc;
  res.test_records = plan.test;
  res.test_scores = ev.probabilities;
  return res;
}

/// train_one over every split; a failing repeat aborts with its index.
inline RunReport run_experiment(const TrainConfig& cfg, const Manifest& manifest, const std::vector<SplitPlan>& plans,
                                const ProgressFn& progress = {}) {
  cfg.validate();
  if (plans.empty()) throw ValueError("run_experiment needs at least one split");
  ExampleStore store(manifest, cfg.dims);
  RunReport rep;
  rep.augmentation = cfg.augment.enabled;
  std::vector<double> vals, tests;
  for (const auto& plan : plans) {
    try {
      rep.repeats.push_back(train_one(cfg, store, plan, progress));
    } catch (const TrainingError& e) {
      throw TrainingError("repeat " + std::to_string(plan.repeat) + ": " + e.what(), e.epoch(), e.batch());
    } catch (const Error& e) {
      throw Error("repeat " + std::to_string(plan.repeat) + ": " + e.what());
    }
    vals.push_back(rep.repeats.back().best_val_auc);
    tests.push_back(rep.repeats.back().test_auc);
  }
  rep.val = mean_std(vals);
  rep.test = mean_std(tests);
  return rep;
}

/// Table-style summary, one row per report.
inline std::string format_reports(const std::vector<RunReport>& reports) {
  std::string s = "Model  Augmentation  AUC_val             AUC_test            AUC_val-test\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "CNN    %-12s  %-18s  %-18s  %+.3f\n", r.augmentation ? "yes" : "no",
                  format_mean_std(r.val).c_str(), format_mean_std(r.test).c_str(), r.val.mean - r.test.mean);
    s += buf;
  }
  return s;
}

/// Machine-readable companion: one line per repeat plus a mean and std line per report.
inline void write_report_csv(const std::vector<RunReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "augmentation,repeat,best_epoch,auc_val,auc_test,auc_val_minus_test\n";
  char buf[160];
  for (const auto& r : reports) {
    const char* aug = r.augmentation ? "yes" : "no";
    for (const auto& x : r.repeats) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.9g,%.9g,%.9g\n", aug, x.repeat, x.best_epoch, x.best_val_auc,
                    x.test_auc, x.best_val_auc - x.test_auc);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%s,mean,,%.9g,%.9g,%.9g\n%s,std%s,,%.9g,%.9g,\n", aug, r.val.mean, r.test.mean,
                  r.val.mean - r.test.mean, aug, r.val.std_defined ? "" : "(n=1)", r.val.std, r.test.std);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace oct3d

#endif  // OCT3D_TRAINER_HPP
