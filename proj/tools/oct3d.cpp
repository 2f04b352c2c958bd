// oct3d: phantom generation, splitting, training, evaluation, CAM export and
// feature baselines from one binary.

#include <oct3d/baselines.hpp>
#include <oct3d/cam.hpp>
#include <oct3d/config.hpp>
#include <oct3d/data.hpp>
#include <oct3d/phantom.hpp>
#include <oct3d/trainer.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace oct3d;

namespace {

fs::path output_root() {
  const char* env = std::getenv("OCT3D_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path resolve_out(const std::string& given, const std::string& fallback) {
  return given.empty() ? output_root() / fallback : fs::path(given);
}

/// Claims an output directory. A non-empty directory needs --force and is
/// cleared; unless commit() is called the directory is removed again.
class OutputDir {
 public:
  OutputDir(fs::path dir, bool force) : dir_(std::move(dir)) {
    std::error_code ec;
    if (fs::exists(dir_) && !fs::is_directory(dir_)) throw IoError(dir_.string() + " exists and is not a directory");
    if (fs::exists(dir_) && !fs::is_empty(dir_)) {
      if (!force) throw IoError("output directory " + dir_.string() + " is not empty (use --force to overwrite)");
      fs::remove_all(dir_, ec);
      if (ec) throw IoError("cannot clear " + dir_.string() + ": " + ec.message());
    }
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
  }
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(dir_, ec);
    }
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const fs::path& path() const { return dir_; }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  bool committed_ = false;
};

/// Same contract as OutputDir for a single file.
class OutputFile {
 public:
  OutputFile(fs::path file, bool force) : file_(std::move(file)) {
    if (fs::exists(file_) && !force) throw IoError(file_.string() + " exists (use --force to overwrite)");
    if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
  }
  ~OutputFile() {
    if (!committed_) {
      std::error_code ec;
      fs::remove(file_, ec);
    }
  }
  OutputFile(const OutputFile&) = delete;
  OutputFile& operator=(const OutputFile&) = delete;

  const fs::path& path() const { return file_; }
  void commit() { committed_ = true; }

 private:
  fs::path file_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return detail::trim(s);
}

// Flags shared by the subcommands; empty strings and unset optionals mean
// "keep the config file value".
struct Common {
  std::string config;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config, "run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_flag("--force", c.force, "overwrite existing outputs");
  if (with_out) cmd->add_option("--out", c.out, "output location (default under $OCT3D_OUTPUT_ROOT)");
}

fs::path resolve_out(const Common& c, const RunConfig& cfg, const std::string& fallback) {
  return resolve_out(c.out.empty() ? cfg.out.string() : c.out, fallback);
}

RunConfig base_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) load_config(c.config, cfg);
  if (c.seed) cfg.train.seed = *c.seed;
  set_worker_count(c.jobs);
  return cfg;
}

std::vector<SplitPlan> plans_for(const RunConfig& cfg, const Manifest& m) {
  if (!cfg.splits.empty()) return read_splits(cfg.splits);
  return make_splits(m, cfg.repeats, cfg.split_fractions, cfg.train.seed);
}

// ---------------------------------------------------------------- phantom

struct PhantomArgs {
  Common common;
  std::optional<std::size_t> patients, eyes;
  std::optional<double> prevalence;
  std::string dims;
};

int cmd_phantom(const PhantomArgs& a) {
  auto cfg = base_config(a.common);
  if (a.patients) cfg.patients = *a.patients;
  if (a.eyes) cfg.eyes = *a.eyes;
  if (a.prevalence) cfg.prevalence = *a.prevalence;
  if (!a.dims.empty()) apply_setting(cfg, "phantom", "dims", a.dims);
  const auto dir = resolve_out(a.common, cfg, "phantom");
  std::optional<std::string> previous;
  if (fs::exists(dir / "dataset.hash")) previous = read_text(dir / "dataset.hash");

  OutputDir out(dir, a.common.force);
  const auto ds = generate_dataset(cfg.phantom, cfg.patients, out.path(), cfg.train.seed, cfg.eyes, cfg.prevalence,
                                   worker_count());
  const std::string hash = hex64(dataset_hash(out.path(), ds.manifest));
  write_text(out.path() / "dataset.hash", hash + "\n");
  out.commit();

  std::size_t pos = 0;
  for (const auto& r : ds.manifest.records) pos += static_cast<std::size_t>(r.label);
  std::printf("generated %zu volumes (%zu glaucoma, %zu healthy) from %zu patients at %s in %s\n",
              ds.manifest.records.size(), pos, ds.manifest.records.size() - pos, cfg.patients,
              config::format_dims(cfg.phantom.dims).c_str(), out.path().string().c_str());
  std::printf("dataset hash %s", hash.c_str());
  if (previous) std::printf(previous == hash ? " (identical dataset)" : " (differs from previous %s)", previous->c_str());
  std::printf("\n");
  return 0;
}

// ---------------------------------------------------------------- split

struct SplitArgs {
  Common common;
  std::string manifest, fractions;
  std::optional<std::size_t> repeats;
};

int cmd_split(const SplitArgs& a) {
  auto cfg = base_config(a.common);
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (a.repeats) cfg.repeats = *a.repeats;
  if (!a.fractions.empty()) cfg.split_fractions = config::parse_doubles<3>(a.fractions);
  if (cfg.manifest.empty()) throw ValueError("no manifest given (--manifest or [data] manifest)");
  const auto m = load_manifest(cfg.manifest);
  const auto plans = make_splits(m, cfg.repeats, cfg.split_fractions, cfg.train.seed);
  OutputFile out(resolve_out(a.common, cfg, "splits.csv"), a.common.force);
  write_splits(plans, out.path());
  out.commit();
  for (const auto& p : plans)
    std::printf("repeat %zu: train %zu, val %zu, test %zu\n", p.repeat, p.train.size(), p.val.size(), p.test.size());
  std::printf("wrote %s\n", out.path().string().c_str());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string manifest, splits, optimizer, dims, layers;
  std::optional<std::size_t> epochs, batch_size, repeats;
  std::optional<double> lr;
  bool augment = false, compare = false, quiet = false;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = base_config(a.common);
  auto& t = cfg.train;
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (!a.splits.empty()) cfg.splits = a.splits;
  if (!a.optimizer.empty()) t.optimizer.kind = parse_optimizer_kind(a.optimizer);
  if (!a.dims.empty()) t.dims = config::parse_dims(a.dims);
  if (!a.layers.empty()) t.model.conv_layers = config::parse_layers(a.layers);
  if (a.epochs) t.epochs = *a.epochs;
  if (a.batch_size) t.batch_size = *a.batch_size;
  if (a.repeats) cfg.repeats = *a.repeats;
  if (a.lr) t.optimizer.lr = *a.lr;
  if (a.augment) t.augment.enabled = true;
  if (a.compare) cfg.compare_augmentation = true;
  if (cfg.manifest.empty()) throw ValueError("no manifest given (--manifest or [data] manifest)");
  t.validate();

  const auto m = load_manifest(cfg.manifest);
  auto plans = plans_for(cfg, m);
  if (plans.size() > cfg.repeats) plans.resize(cfg.repeats);
  OutputDir out(resolve_out(a.common, cfg, "train"), a.common.force);
  ProgressFn progress;
  if (!a.quiet) progress = [](const std::string& s) { std::printf("%s\n", s.c_str()), std::fflush(stdout); };

  std::vector<RunReport> reports;
  std::vector<bool> modes = cfg.compare_augmentation ? std::vector<bool>{false, true}
                                                     : std::vector<bool>{t.augment.enabled};
  for (bool aug : modes) {
    TrainConfig run = t;
    run.augment.enabled = aug;
    run.out_dir = modes.size() > 1 ? out.path() / (aug ? "augment_yes" : "augment_no") : out.path();
    reports.push_back(run_experiment(run, m, plans, progress));
    for (const auto& r : reports.back().repeats)
      std::printf("repeat %zu: best epoch %zu, val AUC %.4f, test AUC %.4f, checkpoint %s (%s)\n", r.repeat,
                  r.best_epoch, r.best_val_auc, r.test_auc, r.checkpoint.string().c_str(),
                  hex64(hash_file(r.checkpoint)).c_str());
  }
  write_splits(plans, out.path() / "splits.csv");
  const auto table = format_reports(reports);
  write_text(out.path() / "report.txt", table);
  write_report_csv(reports, out.path() / "report.csv");
  out.commit();
  std::printf("%s", table.c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string checkpoint, manifest, splits, part = "test", dims;
  std::size_t repeat = 1;
  bool all = false;
};

int cmd_eval(const EvalArgs& a) {
  auto cfg = base_config(a.common);
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (!a.splits.empty()) cfg.splits = a.splits;
  if (!a.dims.empty()) cfg.train.dims = config::parse_dims(a.dims);
  if (cfg.manifest.empty()) throw ValueError("no manifest given (--manifest or [data] manifest)");
  const auto m = load_manifest(cfg.manifest);
  std::vector<std::size_t> records;
  if (a.all) {
    for (std::size_t i = 0; i < m.records.size(); ++i) records.push_back(i);
  } else {
    if (cfg.splits.empty()) throw ValueError("--splits is required unless --all is given");
    const auto plans = read_splits(cfg.splits);
    const SplitPlan* plan = nullptr;
    for (const auto& p : plans)
      if (p.repeat == a.repeat) plan = &p;
    if (!plan) throw ValueError("split file has no repeat " + std::to_string(a.repeat));
    const auto part = a.part == "train" ? Partition::train : a.part == "val" ? Partition::val : Partition::test;
    records = plan->part(part);
  }
  ExampleStore store(m, cfg.train.dims);
  const auto ev = evaluate(a.checkpoint, store, records);
  if (!a.common.out.empty()) {
    OutputFile out(a.common.out, a.common.force);
    std::ofstream f(out.path());
    f << "path,label,probability\n";
    char buf[32];
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", ev.probabilities[i]);
      f << m.records[records[i]].path.generic_string() << ',' << m.records[records[i]].label << ',' << buf << '\n';
    }
    f.close();
    if (!f) throw IoError("failed writing " + out.path().string());
    out.commit();
  }
  std::printf("AUC %.4f over %zu records\n", ev.auc, records.size());
  return 0;
}

// ---------------------------------------------------------------- cam

struct CamArgs {
  Common common;
  std::string checkpoint, volume, views = "enface,side", dims;
  std::size_t class_index = 1;
  std::optional<std::size_t> slice;
  double alpha = 0.5;
};

int cmd_cam(const CamArgs& a) {
  auto cfg = base_config(a.common);
  if (!a.dims.empty()) cfg.train.dims = config::parse_dims(a.dims);
  std::vector<CamPlane> planes;
  for (const auto& v : config::split(a.views, ',')) planes.push_back(parse_cam_plane(v));
  if (planes.empty()) throw ValueError("no views requested");

  const auto model = nn::load_checkpoint(a.checkpoint);
  if (a.class_index >= model.spec.num_classes)
    throw ValueError("class " + std::to_string(a.class_index) + " out of range for a " +
                     std::to_string(model.spec.num_classes) + "-class model");
  auto vol = read_volume(a.volume);
  const auto full = normalize_intensity(std::move(vol.data), vol.dtype);
  const auto input = resample_trilinear(full, cfg.train.dims);
  float prob = 0;
  auto cam = cam_for_volume(model.spec, model.params, input, a.class_index, &prob);
  resize_cam(cam, full.shape());

  OutputDir out(resolve_out(a.common, cfg, "cam"), a.common.force);
  export_cam_volume(cam, out.path() / "cam.ovol");
  for (auto plane : planes) {
    std::size_t index = plane_extent(full.shape(), plane) / 2;
    if (a.slice) {
      index = *a.slice;
    } else if (plane == CamPlane::enface) {
      // the depth where the map is strongest
      const auto& s = full.shape();
      double best = -1;
      for (std::size_t z = 0; z < s[2]; ++z) {
        double sum = 0;
        for (std::size_t r = 0; r < s[0]; ++r)
          for (std::size_t c = 0; c < s[1]; ++c) sum += cam.resized(r, c, z);
        if (sum > best) best = sum, index = z;
      }
    }
    const auto file = out.path() / (to_string(plane) + ".ppm");
    export_overlay(full, cam, plane, index, file, a.alpha);
    std::printf("wrote %s (%s slice %zu)\n", file.string().c_str(), to_string(plane).c_str(), index);
  }
  out.commit();
  std::printf("class %zu probability %.4f; CAM volume %s\n", a.class_index, prob,
              (out.path() / "cam.ovol").string().c_str());
  return 0;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
  Common common;
  std::string features, manifest, splits, clf;
  std::optional<std::size_t> trials, repeats;
};

int cmd_baseline(const BaselineArgs& a) {
  auto cfg = base_config(a.common);
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (!a.splits.empty()) cfg.splits = a.splits;
  if (!a.clf.empty()) cfg.classifier = parse_classifier_kind(a.clf);
  if (a.trials) cfg.trials = *a.trials;
  if (a.repeats) cfg.repeats = *a.repeats;
  if (cfg.manifest.empty()) throw ValueError("no manifest given (--manifest or [data] manifest)");
  const fs::path features = a.features.empty() ? fs::path(cfg.manifest).parent_path() / "features.csv" : fs::path(a.features);
  const auto table = read_feature_table(features);
  const auto m = load_manifest(cfg.manifest);
  if (table.size() != m.records.size())
    throw ValueError("feature table has " + std::to_string(table.size()) + " rows but the manifest has " +
                     std::to_string(m.records.size()));
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table.rows[i].label != m.records[i].label)
      throw ValueError("feature row " + std::to_string(i + 1) + " label disagrees with the manifest");
  auto plans = plans_for(cfg, m);
  if (plans.size() > cfg.repeats) plans.resize(cfg.repeats);
  const auto rep = random_search(cfg.classifier, table, plans, cfg.trials, cfg.train.seed, worker_count());

  OutputDir out(resolve_out(a.common, cfg, "baseline_" + to_string(cfg.classifier)), a.common.force);
  write_search_trials(rep, out.path() / "trials.csv");
  char buf[256];
  std::string text = "Classifier           AUC_val             AUC_test            AUC_val-test\n";
  std::snprintf(buf, sizeof buf, "%-20s %-18s  %-18s  %+.3f\n", display_name(rep.kind).c_str(),
                format_mean_std(rep.val).c_str(), format_mean_std(rep.test).c_str(), rep.val.mean - rep.test.mean);
  text += buf;
  for (const auto& b : rep.best) {
    std::snprintf(buf, sizeof buf, "  repeat %zu: trial %zu (%s) val %.4f test %.4f\n", b.fold, b.trial,
                  b.config.describe().c_str(), b.val_auc, b.test_auc);
    text += buf;
  }
  if (rep.skipped) text += "  skipped trials: " + std::to_string(rep.skipped) + "\n";
  write_text(out.path() / "report.txt", text);
  out.commit();
  std::printf("%s", text.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D OCT glaucoma classification: phantom data, CNN training, CAMs and feature baselines"};
  app.require_subcommand(1);
  int rc = 0;

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic optic-nerve-head dataset");
  add_common(phantom, pa.common);
  phantom->add_option("--patients", pa.patients, "number of patients")->check(CLI::Range(2, 1000000));
  phantom->add_option("--eyes", pa.eyes, "eyes per patient (1 or 2)");
  phantom->add_option("--prevalence", pa.prevalence, "fraction of glaucoma patients");
  phantom->add_option("--dims", pa.dims, "volume size DxHxW");
  phantom->callback([&] { rc = cmd_phantom(pa); });

  SplitArgs sa;
  auto* split = app.add_subcommand("split", "write patient-disjoint train/val/test splits");
  add_common(split, sa.common);
  split->add_option("--manifest", sa.manifest, "manifest CSV");
  split->add_option("--repeats", sa.repeats, "number of random splits");
  split->add_option("--fractions", sa.fractions, "train,val,test fractions");
  split->callback([&] { rc = cmd_split(sa); });

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the CNN on every split and report AUCs");
  add_common(train, ta.common);
  train->add_option("--manifest", ta.manifest, "manifest CSV");
  train->add_option("--splits", ta.splits, "split file (default: fresh splits from the seed)");
  train->add_option("--repeats", ta.repeats, "number of splits to train on");
  train->add_option("--epochs", ta.epochs, "epochs per run");
  train->add_option("--lr", ta.lr, "learning rate");
  train->add_option("--optimizer", ta.optimizer, "sgd, rmsprop, adam or nadam");
  train->add_option("--batch-size", ta.batch_size, "batch size (>= 2)");
  train->add_option("--dims", ta.dims, "network input size DxHxW");
  train->add_option("--layers", ta.layers, "conv layers as filters:kernel:stride,...");
  train->add_flag("--augment", ta.augment, "enable augmentation");
  train->add_flag("--compare-augmentation", ta.compare, "train with and without augmentation");
  train->add_flag("--quiet", ta.quiet, "no per-epoch progress");
  train->callback([&] { rc = cmd_train(ta); });

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on part of a manifest");
  add_common(eval, ea.common);
  eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", ea.manifest, "manifest CSV");
  eval->add_option("--splits", ea.splits, "split file");
  eval->add_option("--repeat", ea.repeat, "split repeat (1-based)");
  eval->add_option("--part", ea.part, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_flag("--all", ea.all, "score every manifest record");
  eval->add_option("--dims", ea.dims, "network input size DxHxW");
  eval->callback([&] { rc = cmd_eval(ea); });

  CamArgs ca;
  auto* cam = app.add_subcommand("cam", "class activation map and overlays for one volume");
  add_common(cam, ca.common);
  cam->add_option("--checkpoint", ca.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  cam->add_option("--volume", ca.volume, "OVOL volume")->required()->check(CLI::ExistingFile);
  cam->add_option("--class", ca.class_index, "class whose map is drawn");
  cam->add_option("--views", ca.views, "comma-separated: enface, side, side_col");
  cam->add_option("--slice", ca.slice, "slice index for every view");
  cam->add_option("--alpha", ca.alpha, "overlay strength")->check(CLI::Range(0.0, 1.0));
  cam->add_option("--dims", ca.dims, "network input size DxHxW");
  cam->callback([&] { rc = cmd_cam(ca); });

  BaselineArgs ba;
  auto* baseline = app.add_subcommand("baseline", "random hyperparameter search for a feature classifier");
  add_common(baseline, ba.common);
  baseline->add_option("--features", ba.features, "feature table (default: features.csv next to the manifest)");
  baseline->add_option("--manifest", ba.manifest, "manifest CSV");
  baseline->add_option("--splits", ba.splits, "split file");
  baseline->add_option("--clf", ba.clf, "logistic, naive_bayes or linear_svm");
  baseline->add_option("--trials", ba.trials, "hyperparameter draws per split");
  baseline->add_option("--repeats", ba.repeats, "number of splits");
  baseline->callback([&] { rc = cmd_baseline(ba); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::fprintf(stderr, "oct3d: error: %s\n", msg.c_str());
    return 1;
  }
  return rc;
}
