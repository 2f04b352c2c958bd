#ifndef OCT3D_CONFIG_HPP
#define OCT3D_CONFIG_HPP

#include <oct3d/baselines.hpp>
#include <oct3d/error.hpp>
#include <oct3d/phantom.hpp>
#include <oct3d/trainer.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace oct3d {

/// Everything a CLI run can be configured with. Sections of the config file
/// map onto the members: [data], [model], [train], [augment], [baseline], [phantom].
struct RunConfig {
  // [data]
  std::filesystem::path manifest;
  std::filesystem::path splits;
  std::filesystem::path out;  // command output location; --out wins
  std::size_t repeats = 5;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  // [model] [train] [augment]
  TrainConfig train;
  bool compare_augmentation = false;  // run with and without augmentation
  // [baseline]
  ClassifierKind classifier = ClassifierKind::logistic;
  std::size_t trials = 1000;
  // [phantom]
  PhantomParams phantom;
  std::size_t patients = 100;
  std::size_t eyes = 2;
  double prevalence = 0.5;
};

namespace config {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool parse_bool(const std::string& v) {
  const auto s = lower(v);
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ValueError("expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(d)) throw ValueError("expected a number, got '" + v + "'");
  return d;
}

inline std::size_t parse_count(const std::string& v) {
  const long long n = detail::parse_int(v);
  if (n < 0) throw ValueError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(detail::trim(cur));
  return out;
}

/// "64x64x128" -> {64, 64, 128}
inline Shape parse_dims(const std::string& v) {
  const auto parts = split(lower(v), 'x');
  if (parts.size() != 3) throw ValueError("dims must look like DxHxW, got '" + v + "'");
  Shape s;
  for (const auto& p : parts) {
    const auto n = parse_count(p);
    if (n == 0) throw ValueError("dims must be positive, got '" + v + "'");
    s.push_back(n);
  }
  return s;
}

template <typename Dims>
std::string format_dims(const Dims& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

/// "32:7:2,32:5:1" -> conv layers (filters:kernel:stride)
inline std::vector<nn::ConvLayerSpec> parse_layers(const std::string& v) {
  std::vector<nn::ConvLayerSpec> out;
  for (const auto& item : split(v, ',')) {
    const auto f = split(item, ':');
    if (f.size() != 3) throw ValueError("conv layer must be filters:kernel:stride, got '" + item + "'");
    out.push_back({parse_count(f[0]), parse_count(f[1]), parse_count(f[2])});
  }
  if (out.empty()) throw ValueError("no conv layers given");
  return out;
}

template <std::size_t N>
std::array<double, N> parse_doubles(const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != N) throw ValueError("expected " + std::to_string(N) + " comma-separated numbers, got '" + v + "'");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_double(parts[i]);
  return out;
}

inline Dist parse_dist(const std::string& v) {
  const auto a = parse_doubles<2>(v);
  return {a[0], a[1]};
}

}  // namespace config

/// Applies one section.key = value setting. Unknown keys raise ValueError.
inline void apply_setting(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  using namespace config;
  const std::string k = section + "." + key;
  auto& t = c.train;
  auto& p = c.phantom;
  if (k == "data.manifest") c.manifest = value;
  else if (k == "data.splits") c.splits = value;
  else if (k == "data.repeats") c.repeats = parse_count(value);
  else if (k == "data.fractions") c.split_fractions = parse_doubles<3>(value);
  else if (k == "data.dims") t.dims = parse_dims(value);
  else if (k == "data.out") c.out = value;
  else if (k == "model.layers") t.model.conv_layers = parse_layers(value);
  else if (k == "model.batchnorm") t.model.use_batchnorm = parse_bool(value);
  else if (k == "train.epochs") t.epochs = parse_count(value);
  else if (k == "train.lr") t.optimizer.lr = parse_double(value);
  else if (k == "train.optimizer") t.optimizer.kind = parse_optimizer_kind(lower(value));
  else if (k == "train.batch_size") t.batch_size = parse_count(value);
  else if (k == "train.seed") t.seed = parse_count(value);
  else if (k == "augment.enabled") t.augment.enabled = parse_bool(value);
  else if (k == "augment.compare") c.compare_augmentation = parse_bool(value);
  else if (k == "augment.occlusion") t.augment.occlusion_max_frac = parse_doubles<3>(value);
  else if (k == "augment.translate") {
    const auto a = parse_doubles<3>(value);
    for (int i = 0; i < 3; ++i) t.augment.translate_max[i] = std::lround(a[i]);
  }
  else if (k == "augment.flip") t.augment.flip_enabled = parse_bool(value);
  else if (k == "augment.rotation") t.augment.rotation_max_deg = parse_double(value);
  else if (k == "augment.mixup") t.augment.mixup_enabled = parse_bool(value);
  else if (k == "augment.mixup_alpha") t.augment.mixup_alpha = parse_double(value);
  else if (k == "baseline.classifier") c.classifier = parse_classifier_kind(lower(value));
  else if (k == "baseline.trials") c.trials = parse_count(value);
  else if (k == "phantom.patients") c.patients = parse_count(value);
  else if (k == "phantom.eyes") c.eyes = parse_count(value);
  else if (k == "phantom.prevalence") c.prevalence = parse_double(value);
  else if (k == "phantom.dims") {
    const auto d = parse_dims(value);
    p.dims = {d[0], d[1], d[2]};
  }
  else if (k == "phantom.speckle") p.speckle = parse_double(value);
  else if (k == "phantom.glaucoma_rnfl") p.glaucoma.rnfl = parse_dist(value);
  else if (k == "phantom.glaucoma_cup_radius") p.glaucoma.cup_radius = parse_dist(value);
  else if (k == "phantom.glaucoma_cup_depth") p.glaucoma.cup_depth = parse_dist(value);
  else if (k == "phantom.glaucoma_lamina") p.glaucoma.lamina = parse_dist(value);
  else if (k == "phantom.healthy_rnfl") p.healthy.rnfl = parse_dist(value);
  else if (k == "phantom.healthy_cup_radius") p.healthy.cup_radius = parse_dist(value);
  else if (k == "phantom.healthy_cup_depth") p.healthy.cup_depth = parse_dist(value);
  else if (k == "phantom.healthy_lamina") p.healthy.lamina = parse_dist(value);
  else throw ValueError("unknown key '" + key + "' in [" + section + "]");
}

/// Reads `key = value` lines grouped under [section] headers; '#' and ';' start comments.
inline void load_config(const std::filesystem::path& path, RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + "malformed section header");
      section = config::lower(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected key = value");
    if (section.empty()) throw ParseError(where + "setting outside any [section]");
    try {
      apply_setting(c, section, config::lower(detail::trim(line.substr(0, eq))), detail::trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw ParseError(where + e.what());
    }
  }
}

}  // namespace oct3d

#endif  // OCT3D_CONFIG_HPP
