#ifndef OCT3D_FEATURES_HPP
#define OCT3D_FEATURES_HPP

#include <oct3d/error.hpp>
#include <oct3d/volume_io.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace oct3d {

inline constexpr std::size_t kNumFeatures = 22;

inline const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = {
      "clockhour1",  "clockhour2",  "clockhour3",  "clockhour4",   "clockhour5",   "clockhour6",
      "clockhour7",  "clockhour8",  "clockhour9",  "clockhour10",  "clockhour11",  "clockhour12",
      "quad_t",      "quad_s",      "quad_n",      "quad_i",       "avgthickness", "rimarea",
      "discarea",    "avg_cd_ratio", "vert_cd_ratio", "cupvol"};
  return names;
}

using FeatureVector = std::array<double, kNumFeatures>;

struct FeatureRow {
  FeatureVector values{};
  int label = 0;
};

/// Rows in manifest order; the file has 22 feature columns plus label.
struct FeatureTable {
  std::vector<FeatureRow> rows;

  std::size_t size() const { return rows.size(); }
  std::vector<int> labels() const {
    std::vector<int> y;
    for (const auto& r : rows) y.push_back(r.label);
    return y;
  }
};

inline std::string feature_header() {
  std::string h;
  for (const auto& n : feature_names()) h += n + ",";
  return h + "label";
}

inline void write_feature_table(const FeatureTable& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write feature table " + path.string());
  out << feature_header() << '\n' << std::setprecision(17);
  for (const auto& r : t.rows) {
    for (double v : r.values) out << v << ',';
    out << r.label << '\n';
  }
  if (!out) throw IoError("failed writing feature table " + path.string());
}

inline FeatureTable read_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature table " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != feature_header())
    throw ParseError(path.string() + ":1: expected header " + feature_header());
  FeatureTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != kNumFeatures + 1)
      throw ParseError(where + "expected " + std::to_string(kNumFeatures + 1) + " columns, got " +
                       std::to_string(cells.size()));
    FeatureRow r;
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      std::size_t used = 0;
      try {
        r.values[k] = std::stod(cells[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[k].size() || !std::isfinite(r.values[k]))
        throw ParseError(where + "feature " + feature_names()[k] + " is not a finite number: '" + cells[k] + "'");
    }
    try {
      r.label = detail::parse_label(cells[kNumFeatures]);
    } catch (const Error& e) {
      throw ParseError(where + e.what());
    }
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace oct3d

#endif  // OCT3D_FEATURES_HPP
