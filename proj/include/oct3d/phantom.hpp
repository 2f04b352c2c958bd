#ifndef OCT3D_PHANTOM_HPP
#define OCT3D_PHANTOM_HPP

#include <oct3d/binary_io.hpp>
#include <oct3d/features.hpp>
#include <oct3d/parallel.hpp>
#include <oct3d/random.hpp>
#include <oct3d/tensor.hpp>
#include <oct3d/volume_io.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

namespace oct3d {

/// Gaussian (mean, sd) in voxels of the reference 32x32x64 grid.
struct Dist {
  double mean = 0, sd = 0;
  double draw(Rng& rng) const { return sd > 0 ? std::normal_distribution<double>(mean, sd)(rng) : mean; }
};

/// Per-class draw distributions. Lengths are given on a 32x32x64 grid and
/// rescaled to the requested dims.
struct ClassShape {
  Dist rnfl{6.0, 0.9};         // top-layer thickness (depth voxels)
  Dist cup_radius{4.0, 0.7};   // enface voxels
  Dist cup_depth{3.0, 1.3};    // depth voxels
  Dist lamina{0.30, 0.08};     // lamina band intensity
};

struct PhantomParams {
  std::array<std::size_t, 3> dims{32, 32, 64};
  double speckle = 0.15;
  ClassShape healthy{};
  ClassShape glaucoma{{5.5, 0.9}, {4.4, 0.7}, {5.9, 1.3}, {0.70, 0.08}};
  Dist disc_radius{8.0, 0.6};
  Dist cup_ellipticity{0.0, 0.06};  // vertical/horizontal radius split
  double rnfl_anisotropy = 0.2;     // superior/inferior thickening, cos(2 theta)
  double undulation_max = 1.5;
  Dist surface_depth{20.0, 1.0};
  double scan_width_mm = 6.0;
  double scan_depth_mm = 2.0;

  void validate() const {
    if (dims[0] < 8 || dims[1] < 8 || dims[2] < 16)
      throw ValueError("phantom dims must be at least 8x8x16");
    if (!(speckle >= 0)) throw ValueError("speckle noise level must be >= 0");
    if (rnfl_anisotropy < 0 || rnfl_anisotropy >= 1) throw ValueError("rnfl anisotropy must be in [0,1)");
    if (undulation_max < 0) throw ValueError("undulation amplitude must be >= 0");
  }
  const ClassShape& shape(int label) const { return label ? glaucoma : healthy; }
};

/// Ground truth for one generated eye, in voxels of the generated grid.
struct PhantomGeometry {
  std::array<std::size_t, 3> dims{32, 32, 64};
  int label = 0;
  double rnfl = 6;              // mean top-layer thickness
  double rnfl_anisotropy = 0;
  double cup_rh = 4, cup_rv = 4;  // horizontal (axis 1) / vertical (axis 0) cup radius
  double cup_depth = 3;
  double center_row = 15.5, center_col = 15.5;
  double disc_radius = 8;
  double surface_depth = 20;
  double undulation = 0;
  double undulation_phase_row = 0, undulation_phase_col = 0;
  double lamina = 0.3;
  double scan_width_mm = 6, scan_depth_mm = 2;

  double enface_scale() const { return static_cast<double>(dims[0]) / 32.0; }
  double depth_scale() const { return static_cast<double>(dims[2]) / 64.0; }

  /// Cup depression at an enface position (0 outside the cup ellipse).
  double cup_profile(double row, double col) const {
    if (cup_depth <= 0 || cup_rh <= 0 || cup_rv <= 0) return 0;
    const double u = std::pow((row - center_row) / cup_rv, 2) + std::pow((col - center_col) / cup_rh, 2);
    return u < 1 ? cup_depth * (1 - u) * (1 - u) : 0;
  }

  /// Top-layer thickness at enface angle theta (0 = superior, clockwise).
  double rnfl_at(double theta) const { return rnfl * (1 + rnfl_anisotropy * std::cos(2 * theta)); }

  /// True when an enface position lies inside the cup ellipse.
  bool in_cup(double row, double col) const {
    if (cup_depth <= 0) return false;
    return std::pow((row - center_row) / cup_rv, 2) + std::pow((col - center_col) / cup_rh, 2) < 1;
  }
};

inline PhantomGeometry sample_geometry(const PhantomParams& p, int label, Rng& rng) {
  p.validate();
  PhantomGeometry g;
  g.dims = p.dims;
  g.label = label;
  g.scan_width_mm = p.scan_width_mm;
  g.scan_depth_mm = p.scan_depth_mm;
  const double se = g.enface_scale(), sz = g.depth_scale();
  const auto& cs = p.shape(label);
  const double half = static_cast<double>(p.dims[0] - 1) / 2.0;
  g.rnfl = std::max(1.0, cs.rnfl.draw(rng)) * sz;
  g.rnfl_anisotropy = p.rnfl_anisotropy;
  g.disc_radius = std::clamp(p.disc_radius.draw(rng), 5.0, 11.0) * se;
  const double r = std::clamp(cs.cup_radius.draw(rng), 1.5, 7.0) * se;
  const double e = std::clamp(p.cup_ellipticity.draw(rng), -0.3, 0.3);
  g.cup_rv = std::min(r * (1 + e), g.disc_radius - se);
  g.cup_rh = std::min(r * (1 - e), g.disc_radius - se);
  g.cup_depth = std::clamp(cs.cup_depth.draw(rng), 0.0, 12.0) * sz;
  g.center_row = half + uniform(rng, -1, 1) * se;
  g.center_col = static_cast<double>(p.dims[1] - 1) / 2.0 + uniform(rng, -1, 1) * se;
  g.surface_depth = p.surface_depth.draw(rng) * sz;
  g.undulation = uniform(rng, 0, p.undulation_max) * sz;
  g.undulation_phase_row = uniform(rng, 0, 2 * std::numbers::pi);
  g.undulation_phase_col = uniform(rng, 0, 2 * std::numbers::pi);
  g.lamina = std::clamp(cs.lamina.draw(rng), 0.0, 1.0);
  return g;
}

namespace detail {

// Layer stack below the inner surface: (thickness on the reference grid, intensity).
inline constexpr std::array<std::pair<double, double>, 5> kDeepLayers = {{
    {4.0, 0.45},  // ganglion cell
    {3.0, 0.62},  // plexiform
    {6.0, 0.38},  // nuclear
    {2.0, 0.92},  // pigment epithelium
    {6.0, 0.30},  // choroid
}};
inline constexpr double kVitreous = 0.04;
inline constexpr double kRnflIntensity = 0.85;
inline constexpr double kNerveIntensity = 0.32;
inline constexpr double kBackground = 0.12;
inline constexpr double kLaminaGap = 3.0;        // below the cup floor, reference voxels
inline constexpr double kLaminaThickness = 3.0;  // reference voxels

}  // namespace detail

/// Noise-free intensity at voxel (row, col, z) of a geometry.
inline double phantom_intensity(const PhantomGeometry& g, double row, double col, double z) {
  const double se = g.enface_scale(), sz = g.depth_scale();
  const double two_pi = 2 * std::numbers::pi;
  const double surf = g.surface_depth +
                      g.undulation * std::sin(two_pi * row / static_cast<double>(g.dims[0]) + g.undulation_phase_row) *
                          std::cos(two_pi * col / static_cast<double>(g.dims[1]) + g.undulation_phase_col) +
                      g.cup_profile(row, col);
  if (z < surf) return detail::kVitreous;
  const double dr = row - g.center_row, dc = col - g.center_col;
  const double theta = std::atan2(dc, -dr);
  const double rho = std::hypot(dr, dc);
  // the top layer tapers to nothing inside the cup
  const double rim = g.in_cup(row, col) ? 1 - g.cup_profile(row, col) / std::max(g.cup_depth, 1e-9) : 1;
  const double top = g.rnfl_at(theta) * rim;
  double depth = z - surf;
  if (depth < top) return detail::kRnflIntensity;
  depth -= top;
  if (rho < g.disc_radius) {
    // optic nerve head: nerve tissue with the lamina band under the cup floor
    const double lamina_top = g.surface_depth + g.cup_depth + detail::kLaminaGap * sz;
    const double lamina_radius = std::max(std::max(g.cup_rh, g.cup_rv), 2.0 * se) * 0.9;
    if (rho < lamina_radius && z >= lamina_top && z < lamina_top + detail::kLaminaThickness * sz) return g.lamina;
    return detail::kNerveIntensity;
  }
  for (const auto& [thick, value] : detail::kDeepLayers) {
    if (depth < thick * sz) return value;
    depth -= thick * sz;
  }
  return detail::kBackground;
}

/// Render a geometry with multiplicative speckle (1 + sigma * N(0,1)), clipped to [0,1].
inline Tensor<float> render_phantom(const PhantomGeometry& g, double speckle, Rng& rng) {
  Tensor<float> v({g.dims[0], g.dims[1], g.dims[2]});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t i = 0;
  for (std::size_t r = 0; r < g.dims[0]; ++r)
    for (std::size_t c = 0; c < g.dims[1]; ++c)
      for (std::size_t z = 0; z < g.dims[2]; ++z, ++i) {
        const double base = phantom_intensity(g, static_cast<double>(r), static_cast<double>(c), static_cast<double>(z));
        const double noisy = speckle > 0 ? base * (1 + speckle * normal(rng)) : base;
        v[i] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
      }
  return v;
}

struct PhantomVolume {
  Tensor<float> volume;
  PhantomGeometry geometry;
};

inline PhantomVolume generate_volume(const PhantomParams& p, int label, Rng& rng) {
  if (label != 0 && label != 1) throw ValueError("phantom class must be 0 or 1");
  auto g = sample_geometry(p, label, rng);
  auto v = render_phantom(g, p.speckle, rng);
  return {std::move(v), g};
}

/// Analytic 22-feature row from ground truth. Thicknesses in micrometres,
/// areas in mm^2, cup volume in mm^3.
inline FeatureRow extract_features(const PhantomGeometry& g) {
  const double um_per_z = 1000.0 * g.scan_depth_mm / static_cast<double>(g.dims[2]);
  const double mm_row = g.scan_width_mm / static_cast<double>(g.dims[0]);
  const double mm_col = g.scan_width_mm / static_cast<double>(g.dims[1]);
  const double mm_z = g.scan_depth_mm / static_cast<double>(g.dims[2]);
  FeatureRow f;
  f.label = g.label;
  double avg = 0;
  for (int h = 1; h <= 12; ++h) {
    const double theta = 2 * std::numbers::pi * (h % 12) / 12.0;
    f.values[h - 1] = g.rnfl_at(theta) * um_per_z;
    avg += f.values[h - 1] / 12.0;
  }
  auto hours = [&](int a, int b, int c) { return (f.values[a - 1] + f.values[b - 1] + f.values[c - 1]) / 3.0; };
  f.values[12] = hours(8, 9, 10);   // temporal
  f.values[13] = hours(11, 12, 1);  // superior
  f.values[14] = hours(2, 3, 4);    // nasal
  f.values[15] = hours(5, 6, 7);    // inferior
  f.values[16] = avg;
  const bool cup = g.cup_depth > 0;
  const double disc_area = std::numbers::pi * g.disc_radius * g.disc_radius * mm_row * mm_col;
  const double cup_area = cup ? std::numbers::pi * g.cup_rh * g.cup_rv * mm_row * mm_col : 0.0;
  f.values[17] = std::max(0.0, disc_area - cup_area);
  f.values[18] = disc_area;
  f.values[19] = cup ? std::sqrt(cup_area / disc_area) : 0.0;
  f.values[20] = cup ? g.cup_rv / g.disc_radius : 0.0;
  // integral of d (1 - u)^2 over the ellipse is pi rh rv d / 3
  f.values[21] = cup ? std::numbers::pi * g.cup_rh * g.cup_rv * g.cup_depth / 3.0 * mm_row * mm_col * mm_z : 0.0;
  return f;
}

struct PhantomDataset {
  Manifest manifest;
  FeatureTable features;
  std::vector<PhantomGeometry> geometry;
};

inline constexpr std::uint64_t kPhantomStream = 0x5048414e;

/// Labels, geometry, manifest rows and features of a dataset, without rendering.
/// Record paths are bare file names.
inline PhantomDataset plan_dataset(const PhantomParams& p, std::size_t n_patients, std::uint64_t seed,
                                   std::size_t eyes_per_patient = 2, double prevalence = 0.5) {
  p.validate();
  if (n_patients < 2) throw ValueError("phantom dataset needs at least 2 patients");
  if (eyes_per_patient < 1 || eyes_per_patient > 2) throw ValueError("eyes per patient must be 1 or 2");
  if (!(prevalence > 0 && prevalence < 1)) throw ValueError("prevalence must be in (0,1)");
  // exact class counts, randomly assigned to patients
  const auto n_glaucoma = static_cast<std::size_t>(std::lround(prevalence * static_cast<double>(n_patients)));
  std::vector<int> patient_label(n_patients, 0);
  std::fill(patient_label.begin(), patient_label.begin() + static_cast<long>(n_glaucoma), 1);
  auto rng = make_rng({seed, kPhantomStream});
  std::shuffle(patient_label.begin(), patient_label.end(), rng);

  PhantomDataset ds;
  for (std::size_t patient = 0; patient < n_patients; ++patient)
    for (std::size_t eye = 0; eye < eyes_per_patient; ++eye) {
      auto grng = make_rng({seed, kPhantomStream, patient, eye, 0});
      const auto g = sample_geometry(p, patient_label[patient], grng);
      char name[64], pid[32];
      std::snprintf(name, sizeof name, "vol_%04zu_%c.ovol", patient, eye ? 'R' : 'L');
      std::snprintf(pid, sizeof pid, "P%04zu", patient);
      ds.manifest.records.push_back({name, g.label, pid, eye ? Eye::right : Eye::left,
                                     7 + static_cast<int>(uniform_int(grng, 0, 3))});
      ds.geometry.push_back(g);
      ds.features.rows.push_back(extract_features(g));
    }
  return ds;
}

/// Writes vol_<patient>_<eye>.ovol (u8), manifest.csv and features.csv into out_dir.
inline PhantomDataset generate_dataset(const PhantomParams& p, std::size_t n_patients, const std::filesystem::path& out_dir,
                                       std::uint64_t seed, std::size_t eyes_per_patient = 2, double prevalence = 0.5,
                                       std::size_t workers = 1) {
  auto ds = plan_dataset(p, n_patients, seed, eyes_per_patient, prevalence);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  parallel_for(ds.geometry.size(), workers, [&](std::size_t, std::size_t i) {
    auto rrng = make_rng({seed, kPhantomStream, i / eyes_per_patient, i % eyes_per_patient, 1});
    auto v = render_phantom(ds.geometry[i], p.speckle, rrng);
    for (auto& x : v.values()) x = std::round(x * 255.0f);
    auto& rec = ds.manifest.records[i];
    rec.path = out_dir / rec.path;
    write_volume(v, VolumeDType::u8, rec.path);
  });
  write_manifest(ds.manifest, out_dir / "manifest.csv");
  write_feature_table(ds.features, out_dir / "features.csv");
  return ds;
}

/// Combined hash of every file generate_dataset writes, in manifest order.
inline std::uint64_t dataset_hash(const std::filesystem::path& dir, const Manifest& m) {
  std::uint64_t h = fnv1a(nullptr, 0);
  auto mix = [&](const std::filesystem::path& p) {
    const auto v = hash_file(p);
    h = fnv1a(reinterpret_cast<const std::uint8_t*>(&v), sizeof v, h);
  };
  for (const auto& r : m.records) mix(r.path);
  mix(dir / "manifest.csv");
  mix(dir / "features.csv");
  return h;
}

}  // namespace oct3d

#endif  // OCT3D_PHANTOM_HPP
