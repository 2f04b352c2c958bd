#ifndef OCT3D_VOLUME_IO_HPP
#define OCT3D_VOLUME_IO_HPP

#include <oct3d/binary_io.hpp>
#include <oct3d/error.hpp>
#include <oct3d/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// Axis convention used throughout: a volume is [D, H, W] =
// (enface rows, enface columns, axial depth). The enface plane is axes (0, 1).
//
// OVOL layout (little-endian):
//   "OVOL" | version u32 = 1 | dtype u32 (0 = u8, 1 = f32) | D, H, W u32 | voxels

namespace oct3d {

/// OVOL file failed validation.
class VolumeFormatError : public ParseError {
 public:
  using ParseError::ParseError;
};
class BadMagicError : public VolumeFormatError {
 public:
  using VolumeFormatError::VolumeFormatError;
};
class BadVersionError : public VolumeFormatError {
 public:
  using VolumeFormatError::VolumeFormatError;
};
class TruncatedVolumeError : public VolumeFormatError {
 public:
  using VolumeFormatError::VolumeFormatError;
};

enum class VolumeDType : std::uint32_t { u8 = 0, f32 = 1 };

inline constexpr char kVolumeMagic[4] = {'O', 'V', 'O', 'L'};
inline constexpr std::uint32_t kVolumeVersion = 1;
inline constexpr std::size_t kVolumeHeaderSize = 24;

inline std::size_t dtype_size(VolumeDType t) { return t == VolumeDType::u8 ? 1 : 4; }

struct Volume {
  Tensor<float> data;  // raw values (0..255 for u8)
  VolumeDType dtype = VolumeDType::f32;
};

inline std::vector<std::uint8_t> encode_volume(const Tensor<float>& t, VolumeDType dtype) {
  if (t.rank() != 3) throw ShapeError("volumes must be 3D [D,H,W], got " + shape_str(t.shape()));
  ByteWriter w;
  w.bytes(kVolumeMagic, 4);
  w.u32(kVolumeVersion);
  w.u32(static_cast<std::uint32_t>(dtype));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  if (dtype == VolumeDType::u8) {
    for (float v : t.values()) {
      if (!(v >= 0.0f && v <= 255.0f) || v != std::round(v))
        throw ValueError("u8 volumes need integral values in [0,255], got " + std::to_string(v));
      w.u8(static_cast<std::uint8_t>(v));
    }
  } else {
    for (float v : t.values()) w.f32(v);
  }
  return w.buffer();
}

inline Volume decode_volume(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kVolumeHeaderSize)
    throw TruncatedVolumeError("file is shorter than the " + std::to_string(kVolumeHeaderSize) + "-byte header");
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kVolumeMagic, 4) != 0) throw BadMagicError("bad magic (expected \"OVOL\")");
  const auto version = r.u32();
  if (version != kVolumeVersion) throw BadVersionError("unsupported OVOL version " + std::to_string(version));
  const auto code = r.u32();
  if (code > 1) throw VolumeFormatError("unknown dtype code " + std::to_string(code));
  Volume v;
  v.dtype = static_cast<VolumeDType>(code);
  Shape dims(3);
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0) throw VolumeFormatError("volume extents must be >= 1");
  }
  const std::size_t n = shape_numel(dims);
  const std::size_t want = kVolumeHeaderSize + n * dtype_size(v.dtype);
  if (bytes.size() < want)
    throw TruncatedVolumeError("expected " + std::to_string(want) + " bytes, file has " + std::to_string(bytes.size()));
  if (bytes.size() > want) throw VolumeFormatError("trailing bytes after voxel data");
  std::vector<float> data(n);
  if (v.dtype == VolumeDType::u8)
    for (auto& x : data) x = r.u8();
  else
    for (auto& x : data) x = r.f32();
  v.data = Tensor<float>(std::move(dims), std::move(data));
  return v;
}

inline void write_volume(const Tensor<float>& t, VolumeDType dtype, const std::filesystem::path& path) {
  write_file_bytes(path, encode_volume(t, dtype));
}

inline Volume read_volume(const std::filesystem::path& path) {
  try {
    return decode_volume(read_file_bytes(path));
  } catch (const BadMagicError& e) {
    throw BadMagicError(path.string() + ": " + e.what());
  } catch (const BadVersionError& e) {
    throw BadVersionError(path.string() + ": " + e.what());
  } catch (const TruncatedVolumeError& e) {
    throw TruncatedVolumeError(path.string() + ": " + e.what());
  } catch (const VolumeFormatError& e) {
    throw VolumeFormatError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ manifest

enum class Eye { left, right };

inline std::string to_string(Eye e) { return e == Eye::left ? "left" : "right"; }

struct VolumeRecord {
  std::filesystem::path path;  // resolved against the manifest directory
  int label = 0;               // 0 healthy, 1 glaucoma
  std::string patient_id;
  Eye eye = Eye::left;
  int signal_strength = 10;
};

struct Manifest {
  std::vector<VolumeRecord> records;
  std::size_t excluded_low_signal = 0;
  std::vector<std::string> warnings;

  std::size_t size() const { return records.size(); }
  std::pair<std::size_t, std::size_t> class_counts() const {
    std::size_t pos = 0;
    for (const auto& r : records) pos += static_cast<std::size_t>(r.label == 1);
    return {records.size() - pos, pos};
  }
};

struct ManifestOptions {
  int min_signal_strength = 7;
  bool require_files = true;
};

inline constexpr const char* kManifestHeader = "path,label,patient_id,eye,signal_strength";

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline int parse_label(const std::string& s) {
  if (s == "0" || s == "healthy") return 0;
  if (s == "1" || s == "glaucoma") return 1;
  throw ParseError("unknown label '" + s + "' (expected 0/1/healthy/glaucoma)");
}

inline Eye parse_eye(const std::string& s) {
  if (s == "left" || s == "L" || s == "OS") return Eye::left;
  if (s == "right" || s == "R" || s == "OD") return Eye::right;
  throw ParseError("unknown eye '" + s + "' (expected left/right)");
}

inline int parse_int(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ParseError("expected an integer, got '" + s + "'");
  return v;
}

}  // namespace detail

/// Parses a manifest from text. Rows below `min_signal_strength` are dropped
/// and counted; relative paths are resolved against `base_dir`.
inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, const ManifestOptions& opt = {},
                               const std::string& source = "manifest") {
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (!header) {
      if (t != kManifestHeader)
        throw ParseError(source + ":" + std::to_string(lineno) + ": expected header \"" + kManifestHeader + "\"");
      header = true;
      continue;
    }
    const auto cells = detail::split_csv(t);
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != 5)
      throw ParseError(where + "expected 5 fields, found " + std::to_string(cells.size()));
    VolumeRecord r;
    try {
      if (cells[0].empty()) throw ParseError("empty path");
      if (cells[2].empty()) throw ParseError("empty patient_id");
      r.label = detail::parse_label(cells[1]);
      r.patient_id = cells[2];
      r.eye = detail::parse_eye(cells[3]);
      r.signal_strength = detail::parse_int(cells[4]);
      if (r.signal_strength < 0 || r.signal_strength > 10)
        throw ParseError("signal_strength " + cells[4] + " outside [0,10]");
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
    const std::filesystem::path p(cells[0]);
    r.path = p.is_absolute() ? p : base_dir / p;
    if (!seen.insert(r.path.lexically_normal().string()).second)
      throw ParseError(where + "duplicate path " + cells[0]);
    if (r.signal_strength < opt.min_signal_strength) {
      ++m.excluded_low_signal;
      continue;
    }
    if (opt.require_files && !std::filesystem::exists(r.path))
      throw IoError(where + "volume file not found: " + r.path.string());
    m.records.push_back(std::move(r));
  }
  if (!header) throw ParseError(source + ": missing header line \"" + std::string(kManifestHeader) + "\"");
  if (m.records.empty()) m.warnings.push_back(source + ": manifest has no usable records");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, const ManifestOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), opt, path.string());
}

/// Writes a manifest; paths below the manifest directory are stored relative.
inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  out << kManifestHeader << '\n';
  for (const auto& r : m.records) {
    auto rel = r.path.lexically_relative(base.empty() ? std::filesystem::path(".") : base);
    const bool inside = !rel.empty() && rel.begin()->string() != "..";
    out << (inside ? rel.generic_string() : r.path.generic_string()) << ',' << r.label << ',' << r.patient_id << ','
        << to_string(r.eye) << ',' << r.signal_strength << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// ----------------------------------------------------------------- examples

/// Intensity scaling to [0,1]: u8 divides by 255; f32 divides by the volume
/// maximum when it exceeds 1. Values are then clamped to [0,1].
inline Tensor<float> normalize_intensity(Tensor<float> v, VolumeDType dtype) {
  double scale = 1.0;
  if (dtype == VolumeDType::u8) {
    scale = 1.0 / 255.0;
  } else {
    const float mx = max_value(v);
    if (mx > 1.0f) scale = 1.0 / mx;
  }
  for (auto& x : v.values()) x = std::clamp(static_cast<float>(x * scale), 0.0f, 1.0f);
  return v;
}

/// Reads a record's volume, scales intensities to [0,1] and resamples it to
/// `target` with corner-aligned trilinear interpolation.
inline std::pair<Tensor<float>, int> load_example(const VolumeRecord& r, const Shape& target) {
  // read_volume errors already name the file and keep their specific type
  Volume v = read_volume(r.path);
  return {resample_trilinear(normalize_intensity(std::move(v.data), v.dtype), target), r.label};
}

}  // namespace oct3d

#endif  // OCT3D_VOLUME_IO_HPP
