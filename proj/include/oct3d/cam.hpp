#ifndef OCT3D_CAM_HPP
#define OCT3D_CAM_HPP

#include <oct3d/binary_io.hpp>
#include <oct3d/nn/model.hpp>
#include <oct3d/tensor.hpp>
#include <oct3d/volume_io.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace oct3d {

struct CamVolume {
  std::size_t class_index = 0;
  Tensor<float> raw;      // normalized, feature-map resolution
  Tensor<float> resized;  // empty until resize_cam
  double norm_min = 0;    // clamped map range before scaling
  double norm_max = 0;
};

/// Unclamped, unnormalized sum_k w_k^c f_k(p) for one sample of [N,C,D,H,W] features.
template <typename T>
Tensor<T> cam_weighted_sum(const Tensor<T>& features, const Tensor<T>& dense_weight, std::size_t class_index,
                           std::size_t sample = 0) {
  if (features.rank() != 5) throw ShapeError("CAM needs [N,C,D,H,W] feature maps, got " + shape_str(features.shape()));
  const std::size_t C = features.dim(1);
  if (dense_weight.rank() != 2 || dense_weight.dim(1) != C)
    throw ShapeError("dense weights " + shape_str(dense_weight.shape()) + " do not match " + std::to_string(C) +
                     " feature channels");
  if (class_index >= dense_weight.dim(0))
    throw ValueError("class index " + std::to_string(class_index) + " out of range for " +
                     std::to_string(dense_weight.dim(0)) + " classes");
  if (sample >= features.dim(0)) throw ValueError("sample " + std::to_string(sample) + " out of range");
  const Shape spatial{features.dim(2), features.dim(3), features.dim(4)};
  const std::size_t V = shape_numel(spatial);
  Tensor<T> out(spatial, T{0});
  const T* f = features.data() + sample * C * V;
  for (std::size_t k = 0; k < C; ++k) {
    const T w = dense_weight(class_index, k);
    for (std::size_t v = 0; v < V; ++v) out[v] += w * f[k * V + v];
  }
  return out;
}

/// Clamp negatives to 0, then min-max scale to [0,1]; a constant map becomes all zeros.
template <typename T>
CamVolume normalize_cam(const Tensor<T>& weighted, std::size_t class_index) {
  CamVolume cam;
  cam.class_index = class_index;
  cam.raw = Tensor<float>(weighted.shape());
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    const double v = std::max(0.0, static_cast<double>(weighted[i]));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  cam.norm_min = lo;
  cam.norm_max = hi;
  const double range = hi - lo;
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    const double v = std::max(0.0, static_cast<double>(weighted[i]));
    cam.raw[i] = range > 0 ? static_cast<float>((v - lo) / range) : 0.0f;
  }
  return cam;
}

template <typename T>
CamVolume compute_cam(const nn::ForwardTrace<T>& trace, const Tensor<T>& dense_weight, std::size_t class_index,
                      std::size_t sample = 0) {
  return normalize_cam(cam_weighted_sum(trace.feature_maps(), dense_weight, class_index, sample), class_index);
}

inline CamVolume& resize_cam(CamVolume& cam, const Shape& target) {
  if (cam.raw.empty()) throw ValueError("CAM has no raw map to resize");
  cam.resized = resample_trilinear(cam.raw, target);
  for (auto& v : cam.resized.values()) v = std::clamp(v, 0.0f, 1.0f);
  return cam;
}

/// CAM of one [D,H,W] volume, resized back to the volume's dims.
template <typename T>
CamVolume cam_for_volume(const nn::ModelSpec& spec, const nn::ModelParams<T>& params, const Tensor<float>& volume,
                         std::size_t class_index, T* probability = nullptr) {
  if (volume.rank() != 3) throw ShapeError("CAM input must be [D,H,W], got " + shape_str(volume.shape()));
  Shape s{1, 1};
  s.insert(s.end(), volume.shape().begin(), volume.shape().end());
  const auto x = volume.cast<T>().reshaped(s);
  nn::ForwardTrace<T> trace;
  const auto out = nn::model_predict(spec, params, x, &trace);
  if (probability && class_index < out.probabilities.dim(1)) *probability = out.probabilities(0, class_index);
  auto cam = compute_cam(trace, params.dense.weight, class_index);
  resize_cam(cam, volume.shape());
  return cam;
}

/// 256-entry black -> red -> yellow -> white ramp.
inline const std::array<std::array<std::uint8_t, 3>, 256>& heat_colormap() {
  static const auto table = [] {
    std::array<std::array<std::uint8_t, 3>, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double x = 3.0 * i / 255.0;
      auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
      t[i] = {ch(x), ch(x - 1.0), ch(x - 2.0)};
    }
    return t;
  }();
  return table;
}

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  std::array<std::uint8_t, 3> at(std::size_t row, std::size_t col) const {
    const auto* p = &pixels[3 * (row * width + col)];
    return {p[0], p[1], p[2]};
  }
};

/// enface fixes depth (image rows = axis 0, cols = axis 1); side_row fixes axis 0
/// and side_col fixes axis 1 (image rows = depth in both).
enum class CamPlane { enface, side_row, side_col };

inline std::string to_string(CamPlane p) {
  switch (p) {
    case CamPlane::enface: return "enface";
    case CamPlane::side_row: return "side";
    case CamPlane::side_col: return "side_col";
  }
  return "?";
}

inline CamPlane parse_cam_plane(const std::string& s) {
  if (s == "enface") return CamPlane::enface;
  if (s == "side" || s == "side_row") return CamPlane::side_row;
  if (s == "side_col") return CamPlane::side_col;
  throw ValueError("unknown CAM view '" + s + "' (expected enface, side or side_col)");
}

inline std::size_t plane_extent(const Shape& dims, CamPlane plane) {
  return dims[plane == CamPlane::enface ? 2 : plane == CamPlane::side_row ? 0 : 1];
}

/// Grayscale slice tinted by the heat ramp with per-pixel opacity alpha * cam.
inline RgbImage overlay_slice(const Tensor<float>& volume, const Tensor<float>& cam, CamPlane plane, std::size_t index,
                              double alpha = 0.5) {
  if (volume.rank() != 3 || cam.shape() != volume.shape())
    throw ShapeError("overlay needs a CAM resized to the volume dims: volume " + shape_str(volume.shape()) + ", cam " +
                     shape_str(cam.shape()));
  const std::size_t extent = plane_extent(volume.shape(), plane);
  if (index >= extent)
    throw ValueError(to_string(plane) + " slice index " + std::to_string(index) + " out of range [0," +
                     std::to_string(extent) + ")");
  const std::size_t D = volume.dim(0), H = volume.dim(1), W = volume.dim(2);
  RgbImage img;
  switch (plane) {
    case CamPlane::enface: img.height = D, img.width = H; break;
    case CamPlane::side_row: img.height = W, img.width = H; break;
    case CamPlane::side_col: img.height = W, img.width = D; break;
  }
  img.pixels.resize(3 * img.width * img.height);
  const auto& ramp = heat_colormap();
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c) {
      std::size_t d = 0, h = 0, w = 0;
      switch (plane) {
        case CamPlane::enface: d = r, h = c, w = index; break;
        case CamPlane::side_row: d = index, h = c, w = r; break;
        case CamPlane::side_col: d = c, h = index, w = r; break;
      }
      const double g = 255.0 * std::clamp(static_cast<double>(volume(d, h, w)), 0.0, 1.0);
      const double m = std::clamp(static_cast<double>(cam(d, h, w)), 0.0, 1.0);
      const auto& heat = ramp[static_cast<std::size_t>(std::lround(255.0 * m))];
      const double a = alpha * m;
      for (int ch = 0; ch < 3; ++ch)
        img.pixels[3 * (r * img.width + c) + ch] = static_cast<std::uint8_t>(std::lround((1.0 - a) * g + a * heat[ch]));
    }
  return img;
}

/// Binary PPM (P6, maxval 255).
inline void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
  write_file_bytes(path, bytes);
}

inline RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string magic;
  long w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw ParseError(path.string() + ": not an 8-bit P6 image");
  in.get();
  RgbImage img;
  img.width = static_cast<std::size_t>(w);
  img.height = static_cast<std::size_t>(h);
  img.pixels.resize(3 * img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw ParseError(path.string() + ": truncated image");
  return img;
}

inline void export_overlay(const Tensor<float>& volume, const CamVolume& cam, CamPlane plane, std::size_t index,
                           const std::filesystem::path& path, double alpha = 0.5) {
  if (cam.resized.empty()) throw ValueError("CAM must be resized before export");
  write_ppm(overlay_slice(volume, cam.resized, plane, index, alpha), path);
}

inline void export_cam_volume(const CamVolume& cam, const std::filesystem::path& path) {
  write_volume(cam.resized.empty() ? cam.raw : cam.resized, VolumeDType::f32, path);
}

}  // namespace oct3d

#endif  // OCT3D_CAM_HPP
