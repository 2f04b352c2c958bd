#ifndef OCT3D_NN_CHECKPOINT_HPP
#define OCT3D_NN_CHECKPOINT_HPP

#include <oct3d/binary_io.hpp>
#include <oct3d/error.hpp>
#include <oct3d/nn/model.hpp>
#include <oct3d/optim.hpp>
#include <oct3d/tensor.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

// Checkpoint layout (little-endian):
//   "OCTC" | version u32 | group count u32 |
//   per group: name length u16, name bytes, rank u8, dims u32 x rank, f32 data
// Groups are named "<layer>/<tensor>"; "meta/architecture" stores the
// ModelSpec and "opt/..." groups the optional optimizer state.

namespace oct3d::nn {

inline constexpr char kCheckpointMagic[4] = {'O', 'C', 'T', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointGroup {
  std::string name;
  Shape dims;
  std::vector<float> data;
};

inline std::vector<std::uint8_t> encode_groups(const std::vector<CheckpointGroup>& groups) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(groups.size()));
  for (const auto& g : groups) {
    if (g.name.size() > 0xffff) throw ValueError("checkpoint group name too long");
    w.u16(static_cast<std::uint16_t>(g.name.size()));
    w.bytes(g.name.data(), g.name.size());
    w.u8(static_cast<std::uint8_t>(g.dims.size()));
    for (auto d : g.dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : g.data) w.f32(v);
  }
  return w.buffer();
}

inline std::vector<CheckpointGroup> decode_groups(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw ParseError("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<CheckpointGroup> groups;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointGroup g;
    g.name.resize(r.u16());
    r.bytes(g.name.data(), g.name.size());
    const auto rank = r.u8();
    for (std::uint8_t k = 0; k < rank; ++k) g.dims.push_back(r.u32());
    const std::size_t n = rank ? shape_numel(g.dims) : 0;
    if (!r.has(n * 4)) throw ParseError("checkpoint group '" + g.name + "' is truncated");
    g.data.resize(n);
    for (auto& v : g.data) v = r.f32();
    groups.push_back(std::move(g));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after checkpoint groups");
  return groups;
}

/// Model parameters as checkpoint groups (float32), architecture first.
template <typename T>
std::vector<CheckpointGroup> model_groups(const ModelSpec& spec, const ModelParams<T>& params) {
  check_params(spec, params);
  std::vector<CheckpointGroup> out;
  CheckpointGroup meta{"meta/architecture", {spec.conv_layers.size() + 1, 3}, {}};
  for (const auto& l : spec.conv_layers)
    for (auto v : {l.filters, l.kernel, l.stride}) meta.data.push_back(static_cast<float>(v));
  for (auto v : {static_cast<std::size_t>(spec.use_batchnorm), spec.num_classes, spec.in_channels})
    meta.data.push_back(static_cast<float>(v));
  out.push_back(std::move(meta));
  for (const auto& nt : all_tensors(params)) {
    CheckpointGroup g{nt.name, nt.tensor->shape(), {}};
    g.data.assign(nt.tensor->values().begin(), nt.tensor->values().end());
    out.push_back(std::move(g));
  }
  return out;
}

template <typename T>
std::vector<CheckpointGroup> optimizer_groups(const ModelParams<T>& params, const OptimizerState<T>& opt) {
  std::vector<CheckpointGroup> out;
  const auto names = trainable_names(params);
  if (names.size() != opt.m.size()) throw ShapeError("optimizer state does not match parameters");
  const auto& c = opt.config;
  out.push_back({"opt/config", {6},
                 {static_cast<float>(static_cast<int>(c.kind)), static_cast<float>(c.lr), static_cast<float>(c.beta1),
                  static_cast<float>(c.beta2), static_cast<float>(c.eps), static_cast<float>(opt.t)}});
  for (std::size_t i = 0; i < names.size(); ++i) {
    out.push_back({"opt/" + names[i] + "/m", opt.m[i].shape(), {opt.m[i].values().begin(), opt.m[i].values().end()}});
    out.push_back({"opt/" + names[i] + "/v", opt.v[i].shape(), {opt.v[i].values().begin(), opt.v[i].values().end()}});
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams<T>& params,
                     const OptimizerState<T>* opt = nullptr) {
  auto groups = model_groups(spec, params);
  if (opt) {
    auto og = optimizer_groups(params, *opt);
    groups.insert(groups.end(), og.begin(), og.end());
  }
  write_file_bytes(path, encode_groups(groups));
}

struct LoadedModel {
  ModelSpec spec;
  ModelParams<float> params;
  std::vector<CheckpointGroup> optimizer;  // raw "opt/..." groups, possibly empty
};

inline LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::vector<CheckpointGroup> groups;
  try {
    groups = decode_groups(read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  std::map<std::string, const CheckpointGroup*> by_name;
  LoadedModel out;
  for (const auto& g : groups) {
    if (g.name.rfind("opt/", 0) == 0)
      out.optimizer.push_back(g);
    else if (!by_name.emplace(g.name, &g).second)
      throw ParseError(path.string() + ": duplicate group " + g.name);
  }
  auto get = [&](const std::string& name) -> Tensor<float> {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError(path.string() + ": missing group " + name);
    return Tensor<float>(it->second->dims, it->second->data);
  };
  const Tensor<float> meta = get("meta/architecture");
  if (meta.rank() != 2 || meta.dim(1) != 3 || meta.dim(0) < 2)
    throw ParseError(path.string() + ": malformed architecture group");
  const std::size_t L = meta.dim(0) - 1;
  for (std::size_t i = 0; i < L; ++i)
    out.spec.conv_layers.push_back({static_cast<std::size_t>(meta[i * 3]), static_cast<std::size_t>(meta[i * 3 + 1]),
                                    static_cast<std::size_t>(meta[i * 3 + 2])});
  out.spec.use_batchnorm = meta[L * 3] != 0.0f;
  out.spec.num_classes = static_cast<std::size_t>(meta[L * 3 + 1]);
  out.spec.in_channels = static_cast<std::size_t>(meta[L * 3 + 2]);

  for (std::size_t i = 0; i < L; ++i) {
    out.params.conv.push_back({get(conv_group(i) + "/weight"), get(conv_group(i) + "/bias")});
    if (out.spec.use_batchnorm)
      out.params.bn.push_back({get(bn_group(i) + "/gamma"), get(bn_group(i) + "/beta"),
                               get(bn_group(i) + "/running_mean"), get(bn_group(i) + "/running_var")});
  }
  out.params.dense = {get("dense/weight"), get("dense/bias")};
  try {
    check_params(out.spec, out.params);
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < out.params.bn.size(); ++i)
    for (float v : out.params.bn[i].running_var.values())
      if (!(v > 0)) throw ParseError(path.string() + ": non-positive running variance in " + bn_group(i));
  return out;
}

/// Loads and checks the architecture against `expected`.
inline LoadedModel load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected) {
  auto m = load_checkpoint(path);
  if (!(m.spec == expected)) throw ShapeError(path.string() + ": checkpoint architecture differs from expected model");
  return m;
}

/// Restores optimizer state saved alongside a model.
template <typename T>
OptimizerState<T> restore_optimizer(const LoadedModel& m, const ModelParams<T>& params) {
  std::map<std::string, const CheckpointGroup*> by_name;
  for (const auto& g : m.optimizer) by_name[g.name] = &g;
  auto cfg_it = by_name.find("opt/config");
  if (cfg_it == by_name.end() || cfg_it->second->data.size() != 6) throw ParseError("checkpoint has no optimizer state");
  const auto& c = cfg_it->second->data;
  OptimizerState<T> s;
  s.config = {static_cast<OptimizerKind>(static_cast<int>(c[0])), c[1], c[2], c[3], c[4]};
  s.t = static_cast<std::uint64_t>(c[5]);
  const auto names = trainable_names(params);
  for (const auto& name : names) {
    const auto& shape = [&]() -> const Shape& {
      for (const auto& nt : all_tensors(params))
        if (nt.name == name) return nt.tensor->shape();
      throw ParseError("unknown parameter " + name);
    }();
    for (const char* slot : {"/m", "/v"}) {
      auto it = by_name.find("opt/" + name + slot);
      if (it == by_name.end() || it->second->dims != shape)
        throw ParseError("optimizer slot for " + name + " missing or mis-shaped");
      Tensor<T> t(it->second->dims, std::vector<T>(it->second->data.begin(), it->second->data.end()));
      (slot[1] == 'm' ? s.m : s.v).push_back(std::move(t));
    }
  }
  s.initialized = true;
  return s;
}

}  // namespace oct3d::nn

#endif  // OCT3D_NN_CHECKPOINT_HPP
