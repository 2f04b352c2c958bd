#include <oct3d/random.hpp>
#include <oct3d/volume_io.hpp>

#include "support/tempdir.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

using oct3d::Shape;
using oct3d::Tensor;
using oct3d::VolumeDType;

TEST(Ovol, RoundTripF32IsBitwise) {
  testutil::TempDir dir;
  auto rng = oct3d::make_rng({61});
  Tensor<float> v({4, 4, 4});
  for (auto& x : v.values()) x = static_cast<float>(oct3d::uniform(rng, -1e3, 1e3));
  v[5] = -0.0f;
  v[6] = 1e-42f;  // subnormal
  oct3d::write_volume(v, VolumeDType::f32, dir / "v.ovol");
  const auto back = oct3d::read_volume(dir / "v.ovol");
  EXPECT_EQ(back.dtype, VolumeDType::f32);
  ASSERT_EQ(back.data.shape(), v.shape());
  EXPECT_EQ(std::memcmp(back.data.data(), v.data(), v.size() * sizeof(float)), 0);
}

TEST(Ovol, RoundTripU8) {
  testutil::TempDir dir;
  Tensor<float> v({2, 3, 5});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i * 37) % 256);
  oct3d::write_volume(v, VolumeDType::u8, dir / "v.ovol");
  const auto back = oct3d::read_volume(dir / "v.ovol");
  EXPECT_EQ(back.dtype, VolumeDType::u8);
  EXPECT_EQ(back.data, v);
  EXPECT_THROW(oct3d::encode_volume(Tensor<float>::full({1, 1, 1}, 256.0f), VolumeDType::u8), oct3d::ValueError);
  EXPECT_THROW(oct3d::encode_volume(Tensor<float>::full({1, 1, 1}, 0.5f), VolumeDType::u8), oct3d::ValueError);
}

TEST(Ovol, FileLengthMatchesFormat) {
  testutil::TempDir dir;
  oct3d::write_volume(Tensor<float>::full({2, 2, 2}, 255.0f), VolumeDType::u8, dir / "v.ovol");
  // 4 magic + 4 version + 4 dtype + 3 * 4 dims = 24, then 8 voxels of 1 byte
  EXPECT_EQ(std::filesystem::file_size(dir / "v.ovol"), 24u + 8u);
  const auto bytes = oct3d::read_file_bytes(dir / "v.ovol");
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "OVOL");
  EXPECT_EQ(bytes[4], 1);   // version
  EXPECT_EQ(bytes[8], 0);   // dtype u8
  EXPECT_EQ(bytes[12], 2);  // D
  EXPECT_EQ(bytes[24], 255);
}

TEST(Ovol, DistinctLoadErrors) {
  auto good = oct3d::encode_volume(Tensor<float>::zeros({2, 2, 2}), VolumeDType::f32);
  auto magic = good;
  std::memcpy(magic.data(), "XXXX", 4);
  EXPECT_THROW(oct3d::decode_volume(magic), oct3d::BadMagicError);
  auto version = good;
  version[4] = 2;
  EXPECT_THROW(oct3d::decode_volume(version), oct3d::BadVersionError);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(oct3d::decode_volume(truncated), oct3d::TruncatedVolumeError);
  EXPECT_THROW(oct3d::decode_volume(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)),
               oct3d::TruncatedVolumeError);
  auto dtype = good;
  dtype[8] = 7;
  EXPECT_THROW(oct3d::decode_volume(dtype), oct3d::VolumeFormatError);
  EXPECT_THROW(oct3d::read_volume("/nonexistent/v.ovol"), oct3d::IoError);
}

namespace {

oct3d::Manifest parse(const std::string& text, oct3d::ManifestOptions opt = {}) {
  opt.require_files = false;
  std::istringstream in(text);
  return oct3d::parse_manifest(in, "/data", opt);
}

}  // namespace

TEST(Manifest, ParsesAndFilters) {
  const auto m = parse(
      "path,label,patient_id,eye,signal_strength\n"
      "a.ovol,0,p1,left,8\n"
      "b.ovol,1,p1,right,6\n"
      "/abs/c.ovol,glaucoma,p2,OD,7\n");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.excluded_low_signal, 1u);
  EXPECT_EQ(m.records[0].path, std::filesystem::path("/data/a.ovol"));
  EXPECT_EQ(m.records[1].path, std::filesystem::path("/abs/c.ovol"));
  EXPECT_EQ(m.records[1].label, 1);
  EXPECT_EQ(m.records[1].eye, oct3d::Eye::right);

  oct3d::ManifestOptions lenient;
  lenient.min_signal_strength = 0;
  EXPECT_EQ(parse("path,label,patient_id,eye,signal_strength\nb.ovol,1,p1,right,6\n", lenient).size(), 1u);
}

TEST(Manifest, FilteringIsIdempotent) {
  const std::string text =
      "path,label,patient_id,eye,signal_strength\n"
      "a.ovol,0,p1,left,9\nb.ovol,1,p2,right,3\nc.ovol,1,p3,left,7\n";
  const auto once = parse(text);
  std::ostringstream again;
  again << oct3d::kManifestHeader << '\n';
  for (const auto& r : once.records)
    again << r.path.string() << ',' << r.label << ',' << r.patient_id << ',' << oct3d::to_string(r.eye) << ','
          << r.signal_strength << '\n';
  const auto twice = parse(again.str());
  EXPECT_EQ(twice.size(), once.size());
  EXPECT_EQ(twice.excluded_low_signal, 0u);
}

TEST(Manifest, EmptyBodyWarns) {
  const auto m = parse("path,label,patient_id,eye,signal_strength\n");
  EXPECT_EQ(m.size(), 0u);
  EXPECT_EQ(m.warnings.size(), 1u);
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  const std::string h = "path,label,patient_id,eye,signal_strength\n";
  auto expect_line = [&](const std::string& body, const std::string& line) {
    try {
      parse(h + body);
      FAIL() << "expected a parse error for " << body;
    } catch (const oct3d::ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(":" + line + ":"), std::string::npos) << e.what();
    }
  };
  expect_line("a.ovol,0,p1,left,8\nb.ovol,2,p1,left,8\n", "3");
  expect_line("a.ovol,0,p1,left\n", "2");
  expect_line("a.ovol,0,p1,up,8\n", "2");
  expect_line("a.ovol,0,p1,left,eight\n", "2");
  expect_line("a.ovol,0,p1,left,8\na.ovol,1,p2,left,8\n", "3");
  EXPECT_THROW(parse("a.ovol,0,p1,left,8\n"), oct3d::ParseError);
}

TEST(Manifest, ClassCountsOfLargeManifest) {
  std::ostringstream text;
  text << oct3d::kManifestHeader << '\n';
  for (int i = 0; i < 1110; ++i)
    text << "v" << i << ".ovol," << (i < 263 ? 0 : 1) << ",p" << i / 2 << ',' << (i % 2 ? "right" : "left") << ",9\n";
  const auto m = parse(text.str());
  EXPECT_EQ(m.size(), 1110u);
  EXPECT_EQ(m.class_counts(), (std::pair<std::size_t, std::size_t>{263, 847}));
}

TEST(Manifest, MissingFileAndRoundTrip) {
  testutil::TempDir dir;
  {
    std::ofstream f(dir / "m.csv");
    f << oct3d::kManifestHeader << "\nmissing.ovol,0,p1,left,9\n";
  }
  EXPECT_THROW(oct3d::load_manifest(dir / "m.csv"), oct3d::IoError);

  oct3d::write_volume(Tensor<float>::zeros({1, 1, 1}), VolumeDType::u8, dir / "x.ovol");
  oct3d::Manifest m;
  m.records.push_back({dir / "x.ovol", 1, "p9", oct3d::Eye::right, 8});
  oct3d::write_manifest(m, dir / "out.csv");
  const auto back = oct3d::load_manifest(dir / "out.csv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.records[0].path.lexically_normal(), (dir / "x.ovol").lexically_normal());
  EXPECT_EQ(back.records[0].patient_id, "p9");
  std::ifstream in(dir / "out.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(row, "x.ovol,1,p9,right,8");
}

TEST(LoadExample, ResamplesAndScales) {
  testutil::TempDir dir;
  auto rng = oct3d::make_rng({62});
  Tensor<float> raw({20, 20, 40});
  for (auto& v : raw.values()) v = static_cast<float>(oct3d::uniform_int(rng, 0, 255));
  oct3d::write_volume(raw, VolumeDType::u8, dir / "a.ovol");
  oct3d::VolumeRecord r{dir / "a.ovol", 1, "p", oct3d::Eye::left, 9};
  auto [x, label] = oct3d::load_example(r, {8, 8, 16});
  EXPECT_EQ(label, 1);
  EXPECT_EQ(x.shape(), (Shape{8, 8, 16}));
  EXPECT_GE(oct3d::min_value(x), 0.0f);
  EXPECT_LE(oct3d::max_value(x), 1.0f);

  auto [same, l2] = oct3d::load_example(r, {20, 20, 40});
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_FLOAT_EQ(same[i], raw[i] / 255.0f);

  oct3d::write_volume(Tensor<float>::zeros({3, 3, 3}), VolumeDType::f32, dir / "z.ovol");
  auto [z, l3] = oct3d::load_example({dir / "z.ovol", 0, "q", oct3d::Eye::left, 9}, {5, 5, 5});
  EXPECT_EQ(oct3d::max_value(z), 0.0f);

  oct3d::write_volume(Tensor<float>::full({2, 2, 2}, 40.0f), VolumeDType::f32, dir / "f.ovol");
  auto [f, l4] = oct3d::load_example({dir / "f.ovol", 0, "q", oct3d::Eye::left, 9}, {2, 2, 2});
  EXPECT_EQ(oct3d::max_value(f), 1.0f);
}

TEST(LoadExample, FullResolution) {
  testutil::TempDir dir;
  Tensor<float> raw({200, 200, 1024});
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(i % 251);
  oct3d::write_volume(raw, VolumeDType::u8, dir / "big.ovol");
  auto [x, label] = oct3d::load_example({dir / "big.ovol", 0, "p", oct3d::Eye::left, 9}, {64, 64, 128});
  EXPECT_EQ(x.shape(), (Shape{64, 64, 128}));
  EXPECT_GE(oct3d::min_value(x), 0.0f);
  EXPECT_LE(oct3d::max_value(x), 1.0f);
}
