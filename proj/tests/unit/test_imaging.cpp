#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "phantom.hpp"
#include "synthct/imaging.hpp"
#include "test_util.hpp"

using namespace synthct;
using synthct::testing::TempDir;

namespace {

// Minimal explicit-VR little-endian writer for crafting test files.
struct DicomBytes {
  std::vector<std::uint8_t> b = std::vector<std::uint8_t>(128, 0);
  DicomBytes() { b.insert(b.end(), {'D', 'I', 'C', 'M'}); }

  void u16(std::uint16_t v) { b.insert(b.end(), {std::uint8_t(v & 0xFF), std::uint8_t(v >> 8)}); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
  }
  void short_el(std::uint16_t g, std::uint16_t e, const char* vr, std::vector<std::uint8_t> value) {
    if (value.size() % 2) value.push_back(vr[0] == 'U' && vr[1] == 'I' ? 0 : ' ');
    u16(g), u16(e);
    b.push_back(vr[0]), b.push_back(vr[1]);
    u16(static_cast<std::uint16_t>(value.size()));
    b.insert(b.end(), value.begin(), value.end());
  }
  void text(std::uint16_t g, std::uint16_t e, const char* vr, const std::string& s) {
    short_el(g, e, vr, std::vector<std::uint8_t>(s.begin(), s.end()));
  }
  void us(std::uint16_t g, std::uint16_t e, std::uint16_t v) {
    short_el(g, e, "US", {std::uint8_t(v & 0xFF), std::uint8_t(v >> 8)});
  }
  void long_el(std::uint16_t g, std::uint16_t e, const char* vr, const std::vector<std::uint8_t>& value) {
    u16(g), u16(e);
    b.push_back(vr[0]), b.push_back(vr[1]);
    u16(0);
    u32(static_cast<std::uint32_t>(value.size()));
    b.insert(b.end(), value.begin(), value.end());
  }
  void save(const std::filesystem::path& p) const {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), b.size());
  }
};

// Pixel bytes of the crafted 4x4 CT, little-endian words.
const std::vector<std::uint8_t> kPixelBytes = {
    0x00, 0x00, 0x00, 0x04, 0xE8, 0x03, 0xFF, 0x0F,  // 0, 1024, 1000, 4095
    0x01, 0x00, 0x18, 0x04, 0x00, 0x08, 0x10, 0x27,  // 1, 1048, 2048, 10000
    0x64, 0x00, 0xC8, 0x00, 0x2C, 0x01, 0x90, 0x01,  // 100, 200, 300, 400
    0xFE, 0x03, 0xFF, 0x03, 0x01, 0x04, 0x02, 0x04,  // 1022, 1023, 1025, 1026
};
// Decoded by hand: raw * 1 - 1024, clamped to [-1024, 3071].
const double kExpectedHu[16] = {-1024, 0,    -24,  3071,  //
                                -1023, 24,   1024, 3071,  //
                                -924,  -824, -724, -624,  //
                                -2,    -1,   1,    2};

DicomBytes crafted_ct(const std::string& syntax = "1.2.840.10008.1.2.1", bool with_slope = true) {
  DicomBytes d;
  d.text(0x0002, 0x0010, "UI", syntax);
  d.text(0x0008, 0x0060, "CS", "CT");
  d.text(0x0020, 0x000E, "UI", "1.2.3.4");
  d.text(0x0020, 0x0013, "IS", "7");
  d.us(0x0028, 0x0002, 1);
  d.us(0x0028, 0x0010, 4);
  d.us(0x0028, 0x0011, 4);
  d.text(0x0028, 0x0030, "DS", "0.75\\0.8");
  d.us(0x0028, 0x0100, 16);
  d.us(0x0028, 0x0101, 16);
  d.us(0x0028, 0x0103, 0);
  d.text(0x0028, 0x1052, "DS", "-1024");
  if (with_slope) d.text(0x0028, 0x1053, "DS", "1");
  d.long_el(0x7FE0, 0x0010, "OW", kPixelBytes);
  return d;
}

SliceImage flat_slice(const std::string& vol, int idx, int rows, int cols, double v) {
  SliceImage s;
  s.volume_id = vol;
  s.slice_index = idx;
  s.rows = rows;
  s.cols = cols;
  s.values.assign(static_cast<std::size_t>(rows) * cols, v);
  return s;
}

ImageSet volume_set(int n, const std::string& vol = "volA") {
  Volume v{vol, {}};
  for (int i = 0; i < n; ++i) v.slices.push_back(std::make_shared<SliceImage>(flat_slice(vol, i, 2, 2, 0.0)));
  return ImageSet("s", Provenance::Real, {v});
}

}  // namespace

TEST_CASE("crafted 4x4 DICOM decodes to the hand table") {
  TempDir dir("dicom");
  crafted_ct().save(dir / "a.dcm");
  const SliceImage s = load_dicom_slice(dir / "a.dcm", {});
  REQUIRE(s.rows == 4);
  REQUIRE(s.cols == 4);
  CHECK(s.modality == Modality::CT);
  CHECK(s.volume_id == "1.2.3.4");
  CHECK(s.slice_index == 7);
  CHECK(s.pixel_spacing[0] == doctest::Approx(0.75));
  CHECK(s.pixel_spacing[1] == doctest::Approx(0.8));
  for (int i = 0; i < 16; ++i) {
    CAPTURE(i);
    CHECK(s.values[i] == kExpectedHu[i]);
  }
}

TEST_CASE("DICOM rescale endpoints") {
  // raw 1024 -> 0 HU and raw 0 -> -1024 HU are entries 1 and 0 of the table.
  CHECK(kExpectedHu[1] == 0.0);
  CHECK(kExpectedHu[0] == -1024.0);
}

TEST_CASE("DICOM rejects unsupported transfer syntax and missing tags") {
  TempDir dir("dicom-bad");
  crafted_ct("1.2.840.10008.1.2.4.50").save(dir / "jpeg.dcm");
  CHECK_THROWS_KIND(load_dicom_slice(dir / "jpeg.dcm", {}), ErrorKind::UnsupportedEncoding);
  crafted_ct("1.2.840.10008.1.2").save(dir / "implicit.dcm");
  CHECK_THROWS_KIND(load_dicom_slice(dir / "implicit.dcm", {}), ErrorKind::UnsupportedEncoding);
  crafted_ct("1.2.840.10008.1.2.1", false).save(dir / "noslope.dcm");
  CHECK_THROWS_KIND(load_dicom_slice(dir / "noslope.dcm", {}), ErrorKind::MalformedInput);
  std::ofstream(dir / "junk.dcm") << "not a dicom file";
  CHECK_THROWS_KIND(load_dicom_slice(dir / "junk.dcm", {}), ErrorKind::MalformedInput);
  CHECK_THROWS_KIND(load_dicom_slice(dir / "missing.dcm", {}), ErrorKind::IoError);
}

TEST_CASE("MR DICOM passes values through and needs a variant") {
  TempDir dir("dicom-mr");
  DicomBytes d;
  d.text(0x0002, 0x0010, "UI", "1.2.840.10008.1.2.1");
  d.text(0x0008, 0x0060, "CS", "MR");
  d.us(0x0028, 0x0010, 4);
  d.us(0x0028, 0x0011, 4);
  d.us(0x0028, 0x0100, 16);
  d.us(0x0028, 0x0103, 0);
  d.long_el(0x7FE0, 0x0010, "OW", kPixelBytes);
  d.save(dir / "mr.dcm");
  CHECK_THROWS_KIND(load_dicom_slice(dir / "mr.dcm", {}), ErrorKind::MalformedInput);
  IngestConfig cfg;
  cfg.modality = Modality::MR_T2;
  const SliceImage s = load_dicom_slice(dir / "mr.dcm", cfg);
  CHECK(s.modality == Modality::MR_T2);
  CHECK(s.values[3] == 4095.0);
  CHECK(s.values[7] == 10000.0);
}

TEST_CASE("portable slice: linear endpoints and modality") {
  TempDir dir("pgm");
  write_pgm16({2, 2, {0, 65535, 0, 65535}}, dir / "a.pgm");
  std::ofstream(dir / "a.pgm.json") << R"({"modality": "CT", "calibration": {"minmax": [-1024, 3071]}})";
  const SliceImage s = load_portable_slice(dir / "a.pgm");
  CHECK(s.values == std::vector<double>{-1024, 3071, -1024, 3071});

  write_pgm16({1, 1, {5}}, dir / "b.pgm");
  std::ofstream(dir / "b.pgm.json") << R"({"modality": "MR_T2", "calibration": {"slope": 1, "intercept": 0}})";
  CHECK(load_portable_slice(dir / "b.pgm").modality == Modality::MR_T2);

  write_pgm16({1, 1, {5}}, dir / "c.pgm");
  CHECK_THROWS_KIND(load_portable_slice(dir / "c.pgm"), ErrorKind::MalformedInput);
  std::ofstream(dir / "c.pgm.json") << R"({"modality": "XR", "calibration": {"slope": 1, "intercept": 0}})";
  CHECK_THROWS_KIND(load_portable_slice(dir / "c.pgm"), ErrorKind::MalformedInput);
  std::ofstream(dir / "c.pgm.json") << R"({"modality": "CT"})";
  CHECK_THROWS_KIND(load_portable_slice(dir / "c.pgm"), ErrorKind::MalformedInput);

  std::ofstream(dir / "d.pgm", std::ios::binary) << "P5\n1 1\n255\n\x05";
  std::ofstream(dir / "d.pgm.json") << R"({"modality": "CT", "calibration": {"slope": 1, "intercept": 0}})";
  CHECK_THROWS_KIND(load_portable_slice(dir / "d.pgm"), ErrorKind::UnsupportedEncoding);
  std::ofstream(dir / "e.pgm", std::ios::binary) << "P2\n1 1\n65535\n5\n";
  std::ofstream(dir / "e.pgm.json") << R"({"modality": "CT", "calibration": {"slope": 1, "intercept": 0}})";
  CHECK_THROWS_KIND(load_portable_slice(dir / "e.pgm"), ErrorKind::UnsupportedEncoding);
}

TEST_CASE("portable slice round-trips bit-exactly") {
  TempDir dir("pgm-rt");
  std::mt19937_64 rng(3);
  for (const Calibration& cal : {Calibration::linear(1.0, -1024.0), Calibration::linear(0.5, -2.0),
                                 Calibration::minmax(-1.5, 7.25)}) {
    std::vector<std::uint16_t> raw(64);
    for (auto& r : raw) r = static_cast<std::uint16_t>(rng() & 0xFFFF);
    write_pgm16({8, 8, raw}, dir / "x.pgm");
    nlohmann::json meta{{"modality", "CT"}, {"volume_id", "v"}, {"slice_index", 3}};
    if (cal.kind == Calibration::Kind::MinMax)
      meta["calibration"] = {{"minmax", {cal.lo(), cal.hi()}}};
    else
      meta["calibration"] = {{"slope", cal.slope}, {"intercept", cal.intercept}};
    std::ofstream(dir / "x.pgm.json") << meta.dump();
    const SliceImage a = load_portable_slice(dir / "x.pgm");
    save_portable_slice(a, dir / "y.pgm");
    const SliceImage b = load_portable_slice(dir / "y.pgm");
    CHECK(read_pgm16(dir / "y.pgm").pixels == raw);
    CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
    CHECK(b.volume_id == "v");
    CHECK(b.slice_index == 3);
  }
}

TEST_CASE("decile layer rule") {
  SUBCASE("n = 30 endpoints") {
    const ImageSet s = assign_layers(volume_set(30));
    for (int i = 0; i < 3; ++i) CHECK(s.layer_of(0, i).index() == 1);
    for (int i = 27; i < 30; ++i) CHECK(s.layer_of(0, i).index() == 10);
  }
  SUBCASE("n = 7") {
    const ImageSet s = assign_layers(volume_set(7));
    const int expected[7] = {1, 2, 3, 5, 6, 8, 9};
    for (int i = 0; i < 7; ++i) CHECK(s.layer_of(0, i).index() == expected[i]);
  }
  SUBCASE("single slice and total function") {
    CHECK(assign_layers(volume_set(1)).layer_of(0, 0).index() == 1);
    const ImageSet s = assign_layers(volume_set(53));
    std::size_t total = 0;
    for (int l = 1; l <= 10; ++l) total += s.layer_slices(LayerId(l)).size();
    CHECK(total == 53);
  }
}

TEST_CASE("layer overrides take precedence and are validated") {
  const ImageSet base = volume_set(20);
  const ImageSet s = assign_layers(base, {{"volA/5", 10}});
  CHECK(s.layer_of(0, 5).index() == 10);
  CHECK(s.layer_of(0, 4).index() == 3);
  CHECK_THROWS_KIND(assign_layers(base, {{"volB/5", 2}}), ErrorKind::MalformedInput);
  CHECK_THROWS_KIND(assign_layers(base, {{"volA/5", 11}}), ErrorKind::MalformedInput);
  CHECK_THROWS_KIND(base.layer_of(0, 0), ErrorKind::InvalidParameter);
  CHECK_THROWS_KIND(LayerId(0), ErrorKind::InvalidParameter);
}

TEST_CASE("ImageSet invariants") {
  Volume gap{"v", {std::make_shared<SliceImage>(flat_slice("v", 0, 1, 1, 0)),
                   std::make_shared<SliceImage>(flat_slice("v", 2, 1, 1, 0))}};
  CHECK_THROWS_KIND(ImageSet("s", Provenance::Real, {gap}), ErrorKind::MalformedInput);
  Volume dup{"v", {std::make_shared<SliceImage>(flat_slice("v", 0, 1, 1, 0)),
                   std::make_shared<SliceImage>(flat_slice("v", 0, 1, 1, 0))}};
  CHECK_THROWS_KIND(ImageSet("s", Provenance::Real, {dup}), ErrorKind::MalformedInput);
  Volume a{"v", {std::make_shared<SliceImage>(flat_slice("v", 0, 1, 1, 0))}};
  CHECK_THROWS_KIND(ImageSet("s", Provenance::Real, {a, a}), ErrorKind::MalformedInput);
  Volume wrong{"v", {std::make_shared<SliceImage>(flat_slice("w", 0, 1, 1, 0))}};
  CHECK_THROWS_KIND(ImageSet("s", Provenance::Real, {wrong}), ErrorKind::MalformedInput);
  SliceImage bad = flat_slice("v", 0, 2, 2, 0);
  bad.values.pop_back();
  CHECK_THROWS_KIND(bad.validate(), ErrorKind::InvalidParameter);
  // Unsorted input is sorted by slice_index.
  Volume unsorted{"v", {std::make_shared<SliceImage>(flat_slice("v", 1, 1, 1, 0)),
                        std::make_shared<SliceImage>(flat_slice("v", 0, 1, 1, 0))}};
  const ImageSet s("s", Provenance::Real, {unsorted});
  CHECK(s.volumes()[0].slices[0]->slice_index == 0);
}

TEST_CASE("window_to_8bit examples") {
  SliceImage s = flat_slice("v", 0, 1, 6, 0);
  s.values = {-160, 240, 40, -1000, 3000, 39.2};
  const Gray8Image g = window_to_8bit(s, 40, 400);
  CHECK(g.pixels == std::vector<std::uint8_t>{0, 255, 128, 0, 255, 127});
  CHECK_THROWS_KIND(window_to_8bit(s, 40, 0), ErrorKind::InvalidParameter);
  CHECK_THROWS_KIND(window_to_8bit(s, 40, -5), ErrorKind::InvalidParameter);
}

TEST_CASE("window_to_8bit is monotone and stable on its own output") {
  SliceImage s = flat_slice("v", 0, 1, 2001, 0);
  for (int i = 0; i <= 2000; ++i) s.values[i] = -1000.0 + i;
  const Gray8Image g = window_to_8bit(s, 40, 400);
  for (int i = 1; i <= 2000; ++i) CHECK(g.pixels[i] >= g.pixels[i - 1]);
  SliceImage again = s;
  for (int i = 0; i <= 2000; ++i) again.values[i] = g.pixels[i];
  const Gray8Image g2 = window_to_8bit(again, 127.5, 255);
  const Gray8Image g3 = window_to_8bit(again, 127.5, 255);
  CHECK(g2.pixels == g3.pixels);
  CHECK(g2.pixels == g.pixels);
}

TEST_CASE("manifest loading: CT clamping, MR normalization, layer entries") {
  TempDir dir("manifest");
  std::filesystem::create_directories(dir / "v");
  for (int i = 0; i < 3; ++i) {
    write_pgm16({1, 2, {0, static_cast<std::uint16_t>(5000 + 100 * i)}}, dir / ("v/" + std::to_string(i) + ".pgm"));
    std::ofstream(dir / ("v/" + std::to_string(i) + ".pgm.json"))
        << R"({"modality": "CT", "calibration": {"slope": 1, "intercept": -1024}})";
  }
  nlohmann::json m = {{"set_id", "ct"},
                      {"provenance", "real"},
                      {"hu_range", {-1000, 3071}},
                      {"volumes",
                       {{{"volume_id", "v"},
                         {"slices",
                          {{{"path", "v/0.pgm"}, {"slice_index", 0}},
                           {{"path", "v/1.pgm"}, {"slice_index", 1}, {"layer", 7}},
                           {{"path", "v/2.pgm"}, {"slice_index", 2}}}}}}}};
  std::ofstream(dir / "m.json") << m.dump();
  const ImageSet s = load_manifest(dir / "m.json", 2);
  CHECK(s.slice_count() == 3);
  CHECK(s.volumes()[0].slices[0]->values[0] == -1000.0);  // clamped from -1024
  CHECK(s.volumes()[0].slices[0]->values[1] == 3071.0);   // clamped from 3976
  CHECK(s.layer_of(0, 1).index() == 7);
  CHECK(s.layer_of(0, 2).index() == 7);  // floor(2*10/3)+1

  m["modality"] = "MR_T1_IP";
  for (int i = 0; i < 3; ++i)
    std::ofstream(dir / ("v/" + std::to_string(i) + ".pgm.json"))
        << R"({"modality": "MR_T1_IP", "calibration": {"slope": 1, "intercept": 0}})";
  std::ofstream(dir / "mr.json") << m.dump();
  const ImageSet mr = load_manifest(dir / "mr.json");
  double lo = 1e9, hi = -1e9;
  for (const SliceImage* sl : mr.all_slices())
    for (double v : sl->values) lo = std::min(lo, v), hi = std::max(hi, v);
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);

  std::ofstream(dir / "bad.json") << R"({"set_id": "x"})";
  CHECK_THROWS_KIND(load_manifest(dir / "bad.json"), ErrorKind::MalformedInput);
}

TEST_CASE("layer override file") {
  TempDir dir("overrides");
  std::ofstream(dir / "o.json") << R"({"volA/3": 9})";
  const auto o = load_layer_overrides(dir / "o.json");
  CHECK(o.at("volA/3") == 9);
  std::ofstream(dir / "bad.json") << R"({"volA/3": "nine"})";
  CHECK_THROWS_KIND(load_layer_overrides(dir / "bad.json"), ErrorKind::MalformedInput);
}

TEST_CASE("select_volumes keeps layers") {
  synthct::testing::PhantomSpec spec;
  spec.volumes = 4;
  spec.slices_per_volume = 10;
  spec.rows = spec.cols = 8;
  const ImageSet s = synthct::testing::make_phantom(spec);
  const std::size_t pick[] = {2, 0};
  const ImageSet sub = select_volumes(s, pick, "sub");
  CHECK(sub.volumes().size() == 2);
  CHECK(sub.volumes()[0].volume_id == "vol2");
  CHECK(sub.layer_of(0, 9).index() == 10);
  const std::size_t bad[] = {0, 0};
  CHECK_THROWS_KIND(select_volumes(s, bad, "x"), ErrorKind::InvalidParameter);
}
