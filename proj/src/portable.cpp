#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "synthct/error.hpp"
#include "synthct/imaging.hpp"

namespace synthct {
namespace {

using nlohmann::json;

std::filesystem::path sidecar_path(const std::filesystem::path& image) {
  std::filesystem::path p = image;
  p += ".json";
  return p;
}

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos,
                       const std::string& where) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw Error(ErrorKind::MalformedInput, where + ": truncated PGM header");
  return tok;
}

int header_int(const std::string& tok, const std::string& where) {
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedInput, where + ": bad PGM header field '" + tok + "'");
  }
}

}  // namespace

std::uint16_t Calibration::invert(double value) const noexcept {
  const double raw = kind == Kind::MinMax ? (value - intercept) / (upper - intercept) * 65535.0
                                          : (value - intercept) / slope;
  return static_cast<std::uint16_t>(std::clamp(std::round(raw), 0.0, 65535.0));
}

Gray16Image read_pgm16(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + where);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos, where);
  if (magic != "P5")
    throw Error(ErrorKind::UnsupportedEncoding, where + ": expected binary grayscale PGM (P5), got " + magic);
  Gray16Image img;
  img.cols = header_int(next_token(bytes, pos, where), where);
  img.rows = header_int(next_token(bytes, pos, where), where);
  const int maxval = header_int(next_token(bytes, pos, where), where);
  if (img.rows < 1 || img.cols < 1) throw Error(ErrorKind::MalformedInput, where + ": empty image");
  if (maxval < 256 || maxval > 65535)
    throw Error(ErrorKind::UnsupportedEncoding, where + ": not a 16-bit PGM (maxval " + std::to_string(maxval) + ")");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(img.rows) * static_cast<std::size_t>(img.cols);
  if (bytes.size() < pos || bytes.size() - pos < 2 * n)
    throw Error(ErrorKind::MalformedInput, where + ": raster shorter than header declares");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
  return img;
}

void write_pgm16(const Gray16Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "P5\n" << image.cols << ' ' << image.rows << "\n65535\n";
  std::vector<char> raster(image.pixels.size() * 2);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    raster[2 * i] = static_cast<char>(image.pixels[i] >> 8);
    raster[2 * i + 1] = static_cast<char>(image.pixels[i] & 0xFF);
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

SliceImage load_portable_slice(const std::filesystem::path& path) {
  const auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw Error(ErrorKind::MalformedInput, path.string() + ": missing sidecar " + side.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, side.string() + ": " + e.what());
  }
  if (!meta.contains("modality") || !meta["modality"].is_string())
    throw Error(ErrorKind::MalformedInput, side.string() + ": missing field 'modality'");
  if (!meta.contains("calibration") || !meta["calibration"].is_object())
    throw Error(ErrorKind::MalformedInput, side.string() + ": missing field 'calibration'");

  SliceImage slice;
  slice.modality = parse_modality(meta["modality"].get<std::string>());
  const json& cal = meta["calibration"];
  try {
    if (cal.contains("minmax")) {
      const auto& mm = cal.at("minmax");
      if (!mm.is_array() || mm.size() != 2) throw Error(ErrorKind::MalformedInput, "minmax needs [lo, hi]");
      slice.calibration = Calibration::minmax(mm[0].get<double>(), mm[1].get<double>());
    } else {
      slice.calibration = Calibration::linear(cal.at("slope").get<double>(), cal.at("intercept").get<double>());
    }
    slice.volume_id = meta.value("volume_id", path.parent_path().filename().string());
    slice.slice_index = meta.value("slice_index", 0);
    slice.contrast_enhanced = meta.value("contrast_enhanced", false);
    if (meta.contains("pixel_spacing"))
      slice.pixel_spacing = {meta["pixel_spacing"].at(0).get<double>(), meta["pixel_spacing"].at(1).get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, side.string() + ": calibration: " + e.what());
  }

  const Gray16Image img = read_pgm16(path);
  slice.rows = img.rows;
  slice.cols = img.cols;
  slice.values.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) slice.values[i] = slice.calibration->apply(img.pixels[i]);
  return slice;
}

void save_portable_slice(const SliceImage& slice, const std::filesystem::path& path) {
  slice.validate();
  const Calibration cal = slice.calibration.value_or(Calibration{});
  if (cal.slope == 0.0) throw Error(ErrorKind::InvalidParameter, "calibration slope is zero");
  Gray16Image img{slice.rows, slice.cols, std::vector<std::uint16_t>(slice.size())};
  for (std::size_t i = 0; i < slice.size(); ++i) img.pixels[i] = cal.invert(slice.values[i]);
  write_pgm16(img, path);

  json meta;
  meta["modality"] = std::string(modality_name(slice.modality));
  if (cal.kind == Calibration::Kind::MinMax)
    meta["calibration"] = {{"minmax", {cal.lo(), cal.hi()}}};
  else
    meta["calibration"] = {{"slope", cal.slope}, {"intercept", cal.intercept}};
  meta["volume_id"] = slice.volume_id;
  meta["slice_index"] = slice.slice_index;
  meta["contrast_enhanced"] = slice.contrast_enhanced;
  meta["pixel_spacing"] = {slice.pixel_spacing[0], slice.pixel_spacing[1]};
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + sidecar_path(path).string());
  out << meta.dump(2) << '\n';
}

}  // namespace synthct
