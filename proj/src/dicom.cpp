// Minimal DICOM reader: Part 10 files with an explicit VR little-endian
// dataset and native (unencapsulated) 16-bit monochrome pixel data.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>

#include "synthct/error.hpp"
#include "synthct/imaging.hpp"

namespace synthct {
namespace {

constexpr std::string_view kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";

constexpr std::uint32_t tag(std::uint16_t group, std::uint16_t element) {
  return (static_cast<std::uint32_t>(group) << 16) | element;
}

constexpr std::uint32_t kTransferSyntax = tag(0x0002, 0x0010);
constexpr std::uint32_t kModality = tag(0x0008, 0x0060);
constexpr std::uint32_t kContrastAgent = tag(0x0018, 0x0010);
constexpr std::uint32_t kSeriesUid = tag(0x0020, 0x000E);
constexpr std::uint32_t kInstanceNumber = tag(0x0020, 0x0013);
constexpr std::uint32_t kSamplesPerPixel = tag(0x0028, 0x0002);
constexpr std::uint32_t kRows = tag(0x0028, 0x0010);
constexpr std::uint32_t kColumns = tag(0x0028, 0x0011);
constexpr std::uint32_t kPixelSpacing = tag(0x0028, 0x0030);
constexpr std::uint32_t kBitsAllocated = tag(0x0028, 0x0100);
constexpr std::uint32_t kBitsStored = tag(0x0028, 0x0101);
constexpr std::uint32_t kPixelRepresentation = tag(0x0028, 0x0103);
constexpr std::uint32_t kRescaleIntercept = tag(0x0028, 0x1052);
constexpr std::uint32_t kRescaleSlope = tag(0x0028, 0x1053);
constexpr std::uint32_t kPixelData = tag(0x7FE0, 0x0010);

constexpr std::uint32_t kItem = tag(0xFFFE, 0xE000);
constexpr std::uint32_t kItemDelimiter = tag(0xFFFE, 0xE00D);
constexpr std::uint32_t kSequenceDelimiter = tag(0xFFFE, 0xE0DD);
constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;

std::string tag_name(std::uint32_t t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "(%04X,%04X)", t >> 16, t & 0xFFFF);
  return buf;
}

bool has_long_length(std::string_view vr) {
  static constexpr std::string_view kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ",
                                               "SV", "UC", "UN", "UR", "UT", "UV"};
  return std::find(std::begin(kLong), std::end(kLong), vr) != std::end(kLong);
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::size_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ >= bytes_.size(); }

  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) { take(n); }

  [[noreturn]] void malformed(const std::string& what) const {
    throw Error(ErrorKind::MalformedInput, path_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n || pos_ > bytes_.size()) malformed("truncated element stream");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string path_;
};

struct Element {
  std::uint32_t tag;
  std::string vr;
  std::span<const std::uint8_t> value;
};

void skip_undefined_sequence(Reader& r);

// Reads one explicit-VR element header and value. Sequences are skipped and
// returned with an empty value.
Element read_element(Reader& r) {
  Element e;
  const std::uint16_t group = r.u16();
  const std::uint16_t element = r.u16();
  e.tag = tag(group, element);
  const auto vr_bytes = r.take(2);
  e.vr.assign(reinterpret_cast<const char*>(vr_bytes.data()), 2);
  if (!std::isupper(static_cast<unsigned char>(e.vr[0])) ||
      !std::isupper(static_cast<unsigned char>(e.vr[1])))
    throw Error(ErrorKind::UnsupportedEncoding,
                "element " + tag_name(e.tag) + " has no explicit VR (implicit VR dataset?)");
  std::uint32_t length;
  if (has_long_length(e.vr)) {
    r.skip(2);
    length = r.u32();
  } else {
    length = r.u16();
  }
  if (length == kUndefinedLength) {
    if (e.tag == kPixelData)
      throw Error(ErrorKind::UnsupportedEncoding, "encapsulated (compressed) pixel data");
    if (e.vr != "SQ")
      throw Error(ErrorKind::UnsupportedEncoding,
                  "undefined length on non-sequence element " + tag_name(e.tag));
    skip_undefined_sequence(r);
    return e;
  }
  e.value = r.take(length);
  return e;
}

// Skips the VR, length and value of an element whose tag was already read.
void skip_value(Reader& r, std::uint32_t t) {
  const auto vr_bytes = r.take(2);
  const std::string vr(reinterpret_cast<const char*>(vr_bytes.data()), 2);
  std::uint32_t length;
  if (has_long_length(vr)) {
    r.skip(2);
    length = r.u32();
  } else {
    length = r.u16();
  }
  if (length != kUndefinedLength) {
    r.skip(length);
    return;
  }
  if (vr != "SQ")
    throw Error(ErrorKind::UnsupportedEncoding, "undefined length on element " + tag_name(t));
  skip_undefined_sequence(r);
}

void skip_undefined_sequence(Reader& r) {
  for (;;) {
    const std::uint16_t group = r.u16();
    const std::uint16_t element = r.u16();
    const std::uint32_t t = tag(group, element);
    const std::uint32_t length = r.u32();
    if (t == kSequenceDelimiter) return;
    if (t != kItem) r.malformed("expected sequence item, found " + tag_name(t));
    if (length != kUndefinedLength) {
      r.skip(length);
      continue;
    }
    // Undefined-length item: nested elements until the item delimiter.
    for (;;) {
      const std::uint16_t g = r.u16();
      const std::uint16_t el = r.u16();
      if (tag(g, el) == kItemDelimiter) {
        r.u32();
        break;
      }
      skip_value(r, tag(g, el));
    }
  }
}

std::string as_text(std::span<const std::uint8_t> v) {
  std::string s(reinterpret_cast<const char*>(v.data()), v.size());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && s[start] == ' ') ++start;
  return s.substr(start);
}

double parse_decimal(const std::string& text, std::uint32_t t, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedInput,
                path + ": tag " + tag_name(t) + " is not a decimal string ('" + text + "')");
  }
}

std::uint16_t as_us(const Element& e, const std::string& path) {
  if (e.value.size() < 2)
    throw Error(ErrorKind::MalformedInput, path + ": tag " + tag_name(e.tag) + " too short");
  return static_cast<std::uint16_t>(e.value[0] | (e.value[1] << 8));
}

}  // namespace

SliceImage load_dicom_slice(const std::filesystem::path& path, const IngestConfig& config) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + where);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 132 || std::memcmp(bytes.data() + 128, "DICM", 4) != 0)
    throw Error(ErrorKind::MalformedInput, where + ": missing DICM preamble");

  Reader r(bytes, where);
  r.skip(132);
  std::map<std::uint32_t, Element> elements;
  bool checked_syntax = false;
  while (!r.done()) {
    Element e = read_element(r);
    if (!checked_syntax && (e.tag >> 16) != 0x0002) {
      // Leaving the file meta group: the dataset encoding must be supported.
      auto ts = elements.find(kTransferSyntax);
      if (ts == elements.end())
        throw Error(ErrorKind::MalformedInput, where + ": missing tag " + tag_name(kTransferSyntax));
      const std::string syntax = as_text(ts->second.value);
      if (syntax != kExplicitVrLittleEndian)
        throw Error(ErrorKind::UnsupportedEncoding, where + ": transfer syntax " + syntax);
      checked_syntax = true;
    }
    if (e.tag == kPixelData) {
      elements[e.tag] = e;
      break;
    }
    elements[e.tag] = e;
  }
  if (!checked_syntax)
    throw Error(ErrorKind::MalformedInput, where + ": no dataset after file meta information");

  auto require = [&](std::uint32_t t) -> const Element& {
    auto it = elements.find(t);
    if (it == elements.end())
      throw Error(ErrorKind::MalformedInput, where + ": missing tag " + tag_name(t));
    return it->second;
  };
  auto text_of = [&](std::uint32_t t) -> std::optional<std::string> {
    auto it = elements.find(t);
    if (it == elements.end()) return std::nullopt;
    return as_text(it->second.value);
  };

  SliceImage slice;
  slice.rows = as_us(require(kRows), where);
  slice.cols = as_us(require(kColumns), where);
  if (slice.rows < 1 || slice.cols < 1)
    throw Error(ErrorKind::MalformedInput, where + ": zero rows or columns");
  if (auto it = elements.find(kSamplesPerPixel); it != elements.end() && as_us(it->second, where) != 1)
    throw Error(ErrorKind::UnsupportedEncoding, where + ": only single-sample pixels are supported");
  const std::uint16_t bits_allocated = as_us(require(kBitsAllocated), where);
  if (bits_allocated != 16)
    throw Error(ErrorKind::UnsupportedEncoding,
                where + ": BitsAllocated " + std::to_string(bits_allocated) + " (need 16)");
  std::uint16_t bits_stored = 16;
  if (auto it = elements.find(kBitsStored); it != elements.end()) bits_stored = as_us(it->second, where);
  if (bits_stored < 1 || bits_stored > 16)
    throw Error(ErrorKind::MalformedInput, where + ": BitsStored out of range");
  const bool is_signed = as_us(require(kPixelRepresentation), where) == 1;

  if (config.modality) {
    slice.modality = *config.modality;
  } else {
    const auto tag_modality = text_of(kModality);
    if (!tag_modality)
      throw Error(ErrorKind::MalformedInput, where + ": missing tag " + tag_name(kModality));
    if (*tag_modality == "CT")
      slice.modality = Modality::CT;
    else if (*tag_modality == "MR")
      throw Error(ErrorKind::MalformedInput,
                  where + ": MR file needs an explicit modality variant (MR_T1_IP, MR_T1_OOP, MR_T2)");
    else
      throw Error(ErrorKind::UnsupportedEncoding, where + ": modality " + *tag_modality);
  }

  if (auto spacing = text_of(kPixelSpacing)) {
    const auto split = spacing->find('\\');
    if (split == std::string::npos)
      throw Error(ErrorKind::MalformedInput, where + ": tag " + tag_name(kPixelSpacing) + " needs two values");
    slice.pixel_spacing = {parse_decimal(spacing->substr(0, split), kPixelSpacing, where),
                           parse_decimal(spacing->substr(split + 1), kPixelSpacing, where)};
  }
  if (auto inst = text_of(kInstanceNumber); inst && !inst->empty())
    slice.slice_index = static_cast<int>(parse_decimal(*inst, kInstanceNumber, where));
  if (auto uid = text_of(kSeriesUid); uid && !uid->empty())
    slice.volume_id = *uid;
  else
    slice.volume_id = path.parent_path().filename().string();
  const auto agent = text_of(kContrastAgent);
  slice.contrast_enhanced = config.contrast_enhanced || (agent && !agent->empty());

  const Element& pixels = require(kPixelData);
  const std::size_t n = static_cast<std::size_t>(slice.rows) * static_cast<std::size_t>(slice.cols);
  if (pixels.value.size() < 2 * n)
    throw Error(ErrorKind::MalformedInput, where + ": PixelData shorter than rows*cols*2 bytes");

  std::optional<Calibration> cal;
  if (slice.modality == Modality::CT) {
    const std::string slope = text_of(kRescaleSlope).value_or("");
    const std::string intercept = text_of(kRescaleIntercept).value_or("");
    if (!elements.contains(kRescaleSlope))
      throw Error(ErrorKind::MalformedInput, where + ": missing tag " + tag_name(kRescaleSlope));
    if (!elements.contains(kRescaleIntercept))
      throw Error(ErrorKind::MalformedInput, where + ": missing tag " + tag_name(kRescaleIntercept));
    cal = Calibration::linear(parse_decimal(slope, kRescaleSlope, where),
                              parse_decimal(intercept, kRescaleIntercept, where));
  }

  const std::uint32_t mask = bits_stored == 16 ? 0xFFFFu : ((1u << bits_stored) - 1u);
  const std::uint32_t sign_bit = 1u << (bits_stored - 1);
  slice.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t word = (pixels.value[2 * i] | (pixels.value[2 * i + 1] << 8)) & mask;
    double raw;
    if (is_signed && (word & sign_bit))
      raw = static_cast<double>(static_cast<std::int32_t>(word) - static_cast<std::int32_t>(mask) - 1);
    else
      raw = static_cast<double>(word);
    if (cal) {
      const double v = cal->apply(raw);
      slice.values[i] = std::clamp(v, config.hu_lo, config.hu_hi);
    } else {
      slice.values[i] = raw;
    }
  }
  slice.calibration = cal;
  return slice;
}

}  // namespace synthct
