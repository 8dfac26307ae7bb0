#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace synthct {

enum class Modality { CT, MR_T1_IP, MR_T1_OOP, MR_T2 };

std::string_view modality_name(Modality m) noexcept;
/// Throws MalformedInput for anything but CT, MR_T1_IP, MR_T1_OOP, MR_T2.
Modality parse_modality(std::string_view name);
inline bool is_mr(Modality m) noexcept { return m != Modality::CT; }

enum class Provenance { Real, Synthetic };
std::string_view provenance_name(Provenance p) noexcept;
Provenance parse_provenance(std::string_view name);

/// Map from stored 16-bit integers to physical values. Linear calibrations
/// use value = raw * slope + intercept; MinMax calibrations map raw 0 -> lo
/// and raw 65535 -> hi.
struct Calibration {
  enum class Kind { Linear, MinMax };
  Kind kind = Kind::Linear;
  double slope = 1.0;
  double intercept = 0.0;
  double upper = 0.0;  // MinMax only

  static Calibration linear(double slope, double intercept) {
    return {Kind::Linear, slope, intercept, 0.0};
  }
  static Calibration minmax(double lo, double hi) {
    return {Kind::MinMax, (hi - lo) / 65535.0, lo, hi};
  }
  double lo() const noexcept { return intercept; }
  double hi() const noexcept { return kind == Kind::MinMax ? upper : intercept + slope * 65535.0; }
  double apply(double raw) const noexcept {
    if (kind == Kind::MinMax) return intercept + (upper - intercept) * (raw / 65535.0);
    return raw * slope + intercept;
  }
  /// Inverse of apply, rounded half away from zero and clamped to [0, 65535].
  std::uint16_t invert(double value) const noexcept;
};

/// One axial slice in physical units (HU for CT).
struct SliceImage {
  std::string volume_id;
  int slice_index = 0;
  int rows = 0;
  int cols = 0;
  std::array<double, 2> pixel_spacing{1.0, 1.0};  // mm (row, col)
  std::vector<double> values;                     // row-major, rows*cols
  Modality modality = Modality::CT;
  bool contrast_enhanced = false;
  std::optional<Calibration> calibration;  // how `values` were derived from stored integers

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const noexcept { return values.size(); }
  /// "volume_id/slice_index", the key used by feature files and layer overrides.
  std::string id() const { return volume_id + "/" + std::to_string(slice_index); }
  /// Throws InvalidParameter on empty or inconsistent geometry.
  void validate() const;
};

class LayerId {
 public:
  static constexpr int kCount = 10;

  /// Throws InvalidParameter outside [1, 10].
  explicit LayerId(int index);
  int index() const noexcept { return index_; }
  auto operator<=>(const LayerId&) const = default;

 private:
  int index_;
};

struct Volume {
  std::string volume_id;
  std::vector<std::shared_ptr<const SliceImage>> slices;  // ascending slice_index
};

using LayerOverrides = std::map<std::string, int>;  // slice id -> layer index

/// A collection of slices grouped by volume. Immutable; assign_layers returns
/// a new set sharing the slice storage.
class ImageSet {
 public:
  ImageSet(std::string set_id, Provenance provenance, std::vector<Volume> volumes,
           std::array<double, 2> hu_range = {-1024.0, 3071.0}, bool contrast_enhanced = false);

  const std::string& set_id() const noexcept { return set_id_; }
  Provenance provenance() const noexcept { return provenance_; }
  const std::vector<Volume>& volumes() const noexcept { return volumes_; }
  std::array<double, 2> hu_range() const noexcept { return hu_range_; }
  bool contrast_enhanced() const noexcept { return contrast_enhanced_; }
  std::size_t slice_count() const noexcept;

  bool layers_assigned() const noexcept { return !layers_.empty(); }
  /// Layer of slice `s` in volume `v`; throws InvalidParameter if unassigned.
  LayerId layer_of(std::size_t v, std::size_t s) const;
  /// Slices of one layer in volume order then slice order.
  std::vector<const SliceImage*> layer_slices(LayerId layer) const;
  /// All slices in volume order then slice order.
  std::vector<const SliceImage*> all_slices() const;

 private:
  friend ImageSet assign_layers(const ImageSet& set, const LayerOverrides& overrides);
  friend ImageSet select_volumes(const ImageSet& set, std::span<const std::size_t> volume_indices,
                                 std::string set_id);

  std::string set_id_;
  Provenance provenance_;
  std::vector<Volume> volumes_;
  std::array<double, 2> hu_range_;
  bool contrast_enhanced_;
  std::vector<std::vector<int>> layers_;
};

/// Decile rule per volume: rank i of n slices -> floor(i*10/n) + 1, clamped to
/// 10. Override entries (slice id -> layer) take precedence. Throws
/// MalformedInput when an override names an unknown slice or a layer outside [1, 10].
ImageSet assign_layers(const ImageSet& set, const LayerOverrides& overrides = {});

/// Subset of whole volumes, keeping any layer assignment. Throws
/// InvalidParameter for out-of-range or repeated indices.
ImageSet select_volumes(const ImageSet& set, std::span<const std::size_t> volume_indices,
                        std::string set_id);

/// JSON object {"volume_id/slice_index": layer, ...}
LayerOverrides load_layer_overrides(const std::filesystem::path& path);

struct IngestConfig {
  double hu_lo = -1024.0;
  double hu_hi = 3071.0;
  std::optional<Modality> modality;  // overrides the file's modality (needed for MR variants)
  bool contrast_enhanced = false;
};

/// Uncompressed explicit-VR little-endian DICOM only.
SliceImage load_dicom_slice(const std::filesystem::path& path, const IngestConfig& config);

/// 16-bit binary PGM plus a JSON sidecar at `<path>.json`:
/// {"modality": ..., "calibration": {"slope": s, "intercept": b} | {"minmax": [lo, hi]}}
SliceImage load_portable_slice(const std::filesystem::path& path);
/// Writes PGM + sidecar using the slice's calibration (identity if absent).
void save_portable_slice(const SliceImage& slice, const std::filesystem::path& path);

struct Gray16Image {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint16_t> pixels;
};
Gray16Image read_pgm16(const std::filesystem::path& path);
void write_pgm16(const Gray16Image& image, const std::filesystem::path& path);

struct ManifestSlice {
  std::filesystem::path path;  // resolved against the manifest directory
  int slice_index = 0;
  std::optional<int> layer;
};

struct ManifestVolume {
  std::string volume_id;
  std::vector<ManifestSlice> slices;
};

struct Manifest {
  std::string set_id;
  Provenance provenance = Provenance::Real;
  std::array<double, 2> hu_range{-1024.0, 3071.0};
  bool contrast_enhanced = false;
  std::optional<Modality> modality;
  std::vector<ManifestVolume> volumes;

  IngestConfig ingest_config() const {
    return {hu_range[0], hu_range[1], modality, contrast_enhanced};
  }
};

/// Parses a manifest without touching the slice files.
Manifest read_manifest(const std::filesystem::path& path);

/// Loads one slice by extension (.pgm -> portable, anything else -> DICOM),
/// stamps volume/slice identity and clamps CT values to the configured range.
SliceImage load_slice(const std::filesystem::path& path, const std::string& volume_id,
                      int slice_index, const IngestConfig& config);

/// Reads an ImageSet manifest:
/// {set_id, provenance, hu_range:[lo,hi], contrast_enhanced?, modality?,
///  volumes:[{volume_id, slices:[{path, slice_index, layer?}]}]}
/// Slice paths are relative to the manifest. CT values are clamped to
/// hu_range; MR volumes are min-max normalized to [0, 1]. Layers are assigned
/// with per-slice "layer" entries as overrides.
ImageSet load_manifest(const std::filesystem::path& path, unsigned threads = 1);

struct Gray8Image {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;
};

/// Display window: g = clamp(round((v - (center - width/2)) / width * 255), 0, 255),
/// rounding half away from zero. Throws InvalidParameter for width <= 0.
Gray8Image window_to_8bit(const SliceImage& slice, double center, double width);

}  // namespace synthct
