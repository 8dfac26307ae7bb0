#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "synthct/error.hpp"
#include "synthct/imaging.hpp"
#include "synthct/kernels.hpp"

namespace synthct {

std::string_view modality_name(Modality m) noexcept {
  switch (m) {
    case Modality::CT: return "CT";
    case Modality::MR_T1_IP: return "MR_T1_IP";
    case Modality::MR_T1_OOP: return "MR_T1_OOP";
    case Modality::MR_T2: return "MR_T2";
  }
  return "CT";
}

Modality parse_modality(std::string_view name) {
  if (name == "CT") return Modality::CT;
  if (name == "MR_T1_IP") return Modality::MR_T1_IP;
  if (name == "MR_T1_OOP") return Modality::MR_T1_OOP;
  if (name == "MR_T2") return Modality::MR_T2;
  throw Error(ErrorKind::MalformedInput, "unknown modality '" + std::string(name) + "'");
}

std::string_view provenance_name(Provenance p) noexcept {
  return p == Provenance::Real ? "real" : "synthetic";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "real") return Provenance::Real;
  if (name == "synthetic") return Provenance::Synthetic;
  throw Error(ErrorKind::MalformedInput, "unknown provenance '" + std::string(name) + "'");
}

void SliceImage::validate() const {
  if (rows < 1 || cols < 1)
    throw Error(ErrorKind::InvalidParameter, "slice " + id() + " has empty geometry");
  if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw Error(ErrorKind::InvalidParameter, "slice " + id() + " value count does not match rows*cols");
}

LayerId::LayerId(int index) : index_(index) {
  if (index < 1 || index > kCount)
    throw Error(ErrorKind::InvalidParameter, "layer " + std::to_string(index) + " outside [1, 10]");
}

ImageSet::ImageSet(std::string set_id, Provenance provenance, std::vector<Volume> volumes,
                   std::array<double, 2> hu_range, bool contrast_enhanced)
    : set_id_(std::move(set_id)),
      provenance_(provenance),
      volumes_(std::move(volumes)),
      hu_range_(hu_range),
      contrast_enhanced_(contrast_enhanced) {
  if (!(hu_range_[0] < hu_range_[1]))
    throw Error(ErrorKind::InvalidParameter, "set " + set_id_ + ": hu_range must be increasing");
  std::set<std::string> seen;
  for (auto& vol : volumes_) {
    if (!seen.insert(vol.volume_id).second)
      throw Error(ErrorKind::MalformedInput, "set " + set_id_ + ": duplicate volume " + vol.volume_id);
    if (vol.slices.empty())
      throw Error(ErrorKind::MalformedInput, "volume " + vol.volume_id + " has no slices");
    std::stable_sort(vol.slices.begin(), vol.slices.end(),
                     [](const auto& a, const auto& b) { return a->slice_index < b->slice_index; });
    for (std::size_t i = 0; i < vol.slices.size(); ++i) {
      const auto& s = *vol.slices[i];
      if (s.volume_id != vol.volume_id)
        throw Error(ErrorKind::MalformedInput,
                    "slice " + s.id() + " listed under volume " + vol.volume_id);
      if (i > 0 && s.slice_index != vol.slices[i - 1]->slice_index + 1)
        throw Error(ErrorKind::MalformedInput,
                    "volume " + vol.volume_id + ": slice_index values must be unique and contiguous (at " +
                        s.id() + ")");
      s.validate();
    }
  }
}

std::size_t ImageSet::slice_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : volumes_) n += v.slices.size();
  return n;
}

LayerId ImageSet::layer_of(std::size_t v, std::size_t s) const {
  if (layers_.empty())
    throw Error(ErrorKind::InvalidParameter, "set " + set_id_ + " has no layer assignment");
  return LayerId(layers_.at(v).at(s));
}

std::vector<const SliceImage*> ImageSet::layer_slices(LayerId layer) const {
  std::vector<const SliceImage*> out;
  for (std::size_t v = 0; v < volumes_.size(); ++v)
    for (std::size_t s = 0; s < volumes_[v].slices.size(); ++s)
      if (layer_of(v, s) == layer) out.push_back(volumes_[v].slices[s].get());
  return out;
}

std::vector<const SliceImage*> ImageSet::all_slices() const {
  std::vector<const SliceImage*> out;
  for (const auto& vol : volumes_)
    for (const auto& s : vol.slices) out.push_back(s.get());
  return out;
}

ImageSet select_volumes(const ImageSet& set, std::span<const std::size_t> volume_indices,
                        std::string set_id) {
  std::vector<Volume> volumes;
  std::vector<std::vector<int>> layers;
  std::set<std::size_t> seen;
  for (auto v : volume_indices) {
    if (v >= set.volumes_.size() || !seen.insert(v).second)
      throw Error(ErrorKind::InvalidParameter, "bad volume index " + std::to_string(v));
    volumes.push_back(set.volumes_[v]);
    if (!set.layers_.empty()) layers.push_back(set.layers_[v]);
  }
  ImageSet out(std::move(set_id), set.provenance_, std::move(volumes), set.hu_range_, set.contrast_enhanced_);
  out.layers_ = std::move(layers);
  return out;
}

ImageSet assign_layers(const ImageSet& set, const LayerOverrides& overrides) {
  ImageSet out = set;
  out.layers_.assign(set.volumes_.size(), {});
  std::set<std::string> used;
  for (std::size_t v = 0; v < set.volumes_.size(); ++v) {
    const auto& slices = set.volumes_[v].slices;
    const std::size_t n = slices.size();
    auto& layers = out.layers_[v];
    layers.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Integer form of floor(i/n * 10) + 1; exact for every n.
      int layer = static_cast<int>((i * LayerId::kCount) / n) + 1;
      layer = std::min(layer, LayerId::kCount);
      if (auto it = overrides.find(slices[i]->id()); it != overrides.end()) {
        if (it->second < 1 || it->second > LayerId::kCount)
          throw Error(ErrorKind::MalformedInput,
                      "layer override for " + it->first + " outside [1, 10]");
        layer = it->second;
        used.insert(it->first);
      }
      layers[i] = layer;
    }
  }
  for (const auto& [key, layer] : overrides)
    if (!used.contains(key))
      throw Error(ErrorKind::MalformedInput,
                  "layer override references unknown slice '" + key + "' in set " + set.set_id());
  return out;
}

LayerOverrides load_layer_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::MalformedInput, path.string() + ": expected an object");
  LayerOverrides out;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_integer())
      throw Error(ErrorKind::MalformedInput, path.string() + ": layer for '" + key + "' is not an integer");
    out[key] = value.get<int>();
  }
  return out;
}

Gray8Image window_to_8bit(const SliceImage& slice, double center, double width) {
  if (!(width > 0.0))
    throw Error(ErrorKind::InvalidParameter, "window width must be positive");
  slice.validate();
  Gray8Image out{slice.rows, slice.cols, std::vector<std::uint8_t>(slice.size())};
  kernels::window_u8(slice.values, center - width / 2.0, width, out.pixels);
  return out;
}

}  // namespace synthct
