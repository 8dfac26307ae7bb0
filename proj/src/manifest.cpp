#include <algorithm>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "synthct/error.hpp"
#include "synthct/imaging.hpp"
#include "synthct/parallel.hpp"

namespace synthct {

using nlohmann::json;

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open manifest " + where);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, where + ": " + e.what());
  }
  const auto base = path.parent_path();
  Manifest m;
  try {
    m.set_id = j.at("set_id").get<std::string>();
    m.provenance = parse_provenance(j.at("provenance").get<std::string>());
    if (j.contains("hu_range")) m.hu_range = {j["hu_range"].at(0).get<double>(), j["hu_range"].at(1).get<double>()};
    m.contrast_enhanced = j.value("contrast_enhanced", false);
    if (j.contains("modality")) m.modality = parse_modality(j["modality"].get<std::string>());
    for (const auto& v : j.at("volumes")) {
      ManifestVolume vol;
      vol.volume_id = v.at("volume_id").get<std::string>();
      for (const auto& s : v.at("slices")) {
        ManifestSlice slice;
        std::filesystem::path p = s.at("path").get<std::string>();
        slice.path = p.is_absolute() ? p : base / p;
        slice.slice_index = s.at("slice_index").get<int>();
        if (s.contains("layer")) slice.layer = s["layer"].get<int>();
        vol.slices.push_back(std::move(slice));
      }
      m.volumes.push_back(std::move(vol));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, where + ": " + e.what());
  }
  if (!(m.hu_range[0] < m.hu_range[1]))
    throw Error(ErrorKind::MalformedInput, where + ": field 'hu_range' must be increasing");
  return m;
}

SliceImage load_slice(const std::filesystem::path& path, const std::string& volume_id,
                      int slice_index, const IngestConfig& config) {
  SliceImage slice;
  if (path.extension() == ".pgm") {
    slice = load_portable_slice(path);
    if (config.modality && *config.modality != slice.modality)
      throw Error(ErrorKind::MalformedInput,
                  path.string() + ": sidecar modality " + std::string(modality_name(slice.modality)) +
                      " disagrees with manifest modality " + std::string(modality_name(*config.modality)));
    slice.contrast_enhanced = slice.contrast_enhanced || config.contrast_enhanced;
  } else {
    slice = load_dicom_slice(path, config);
  }
  slice.volume_id = volume_id;
  slice.slice_index = slice_index;
  if (slice.modality == Modality::CT)
    for (double& v : slice.values) v = std::clamp(v, config.hu_lo, config.hu_hi);
  return slice;
}

ImageSet load_manifest(const std::filesystem::path& path, unsigned threads) {
  const Manifest m = read_manifest(path);
  const IngestConfig config = m.ingest_config();

  struct Job {
    std::size_t volume;
    const ManifestSlice* entry;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < m.volumes.size(); ++v)
    for (const auto& s : m.volumes[v].slices) jobs.push_back({v, &s});

  std::vector<SliceImage> loaded(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    loaded[i] = load_slice(jobs[i].entry->path, m.volumes[jobs[i].volume].volume_id,
                           jobs[i].entry->slice_index, config);
  });

  std::vector<Volume> volumes(m.volumes.size());
  for (std::size_t v = 0; v < m.volumes.size(); ++v) volumes[v].volume_id = m.volumes[v].volume_id;
  LayerOverrides overrides;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].entry->layer) overrides[loaded[i].id()] = *jobs[i].entry->layer;
    volumes[jobs[i].volume].slices.push_back(nullptr);
  }
  // MR has no absolute scale: normalize each volume to [0, 1].
  std::size_t cursor = 0;
  for (std::size_t v = 0; v < volumes.size(); ++v) {
    const std::size_t n = m.volumes[v].slices.size();
    bool mr = false;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = cursor; i < cursor + n; ++i) {
      if (!is_mr(loaded[i].modality)) continue;
      mr = true;
      for (double x : loaded[i].values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (mr) {
      const double span = hi - lo;
      for (std::size_t i = cursor; i < cursor + n; ++i)
        for (double& x : loaded[i].values) x = span > 0.0 ? (x - lo) / span : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i)
      volumes[v].slices[i] = std::make_shared<const SliceImage>(std::move(loaded[cursor + i]));
    cursor += n;
  }
  ImageSet set(m.set_id, m.provenance, std::move(volumes), m.hu_range, m.contrast_enhanced);
  return assign_layers(set, overrides);
}

}  // namespace synthct
