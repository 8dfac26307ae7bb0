#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthct/imaging.hpp"
#include "synthct/survey_stats.hpp"

namespace httplib {
class Server;
}

namespace synthct {

struct SurveyItem {
  std::string item_id;
  Truth truth = Truth::Real;  // server side only
  std::string volume_id;
  int slice_index = 0;

  std::string slice_id() const { return volume_id + "/" + std::to_string(slice_index); }
};

struct SurveyDefinition {
  std::string survey_id;
  std::vector<SurveyItem> items;  // presentation order
  int n_real = 0;
  int n_synth = 0;
  std::uint64_t seed = 0;
  std::string real_set;
  std::string synth_set;
};

/// Samples n_real and n_synth slices without replacement from the two pools,
/// then shuffles them together; all randomness comes from `seed`. The id is a
/// hash of (set ids, counts, seed). Throws InvalidParameter when a pool is too
/// small or a count is negative, or when both counts are zero.
SurveyDefinition make_survey(const ImageSet& real_pool, const ImageSet& synth_pool, int n_real, int n_synth,
                             std::uint64_t seed);

/// Client-facing view: survey id and ordered item ids, nothing else.
nlohmann::json survey_items_json(const SurveyDefinition& s);
/// Definition with slice refs but no truth (survey.json).
nlohmann::json survey_to_json(const SurveyDefinition& s);
/// {"item_id": "real" | "synthetic"} (truth.json).
nlohmann::json truth_to_json(const SurveyDefinition& s);
/// Inverse of the two above. Throws MalformedInput.
SurveyDefinition survey_from_json(const nlohmann::json& survey, const nlohmann::json& truth);

/// HTTP-independent outcome of recording a response.
enum class RecordStatus { Ok, UnknownSurvey, UnknownItem, BadJudgment, BadRequest, Duplicate };

/// Directory-backed survey store: data_dir/<survey_id>/{survey.json,
/// truth.json, responses.jsonl}. Appends are serialized; reads run
/// concurrently. Existing surveys are reopened on construction.
class SurveyStore {
 public:
  explicit SurveyStore(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const noexcept { return dir_; }

  /// Persists a new survey; the manifests are where item slices are loaded
  /// from. Returns false when the id already exists.
  bool create(const SurveyDefinition& s, const std::filesystem::path& real_manifest,
              const std::filesystem::path& synth_manifest);

  bool has_survey(const std::string& id) const;
  std::optional<SurveyDefinition> survey(const std::string& id) const;
  std::vector<std::string> survey_ids() const;

  /// Loads the slice behind an item (clamped CT values).
  std::optional<SliceImage> item_slice(const std::string& item_id) const;

  /// Validates and appends one JSONL line. `ts` is recorded verbatim.
  RecordStatus record(const std::string& survey_id, const nlohmann::json& body, const std::string& ts,
                      std::string* message = nullptr);

  /// Records joined with truth, in log order.
  std::vector<SurveyRecord> records(const std::string& survey_id) const;

  std::filesystem::path log_path(const std::string& id) const { return dir_ / id / "responses.jsonl"; }
  std::filesystem::path truth_path(const std::string& id) const { return dir_ / id / "truth.json"; }

 private:
  struct Entry {
    SurveyDefinition def;
    std::filesystem::path real_manifest;
    std::filesystem::path synth_manifest;
    std::map<std::string, std::size_t> item_index;
    std::set<std::pair<std::string, std::string>> answered;  // (rater, item)
  };
  void open_existing();

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> surveys_;
  std::map<std::string, std::string> item_owner_;  // item id -> survey id
  mutable std::mutex append_mutex_;
};

/// JSON-over-HTTP front end. When `token` is non-empty every request needs
/// "Authorization: Bearer <token>".
class SurveyServer {
 public:
  SurveyServer(SurveyStore& store, std::string token = {}, unsigned threads = 4);
  ~SurveyServer();

  /// Binds to host:port (port 0 picks a free one) and returns the port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  void routes();

  SurveyStore& store_;
  std::string token_;
  std::unique_ptr<httplib::Server> http_;
};

/// Current UTC time as ISO 8601 with seconds.
std::string utc_timestamp();

}  // namespace synthct
