#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>

#include <httplib.h>

#include "synthct/error.hpp"
#include "synthct/png.hpp"
#include "synthct/random.hpp"
#include "synthct/survey_service.hpp"

namespace synthct {
namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Partial Fisher-Yates: the first k entries become a uniform sample.
std::vector<const SliceImage*> sample(std::vector<const SliceImage*> pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, p.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + p.string());
  out << j.dump(2) << '\n';
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SurveyDefinition make_survey(const ImageSet& real_pool, const ImageSet& synth_pool, int n_real, int n_synth,
                             std::uint64_t seed) {
  if (n_real < 0 || n_synth < 0 || n_real + n_synth == 0)
    throw Error(ErrorKind::InvalidParameter, "survey needs non-negative counts with at least one item");
  auto real = real_pool.all_slices();
  auto synth = synth_pool.all_slices();
  if (real.size() < static_cast<std::size_t>(n_real))
    throw Error(ErrorKind::InvalidParameter, "real pool has " + std::to_string(real.size()) + " slices, " +
                                                 std::to_string(n_real) + " requested");
  if (synth.size() < static_cast<std::size_t>(n_synth))
    throw Error(ErrorKind::InvalidParameter, "synthetic pool has " + std::to_string(synth.size()) + " slices, " +
                                                 std::to_string(n_synth) + " requested");

  SurveyDefinition s;
  s.n_real = n_real;
  s.n_synth = n_synth;
  s.seed = seed;
  s.real_set = real_pool.set_id();
  s.synth_set = synth_pool.set_id();
  s.survey_id = hex16(fnv1a(s.real_set + '\x1f' + s.synth_set + '\x1f' + std::to_string(n_real) + '\x1f' +
                            std::to_string(n_synth) + '\x1f' + std::to_string(seed)));

  std::mt19937_64 rng(seed);
  for (const SliceImage* p : sample(real, static_cast<std::size_t>(n_real), rng))
    s.items.push_back({{}, Truth::Real, p->volume_id, p->slice_index});
  for (const SliceImage* p : sample(synth, static_cast<std::size_t>(n_synth), rng))
    s.items.push_back({{}, Truth::Synthetic, p->volume_id, p->slice_index});
  seeded_shuffle(std::span(s.items), rng);
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i + 1);
    s.items[i].item_id = s.survey_id + "-" + buf;
  }
  return s;
}

json survey_items_json(const SurveyDefinition& s) {
  json items = json::array();
  for (const auto& it : s.items) items.push_back({{"item_id", it.item_id}});
  return {{"survey_id", s.survey_id}, {"items", items}};
}

json survey_to_json(const SurveyDefinition& s) {
  json items = json::array();
  for (const auto& it : s.items)
    items.push_back({{"item_id", it.item_id}, {"volume_id", it.volume_id}, {"slice_index", it.slice_index}});
  return {{"survey_id", s.survey_id}, {"n_real", s.n_real},       {"n_synth", s.n_synth}, {"seed", s.seed},
          {"real_set", s.real_set},   {"synth_set", s.synth_set}, {"items", items}};
}

json truth_to_json(const SurveyDefinition& s) {
  json t = json::object();
  for (const auto& it : s.items) t[it.item_id] = std::string(truth_name(it.truth));
  return t;
}

SurveyDefinition survey_from_json(const json& survey, const json& truth) {
  try {
    SurveyDefinition s;
    s.survey_id = survey.at("survey_id").get<std::string>();
    s.n_real = survey.at("n_real").get<int>();
    s.n_synth = survey.at("n_synth").get<int>();
    s.seed = survey.at("seed").get<std::uint64_t>();
    s.real_set = survey.at("real_set").get<std::string>();
    s.synth_set = survey.at("synth_set").get<std::string>();
    for (const auto& it : survey.at("items")) {
      SurveyItem item;
      item.item_id = it.at("item_id").get<std::string>();
      item.volume_id = it.at("volume_id").get<std::string>();
      item.slice_index = it.at("slice_index").get<int>();
      item.truth = parse_truth(truth.at(item.item_id).get<std::string>());
      s.items.push_back(std::move(item));
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("survey definition: ") + e.what());
  }
}

SurveyStore::SurveyStore(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir_.string() + ": " + ec.message());
  open_existing();
}

void SurveyStore::open_existing() {
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(dir_))
    if (e.is_directory() && std::filesystem::exists(e.path() / "survey.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    const json sj = read_json_file(d / "survey.json");
    auto entry = std::make_shared<Entry>();
    entry->def = survey_from_json(sj, read_json_file(d / "truth.json"));
    try {
      entry->real_manifest = sj.at("real_manifest").get<std::string>();
      entry->synth_manifest = sj.at("synth_manifest").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedInput, (d / "survey.json").string() + ": " + e.what());
    }
    for (std::size_t i = 0; i < entry->def.items.size(); ++i) entry->item_index[entry->def.items[i].item_id] = i;
    const auto id = entry->def.survey_id;
    if (std::filesystem::exists(log_path(id)))
      for (const auto& r : read_response_log(log_path(id), truth_path(id))) entry->answered.insert({r.rater_id, r.item_id});
    for (const auto& it : entry->def.items) item_owner_[it.item_id] = id;
    surveys_[id] = std::move(entry);
  }
}

bool SurveyStore::create(const SurveyDefinition& s, const std::filesystem::path& real_manifest,
                         const std::filesystem::path& synth_manifest) {
  std::unique_lock lock(mutex_);
  if (surveys_.contains(s.survey_id)) return false;
  auto entry = std::make_shared<Entry>();
  entry->def = s;
  entry->real_manifest = std::filesystem::absolute(real_manifest).lexically_normal();
  entry->synth_manifest = std::filesystem::absolute(synth_manifest).lexically_normal();
  for (std::size_t i = 0; i < s.items.size(); ++i) entry->item_index[s.items[i].item_id] = i;

  const auto d = dir_ / s.survey_id;
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + d.string() + ": " + ec.message());
  json sj = survey_to_json(s);
  sj["real_manifest"] = entry->real_manifest.string();
  sj["synth_manifest"] = entry->synth_manifest.string();
  write_json_file(d / "survey.json", sj);
  write_json_file(d / "truth.json", truth_to_json(s));
  std::ofstream(log_path(s.survey_id), std::ios::app);  // empty log
  for (const auto& it : s.items) item_owner_[it.item_id] = s.survey_id;
  surveys_[s.survey_id] = std::move(entry);
  return true;
}

bool SurveyStore::has_survey(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return surveys_.contains(id);
}

std::optional<SurveyDefinition> SurveyStore::survey(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = surveys_.find(id);
  if (it == surveys_.end()) return std::nullopt;
  return it->second->def;
}

std::vector<std::string> SurveyStore::survey_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, e] : surveys_) ids.push_back(id);
  return ids;
}

std::optional<SliceImage> SurveyStore::item_slice(const std::string& item_id) const {
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(mutex_);
    auto owner = item_owner_.find(item_id);
    if (owner == item_owner_.end()) return std::nullopt;
    entry = surveys_.at(owner->second);
  }
  const SurveyItem& item = entry->def.items.at(entry->item_index.at(item_id));
  const Manifest m = read_manifest(item.truth == Truth::Real ? entry->real_manifest : entry->synth_manifest);
  for (const auto& vol : m.volumes) {
    if (vol.volume_id != item.volume_id) continue;
    for (const auto& sl : vol.slices)
      if (sl.slice_index == item.slice_index) return load_slice(sl.path, vol.volume_id, sl.slice_index, m.ingest_config());
  }
  throw Error(ErrorKind::MalformedInput, "manifest no longer lists slice " + item.slice_id());
}

RecordStatus SurveyStore::record(const std::string& survey_id, const json& body, const std::string& ts,
                                 std::string* message) {
  auto fail = [&](RecordStatus s, const std::string& msg) {
    if (message) *message = msg;
    return s;
  };
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(mutex_);
    auto it = surveys_.find(survey_id);
    if (it == surveys_.end()) return fail(RecordStatus::UnknownSurvey, "unknown survey " + survey_id);
    entry = it->second;
  }
  if (!body.is_object()) return fail(RecordStatus::BadRequest, "body must be a JSON object");
  if (!body.contains("rater_id") || !body["rater_id"].is_string() || body["rater_id"].get<std::string>().empty())
    return fail(RecordStatus::BadRequest, "rater_id must be a non-empty string");
  if (!body.contains("item_id") || !body["item_id"].is_string())
    return fail(RecordStatus::BadRequest, "item_id must be a string");
  const auto rater = body["rater_id"].get<std::string>();
  const auto item = body["item_id"].get<std::string>();
  if (!entry->item_index.contains(item)) return fail(RecordStatus::UnknownItem, "item " + item + " not in survey");
  if (!body.contains("judgment") || !body["judgment"].is_string())
    return fail(RecordStatus::BadJudgment, "judgment must be real, synthetic or indeterminable");
  Judgment judgment;
  try {
    judgment = parse_judgment(body["judgment"].get<std::string>());
  } catch (const Error& e) {
    return fail(RecordStatus::BadJudgment, e.what());
  }
  json rationale = nullptr;
  if (body.contains("rationale") && !body["rationale"].is_null()) {
    if (!body["rationale"].is_string()) return fail(RecordStatus::BadRequest, "rationale must be a string");
    rationale = body["rationale"];
  }

  nlohmann::ordered_json line;
  line["survey_id"] = survey_id;
  line["rater_id"] = rater;
  line["item_id"] = item;
  line["judgment"] = static_cast<int>(judgment);
  line["rationale"] = rationale;
  line["ts"] = ts;

  std::lock_guard lock(append_mutex_);
  if (entry->answered.contains({rater, item}))
    return fail(RecordStatus::Duplicate, "rater " + rater + " already answered " + item);
  std::ofstream out(log_path(survey_id), std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorKind::IoError, "cannot append to " + log_path(survey_id).string());
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::IoError, "append failed for " + log_path(survey_id).string());
  entry->answered.insert({rater, item});
  return RecordStatus::Ok;
}

std::vector<SurveyRecord> SurveyStore::records(const std::string& survey_id) const {
  if (!has_survey(survey_id)) throw Error(ErrorKind::InvalidParameter, "unknown survey " + survey_id);
  std::lock_guard lock(append_mutex_);
  return read_response_log(log_path(survey_id), truth_path(survey_id));
}

SurveyServer::SurveyServer(SurveyStore& store, std::string token, unsigned threads)
    : store_(store), token_(std::move(token)), http_(std::make_unique<httplib::Server>()) {
  const unsigned n = std::max(1u, threads);
  http_->new_task_queue = [n] { return new httplib::ThreadPool(n); };
  routes();
}

SurveyServer::~SurveyServer() { stop(); }

int SurveyServer::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  return http_->bind_to_port(host, port) ? port : -1;
}

bool SurveyServer::listen_after_bind() { return http_->listen_after_bind(); }
void SurveyServer::stop() {
  if (http_) http_->stop();
}
bool SurveyServer::is_running() const { return http_->is_running(); }

void SurveyServer::routes() {
  auto& srv = *http_;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (token_.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + token_) return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, 401, "missing or invalid bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e.kind() == ErrorKind::IoError ? 500 : 422, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "unknown error");
    }
  });

  srv.Post("/api/surveys", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "body is not valid JSON");
    }
    std::string real_manifest, synth_manifest;
    int n_real = 0, n_synth = 0;
    std::uint64_t seed = 0;
    try {
      real_manifest = body.at("real_manifest").get<std::string>();
      synth_manifest = body.at("synth_manifest").get<std::string>();
      n_real = body.at("n_real").get<int>();
      n_synth = body.at("n_synth").get<int>();
      seed = body.value("seed", std::uint64_t{0});
    } catch (const json::exception& e) {
      return send_error(res, 422, std::string("expected {real_manifest, synth_manifest, n_real, n_synth, seed}: ") +
                                      e.what());
    }
    const ImageSet real = load_manifest(real_manifest);
    const ImageSet synth = load_manifest(synth_manifest);
    const SurveyDefinition s = make_survey(real, synth, n_real, n_synth, seed);
    if (!store_.create(s, real_manifest, synth_manifest))
      return send_json(res, 409, {{"error", "survey already exists"}, {"survey_id", s.survey_id}});
    send_json(res, 201, {{"survey_id", s.survey_id}});
  });

  srv.Get(R"(/api/surveys/([^/]+)/items)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto s = store_.survey(req.matches[1]);
    if (!s) return send_error(res, 404, "unknown survey");
    send_json(res, 200, survey_items_json(*s));
  });

  srv.Get(R"(/api/items/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
    double wc = 40.0, ww = 400.0;
    try {
      if (req.has_param("wc")) wc = std::stod(req.get_param_value("wc"));
      if (req.has_param("ww")) ww = std::stod(req.get_param_value("ww"));
    } catch (const std::exception&) {
      return send_error(res, 422, "wc and ww must be numbers");
    }
    if (!std::isfinite(wc) || !std::isfinite(ww) || ww <= 0.0)
      return send_error(res, 422, "ww must be a positive finite number");
    const auto slice = store_.item_slice(req.matches[1]);
    if (!slice) return send_error(res, 404, "unknown item");
    const auto png = encode_png(window_to_8bit(*slice, wc, ww));
    res.status = 200;
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  });

  srv.Post(R"(/api/surveys/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "body is not valid JSON");
    }
    std::string message;
    switch (store_.record(req.matches[1], body, utc_timestamp(), &message)) {
      case RecordStatus::Ok: res.status = 204; return;
      case RecordStatus::UnknownSurvey:
      case RecordStatus::UnknownItem: return send_error(res, 404, message);
      case RecordStatus::BadJudgment:
      case RecordStatus::BadRequest: return send_error(res, 422, message);
      case RecordStatus::Duplicate: return send_error(res, 409, message);
    }
  });

  srv.Get(R"(/api/surveys/([^/]+)/stats)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!store_.has_survey(id)) return send_error(res, 404, "unknown survey");
    const SurveyLog log{id, store_.records(id)};
    send_json(res, 200, survey_stats_json(std::span(&log, 1)));
  });
}

}  // namespace synthct
