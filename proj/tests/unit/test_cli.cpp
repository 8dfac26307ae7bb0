#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "phantom.hpp"
#include "synthct/frechet.hpp"
#include "test_util.hpp"

using synthct::testing::PhantomSpec;
using synthct::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + SYNTHCT_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    rows.emplace_back();
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) rows.back().push_back(cell);
  }
  return rows;
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

struct Fixture {
  TempDir dir{"cli"};
  std::filesystem::path real, synth, feat_real, feat_synth;

  Fixture() {
    PhantomSpec r;
    r.set_id = "real";
    r.volumes = 6;
    r.slices_per_volume = 20;
    r.rows = r.cols = 24;
    r.noise_sigma = 0.01;
    PhantomSpec s = r;
    s.set_id = "synth";
    s.provenance = synthct::Provenance::Synthetic;
    s.noise_sigma = 0.05;
    const auto real_set = synthct::testing::make_phantom(r);
    const auto synth_set = synthct::testing::make_phantom(s);
    real = synthct::testing::write_manifest(real_set, dir / "real");
    synth = synthct::testing::write_manifest(synth_set, dir / "synth");
    feat_real = dir / "real.feat";
    feat_synth = dir / "synth.feat";
    synthct::save_features(synthct::testing::block_features(real_set), feat_real);
    synthct::save_features(synthct::testing::block_features(synth_set), feat_synth);
  }
};

}  // namespace

TEST_CASE("cli exit codes") {
  TempDir dir("cli-codes");
  CHECK(run("--help", dir).code == 0);
  Run r = run("--bogus", dir);
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  CHECK(run("", dir).code == 2);
  CHECK(run("eval --real", dir).code == 2);
  CHECK(run("eval --real /no/such/file --synth /no/such --out x", dir).code == 2);

  std::ofstream(dir / "bad.json") << R"({"set_id": "x"})";
  r = run("ingest-check --manifest " + q(dir / "bad.json"), dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("MalformedInput") != std::string::npos);
}

TEST_CASE("cli ingest, baseline, eval, spectra") {
  Fixture f;
  Run r = run("ingest-check --manifest " + q(f.real), f.dir);
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(r.out);
  CHECK(summary["set_id"] == "real");

  const auto base = f.dir / "base.json";
  r = run("--threads 2 baseline --real " + q(f.real) + " --features " + q(f.feat_real) + " --seed 3 --out " + q(base),
          f.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string base_bytes = slurp(base);
  // Baseline is reproducible under a different thread count.
  r = run("--threads 1 baseline --real " + q(f.real) + " --features " + q(f.feat_real) + " --seed 3 --out " + q(base),
          f.dir);
  CHECK(slurp(base) == base_bytes);

  const std::string eval_args = "eval --real " + q(f.real) + " --synth " + q(f.synth) + " --baseline " + q(base) +
                                " --features-real " + q(f.feat_real) + " --features-synth " + q(f.feat_synth);
  r = run(eval_args + " --out " + q(f.dir / "out1"), f.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* name : {"report.json", "scores.csv", "FID.svg", "KL256.svg", "KL3.svg", "HistCorr.svg",
                           "HistInter.svg", "SpectCorr.svg"})
    CHECK(std::filesystem::exists(f.dir / "out1" / name));
  r = run("--threads 3 " + eval_args + " --out " + q(f.dir / "out2"), f.dir);
  REQUIRE(r.code == 0);
  for (const char* name : {"report.json", "scores.csv", "KL256.svg"})
    CHECK(slurp(f.dir / "out1" / name) == slurp(f.dir / "out2" / name));

  // The scalar backend sums in a different order, so only the last bits move.
  r = run("--simd scalar " + eval_args + " --out " + q(f.dir / "out3"), f.dir);
  REQUIRE(r.code == 0);
  const auto simd = read_csv(f.dir / "out1/scores.csv"), scalar = read_csv(f.dir / "out3/scores.csv");
  REQUIRE(simd.size() == 61);
  REQUIRE(scalar.size() == 61);
  for (std::size_t i = 1; i < simd.size(); ++i) {
    CHECK(simd[i][0] == scalar[i][0]);
    CHECK(simd[i][1] == scalar[i][1]);
    for (int c : {2, 3}) {
      const double x = std::stod(simd[i][c]), y = std::stod(scalar[i][c]);
      CHECK(std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(x)));
    }
  }
  const auto report = nlohmann::json::parse(slurp(f.dir / "out1/report.json"));
  CHECK(report["config"]["n_bins"] == 256);
  CHECK(report["config"]["min_slices"] == 5);

  // Features on one side only is a usage error.
  CHECK(run("eval --real " + q(f.real) + " --synth " + q(f.synth) + " --features-real " + q(f.feat_real) +
                " --out " + q(f.dir / "x"),
            f.dir)
            .code == 2);
  // Using the synthetic features for the real side leaves slices uncovered only if ids differ;
  // here both sets share volume ids, so swap in a truncated file instead.
  auto fm = synthct::load_features(f.feat_synth);
  fm.n = 10;
  fm.ids.resize(10);
  fm.data.resize(10 * fm.d);
  synthct::save_features(fm, f.dir / "short.feat");
  r = run("eval --real " + q(f.real) + " --synth " + q(f.synth) + " --features-real " + q(f.feat_real) +
              " --features-synth " + q(f.dir / "short.feat") + " --out " + q(f.dir / "y"),
          f.dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("MissingFeature") != std::string::npos);

  r = run("spectra --manifest " + q(f.real) + " --out " + q(f.dir / "spec"), f.dir);
  REQUIRE(r.code == 0);
  for (int l = 1; l <= 10; ++l) {
    char name[32];
    std::snprintf(name, sizeof name, "layer_%02d.pgm", l);
    CHECK(std::filesystem::exists(f.dir / "spec" / name));
  }
}

TEST_CASE("cli survey make and stats") {
  Fixture f;
  const auto data = f.dir / "surveys";
  const std::string make = "survey make --real " + q(f.real) + " --synth " + q(f.synth) +
                           " --n-real 10 --n-synth 10 --seed 7 --data-dir " + q(data);
  Run r = run(make, f.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string id = r.out.substr(0, r.out.find_first_of("\r\n"));
  const std::string survey = slurp(data / id / "survey.json");
  const std::string truth = slurp(data / id / "truth.json");
  r = run(make, f.dir);
  CHECK(r.code == 0);
  CHECK(r.out.substr(0, r.out.find_first_of("\r\n")) == id);
  CHECK(slurp(data / id / "survey.json") == survey);
  CHECK(slurp(data / id / "truth.json") == truth);

  // Answer everything "real" through the log format, then summarize.
  const auto t = nlohmann::json::parse(truth);
  std::ofstream log(data / id / "responses.jsonl");
  for (const auto& [item, _] : t.items())
    log << nlohmann::json{{"survey_id", id}, {"rater_id", "a"}, {"item_id", item}, {"judgment", 1},
                          {"rationale", nullptr}, {"ts", "t"}}
               .dump()
        << "\n";
  log.close();
  r = run("survey stats --data-dir " + q(data) + " --survey " + id, f.dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto stats = nlohmann::json::parse(r.out);
  CHECK(stats["accuracy"]["surveys"][0]["values"] == nlohmann::json::array({50.0, 100.0, 0.0}));
  CHECK(run("survey stats --data-dir " + q(data) + " --survey nope", f.dir).code == 1);
}
