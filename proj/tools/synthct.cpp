// synthct: command-line front end for the evaluation toolkit.
//
// Exit codes: 0 success, 1 domain error (message names the error kind),
// 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "synthct/error.hpp"
#include "synthct/frechet.hpp"
#include "synthct/kernels.hpp"
#include "synthct/mean.hpp"
#include "synthct/parallel.hpp"
#include "synthct/spectral.hpp"
#include "synthct/stratified.hpp"
#include "synthct/survey_service.hpp"
#include "synthct/survey_stats.hpp"

namespace {

using namespace synthct;
using nlohmann::json;

struct Common {
  unsigned threads = default_thread_count();
  std::string simd;
};

struct EvalFlags {
  int n_bins = 256;
  std::vector<double> hu_range{-1024.0, 3071.0};
  double t1 = -200.0;
  double t2 = 200.0;
  int min_slices = 5;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--n-bins", n_bins, "Bins of the fine histogram")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--hu-range", hu_range, "Histogram range in HU")->expected(2)->capture_default_str();
    app->add_option("--t1", t1, "Gas/soft tissue threshold (HU)")->capture_default_str();
    app->add_option("--t2", t2, "Soft tissue/bone threshold (HU)")->capture_default_str();
    app->add_option("--min-slices", min_slices, "Slices needed per layer and side")->capture_default_str();
    app->add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  }

  EvalConfig config(unsigned threads) const {
    EvalConfig c;
    c.n_bins = n_bins;
    c.hu_range = {hu_range.at(0), hu_range.at(1)};
    c.tissue.t1 = t1;
    c.tissue.t2 = t2;
    c.tissue.hu_lo = hu_range.at(0);
    c.tissue.hu_hi = hu_range.at(1);
    c.min_slices = min_slices;
    c.seed = seed;
    c.threads = threads;
    return c;
  }
};

std::optional<FeatureMatrix> load_feature_files(const std::vector<std::string>& paths) {
  if (paths.empty()) return std::nullopt;
  std::vector<FeatureMatrix> parts;
  for (const auto& p : paths) parts.push_back(load_features(p));
  return merge_features(parts);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

int run_ingest_check(const std::string& manifest, const std::string& overrides, const Common& common) {
  ImageSet set = load_manifest(manifest, common.threads);
  if (!overrides.empty()) set = assign_layers(set, load_layer_overrides(overrides));
  json layers = json::array();
  for (int l = 1; l <= LayerId::kCount; ++l)
    layers.push_back({{"layer", l}, {"slices", set.layer_slices(LayerId(l)).size()}});
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const SliceImage* s : set.all_slices())
    for (double v : s->values) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  const json summary{{"set_id", set.set_id()},
                     {"provenance", provenance_name(set.provenance())},
                     {"contrast_enhanced", set.contrast_enhanced()},
                     {"volumes", set.volumes().size()},
                     {"slices", set.slice_count()},
                     {"value_range", {lo, hi}},
                     {"layers", layers}};
  std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluation toolkit for unpaired MRI-to-CT translation"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (default: available cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--simd", common.simd, "Kernel backend: scalar, avx2 or neon (default: best available)")
      ->check(CLI::IsMember({"scalar", "avx2", "neon"}));

  // ingest-check
  auto* ingest = app.add_subcommand("ingest-check", "Load a manifest and report volumes, slices and layers");
  std::string ingest_manifest, ingest_overrides;
  ingest->add_option("--manifest", ingest_manifest, "ImageSet manifest")->required()->check(CLI::ExistingFile);
  ingest->add_option("--overrides", ingest_overrides, "Layer overrides JSON")->check(CLI::ExistingFile);

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Score held-out real data against the remaining real data");
  std::string base_real, base_holdout, base_rest, base_out;
  double holdout_fraction = 0.5;
  std::vector<std::string> base_features;
  EvalFlags base_flags;
  auto* base_real_opt = baseline->add_option("--real", base_real, "Real manifest to split by volume")
                            ->check(CLI::ExistingFile);
  auto* base_hold_opt = baseline->add_option("--holdout", base_holdout, "Held-out real manifest")
                            ->check(CLI::ExistingFile);
  auto* base_rest_opt = baseline->add_option("--rest", base_rest, "Remaining real manifest")->check(CLI::ExistingFile);
  base_hold_opt->needs(base_rest_opt);
  base_rest_opt->needs(base_hold_opt);
  base_real_opt->excludes(base_hold_opt)->excludes(base_rest_opt);
  baseline->add_option("--holdout-fraction", holdout_fraction, "Fraction of volumes held out with --real")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  baseline->add_option("--features", base_features, "Feature files covering the real slices (enables FID)");
  baseline->add_option("--out", base_out, "Baseline JSON to write")->required();
  base_flags.add_to(baseline);

  // eval
  auto* eval = app.add_subcommand("eval", "Layer-wise metrics between a real and a synthetic set");
  std::string eval_real, eval_synth, eval_baseline, eval_out;
  std::vector<std::string> eval_feat_real, eval_feat_synth;
  EvalFlags eval_flags;
  eval->add_option("--real", eval_real, "Real manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--synth", eval_synth, "Synthetic manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--baseline", eval_baseline, "Baseline JSON for normalization")->check(CLI::ExistingFile);
  auto* fr = eval->add_option("--features-real", eval_feat_real, "Feature files for the real slices");
  auto* fs = eval->add_option("--features-synth", eval_feat_synth, "Feature files for the synthetic slices");
  fr->needs(fs);
  fs->needs(fr);
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval_flags.add_to(eval);

  // spectra
  auto* spectra = app.add_subcommand("spectra", "Export per-layer average spectra as 16-bit PGM");
  std::string spec_manifest, spec_out;
  spectra->add_option("--manifest", spec_manifest, "ImageSet manifest")->required()->check(CLI::ExistingFile);
  spectra->add_option("--out", spec_out, "Output directory")->required();

  // survey
  auto* survey = app.add_subcommand("survey", "Blind survey tools");
  survey->require_subcommand(1);
  auto* make = survey->add_subcommand("make", "Assemble a survey into the data directory");
  std::string make_real, make_synth, make_dir;
  int n_real = 10, n_synth = 10;
  std::uint64_t make_seed = 0;
  make->add_option("--real", make_real, "Real pool manifest")->required()->check(CLI::ExistingFile);
  make->add_option("--synth", make_synth, "Synthetic pool manifest")->required()->check(CLI::ExistingFile);
  make->add_option("--n-real", n_real, "Real items")->capture_default_str();
  make->add_option("--n-synth", n_synth, "Synthetic items")->capture_default_str();
  make->add_option("--seed", make_seed, "Sampling and order seed")->capture_default_str();
  make->add_option("--data-dir", make_dir, "Survey store directory")->required();

  auto* serve = survey->add_subcommand("serve", "Serve surveys over HTTP (bearer token from SURVEY_TOKEN)");
  std::string serve_dir, serve_host = "127.0.0.1";
  int serve_port = 8080;
  serve->add_option("--data-dir", serve_dir, "Survey store directory")->required();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_port, "Port (0 picks a free one)")->capture_default_str();

  auto* stats = survey->add_subcommand("stats", "Accuracy tables and chi-squared tests");
  std::string stats_dir, stats_out;
  std::vector<std::string> stats_ids, stats_labels;
  bool yates = false;
  stats->add_option("--data-dir", stats_dir, "Survey store directory")->required();
  stats->add_option("--survey", stats_ids, "Survey ids, in table order")->required();
  stats->add_option("--label", stats_labels, "Labels for the surveys (default: Survey 1..n)");
  stats->add_flag("--yates", yates, "Apply the continuity correction to 2x2 tables");
  stats->add_option("--out", stats_out, "Write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (!common.simd.empty()) {
      const auto b = common.simd == "scalar" ? kernels::Backend::Scalar
                     : common.simd == "avx2" ? kernels::Backend::Avx2
                                             : kernels::Backend::Neon;
      kernels::set_backend(b);
    }

    if (*ingest) return run_ingest_check(ingest_manifest, ingest_overrides, common);

    if (*baseline) {
      const EvalConfig cfg = base_flags.config(common.threads);
      std::optional<ImageSet> holdout, rest;
      if (!base_real.empty()) {
        auto [h, r] = split_holdout(load_manifest(base_real, common.threads), holdout_fraction, cfg.seed);
        holdout.emplace(std::move(h));
        rest.emplace(std::move(r));
      } else if (!base_holdout.empty()) {
        holdout.emplace(load_manifest(base_holdout, common.threads));
        rest.emplace(load_manifest(base_rest, common.threads));
      } else {
        std::cerr << "usage error: baseline needs --real or --holdout/--rest\n\n" << baseline->help();
        return 2;
      }
      const auto feats = load_feature_files(base_features);
      const FeaturePair pair{feats ? &*feats : nullptr, feats ? &*feats : nullptr};
      const BaselineTable table = compute_baseline(*holdout, *rest, cfg, feats ? &pair : nullptr);
      write_text(base_out, baseline_to_json(table).dump(2) + "\n");
      return 0;
    }

    if (*eval) {
      const EvalConfig cfg = eval_flags.config(common.threads);
      const ImageSet real = load_manifest(eval_real, common.threads);
      const ImageSet synth = load_manifest(eval_synth, common.threads);
      std::optional<BaselineTable> base;
      if (!eval_baseline.empty()) base = load_baseline(eval_baseline);
      const auto fr_m = load_feature_files(eval_feat_real);
      const auto fs_m = load_feature_files(eval_feat_synth);
      const FeaturePair pair{fr_m ? &*fr_m : nullptr, fs_m ? &*fs_m : nullptr};
      const auto report = evaluate_sets(real, synth, cfg, base ? &*base : nullptr, fr_m ? &pair : nullptr);
      export_report(report, eval_out);
      return 0;
    }

    if (*spectra) {
      const ImageSet set = load_manifest(spec_manifest, common.threads);
      int rows = 1, cols = 1;
      for (const SliceImage* s : set.all_slices()) {
        rows = std::max(rows, s->rows);
        cols = std::max(cols, s->cols);
      }
      rows = next_power_of_two(rows);
      cols = next_power_of_two(cols);
      std::filesystem::create_directories(spec_out);
      std::vector<std::optional<Spectrum>> per_layer(LayerId::kCount);
      parallel_for(LayerId::kCount, common.threads, [&](std::size_t i) {
        const auto slices = set.layer_slices(LayerId(static_cast<int>(i) + 1));
        if (slices.empty()) return;
        MeanAccumulator mean;
        for (const SliceImage* s : slices) mean.add(to_spectrum(*s, rows, cols).values);
        per_layer[i] = Spectrum{rows, cols, mean.mean()};
      });
      for (int l = 1; l <= LayerId::kCount; ++l) {
        if (!per_layer[l - 1]) continue;
        char name[32];
        std::snprintf(name, sizeof name, "layer_%02d.pgm", l);
        export_spectrum(*per_layer[l - 1], std::filesystem::path(spec_out) / name);
      }
      return 0;
    }

    if (*make) {
      const ImageSet real = load_manifest(make_real, common.threads);
      const ImageSet synth = load_manifest(make_synth, common.threads);
      SurveyStore store(make_dir);
      const SurveyDefinition s = make_survey(real, synth, n_real, n_synth, make_seed);
      // Re-running with identical inputs finds the same id; anything else is a collision.
      if (!store.create(s, make_real, make_synth) &&
          survey_to_json(*store.survey(s.survey_id)) != survey_to_json(s))
        throw Error(ErrorKind::InvalidParameter, "survey id collision for " + s.survey_id);
      std::cout << s.survey_id << '\n';
      return 0;
    }

    if (*serve) {
      SurveyStore store(serve_dir);
      const char* token = std::getenv("SURVEY_TOKEN");
      SurveyServer server(store, token ? token : "", common.threads);
      const int port = server.bind(serve_host, serve_port);
      if (port < 0) throw Error(ErrorKind::IoError, "cannot bind " + serve_host + ":" + std::to_string(serve_port));
      std::cerr << "listening on http://" << serve_host << ":" << port << '\n';
      server.listen_after_bind();
      return 0;
    }

    if (*stats) {
      if (!stats_labels.empty() && stats_labels.size() != stats_ids.size()) {
        std::cerr << "usage error: --label must be given once per --survey\n";
        return 2;
      }
      SurveyStore store(stats_dir);
      std::vector<SurveyLog> logs;
      for (std::size_t i = 0; i < stats_ids.size(); ++i) {
        if (!store.has_survey(stats_ids[i]))
          throw Error(ErrorKind::InvalidParameter, "unknown survey " + stats_ids[i]);
        logs.push_back({stats_labels.empty() ? "Survey " + std::to_string(i + 1) : stats_labels[i],
                        store.records(stats_ids[i])});
      }
      const std::string text = survey_stats_json(logs, yates).dump(2) + "\n";
      if (stats_out.empty())
        std::cout << text;
      else
        write_text(stats_out, text);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
