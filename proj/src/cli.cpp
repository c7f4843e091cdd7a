#include "mist/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mist/analyzer.hpp"
#include "mist/dataset.hpp"
#include "mist/evaluator.hpp"
#include "mist/inference.hpp"
#include "mist/log.hpp"
#include "mist/manifest.hpp"
#include "mist/postprocess.hpp"
#include "mist/preprocess.hpp"
#include "mist/version.hpp"
#include "mist/worker_pool.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace mist::cli {

namespace {

struct ManifestScope {
  RunManifest manifest;
  fs::path destination;

  ManifestScope(const std::string& subcommand, const fs::path& dir) {
    manifest.tool_version = kVersion;
    manifest.subcommand = subcommand;
    manifest.started = utc_timestamp_now();
    destination = dir / ("manifest_" + subcommand + ".json");
  }

  void option(const std::string& key, const std::string& value) {
    manifest.options[key] = value;
  }
  void hash_input(const fs::path& path) {
    if (fs::is_regular_file(path))
      manifest.input_hashes[path.string()] = fnv1a64_file_hex(path);
  }
  void finish(int exit_code) {
    manifest.finished = utc_timestamp_now();
    manifest.warnings = log::take_warnings();
    manifest.exit_code = exit_code;
    write_manifest(manifest, destination);
  }
};

std::string join_index3(const Index3& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," +
         std::to_string(v[2]);
}

std::vector<metrics::Metric> parse_metric_list(const std::string& csv) {
  std::vector<metrics::Metric> out;
  std::stringstream ss(csv);
  std::string name;
  while (std::getline(ss, name, ',')) out.push_back(metrics::metric_from_name(name));
  if (out.empty())
    throw Error(ErrorCode::InvalidArgument, "empty metric list");
  return out;
}

std::vector<metrics::ClassSpec> classes_from_pairs(
    const std::vector<std::pair<std::string, std::vector<std::int64_t>>>&
        pairs) {
  std::vector<metrics::ClassSpec> out;
  for (const auto& [name, labels] : pairs)
    out.push_back(metrics::ClassSpec{name, labels});
  return out;
}

std::vector<metrics::ClassSpec> load_classes_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError,
                std::string("classes file: ") + e.what());
  }
  std::vector<metrics::ClassSpec> out;
  for (const auto& [name, labels] : j.items()) {
    metrics::ClassSpec spec;
    spec.name = name;
    for (const auto& v : labels) spec.labels.push_back(v.get<std::int64_t>());
    if (spec.labels.empty())
      throw Error(ErrorCode::SchemaError, "class " + name + " has no labels");
    out.push_back(std::move(spec));
  }
  if (out.empty())
    throw Error(ErrorCode::SchemaError, "classes file names no classes");
  return out;
}

struct TruthSpec {
  eval::TruthSource source;
  std::optional<data::DatasetDescription> description;
};

TruthSpec resolve_truth(const std::string& truth_arg) {
  TruthSpec out;
  const fs::path p(truth_arg);
  if (fs::is_directory(p)) {
    out.source = eval::TruthSource::from_directory(p);
  } else {
    data::DatasetDescription desc = data::load_description(p);
    out.description = desc;
    out.source = eval::TruthSource::from_description(std::move(desc));
  }
  return out;
}

void write_folds_json(const data::FoldAssignment& folds, const fs::path& path) {
  ordered_json j;
  j["n_folds"] = folds.n_folds;
  ordered_json assignment = ordered_json::object();
  for (const auto& [id, fold] : folds.assignment) assignment[id] = fold;
  j["assignment"] = assignment;
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

int run_analyze(const fs::path& data, const fs::path& results, int workers,
                std::uint64_t seed, int n_folds) {
  fs::create_directories(results);
  ManifestScope scope("analyze", results);
  scope.option("data", data.string());
  scope.option("results", results.string());
  scope.option("workers", std::to_string(workers));
  scope.option("seed", std::to_string(seed));
  scope.option("folds", std::to_string(n_folds));
  scope.hash_input(data);

  const data::DatasetDescription desc = data::load_description(data);
  const analysis::PipelineConfig config = analysis::analyze(desc, {}, workers);
  analysis::save_config(config, results / "config.json");

  std::vector<std::string> ids;
  for (const auto& rec : data::discover_patients(desc, data::Split::train)) {
    if (std::find(config.excluded_ids.begin(), config.excluded_ids.end(),
                  rec.id) == config.excluded_ids.end())
      ids.push_back(rec.id);
  }
  write_folds_json(data::make_folds(ids, n_folds, seed),
                   results / "folds.json");

  log::info("analyze", "",
            "config written: patch " + join_index3(config.patch_size) +
                ", crop " + (config.crop_to_foreground ? "on" : "off"));
  scope.finish(0);
  return 0;
}

int run_preprocess(const fs::path& data, const fs::path& results,
                   const preprocess::PreprocessOptions& options, int workers) {
  ManifestScope scope("preprocess", results);
  scope.option("data", data.string());
  scope.option("results", results.string());
  scope.option("workers", std::to_string(workers));
  scope.option("compute_dtms", options.compute_dtms ? "true" : "false");
  scope.option("normalize_dtms", options.normalize_dtms ? "true" : "false");
  scope.option("skip", options.skip ? "true" : "false");
  scope.hash_input(data);
  scope.hash_input(results / "config.json");

  const data::DatasetDescription desc = data::load_description(data);
  const analysis::PipelineConfig config =
      analysis::load_config(results / "config.json");
  const std::vector<std::string> failures =
      preprocess::preprocess_dataset(desc, config, results, options, workers);

  const int code = failures.empty() ? 0 : 1;
  scope.finish(code);
  return code;
}

int run_evaluate(const fs::path& preds, const std::string& truth_arg,
                 const std::string& classes_file, const std::string& metric_csv,
                 double surf_tol, const fs::path& out_csv, int workers) {
  const fs::path manifest_dir = out_csv.has_parent_path()
                                    ? out_csv.parent_path()
                                    : fs::path(".");
  fs::create_directories(manifest_dir);
  ManifestScope scope("evaluate", manifest_dir);
  scope.option("preds", preds.string());
  scope.option("truth", truth_arg);
  scope.option("metrics", metric_csv);
  scope.option("out", out_csv.string());
  scope.option("workers", std::to_string(workers));

  const TruthSpec truth = resolve_truth(truth_arg);
  if (!fs::is_directory(fs::path(truth_arg))) scope.hash_input(truth_arg);

  std::vector<metrics::ClassSpec> specs;
  if (!classes_file.empty()) {
    specs = load_classes_file(classes_file);
    scope.hash_input(classes_file);
  } else if (truth.description) {
    specs = classes_from_pairs(truth.description->final_classes);
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "--classes is required when --truth is a directory");
  }

  eval::EvaluateOptions options;
  options.metric_list = parse_metric_list(metric_csv);
  options.surface_dice_tolerance_mm = surf_tol;
  options.workers = workers;

  const eval::MetricsTable table =
      eval::evaluate_run(preds, truth.source, specs, options);
  eval::write_results_csv(table, out_csv);
  log::info("evaluate", "",
            "results written to " + out_csv.string() + " (" +
                std::to_string(table.ids.size()) + " rows)");

  const int code =
      (!table.flagged.empty() || !table.missing.empty()) ? 1 : 0;
  scope.finish(code);
  return code;
}

int run_postprocess_cmd(const fs::path& preds, const fs::path& strategy_file,
                        const std::string& truth_arg,
                        const fs::path& baseline_csv,
                        const std::string& classes_file, double surf_tol,
                        const fs::path& out_dir, int workers) {
  fs::create_directories(out_dir);
  ManifestScope scope("postprocess", out_dir);
  scope.option("preds", preds.string());
  scope.option("strategy", strategy_file.string());
  scope.option("truth", truth_arg);
  scope.option("baseline", baseline_csv.string());
  scope.option("out", out_dir.string());
  scope.hash_input(strategy_file);
  scope.hash_input(baseline_csv);

  const std::vector<post::PostprocessStrategy> strategies =
      post::load_strategies(strategy_file);
  const TruthSpec truth = resolve_truth(truth_arg);
  const eval::MetricsTable baseline = eval::read_results_csv(baseline_csv);

  // Class specs must cover the baseline's class names.
  std::vector<metrics::ClassSpec> specs;
  if (!classes_file.empty())
    specs = load_classes_file(classes_file);
  else if (truth.description)
    specs = classes_from_pairs(truth.description->final_classes);
  else
    throw Error(ErrorCode::InvalidArgument,
                "--classes is required when --truth is a directory");

  if (truth.description) {
    const auto& labels = truth.description->labels;
    for (const auto& s : strategies) {
      for (const auto& op : s.ops) {
        if (op.kind == post::OpKind::fill_holes &&
            !std::binary_search(labels.begin(), labels.end(), op.fill_label))
          throw Error(ErrorCode::SchemaError,
                      "fill_label " + std::to_string(op.fill_label) +
                          " is not a dataset label");
      }
    }
  }

  std::vector<metrics::Metric> metric_list;
  {
    std::set<std::string> seen;
    for (const auto& [cls, metric] : baseline.columns) {
      const std::string name = metrics::metric_name(metric);
      if (seen.insert(name).second) metric_list.push_back(metric);
    }
  }

  eval::EvaluateOptions options;
  options.metric_list = metric_list;
  options.surface_dice_tolerance_mm = surf_tol;
  options.workers = workers;

  const post::PostprocessResult result = post::run_postprocess(
      preds, strategies, truth.source, baseline, specs, out_dir, options);
  eval::write_results_csv(result.table, out_dir / "results.csv");
  std::cout << "improvement " << result.improvement << "\n";
  log::info("postprocess", "",
            "improvement vs baseline: " + std::to_string(result.improvement));
  scope.finish(0);
  return 0;
}

int run_predict(const fs::path& paths, const fs::path& config_path,
                const std::vector<std::string>& predictor_args,
                const fs::path& out_dir, bool no_tta, bool tta_combos,
                double overlap, double sigma, int workers) {
  fs::create_directories(out_dir);
  ManifestScope scope("predict", out_dir);
  scope.option("paths", paths.string());
  scope.option("config", config_path.string());
  scope.option("out", out_dir.string());
  scope.option("workers", std::to_string(workers));
  scope.hash_input(paths);
  scope.hash_input(config_path);

  const analysis::PipelineConfig config = analysis::load_config(config_path);
  const std::vector<infer::InferenceCase> cases =
      infer::load_inference_listing(paths);

  infer::RunInferenceOptions options;
  for (const auto& arg : predictor_args)
    options.predictors.push_back(infer::PredictorSpec::parse(arg));
  options.tta = !no_tta;
  options.all_flip_combinations = tta_combos;
  options.overlap = overlap;
  options.sigma_scale = sigma;
  options.workers = workers;

  const std::vector<std::string> failures =
      infer::run_inference(cases, config, out_dir, options);
  const int code = failures.empty() ? 0 : 1;
  scope.finish(code);
  return code;
}

int run_convert(const std::string& msd, const std::string& csv,
                const fs::path& out, const std::string& modality) {
  fs::create_directories(out);
  ManifestScope scope("convert", out);
  scope.option("msd", msd);
  scope.option("csv", csv);
  scope.option("out", out.string());

  data::DatasetDescription desc;
  if (!msd.empty()) {
    desc = data::convert_msd(msd, out);
  } else {
    scope.hash_input(csv);
    desc = data::convert_csv(csv, out, data::modality_from_name(modality));
  }
  log::info("convert", "",
            "dataset written to " + out.string() + " (" +
                std::to_string(desc.channel_count()) + " channels)");
  scope.finish(0);
  return 0;
}

int run_all(const fs::path& data, const fs::path& results,
            const std::vector<std::string>& predictor_args,
            const preprocess::PreprocessOptions& pre_options,
            const std::string& metric_csv, double surf_tol, bool no_tta,
            double overlap, double sigma, int workers, std::uint64_t seed,
            int n_folds) {
  fs::create_directories(results);
  ManifestScope scope("run-all", results);
  scope.option("data", data.string());
  scope.option("results", results.string());
  scope.option("workers", std::to_string(workers));
  scope.hash_input(data);

  int worst = 0;
  worst = std::max(worst, run_analyze(data, results, workers, seed, n_folds));
  worst = std::max(worst, run_preprocess(data, results, pre_options, workers));

  // Predict over the training cohort with the named predictors; masks ride
  // along so the oracle predictor can be used.
  const data::DatasetDescription desc = data::load_description(data);
  const analysis::PipelineConfig config =
      analysis::load_config(results / "config.json");
  std::vector<infer::InferenceCase> cases;
  for (const auto& rec : data::discover_patients(desc, data::Split::train)) {
    if (std::find(config.excluded_ids.begin(), config.excluded_ids.end(),
                  rec.id) != config.excluded_ids.end())
      continue;
    infer::InferenceCase c;
    c.id = rec.id;
    c.image_paths = rec.image_paths;
    c.mask_path = rec.mask_path;
    cases.push_back(std::move(c));
  }

  infer::RunInferenceOptions inf_options;
  for (const auto& arg : predictor_args)
    inf_options.predictors.push_back(infer::PredictorSpec::parse(arg));
  inf_options.tta = !no_tta;
  inf_options.overlap = overlap;
  inf_options.sigma_scale = sigma;
  inf_options.workers = workers;
  const std::vector<std::string> failures =
      infer::run_inference(cases, config, results / "predictions",
                           inf_options);
  worst = std::max(worst, failures.empty() ? 0 : 1);

  worst = std::max(
      worst, run_evaluate(results / "predictions", data.string(), "",
                          metric_csv, surf_tol, results / "results.csv",
                          workers));
  scope.finish(worst);
  return worst;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"MIST segmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  int workers = default_workers();
  std::uint64_t seed = 42;
  int n_folds = 5;
  bool quiet = false;
  app.add_option("--workers", workers, "Worker threads for parallel stages");
  app.add_option("--seed", seed, "Seed for the fold shuffle");
  app.add_option("--folds", n_folds, "Number of cross-validation folds");
  app.add_flag("--quiet", quiet, "Suppress log output");

  const char* env_results = std::getenv("MIST_RESULTS");
  const std::string default_results =
      env_results ? env_results : "./results";

  std::string data, results = default_results;

  auto* analyze = app.add_subcommand("analyze", "Rule-based dataset analysis");
  analyze->add_option("--data", data, "dataset description JSON")->required();
  analyze->add_option("--results", results, "output directory");

  auto* preprocess_cmd =
      app.add_subcommand("preprocess", "Crop, reorient, resample, normalize");
  preprocess::PreprocessOptions pre_options;
  preprocess_cmd->add_option("--data", data)->required();
  preprocess_cmd->add_option("--results", results);
  preprocess_cmd->add_flag("--compute-dtms", pre_options.compute_dtms);
  preprocess_cmd->add_flag("--normalize-dtms", pre_options.normalize_dtms);
  preprocess_cmd->add_flag("--skip", pre_options.skip);
  preprocess_cmd->add_flag("--bias-correction", pre_options.bias_correction);

  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "Score predictions against truth");
  std::string preds, truth_arg, classes_file, metric_csv = "dice,hd95";
  std::string out_csv = "results.csv";
  double surf_tol = 1.0;
  evaluate_cmd->add_option("--preds", preds)->required();
  evaluate_cmd->add_option("--truth", truth_arg,
                           "dataset JSON or mask directory")->required();
  evaluate_cmd->add_option("--classes", classes_file,
                           "JSON of class name -> label list");
  evaluate_cmd->add_option("--metrics", metric_csv,
                           "comma list: dice,hd95,surf_dice,asd");
  evaluate_cmd->add_option("--surf-dice-tol", surf_tol);
  evaluate_cmd->add_option("--out", out_csv, "output CSV path");

  auto* postprocess_cmd =
      app.add_subcommand("postprocess", "Apply label-targeted cleanups");
  std::string strategy_file, baseline_csv, post_out;
  postprocess_cmd->add_option("--preds", preds)->required();
  postprocess_cmd->add_option("--strategy", strategy_file)->required();
  postprocess_cmd->add_option("--truth", truth_arg)->required();
  postprocess_cmd->add_option("--baseline", baseline_csv)->required();
  postprocess_cmd->add_option("--out", post_out)->required();
  postprocess_cmd->add_option("--classes", classes_file);
  postprocess_cmd->add_option("--surf-dice-tol", surf_tol);

  auto* predict_cmd =
      app.add_subcommand("predict", "Sliding-window test-time inference");
  std::string paths_file, config_file, predictor = "constant";
  std::vector<std::string> model_args;
  bool no_tta = false, tta_combos = false;
  double overlap = 0.5, sigma = 0.125;
  predict_cmd->add_option("--paths", paths_file, "CSV or JSON listing")
      ->required();
  predict_cmd->add_option("--config", config_file)->required();
  predict_cmd->add_option("--predictor", predictor,
                          "oracle|constant|threshold[:t]");
  predict_cmd->add_option("--models", model_args,
                          "predictor spec, repeatable (ensembled)");
  predict_cmd->add_option("--out", post_out)->required();
  predict_cmd->add_flag("--no-tta", no_tta);
  predict_cmd->add_flag("--tta-combos", tta_combos,
                        "use all 8 flip combinations");
  predict_cmd->add_option("--overlap", overlap);
  predict_cmd->add_option("--sigma", sigma);

  auto* convert_cmd =
      app.add_subcommand("convert", "Convert MSD or CSV datasets");
  std::string msd_root, csv_file, modality = "other";
  convert_cmd->add_option("--msd", msd_root, "MSD task root");
  convert_cmd->add_option("--csv", csv_file, "CSV listing");
  convert_cmd->add_option("--out", post_out)->required();
  convert_cmd->add_option("--modality", modality, "ct|mr|other (CSV only)");

  auto* run_all_cmd = app.add_subcommand(
      "run-all", "analyze, preprocess, predict and evaluate in one go");
  run_all_cmd->add_option("--data", data)->required();
  run_all_cmd->add_option("--results", results);
  run_all_cmd->add_option("--predictor", predictor);
  run_all_cmd->add_option("--models", model_args);
  run_all_cmd->add_option("--metrics", metric_csv);
  run_all_cmd->add_option("--surf-dice-tol", surf_tol);
  run_all_cmd->add_flag("--no-tta", no_tta);
  run_all_cmd->add_option("--overlap", overlap);
  run_all_cmd->add_option("--sigma", sigma);
  run_all_cmd->add_flag("--compute-dtms", pre_options.compute_dtms);
  run_all_cmd->add_flag("--normalize-dtms", pre_options.normalize_dtms);

  std::vector<const char*> argv;
  argv.push_back("mist");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  log::set_quiet(quiet);
  log::take_warnings();  // reset between dispatches

  try {
    if (app.got_subcommand(analyze))
      return run_analyze(data, results, workers, seed, n_folds);
    if (app.got_subcommand(preprocess_cmd))
      return run_preprocess(data, results, pre_options, workers);
    if (app.got_subcommand(evaluate_cmd))
      return run_evaluate(preds, truth_arg, classes_file, metric_csv, surf_tol,
                          out_csv, workers);
    if (app.got_subcommand(postprocess_cmd))
      return run_postprocess_cmd(preds, strategy_file, truth_arg, baseline_csv,
                                 classes_file, surf_tol, post_out, workers);
    if (app.got_subcommand(predict_cmd)) {
      std::vector<std::string> predictor_args = model_args;
      if (predictor_args.empty()) predictor_args.push_back(predictor);
      return run_predict(paths_file, config_file, predictor_args, post_out,
                         no_tta, tta_combos, overlap, sigma, workers);
    }
    if (app.got_subcommand(convert_cmd)) {
      if (msd_root.empty() == csv_file.empty()) {
        std::cerr << "convert needs exactly one of --msd or --csv\n";
        return 64;
      }
      return run_convert(msd_root, csv_file, post_out, modality);
    }
    if (app.got_subcommand(run_all_cmd)) {
      std::vector<std::string> predictor_args = model_args;
      if (predictor_args.empty()) predictor_args.push_back(predictor);
      return run_all(data, results, predictor_args, pre_options, metric_csv,
                     surf_tol, no_tta, overlap, sigma, workers, seed, n_folds);
    }
  } catch (const Error& e) {
    log::error("cli", "", e.what());
    return 2;
  } catch (const std::exception& e) {
    log::error("cli", "", e.what());
    return 2;
  }
  return 64;
}

}  // namespace mist::cli
