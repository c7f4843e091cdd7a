#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "mist/cli.hpp"
#include "mist/dataset.hpp"
#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "support/synthetic.hpp"

using namespace mist;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("unknown subcommand exits with the usage code") {
  CHECK(cli::dispatch({"frobnicate"}) == 64);
  CHECK(cli::dispatch({}) == 64);
}

TEST_CASE("analyze runs twice with identical outputs and input hashes") {
  const fs::path root = testing::make_temp_dir("cli_analyze");
  testing::SyntheticDatasetOptions options;
  options.n_patients = 4;
  options.channels = 1;
  const fs::path json = testing::write_synthetic_dataset(root, options);

  const fs::path r1 = root / "out1";
  const fs::path r2 = root / "out2";
  CHECK(cli::dispatch({"analyze", "--data", json.string(), "--results",
                       r1.string()}) == 0);
  CHECK(cli::dispatch({"analyze", "--data", json.string(), "--results",
                       r2.string()}) == 0);
  CHECK(slurp(r1 / "config.json") == slurp(r2 / "config.json"));
  CHECK(slurp(r1 / "folds.json") == slurp(r2 / "folds.json"));

  const auto m1 = nlohmann::json::parse(slurp(r1 / "manifest_analyze.json"));
  const auto m2 = nlohmann::json::parse(slurp(r2 / "manifest_analyze.json"));
  CHECK(m1.at("input_hashes") == m2.at("input_hashes"));
  CHECK(m1.at("subcommand") == "analyze");
  CHECK(m1.at("exit_code") == 0);
  fs::remove_all(root);
}

TEST_CASE("run-all produces every pipeline artifact with perfect oracle scores") {
  const fs::path root = testing::make_temp_dir("cli_runall");
  testing::SyntheticDatasetOptions options;
  options.n_patients = 3;
  options.channels = 2;
  options.spacing = {1.0, 1.0, 4.0};
  const fs::path json = testing::write_synthetic_dataset(root, options);
  const fs::path results = root / "results";

  CHECK(cli::dispatch({"run-all", "--data", json.string(), "--results",
                       results.string(), "--predictor", "oracle"}) == 0);

  CHECK(fs::exists(results / "config.json"));
  CHECK(fs::exists(results / "folds.json"));
  CHECK(fs::is_directory(results / "preprocessed"));
  CHECK(fs::exists(results / "preprocessed" / "case_000_image.mvt"));
  CHECK(fs::exists(results / "preprocessed" / "case_000_mask.mvt"));
  CHECK(fs::exists(results / "preprocessed" / "case_000_prov.json"));
  CHECK(fs::is_directory(results / "predictions"));
  CHECK(fs::exists(results / "predictions" / "case_001.nii.gz"));
  CHECK(fs::exists(results / "results.csv"));
  CHECK(fs::exists(results / "manifest_run-all.json"));

  // Oracle predictions restore exactly: every dice cell reads 1.0000.
  const std::string csv = slurp(results / "results.csv");
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);  // header
  int rows = 0;
  while (std::getline(ss, line)) {
    if (line.rfind("case_", 0) == 0) {
      ++rows;
      CHECK(line.find("0.9") == std::string::npos);
    }
  }
  CHECK(rows == 3);
  CHECK(csv.find("mean,1.0000") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("predict consumes a CSV listing and honors --no-tta") {
  const fs::path root = testing::make_temp_dir("cli_predict");
  testing::SyntheticDatasetOptions options;
  options.n_patients = 2;
  options.channels = 1;
  const fs::path json = testing::write_synthetic_dataset(root, options);
  const fs::path results = root / "results";
  REQUIRE(cli::dispatch({"analyze", "--data", json.string(), "--results",
                         results.string()}) == 0);

  std::ofstream listing(root / "cases.csv");
  listing << "id,mod0,mask\n";
  for (const char* id : {"case_000", "case_001"}) {
    listing << id << "," << (root / "train" / id / (std::string(id) +
                             "_mod0.nii.gz")).string() << ","
            << (root / "train" / id / (std::string(id) + "_seg.nii.gz"))
                   .string()
            << "\n";
  }
  listing.close();

  CHECK(cli::dispatch({"predict", "--paths", (root / "cases.csv").string(),
                       "--config", (results / "config.json").string(),
                       "--predictor", "oracle", "--out",
                       (root / "preds").string(), "--no-tta"}) == 0);
  CHECK(fs::exists(root / "preds" / "case_000.nii.gz"));
  CHECK(fs::exists(root / "preds" / "case_001.nii.gz"));

  // A broken listing entry is logged and skipped, not fatal.
  std::ofstream bad(root / "bad.csv");
  bad << "id,mod0,mask\n";
  bad << "ghost,/nowhere.nii.gz,\n";
  bad << "case_000,"
      << (root / "train" / "case_000" / "case_000_mod0.nii.gz").string()
      << ","
      << (root / "train" / "case_000" / "case_000_seg.nii.gz").string()
      << "\n";
  bad.close();
  CHECK(cli::dispatch({"predict", "--paths", (root / "bad.csv").string(),
                       "--config", (results / "config.json").string(),
                       "--predictor", "oracle", "--out",
                       (root / "preds2").string()}) == 1);
  CHECK(fs::exists(root / "preds2" / "case_000.nii.gz"));
  CHECK(!fs::exists(root / "preds2" / "ghost.nii.gz"));
  fs::remove_all(root);
}

TEST_CASE("evaluate and postprocess round trip through the CLI") {
  const fs::path root = testing::make_temp_dir("cli_evalpost");
  testing::SyntheticDatasetOptions options;
  options.n_patients = 3;
  options.channels = 1;
  const fs::path json = testing::write_synthetic_dataset(root, options);
  const auto desc = data::load_description(json);

  // Predictions: truth masks plus one spurious far blob per patient.
  const fs::path preds = root / "preds";
  fs::create_directories(preds);
  for (const auto& rec : data::discover_patients(desc, data::Split::train)) {
    Volume mask = nifti::read_nifti(*rec.mask_path);
    mask.set_kind(VoxelKind::labels);
    mask.at(0, 0, 0, 0) = 1.0f;
    nifti::write_nifti(mask, preds / (rec.id + ".nii.gz"));
  }

  CHECK(cli::dispatch({"evaluate", "--preds", preds.string(), "--truth",
                       json.string(), "--out",
                       (root / "baseline.csv").string()}) == 0);
  CHECK(fs::exists(root / "baseline.csv"));

  std::ofstream strategy(root / "strategy.json");
  strategy << R"([{"target_labels": [1], "ops": [{"op": "top_k", "k": 1}]}])";
  strategy.close();

  CHECK(cli::dispatch({"postprocess", "--preds", preds.string(), "--strategy",
                       (root / "strategy.json").string(), "--truth",
                       json.string(), "--baseline",
                       (root / "baseline.csv").string(), "--out",
                       (root / "post").string()}) == 0);
  CHECK(fs::exists(root / "post" / "results.csv"));
  CHECK(fs::exists(root / "post" / "case_000.nii.gz"));
  fs::remove_all(root);
}

TEST_CASE("convert subcommand wraps the CSV converter") {
  const fs::path root = testing::make_temp_dir("cli_convert");
  fs::create_directories(root / "raw");
  Volume img(Index3{4, 4, 4}, 1, VoxelKind::continuous);
  Volume mask(Index3{4, 4, 4}, 1, VoxelKind::labels);
  mask.at(0, 1, 1, 1) = 1.0f;
  nifti::write_nifti(img, root / "raw" / "a_img.nii.gz");
  nifti::write_nifti(mask, root / "raw" / "a_mask.nii.gz");
  std::ofstream csv(root / "data.csv");
  csv << "id,mask,t1\na,raw/a_mask.nii.gz,raw/a_img.nii.gz\n";
  csv.close();

  CHECK(cli::dispatch({"convert", "--csv", (root / "data.csv").string(),
                       "--out", (root / "out").string()}) == 0);
  CHECK(fs::exists(root / "out" / "dataset.json"));
  CHECK(fs::exists(root / "out" / "train" / "a"));

  CHECK(cli::dispatch({"convert", "--out", (root / "out2").string()}) == 64);
  fs::remove_all(root);
}

}  // TEST_SUITE
