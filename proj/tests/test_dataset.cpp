#include <doctest.h>

#include <fstream>
#include <set>

#include "mist/dataset.hpp"
#include "mist/nifti.hpp"
#include "support/synthetic.hpp"

using namespace mist;
using namespace mist::data;
namespace fs = std::filesystem;

namespace {

const char* kBratsJson = R"({
  "task_name": "brats-post-treatment",
  "modality": "mr",
  "train_dir": "/data/train",
  "test_dir": "/data/test",
  "mask_patterns": ["-seg."],
  "image_patterns": {
    "t1": ["-t1n."],
    "t1ce": ["-t1c."],
    "t2": ["-t2w."],
    "flair": ["-t2f."]
  },
  "labels": [0, 1, 2, 3, 4],
  "final_classes": {
    "WT": [1, 2, 3],
    "TC": [1, 3],
    "ET": [3]
  }
})";

void write_nii(const fs::path& path, std::int64_t label_max = 1) {
  Volume v(Index3{4, 4, 4}, 1,
           label_max >= 0 ? VoxelKind::labels : VoxelKind::continuous);
  if (label_max > 0) v.at(0, 1, 1, 1) = static_cast<float>(label_max);
  nifti::write_nifti(v, path);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("BraTS-style description parses with ordered classes") {
  const DatasetDescription d = parse_description(kBratsJson);
  CHECK(d.task_name == "brats-post-treatment");
  CHECK(d.modality == Modality::mr);
  CHECK(d.channel_count() == 4);
  CHECK(d.image_patterns[0].first == "t1");
  CHECK(d.image_patterns[3].first == "flair");
  CHECK(d.labels == std::vector<std::int64_t>{0, 1, 2, 3, 4});
  REQUIRE(d.final_classes.size() == 3);
  CHECK(d.final_classes[0].first == "WT");
  CHECK(d.final_classes[0].second == std::vector<std::int64_t>{1, 2, 3});
}

TEST_CASE("minimal single-modality description has one channel") {
  const char* json = R"({
    "task_name": "liver",
    "modality": "ct",
    "train_dir": "/data/train",
    "mask_patterns": ["_seg."],
    "image_patterns": {"ct": ["_ct."]},
    "labels": [0, 1],
    "final_classes": {"liver": [1]}
  })";
  const DatasetDescription d = parse_description(json);
  CHECK(d.channel_count() == 1);
  CHECK(!d.test_dir.has_value());
}

TEST_CASE("final class referencing an unknown label is a schema error") {
  std::string json = kBratsJson;
  const auto pos = json.find("\"ET\": [3]");
  json.replace(pos, 9, "\"ET\": [9]");
  CHECK_THROWS_WITH_AS(parse_description(json), doctest::Contains("label 9"),
                       Error);
}

TEST_CASE("unknown keys are rejected by name") {
  std::string json = kBratsJson;
  json.insert(json.find("\"task_name\""), "\"surprise\": 1,\n  ");
  CHECK_THROWS_WITH_AS(parse_description(json), doctest::Contains("surprise"),
                       Error);
}

TEST_CASE("labels must contain zero") {
  std::string json = kBratsJson;
  const auto pos = json.find("[0, 1, 2, 3, 4]");
  json.replace(pos, 15, "[1, 2, 3, 4]");
  CHECK_THROWS_WITH_AS(parse_description(json),
                       doctest::Contains("must contain 0"), Error);
}

TEST_CASE("discovery finds complete patients in sorted order") {
  const fs::path root = testing::make_temp_dir("discover");
  DatasetDescription d;
  d.task_name = "t";
  d.modality = Modality::mr;
  d.train_dir = root / "train";
  d.mask_patterns = {"_seg."};
  d.image_patterns.emplace_back("t1", std::vector<std::string>{"_t1."});
  d.image_patterns.emplace_back("t2", std::vector<std::string>{"_t2."});
  d.labels = {0, 1};
  d.final_classes.emplace_back("c1", std::vector<std::int64_t>{1});

  for (const char* id : {"zeta", "alpha", "mid"}) {
    fs::create_directories(root / "train" / id);
    write_nii(root / "train" / id / (std::string(id) + "_t1.nii.gz"));
    write_nii(root / "train" / id / (std::string(id) + "_t2.nii.gz"));
    write_nii(root / "train" / id / (std::string(id) + "_seg.nii.gz"));
  }

  const auto recs = discover_patients(d, Split::train);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].id == "alpha");
  CHECK(recs[1].id == "mid");
  CHECK(recs[2].id == "zeta");
  CHECK(recs[0].image_paths.size() == 2);
  CHECK(recs[0].mask_path.has_value());

  SUBCASE("missing channel is an error naming the channel") {
    fs::remove(root / "train" / "mid" / "mid_t2.nii.gz");
    CHECK_THROWS_WITH_AS(discover_patients(d, Split::train),
                         doctest::Contains("t2"), Error);
  }
  SUBCASE("missing mask is an error on the train split") {
    fs::remove(root / "train" / "mid" / "mid_seg.nii.gz");
    CHECK_THROWS_WITH_AS(discover_patients(d, Split::train),
                         doctest::Contains("MissingMask"), Error);
  }
  SUBCASE("ambiguous channel match is an error") {
    write_nii(root / "train" / "mid" / "mid_extra_t1.nii.gz");
    CHECK_THROWS_WITH_AS(discover_patients(d, Split::train),
                         doctest::Contains("AmbiguousMatch"), Error);
  }
  SUBCASE("test split tolerates absent masks") {
    d.test_dir = root / "test";
    fs::create_directories(root / "test" / "t0");
    write_nii(root / "test" / "t0" / "t0_t1.nii.gz");
    write_nii(root / "test" / "t0" / "t0_t2.nii.gz");
    const auto test_recs = discover_patients(d, Split::test);
    REQUIRE(test_recs.size() == 1);
    CHECK(!test_recs[0].mask_path.has_value());
  }
  fs::remove_all(root);
}

TEST_CASE("MSD conversion splits 4D images and re-discovers cleanly") {
  const fs::path root = testing::make_temp_dir("msd");
  const fs::path msd = root / "Task99_Toy";
  fs::create_directories(msd / "imagesTr");
  fs::create_directories(msd / "labelsTr");
  fs::create_directories(msd / "imagesTs");

  std::ofstream meta(msd / "dataset.json");
  meta << R"({
    "name": "Toy",
    "modality": {"0": "T1", "1": "T2"},
    "labels": {"0": "background", "1": "tumour core", "2": "edema"}
  })";
  meta.close();

  for (int c = 0; c < 10; ++c) {
    const std::string name = "toy_" + std::to_string(c) + ".nii.gz";
    Volume image(Index3{5, 5, 5}, 2, VoxelKind::continuous);
    for (auto& x : image.data()) x = static_cast<float>(c);
    nifti::write_nifti(image, msd / "imagesTr" / name);
    Volume mask(Index3{5, 5, 5}, 1, VoxelKind::labels);
    mask.at(0, 2, 2, 2) = 1.0f;
    mask.at(0, 1, 1, 1) = 2.0f;
    nifti::write_nifti(mask, msd / "labelsTr" / name);
  }
  Volume test_image(Index3{5, 5, 5}, 2, VoxelKind::continuous);
  nifti::write_nifti(test_image, msd / "imagesTs" / "toy_77.nii.gz");

  const fs::path out = root / "converted";
  const DatasetDescription d = convert_msd(msd, out);
  CHECK(d.channel_count() == 2);
  CHECK(d.labels == std::vector<std::int64_t>{0, 1, 2});
  CHECK(d.modality == Modality::mr);

  // 10 patient dirs with 2 images + 1 mask each.
  const auto recs = discover_patients(d, Split::train);
  REQUIRE(recs.size() == 10);
  for (const auto& rec : recs) {
    CHECK(rec.image_paths.size() == 2);
    CHECK(rec.mask_path.has_value());
    std::set<fs::path> files;
    for (const auto& entry :
         fs::directory_iterator(out / "train" / rec.id))
      files.insert(entry.path());
    CHECK(files.size() == 3);
  }
  const auto test_recs = discover_patients(d, Split::test);
  CHECK(test_recs.size() == 1);

  // The emitted description file re-parses.
  const DatasetDescription reloaded = load_description(out / "dataset.json");
  CHECK(reloaded.channel_count() == 2);
  fs::remove_all(root);
}

TEST_CASE("CSV conversion links files and discovers labels from masks") {
  const fs::path root = testing::make_temp_dir("csvconv");
  fs::create_directories(root / "raw");
  for (int c = 0; c < 3; ++c) {
    const std::string base = "subj" + std::to_string(c);
    write_nii(root / "raw" / (base + "_img.nii.gz"), 0);
    Volume mask(Index3{4, 4, 4}, 1, VoxelKind::labels);
    mask.at(0, 1, 1, 1) = 2.0f;
    nifti::write_nifti(mask, root / "raw" / (base + "_mask.nii.gz"));
  }
  std::ofstream csv(root / "data.csv");
  csv << "id,mask,t1\n";
  for (int c = 0; c < 3; ++c) {
    const std::string base = "subj" + std::to_string(c);
    csv << base << ",raw/" << base << "_mask.nii.gz,raw/" << base
        << "_img.nii.gz\n";
  }
  csv.close();

  const fs::path out = root / "converted";
  const DatasetDescription d = convert_csv(root / "data.csv", out);
  CHECK(d.labels == std::vector<std::int64_t>{0, 2});
  const auto recs = discover_patients(d, Split::train);
  CHECK(recs.size() == 3);

  SUBCASE("a missing file names the offending row") {
    std::ofstream bad(root / "bad.csv");
    bad << "id,mask,t1\n";
    bad << "subj0,raw/subj0_mask.nii.gz,raw/subj0_img.nii.gz\n";
    bad << "ghost,raw/ghost_mask.nii.gz,raw/ghost_img.nii.gz\n";
    bad.close();
    CHECK_THROWS_WITH_AS(convert_csv(root / "bad.csv", root / "c2"),
                         doctest::Contains("row 3"), Error);
  }
  fs::remove_all(root);
}

TEST_CASE("fold assignment: 10 ids into 5 folds gives 2 each") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("p" + std::to_string(i));
  const FoldAssignment folds = make_folds(ids, 5, 42);
  for (int f = 0; f < 5; ++f)
    CHECK(folds.validation_ids(f).size() == 2);
}

TEST_CASE("fold sizes differ by at most one and partition the ids") {
  for (const int n_ids : {7, 11, 23}) {
    std::vector<std::string> ids;
    for (int i = 0; i < n_ids; ++i) ids.push_back("p" + std::to_string(i));
    const FoldAssignment folds = make_folds(ids, 5, 123);

    std::set<std::string> seen;
    std::vector<std::size_t> sizes;
    for (int f = 0; f < 5; ++f) {
      const auto val = folds.validation_ids(f);
      sizes.push_back(val.size());
      for (const auto& id : val) CHECK(seen.insert(id).second);
    }
    CHECK(seen.size() == static_cast<std::size_t>(n_ids));
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("same seed reproduces the assignment, regardless of input order") {
  std::vector<std::string> ids{"c", "a", "d", "b", "e", "f"};
  std::vector<std::string> shuffled{"f", "e", "d", "c", "b", "a"};
  const FoldAssignment a = make_folds(ids, 3, 42);
  const FoldAssignment b = make_folds(shuffled, 3, 42);
  CHECK(a.assignment == b.assignment);
  const FoldAssignment c = make_folds(ids, 3, 43);
  CHECK(a.assignment != c.assignment);
}

TEST_CASE("custom folds validate coverage") {
  const std::vector<std::string> ids{"a", "b", "c"};
  std::map<std::string, int> custom{{"a", 0}, {"b", 1}, {"c", 0}};
  const FoldAssignment folds = make_folds(ids, 2, 42, custom);
  CHECK(folds.assignment.at("b") == 1);

  SUBCASE("missing id") {
    custom.erase("c");
    CHECK_THROWS_WITH_AS(make_folds(ids, 2, 42, custom),
                         doctest::Contains("BadCustomFolds"), Error);
  }
  SUBCASE("unknown id") {
    custom["zz"] = 1;
    CHECK_THROWS_WITH_AS(make_folds(ids, 2, 42, custom),
                         doctest::Contains("BadCustomFolds"), Error);
  }
  SUBCASE("fold index out of range") {
    custom["a"] = 5;
    CHECK_THROWS_WITH_AS(make_folds(ids, 2, 42, custom),
                         doctest::Contains("BadCustomFolds"), Error);
  }
}

TEST_CASE("synthetic dataset round trips through discovery") {
  const fs::path root = testing::make_temp_dir("synth_discover");
  testing::SyntheticDatasetOptions options;
  options.n_patients = 3;
  const fs::path json = testing::write_synthetic_dataset(root, options);
  const DatasetDescription d = load_description(json);
  const auto recs = discover_patients(d, Split::train);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].id == "case_000");
  CHECK(recs[0].image_paths.size() == 2);
  fs::remove_all(root);
}

}  // TEST_SUITE
