#include <doctest.h>

#include <random>

#include "mist/distance.hpp"
#include "mist/nifti.hpp"
#include "mist/preprocess.hpp"
#include "mist/tensor_io.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace mist;
namespace fs = std::filesystem;

namespace {

analysis::PipelineConfig mr_config() {
  analysis::PipelineConfig config;
  config.modality = data::Modality::mr;
  config.labels = {0, 1, 2, 3};
  config.target_spacing = {1.0, 1.0, 1.0};
  config.patch_size = {32, 32, 32};
  return config;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("z-score normalization yields mean 0 and std 1") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(7.0, 3.0);
  Volume v(Index3{24, 24, 24}, 1, VoxelKind::continuous);
  for (auto& x : v.data()) x = static_cast<float>(normal(rng));

  const Volume out = preprocess::window_normalize(v, mr_config());
  double sum = 0.0;
  for (float x : out.data()) sum += x;
  const double mean = sum / static_cast<double>(out.data().size());
  double var = 0.0;
  for (float x : out.data()) var += (x - mean) * (x - mean);
  const double stdev = std::sqrt(var / static_cast<double>(out.data().size()));
  CHECK(std::abs(mean) < 1e-2);
  CHECK(std::abs(stdev - 1.0) < 1e-2);
}

TEST_CASE("CT normalization applies the dataset window and statistics") {
  analysis::PipelineConfig config;
  config.modality = data::Modality::ct;
  config.labels = {0, 1};
  config.window_lo = -100.0;
  config.window_hi = 300.0;
  config.global_mean = 5.0;
  config.global_std = 2.0;

  Volume v(Index3{2, 2, 2}, 1, VoxelKind::continuous);
  v.at(0, 0, 0, 0) = 9.0f;     // inside window: (9-5)/2 = 2
  v.at(0, 1, 0, 0) = 1000.0f;  // clipped to 300: (300-5)/2
  const Volume out = preprocess::window_normalize(v, config);
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(2.0));
  CHECK(out.at(0, 1, 0, 0) == doctest::Approx((300.0 - 5.0) / 2.0));
}

TEST_CASE("nonzero masking preserves zero-valued voxels exactly") {
  analysis::PipelineConfig config = mr_config();
  config.use_nonzero_mask = true;

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(50.0, 10.0);
  Volume v(Index3{16, 16, 16}, 1, VoxelKind::continuous);
  for (std::size_t i = 0; i < v.data().size(); ++i)
    v.data()[i] = (i % 4 == 0) ? 0.0f : static_cast<float>(normal(rng));

  const Volume out = preprocess::window_normalize(v, config);
  for (std::size_t i = 0; i < v.data().size(); ++i) {
    if (v.data()[i] == 0.0f) CHECK(out.data()[i] == 0.0f);
  }
  // Nonzero statistics are taken over the nonzero voxels only.
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    if (v.data()[i] != 0.0f) {
      sum += out.data()[i];
      ++count;
    }
  }
  CHECK(std::abs(sum / static_cast<double>(count)) < 1e-2);
}

TEST_CASE("constant channel normalizes without dividing by zero") {
  Volume v(Index3{6, 6, 6}, 1, VoxelKind::continuous);
  std::fill(v.data().begin(), v.data().end(), 42.0f);
  const Volume out = preprocess::window_normalize(v, mr_config());
  for (float x : out.data()) CHECK(std::isfinite(x));
}

TEST_CASE("single-voxel object: boundary zero, 6-neighbors at +spacing") {
  Volume mask(Index3{7, 7, 7}, 1, VoxelKind::labels);
  mask.set_spacing({1.0, 2.0, 3.0});
  mask.at(0, 3, 3, 3) = 1.0f;
  const Volume dtm = preprocess::compute_dtm(mask, {0, 1}, false);
  REQUIRE(dtm.channels() == 2);
  // Channel 1 is the DTM for label 1.
  CHECK(dtm.at(1, 3, 3, 3) == 0.0f);
  CHECK(dtm.at(1, 4, 3, 3) == doctest::Approx(1.0));
  CHECK(dtm.at(1, 2, 3, 3) == doctest::Approx(1.0));
  CHECK(dtm.at(1, 3, 4, 3) == doctest::Approx(2.0));
  CHECK(dtm.at(1, 3, 3, 4) == doctest::Approx(3.0));
  CHECK(dtm.at(1, 4, 4, 3) == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("absent label fills the channel with the physical diagonal") {
  Volume mask(Index3{10, 10, 10}, 1, VoxelKind::labels);
  mask.set_spacing({1.0, 1.0, 1.0});
  const Volume dtm = preprocess::compute_dtm(mask, {0, 1}, false);
  const float diagonal = static_cast<float>(std::sqrt(300.0));
  for (std::int64_t v = 0; v < mask.voxels_per_channel(); ++v)
    CHECK(dtm.channel_data(1)[v] == diagonal);
}

TEST_CASE("DTM sign pattern and values match brute force on small grids") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 12; ++trial) {
    const std::int64_t n = 4 + static_cast<std::int64_t>(rng() % 9);
    Volume mask(Index3{n, n, n}, 1, VoxelKind::labels);
    const double sx = 0.5 + 0.5 * static_cast<double>(rng() % 4);
    mask.set_spacing({sx, 1.0, 2.0});
    for (auto& x : mask.data()) x = static_cast<float>(rng() % 3);

    const Volume dtm = preprocess::compute_dtm(mask, {0, 1, 2}, false);
    for (std::int64_t label = 0; label <= 2; ++label) {
      const std::vector<double> want =
          testing::oracle::dtm_for_label(mask, label);
      const float* got = dtm.channel_data(label);
      // Exact at the stored (float32) precision.
      for (std::size_t v = 0; v < want.size(); ++v)
        CHECK(got[v] == static_cast<float>(want[v]));
    }
  }
}

TEST_CASE("normalized DTM values stay within [-1, 1] and hit an extreme") {
  Volume mask(Index3{8, 8, 8}, 1, VoxelKind::labels);
  for (std::int64_t k = 2; k < 6; ++k)
    for (std::int64_t j = 2; j < 6; ++j)
      for (std::int64_t i = 2; i < 6; ++i) mask.at(0, i, j, k) = 1.0f;

  const Volume dtm = preprocess::compute_dtm(mask, {0, 1}, true);
  for (std::int64_t c = 0; c < 2; ++c) {
    float max_v = -2.0f, min_v = 2.0f;
    for (std::int64_t v = 0; v < mask.voxels_per_channel(); ++v) {
      const float x = dtm.channel_data(c)[v];
      CHECK(std::abs(x) <= 1.0f);
      max_v = std::max(max_v, x);
      min_v = std::min(min_v, x);
    }
    const bool hits_extreme = max_v == 1.0f || min_v == -1.0f;
    CHECK(hits_extreme);
  }
}

TEST_CASE("DTM gradient magnitude is about 1 away from boundaries") {
  // Ball of radius 10 voxels; central differences in a shell that stays
  // clear of both the quantized zero-boundary ring and the medial center.
  const std::int64_t n = 32;
  Volume mask(Index3{n, n, n}, 1, VoxelKind::labels);
  mask.set_spacing({1.0, 1.0, 1.0});
  const double c = 16.0;
  for (std::int64_t k = 0; k < n; ++k) {
    for (std::int64_t j = 0; j < n; ++j) {
      for (std::int64_t i = 0; i < n; ++i) {
        const double d2 = (i - c) * (i - c) + (j - c) * (j - c) +
                          (k - c) * (k - c);
        if (d2 <= 100.0) mask.at(0, i, j, k) = 1.0f;
      }
    }
  }
  const Volume dtm = preprocess::compute_dtm(mask, {0, 1}, false);
  const float* d = dtm.channel_data(1);

  // Voxels on the discrete medial creases (where Voronoi cells of surface
  // voxels meet) legitimately break the property, so assert it in bulk.
  std::int64_t checked = 0;
  std::int64_t within = 0;
  for (std::int64_t k = 2; k < n - 2; ++k) {
    for (std::int64_t j = 2; j < n - 2; ++j) {
      for (std::int64_t i = 2; i < n - 2; ++i) {
        const std::int64_t v = mask.index(i, j, k);
        const double here = d[v];
        if (std::abs(here) < 3.0 || std::abs(here) > 6.0) continue;
        const double gx = (d[mask.index(i + 1, j, k)] -
                           d[mask.index(i - 1, j, k)]) / 2.0;
        const double gy = (d[mask.index(i, j + 1, k)] -
                           d[mask.index(i, j - 1, k)]) / 2.0;
        const double gz = (d[mask.index(i, j, k + 1)] -
                           d[mask.index(i, j, k - 1)]) / 2.0;
        const double norm = std::sqrt(gx * gx + gy * gy + gz * gz);
        ++checked;
        within += std::abs(norm - 1.0) < 0.15;
      }
    }
  }
  CHECK(checked > 500);
  CHECK(static_cast<double>(within) / static_cast<double>(checked) >= 0.995);
}

TEST_CASE("preprocess_patient with an identity config reproduces the input") {
  const fs::path dir = testing::make_temp_dir("pp_identity");
  const testing::SyntheticPatient patient =
      testing::make_patient(77, 1, {0, 1, 2, 3}, {1.0, 1.0, 1.0}, "RAI");
  nifti::write_nifti(patient.image, dir / "p_mod0.nii.gz");
  nifti::write_nifti(patient.mask, dir / "p_seg.nii.gz");

  data::PatientRecord rec;
  rec.id = "p";
  rec.image_paths = {dir / "p_mod0.nii.gz"};
  rec.mask_path = dir / "p_seg.nii.gz";

  analysis::PipelineConfig config = mr_config();
  config.crop_to_foreground = false;

  preprocess::PreprocessOptions options;
  options.skip = true;
  const preprocess::PreprocessedExample ex =
      preprocess::preprocess_patient(rec, config, options);
  CHECK(testing::volumes_close(ex.image, patient.image, 1e-5, 1e-6));
  REQUIRE(ex.mask.has_value());
  CHECK(ex.mask->data() == patient.mask.data());
  CHECK(ex.provenance.skipped);
  fs::remove_all(dir);
}

TEST_CASE("crop-enabled preprocessing shrinks to the foreground box") {
  const fs::path dir = testing::make_temp_dir("pp_crop");
  const testing::SyntheticPatient patient =
      testing::make_patient(78, 2, {0, 1, 2, 3}, {1.0, 1.0, 1.0}, "RAI");
  nifti::write_nifti(patient.image.channel(0), dir / "p_mod0.nii.gz");
  nifti::write_nifti(patient.image.channel(1), dir / "p_mod1.nii.gz");
  nifti::write_nifti(patient.mask, dir / "p_seg.nii.gz");

  data::PatientRecord rec;
  rec.id = "p";
  rec.image_paths = {dir / "p_mod0.nii.gz", dir / "p_mod1.nii.gz"};
  rec.mask_path = dir / "p_seg.nii.gz";

  analysis::PipelineConfig config = mr_config();
  config.crop_to_foreground = true;

  const preprocess::PreprocessedExample ex =
      preprocess::preprocess_patient(rec, config, {});
  CHECK(ex.provenance.cropped);
  const Index3 extent = ex.provenance.crop_box.extent();
  for (int a = 0; a < 3; ++a)
    CHECK(extent[a] < patient.image.shape()[a]);
  CHECK(ex.image.shape() == extent);  // identity spacing, RAI input
  REQUIRE(ex.mask.has_value());
  CHECK(ex.mask->shape() == ex.image.shape());
  fs::remove_all(dir);
}

TEST_CASE("DTM channels align with the declared labels after resampling") {
  const fs::path dir = testing::make_temp_dir("pp_dtm");
  const testing::SyntheticPatient patient =
      testing::make_patient(79, 1, {0, 1, 2, 3}, {1.0, 1.0, 4.0}, "RAI");
  nifti::write_nifti(patient.image, dir / "p_mod0.nii.gz");
  nifti::write_nifti(patient.mask, dir / "p_seg.nii.gz");

  data::PatientRecord rec;
  rec.id = "p";
  rec.image_paths = {dir / "p_mod0.nii.gz"};
  rec.mask_path = dir / "p_seg.nii.gz";

  analysis::PipelineConfig config = mr_config();
  config.target_spacing = {1.0, 1.0, 4.0};

  preprocess::PreprocessOptions options;
  options.compute_dtms = true;
  const preprocess::PreprocessedExample ex =
      preprocess::preprocess_patient(rec, config, options);
  REQUIRE(ex.dtm.has_value());
  CHECK(ex.dtm->channels() == 4);
  CHECK(ex.dtm->shape() == ex.mask->shape());
  // Sign convention: negative exactly on strict-interior label voxels.
  for (std::int64_t v = 0; v < ex.mask->voxels_per_channel(); ++v) {
    const bool is_label2 = ex.mask->data()[static_cast<std::size_t>(v)] == 2.0f;
    const float d = ex.dtm->channel_data(2)[v];
    if (d < 0.0f) CHECK(is_label2);
    if (!is_label2) CHECK(d > 0.0f);
  }
  fs::remove_all(dir);
}

TEST_CASE("provenance JSON round trips") {
  preprocess::Provenance p;
  p.original_shape = {40, 41, 22};
  p.original_spacing = {1.0, 1.0, 4.0};
  p.original_origin = {-12.5, 3.25, 9.0};
  p.original_orientation = "LPS";
  p.cropped = true;
  p.crop_box = BoundingBox{{4, 5, 3}, {36, 37, 19}};
  p.pre_resample_shape = {32, 32, 16};
  p.pre_resample_spacing = {1.0, 1.0, 4.0};
  p.pre_resample_origin = {0.0, 0.0, 0.0};
  const preprocess::Provenance q =
      preprocess::provenance_from_json(preprocess::provenance_to_json(p));
  CHECK(q.original_shape == p.original_shape);
  CHECK(q.original_orientation == p.original_orientation);
  CHECK(q.cropped == p.cropped);
  CHECK(q.crop_box == p.crop_box);
  CHECK(q.pre_resample_shape == p.pre_resample_shape);
}

TEST_CASE("tensor container round trips volumes bit-exactly") {
  const fs::path dir = testing::make_temp_dir("mvt");
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Volume v = testing::random_volume(rng, 8, 3, VoxelKind::continuous);
    write_tensor(v, dir / "t.mvt");
    const Volume r = read_tensor(dir / "t.mvt");
    CHECK(r.data() == v.data());
    CHECK(testing::volumes_close(v, r, 0.0, 0.0));
  }
  fs::remove_all(dir);
}

}  // TEST_SUITE
