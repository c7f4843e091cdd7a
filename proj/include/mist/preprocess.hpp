#ifndef MIST_PREPROCESS_HPP
#define MIST_PREPROCESS_HPP

#include <optional>
#include <string>

#include "mist/analyzer.hpp"
#include "mist/dataset.hpp"
#include "mist/volume.hpp"
#include "mist/volume_ops.hpp"

namespace mist::preprocess {

// Everything needed to map a prediction made on the preprocessed grid back
// onto the original voxel grid.
struct Provenance {
  Index3 original_shape{1, 1, 1};
  Vec3 original_spacing{1, 1, 1};
  Vec3 original_origin{0, 0, 0};
  Mat3 original_direction;
  std::string original_orientation = "RAI";
  bool cropped = false;
  BoundingBox crop_box;
  Index3 pre_resample_shape{1, 1, 1};  // RAI axes, after cropping
  Vec3 pre_resample_spacing{1, 1, 1};
  Vec3 pre_resample_origin{0, 0, 0};
  Mat3 pre_resample_direction;
  bool skipped = false;
};

std::string provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const std::string& text);

struct PreprocessOptions {
  bool compute_dtms = false;
  bool normalize_dtms = false;
  bool skip = false;
  bool bias_correction = false;  // accepted but a pass-through hook
};

struct PreprocessedExample {
  Volume image;
  std::optional<Volume> mask;
  std::optional<Volume> dtm;
  Provenance provenance;
};

// Windows and z-scores one image (all channels). CT uses the dataset-level
// window and statistics from the config; MR/other use per-image percentiles
// and statistics, restricted to nonzero voxels when the config says so (the
// result is then re-masked so zero-valued voxels stay exactly zero).
Volume window_normalize(const Volume& image,
                        const analysis::PipelineConfig& config);

// crop (optional) -> bias hook -> reorient to RAI -> resample -> normalize.
PreprocessedExample preprocess_patient(const data::PatientRecord& rec,
                                       const analysis::PipelineConfig& config,
                                       const PreprocessOptions& options = {});

// Batch driver: writes <id>_image.mvt, <id>_mask.mvt, <id>_dtm.mvt and
// <id>_prov.json under results_dir/preprocessed. Returns ids that failed.
std::vector<std::string> preprocess_dataset(
    const data::DatasetDescription& desc,
    const analysis::PipelineConfig& config,
    const std::filesystem::path& results_dir, const PreprocessOptions& options,
    int workers);

}  // namespace mist::preprocess

#endif
