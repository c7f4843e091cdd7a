#ifndef MIST_ANALYZER_HPP
#define MIST_ANALYZER_HPP

#include <optional>
#include <string>
#include <vector>

#include "mist/dataset.hpp"
#include "mist/volume.hpp"

namespace mist::analysis {

// Every rule threshold of the analysis pipeline, with its default.
struct AnalyzerRules {
  double crop_window_lo = 33.0;            // percentile
  double crop_window_hi = 99.5;            // percentile
  double crop_reduction_threshold = 0.20;  // mean volume reduction
  double anisotropy_ratio = 3.0;
  double low_resolution_percentile = 10.0;
  double norm_window_lo = 0.5;             // percentile
  double norm_window_hi = 99.5;            // percentile
  double nonzero_ratio_threshold = 0.2;
  std::int64_t memory_warn_bytes = std::int64_t{2} << 30;  // 2 GiB
  Index3 max_patch_size{256, 256, 256};
  int otsu_bins = 256;
};

// The analysis result, persisted as config.json.
struct PipelineConfig {
  int schema_version = 1;
  bool crop_to_foreground = false;
  double mean_volume_reduction = 0.0;
  Vec3 target_spacing{1.0, 1.0, 1.0};
  Index3 patch_size{1, 1, 1};
  Index3 max_patch_size{256, 256, 256};
  data::Modality modality = data::Modality::other;
  std::optional<double> window_lo;     // CT only
  std::optional<double> window_hi;     // CT only
  std::optional<double> global_mean;   // CT only
  std::optional<double> global_std;    // CT only
  bool use_nonzero_mask = false;       // MR/other only
  std::vector<std::int64_t> labels;
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> final_classes;
  std::vector<std::string> excluded_ids;
  bool memory_warning = false;
};

std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& config,
                 const std::filesystem::path& path);

// Histogram Otsu: candidate thresholds are the 256 bin centers; a candidate
// assigns its own bin to the upper class. Returns the candidate maximizing
// between-class variance, ties toward the lower threshold. A zero-variance
// histogram (all mass in one bin) yields that bin's center.
double otsu_threshold(const std::vector<std::int64_t>& histogram,
                      double range_lo, double range_hi);

// Windows a single-channel image to [p33, p99.5], then thresholds with Otsu.
// A constant image yields an all-ones mask with a warning.
Volume foreground_mask(const Volume& image, const AnalyzerRules& rules = {});

// Union of per-channel foreground masks.
Volume foreground_union(const Volume& multichannel,
                        const AnalyzerRules& rules = {});

struct CroppingDecision {
  bool crop_to_foreground = false;
  double mean_reduction = 0.0;
};
CroppingDecision decide_cropping(const std::vector<data::PatientRecord>& usable,
                                 const AnalyzerRules& rules = {},
                                 int workers = 1);

Vec3 select_target_spacing(const std::vector<Vec3>& spacings,
                           const AnalyzerRules& rules = {});

std::int64_t estimate_memory(const Index3& median_resampled_shape,
                             std::int64_t channels);

Index3 select_patch_size(const Index3& median_resampled_shape,
                         const Index3& max_patch);

struct NormalizationParams {
  bool use_nonzero_mask = false;
  std::optional<double> window_lo;
  std::optional<double> window_hi;
  std::optional<double> global_mean;
  std::optional<double> global_std;
};
NormalizationParams compute_normalization_params(
    const std::vector<data::PatientRecord>& usable,
    const data::DatasetDescription& desc, const AnalyzerRules& rules = {},
    int workers = 1);

struct HeaderCheck {
  bool ok = true;
  std::string reason;
};
HeaderCheck check_headers(const data::PatientRecord& patient);

PipelineConfig analyze(const data::DatasetDescription& desc,
                       const AnalyzerRules& rules = {}, int workers = 1);

}  // namespace mist::analysis

#endif
