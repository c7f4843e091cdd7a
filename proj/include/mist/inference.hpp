#ifndef MIST_INFERENCE_HPP
#define MIST_INFERENCE_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mist/analyzer.hpp"
#include "mist/preprocess.hpp"
#include "mist/volume.hpp"

namespace mist::infer {

// Where a patch came from, so content-free predictors (the oracle) can look
// up the matching region of their reference volume. The patch was read from
// flip(image, flipped) padded below by pad_lo.
struct PatchContext {
  Index3 origin{0, 0, 0};
  Index3 pad_lo{0, 0, 0};
  Index3 image_shape{1, 1, 1};
  std::array<bool, 3> flipped{false, false, false};
};

class PatchPredictor {
 public:
  virtual ~PatchPredictor() = default;
  virtual std::int64_t input_channels() const = 0;
  virtual std::int64_t output_labels() const = 0;
  // patch holds input_channels x patch_shape voxels (x fastest), probs_out
  // must be filled with output_labels x patch_shape probabilities that sum
  // to 1 over labels at every voxel.
  virtual void predict(const std::vector<float>& patch,
                       const Index3& patch_shape, const PatchContext& ctx,
                       std::vector<float>& probs_out) const = 0;
};

// Uniform probability 1/n_labels everywhere.
class ConstantPredictor : public PatchPredictor {
 public:
  ConstantPredictor(std::int64_t channels, std::int64_t n_labels)
      : channels_(channels), n_labels_(n_labels) {}
  std::int64_t input_channels() const override { return channels_; }
  std::int64_t output_labels() const override { return n_labels_; }
  void predict(const std::vector<float>& patch, const Index3& patch_shape,
               const PatchContext& ctx,
               std::vector<float>& probs_out) const override;

 private:
  std::int64_t channels_;
  std::int64_t n_labels_;
};

// Label 1 where channel-0 intensity exceeds the threshold, else label 0.
class ThresholdPredictor : public PatchPredictor {
 public:
  ThresholdPredictor(std::int64_t channels,
                     const std::vector<std::int64_t>& labels, double threshold);
  std::int64_t input_channels() const override { return channels_; }
  std::int64_t output_labels() const override { return n_labels_; }
  void predict(const std::vector<float>& patch, const Index3& patch_shape,
               const PatchContext& ctx,
               std::vector<float>& probs_out) const override;

 private:
  std::int64_t channels_;
  std::int64_t n_labels_;
  std::size_t positive_channel_;
  double threshold_;
};

// One-hot probabilities read from a reference mask (the preprocessed ground
// truth). Exactly flip-equivariant, so it survives TTA unchanged.
class OraclePredictor : public PatchPredictor {
 public:
  OraclePredictor(Volume truth, std::vector<std::int64_t> labels,
                  std::int64_t channels);
  std::int64_t input_channels() const override { return channels_; }
  std::int64_t output_labels() const override {
    return static_cast<std::int64_t>(labels_.size());
  }
  void predict(const std::vector<float>& patch, const Index3& patch_shape,
               const PatchContext& ctx,
               std::vector<float>& probs_out) const override;

 private:
  Volume truth_;
  std::vector<std::int64_t> labels_;
  std::int64_t channels_;
};

struct BlendSpec {
  Index3 patch_size{128, 128, 128};
  double overlap = 0.5;         // in [0, 1)
  double sigma_scale = 0.125;   // sigma = sigma_scale * patch size, per axis
};

// Separable Gaussian centered on the patch (center (n-1)/2 per axis),
// normalized to max 1 and floored at 1e-6. x fastest.
std::vector<double> gaussian_importance(const Index3& patch_size,
                                        double sigma_scale);

// Window origins along one axis: stride ceil(patch * (1 - overlap)), last
// origin clamped so the final window abuts the boundary.
std::vector<std::int64_t> window_origins_axis(std::int64_t extent,
                                              std::int64_t patch,
                                              double overlap);
std::vector<Index3> window_origins(const Index3& volume_shape,
                                   const Index3& patch_size, double overlap);

// Gaussian-blended sliding-window probabilities, one channel per label.
Volume sliding_window_predict(const Volume& image,
                              const PatchPredictor& predictor,
                              const BlendSpec& spec);

// Identity pass plus one flipped pass per axis (or all 8 flip combinations),
// averaged after undoing each flip.
Volume tta_predict(const Volume& image, const PatchPredictor& predictor,
                   const BlendSpec& spec, bool all_flip_combinations = false);

Volume ensemble(const std::vector<Volume>& probs);

// Argmax (ties toward the smaller label), then inverse resample (nearest
// neighbor), inverse reorient, and un-crop back to the original grid.
Volume finalize(const Volume& prob, const preprocess::Provenance& provenance,
                const std::vector<std::int64_t>& labels);

struct InferenceCase {
  std::string id;
  std::vector<std::filesystem::path> image_paths;
  std::optional<std::filesystem::path> mask_path;
};

std::vector<InferenceCase> load_inference_listing(
    const std::filesystem::path& path);

struct PredictorSpec {
  enum class Kind { oracle, constant, threshold } kind = Kind::constant;
  double threshold = 0.5;

  static PredictorSpec parse(const std::string& text);
};

struct RunInferenceOptions {
  std::vector<PredictorSpec> predictors;
  bool tta = true;
  bool all_flip_combinations = false;
  double overlap = 0.5;
  double sigma_scale = 0.125;
  int workers = 1;
};

// Per case: preprocess with the config, predict with every predictor,
// ensemble, restore to the original grid, write <id>.nii.gz. Errors are
// logged per case; returns the ids that failed.
std::vector<std::string> run_inference(const std::vector<InferenceCase>& cases,
                                       const analysis::PipelineConfig& config,
                                       const std::filesystem::path& out_dir,
                                       const RunInferenceOptions& options);

}  // namespace mist::infer

#endif
