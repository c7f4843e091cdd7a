#ifndef MIST_POSTPROCESS_HPP
#define MIST_POSTPROCESS_HPP

#include <optional>
#include <string>
#include <vector>

#include "mist/evaluator.hpp"
#include "mist/volume.hpp"

namespace mist::post {

enum class OpKind { remove_small, top_k, morph_clean, fill_holes };

struct PostprocessOp {
  OpKind kind = OpKind::remove_small;
  std::int64_t min_voxels = 1;   // remove_small
  std::int64_t k = 1;            // top_k
  std::int64_t radius = 1;       // morph_clean, in voxels
  std::int64_t fill_label = 0;   // fill_holes
  std::optional<std::int64_t> replacement;  // relabel target, default 0
};

struct PostprocessStrategy {
  std::vector<std::int64_t> target_labels;
  std::vector<PostprocessOp> ops;
  int connectivity = 26;  // 6, 18 or 26
};

std::vector<PostprocessStrategy> strategies_from_json(const std::string& text);
std::vector<PostprocessStrategy> load_strategies(
    const std::filesystem::path& path);

struct ComponentLabels {
  Volume labels;  // component ids, 0 = background
  std::vector<std::pair<std::int64_t, std::int64_t>> sizes;  // (id, voxels),
                                                             // largest first
};

// Components enumerated in first-voxel scan order (x fastest), so ids and
// the size list are deterministic.
ComponentLabels connected_components(const Volume& binary, int connectivity);

Volume apply_op(const Volume& mask, const std::vector<std::int64_t>& targets,
                const PostprocessOp& op, int connectivity);

Volume apply_strategy(const Volume& mask, const PostprocessStrategy& strategy);

struct PostprocessResult {
  eval::MetricsTable table;
  double improvement = 0.0;  // weighted mean-change vs the baseline
};

// Applies the strategies to every prediction, re-evaluates, and scores the
// change against the baseline means: sum of sign * (new - base) / #columns.
PostprocessResult run_postprocess(
    const std::filesystem::path& pred_dir,
    const std::vector<PostprocessStrategy>& strategies,
    const eval::TruthSource& truth, const eval::MetricsTable& baseline,
    const std::vector<metrics::ClassSpec>& specs,
    const std::filesystem::path& out_dir, const eval::EvaluateOptions& options);

}  // namespace mist::post

#endif
