#ifndef MIST_METRICS_HPP
#define MIST_METRICS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mist/volume.hpp"

namespace mist::metrics {

struct ClassSpec {
  std::string name;
  std::vector<std::int64_t> labels;  // nonempty
};

enum class Metric { dice, hd95, asd, surface_dice };

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& name);

// +1 when larger is better, -1 when smaller is better.
int metric_sign(Metric m);

struct SurfaceDistanceSet {
  std::vector<double> d_pred_to_truth;  // one per predicted-boundary voxel
  std::vector<double> d_truth_to_pred;  // one per truth-boundary voxel
  Vec3 spacing{1.0, 1.0, 1.0};
};

// Binary mask: 1 where the voxel's label belongs to the class.
Volume compose_class(const Volume& mask, const ClassSpec& spec);

double dice(const Volume& pred, const Volume& truth);

// Boundary voxels are object voxels 6-adjacent to background or touching
// the volume edge; distances are voxel-center to voxel-center, in mm.
SurfaceDistanceSet surface_distances(const Volume& pred, const Volume& truth,
                                     const Vec3& spacing);

double hd95(const SurfaceDistanceSet& sd);
double asd(const SurfaceDistanceSet& sd);
double surface_dice(const SurfaceDistanceSet& sd, double tolerance_mm);

struct EvaluatePairOptions {
  double surface_dice_tolerance_mm = 1.0;
  double geometry_tolerance = 1e-3;
};

// Per (class, metric) values with the empty-mask policy:
// both empty -> dice 1, distances 0, surface dice 1; exactly one empty ->
// dice 0, distances = physical image diagonal, surface dice 0.
std::map<std::pair<std::string, Metric>, double> evaluate_pair(
    const Volume& pred_mask, const Volume& truth_mask,
    const std::vector<ClassSpec>& specs, const std::vector<Metric>& metrics,
    const EvaluatePairOptions& options = {});

}  // namespace mist::metrics

#endif
