#ifndef MIST_TESTS_ORACLES_HPP
#define MIST_TESTS_ORACLES_HPP

#include <vector>

#include "mist/volume.hpp"

namespace mist::testing::oracle {

// Independent brute-force references. These deliberately avoid the library's
// distance-transform and histogram code paths.

// All-pairs directed surface distances: boundary = object voxels 6-adjacent
// to background or on the volume edge.
struct SurfacePair {
  std::vector<double> pred_to_truth;
  std::vector<double> truth_to_pred;
};
SurfacePair surface_distances(const Volume& pred, const Volume& truth,
                              const Vec3& spacing);

// Signed distance map for one label by exhaustive nearest search.
std::vector<double> dtm_for_label(const Volume& mask, std::int64_t label);

// Exhaustive between-class-variance scan over bin-center candidates.
double otsu_threshold(const std::vector<std::int64_t>& histogram,
                      double range_lo, double range_hi);

// Linear-interpolation percentile, written independently.
double percentile(std::vector<double> values, double p);

BoundingBox tight_bbox(const Volume& mask);

// Component sizes via union-find (the library uses BFS).
std::vector<std::int64_t> component_sizes_sorted(const Volume& binary,
                                                 int connectivity);

}  // namespace mist::testing::oracle

#endif
