#ifndef MIST_DISTANCE_HPP
#define MIST_DISTANCE_HPP

#include <vector>

#include "mist/volume.hpp"

namespace mist::preprocess {

// Exact Euclidean feature transform (Felzenszwalb-style per-axis parabola
// envelopes, spacing-aware). For every voxel, the linear index of the
// nearest site, or -1 when there are no sites. Distances derived from the
// returned site via integer offsets match a brute-force scan bitwise up to
// ties between equidistant sites.
std::vector<std::int64_t> nearest_site_transform(const Index3& shape,
                                                 const Vec3& spacing,
                                                 const std::vector<bool>& sites);

// Distance in mm between two voxels given by linear indices.
double voxel_distance_mm(const Index3& shape, const Vec3& spacing,
                         std::int64_t a, std::int64_t b);

// Signed distance maps, one channel per declared label, in list order:
// positive outside the object, zero on boundary voxels (object voxels
// 6-adjacent to a non-object voxel), negative strictly inside. Distances in
// physical mm. A label absent from the mask yields the physical diagonal
// everywhere. With normalize, the positive part is divided by its maximum
// and the negative part by its absolute minimum, per channel.
Volume compute_dtm(const Volume& mask, const std::vector<std::int64_t>& labels,
                   bool normalize);

}  // namespace mist::preprocess

#endif
