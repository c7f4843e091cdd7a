#ifndef MIST_RESAMPLE_HPP
#define MIST_RESAMPLE_HPP

#include <vector>

#include "mist/volume.hpp"

namespace mist::preprocess {

// Cubic B-spline resampling (with prefilter) to the target spacing. Output
// voxel centers align with the input at index 0; output shape per axis is
// round(n * s_in / s_out), at least 1. If the input spacing ratio exceeds
// the anisotropy threshold, the lowest-resolution axis is resampled first
// with nearest neighbor, then the remaining two axes with cubic splines.
Volume resample_image(const Volume& v, const Vec3& target_spacing,
                      double anisotropy_threshold = 3.0);

// Mask resampling: one-hot per label, linear interpolation per channel
// (nearest neighbor on the low-resolution axis first when anisotropic),
// then argmax with ties toward the smaller label.
Volume resample_mask(const Volume& m, const std::vector<std::int64_t>& labels,
                     const Vec3& target_spacing,
                     double anisotropy_threshold = 3.0);

// Nearest-neighbor lookup of a label map onto an explicit output grid.
// Used to restore predictions to their pre-resampling grid.
Volume resample_labels_nearest(const Volume& m, const Index3& out_shape,
                               const Vec3& out_spacing);

}  // namespace mist::preprocess

#endif
