#ifndef MIST_VOLUME_OPS_HPP
#define MIST_VOLUME_OPS_HPP

#include <string>

#include "mist/volume.hpp"

namespace mist {

// Three letters, one per voxel axis, naming the dominant anatomical direction
// of increasing index: {R,L} x {A,P} x {I,S}. Identity direction is "RAI".
struct OrientationCode {
  std::array<char, 3> code{'R', 'A', 'I'};

  static OrientationCode rai() { return OrientationCode{}; }
  static OrientationCode from_string(const std::string& s);
  std::string str() const { return std::string(code.begin(), code.end()); }
  bool operator==(const OrientationCode& o) const { return code == o.code; }
};

OrientationCode orientation_of(const Mat3& direction);

// Permutes/flips axes so orientation_of(result.direction()) == target.
// Pure index shuffle: voxel values and physical positions are unchanged.
Volume reorient(const Volume& v, const OrientationCode& target);

// Smallest box containing all nonzero voxels of a {0,1} mask; a mask with no
// foreground yields the full-volume box with a warning.
BoundingBox tight_bbox(const Volume& mask);

Volume crop(const Volume& v, const BoundingBox& box);

// Pads symmetrically up to min_shape (extra voxel goes to the high side).
Volume pad_to(const Volume& v, const Index3& min_shape, float fill);

// Reverses voxel order along one axis without touching geometry. Used by
// test-time augmentation, where the flip is undone after prediction.
Volume flip_axis(const Volume& v, int axis);

// Stacks single-channel volumes that share a grid into one multi-channel
// volume (geometry taken from the first).
Volume stack_channels(const std::vector<Volume>& channels);

}  // namespace mist

#endif
