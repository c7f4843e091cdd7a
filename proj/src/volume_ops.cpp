#include "mist/volume_ops.hpp"

#include <algorithm>
#include <cmath>

#include "mist/log.hpp"

namespace mist {

namespace {

// Positive direction letters per world axis (RAI frame) and their opposites.
constexpr char kPositive[3] = {'R', 'A', 'I'};
constexpr char kNegative[3] = {'L', 'P', 'S'};

int world_axis_of(char letter, bool& positive) {
  for (int a = 0; a < 3; ++a) {
    if (letter == kPositive[a]) {
      positive = true;
      return a;
    }
    if (letter == kNegative[a]) {
      positive = false;
      return a;
    }
  }
  throw Error(ErrorCode::InvalidArgument,
              std::string("invalid orientation letter '") + letter + "'");
}

}  // namespace

OrientationCode OrientationCode::from_string(const std::string& s) {
  if (s.size() != 3)
    throw Error(ErrorCode::InvalidArgument,
                "orientation code must be 3 letters, got '" + s + "'");
  OrientationCode out;
  bool seen[3] = {false, false, false};
  for (int i = 0; i < 3; ++i) {
    bool positive = false;
    const int axis = world_axis_of(s[static_cast<std::size_t>(i)], positive);
    if (seen[axis])
      throw Error(ErrorCode::InvalidArgument,
                  "orientation code repeats an anatomical axis: '" + s + "'");
    seen[axis] = true;
    out.code[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)];
  }
  return out;
}

OrientationCode orientation_of(const Mat3& direction) {
  if (!direction.orthonormal())
    throw Error(ErrorCode::DegenerateDirection,
                "direction matrix is not orthonormal");
  OrientationCode out;
  bool taken[3] = {false, false, false};
  for (int axis = 0; axis < 3; ++axis) {
    const Vec3& c = direction.col[static_cast<std::size_t>(axis)];
    // Dominant world axis by max-abs component; ties break toward x,y,z.
    int best = 0;
    for (int w = 1; w < 3; ++w) {
      if (std::abs(c[static_cast<std::size_t>(w)]) >
          std::abs(c[static_cast<std::size_t>(best)]))
        best = w;
    }
    if (taken[best])
      throw Error(ErrorCode::DegenerateDirection,
                  "two voxel axes map to the same anatomical axis");
    taken[best] = true;
    out.code[static_cast<std::size_t>(axis)] =
        c[static_cast<std::size_t>(best)] >= 0.0 ? kPositive[best]
                                                 : kNegative[best];
  }
  return out;
}

Volume reorient(const Volume& v, const OrientationCode& target) {
  const OrientationCode current = orientation_of(v.direction());

  // For each output axis, find the source axis whose dominant world axis
  // matches the target letter, and whether its sign must flip.
  int src_axis[3];
  bool flip[3];
  for (int t = 0; t < 3; ++t) {
    bool want_positive = false;
    const int want_world =
        world_axis_of(target.code[static_cast<std::size_t>(t)], want_positive);
    int found = -1;
    for (int s = 0; s < 3; ++s) {
      bool has_positive = false;
      const int has_world = world_axis_of(
          current.code[static_cast<std::size_t>(s)], has_positive);
      if (has_world == want_world) {
        found = s;
        flip[t] = (has_positive != want_positive);
        break;
      }
    }
    if (found < 0)
      throw Error(ErrorCode::DegenerateDirection,
                  "cannot map orientation " + current.str() + " onto " +
                      target.str());
    src_axis[t] = found;
  }

  if (src_axis[0] == 0 && src_axis[1] == 1 && src_axis[2] == 2 && !flip[0] &&
      !flip[1] && !flip[2]) {
    return v;
  }

  const Index3 in_shape = v.shape();
  Index3 out_shape;
  Vec3 out_spacing;
  Mat3 out_dir;
  for (int t = 0; t < 3; ++t) {
    const int s = src_axis[t];
    out_shape[static_cast<std::size_t>(t)] =
        in_shape[static_cast<std::size_t>(s)];
    out_spacing[static_cast<std::size_t>(t)] =
        v.spacing()[static_cast<std::size_t>(s)];
    for (int row = 0; row < 3; ++row) {
      out_dir.col[static_cast<std::size_t>(t)][static_cast<std::size_t>(row)] =
          (flip[t] ? -1.0 : 1.0) *
          v.direction().col[static_cast<std::size_t>(s)]
                           [static_cast<std::size_t>(row)];
    }
  }

  // The flipped axes' zero voxel lands where the old last voxel was.
  Vec3 out_origin = v.origin();
  for (int t = 0; t < 3; ++t) {
    if (!flip[t]) continue;
    const int s = src_axis[t];
    const double shift = static_cast<double>(
                             in_shape[static_cast<std::size_t>(s)] - 1) *
                         v.spacing()[static_cast<std::size_t>(s)];
    for (int row = 0; row < 3; ++row) {
      out_origin[static_cast<std::size_t>(row)] +=
          v.direction().col[static_cast<std::size_t>(s)]
                           [static_cast<std::size_t>(row)] *
          shift;
    }
  }

  Volume out(out_shape, v.channels(), v.kind());
  out.set_spacing(out_spacing);
  out.set_origin(out_origin);
  out.set_direction(out_dir);

  for (std::int64_t c = 0; c < v.channels(); ++c) {
    for (std::int64_t k = 0; k < out_shape[2]; ++k) {
      for (std::int64_t j = 0; j < out_shape[1]; ++j) {
        for (std::int64_t i = 0; i < out_shape[0]; ++i) {
          const std::int64_t out_idx[3] = {i, j, k};
          std::int64_t in_idx[3];
          for (int t = 0; t < 3; ++t) {
            const int s = src_axis[t];
            in_idx[s] = flip[t] ? in_shape[static_cast<std::size_t>(s)] - 1 -
                                      out_idx[t]
                                : out_idx[t];
          }
          out.at(c, i, j, k) = v.at(c, in_idx[0], in_idx[1], in_idx[2]);
        }
      }
    }
  }
  return out;
}

BoundingBox tight_bbox(const Volume& mask) {
  if (mask.kind() != VoxelKind::labels)
    throw Error(ErrorCode::InvalidArgument, "tight_bbox expects a label mask");
  const Index3 shape = mask.shape();
  Index3 lo = shape;
  Index3 hi{0, 0, 0};
  bool any = false;
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        if (mask.at(0, i, j, k) == 0.0f) continue;
        any = true;
        lo[0] = std::min(lo[0], i);
        lo[1] = std::min(lo[1], j);
        lo[2] = std::min(lo[2], k);
        hi[0] = std::max(hi[0], i + 1);
        hi[1] = std::max(hi[1], j + 1);
        hi[2] = std::max(hi[2], k + 1);
      }
    }
  }
  if (!any) {
    log::warn("bbox", "", "mask has no foreground voxels; using full volume");
    return BoundingBox{{0, 0, 0}, shape};
  }
  return BoundingBox{lo, hi};
}

Volume crop(const Volume& v, const BoundingBox& box) {
  const Index3 shape = v.shape();
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    if (box.lo[ia] < 0 || box.hi[ia] > shape[ia] || box.lo[ia] >= box.hi[ia])
      throw Error(ErrorCode::BoxOutOfRange,
                  "crop box does not fit inside the volume");
  }
  const Index3 ext = box.extent();
  Volume out(ext, v.channels(), v.kind());
  out.set_spacing(v.spacing());
  out.set_direction(v.direction());
  out.set_origin(v.position(static_cast<double>(box.lo[0]),
                            static_cast<double>(box.lo[1]),
                            static_cast<double>(box.lo[2])));
  for (std::int64_t c = 0; c < v.channels(); ++c) {
    for (std::int64_t k = 0; k < ext[2]; ++k) {
      for (std::int64_t j = 0; j < ext[1]; ++j) {
        for (std::int64_t i = 0; i < ext[0]; ++i) {
          out.at(c, i, j, k) =
              v.at(c, box.lo[0] + i, box.lo[1] + j, box.lo[2] + k);
        }
      }
    }
  }
  return out;
}

Volume pad_to(const Volume& v, const Index3& min_shape, float fill) {
  const Index3 shape = v.shape();
  Index3 pad_lo{0, 0, 0};
  Index3 out_shape = shape;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    if (min_shape[ia] < 1)
      throw Error(ErrorCode::InvalidArgument, "min_shape must be >= 1");
    const std::int64_t total = std::max<std::int64_t>(
        0, min_shape[ia] - shape[ia]);
    pad_lo[ia] = total / 2;
    out_shape[ia] = std::max(shape[ia], min_shape[ia]);
  }
  if (out_shape == shape) return v;

  Volume out(out_shape, v.channels(), v.kind());
  out.set_spacing(v.spacing());
  out.set_direction(v.direction());
  out.set_origin(v.position(-static_cast<double>(pad_lo[0]),
                            -static_cast<double>(pad_lo[1]),
                            -static_cast<double>(pad_lo[2])));
  std::fill(out.data().begin(), out.data().end(), fill);
  for (std::int64_t c = 0; c < v.channels(); ++c) {
    for (std::int64_t k = 0; k < shape[2]; ++k) {
      for (std::int64_t j = 0; j < shape[1]; ++j) {
        for (std::int64_t i = 0; i < shape[0]; ++i) {
          out.at(c, pad_lo[0] + i, pad_lo[1] + j, pad_lo[2] + k) =
              v.at(c, i, j, k);
        }
      }
    }
  }
  return out;
}

Volume flip_axis(const Volume& v, int axis) {
  if (axis < 0 || axis > 2)
    throw Error(ErrorCode::InvalidArgument, "flip axis must be 0..2");
  const Index3 shape = v.shape();
  Volume out(shape, v.channels(), v.kind());
  out.copy_geometry_from(v);
  for (std::int64_t c = 0; c < v.channels(); ++c) {
    for (std::int64_t k = 0; k < shape[2]; ++k) {
      for (std::int64_t j = 0; j < shape[1]; ++j) {
        for (std::int64_t i = 0; i < shape[0]; ++i) {
          std::int64_t src[3] = {i, j, k};
          src[axis] = shape[static_cast<std::size_t>(axis)] - 1 - src[axis];
          out.at(c, i, j, k) = v.at(c, src[0], src[1], src[2]);
        }
      }
    }
  }
  return out;
}

Volume stack_channels(const std::vector<Volume>& channels) {
  if (channels.empty())
    throw Error(ErrorCode::EmptyList, "no channels to stack");
  const Volume& first = channels.front();
  for (const Volume& ch : channels) {
    if (ch.channels() != 1)
      throw Error(ErrorCode::InvalidArgument,
                  "stack_channels expects single-channel inputs");
    if (ch.shape() != first.shape())
      throw Error(ErrorCode::ShapeMismatch,
                  "channel shapes disagree while stacking");
  }
  Volume out(first.shape(), static_cast<std::int64_t>(channels.size()),
             first.kind());
  out.copy_geometry_from(first);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const float* src = channels[c].channel_data(0);
    std::copy(src, src + first.voxels_per_channel(),
              out.channel_data(static_cast<std::int64_t>(c)));
  }
  return out;
}

}  // namespace mist
