#ifndef MIST_VOLUME_HPP
#define MIST_VOLUME_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mist/errors.hpp"

namespace mist {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::int64_t, 3>;

// Direction cosines, stored as three columns: column j is the physical unit
// vector along which voxel index j increases. The physical frame is RAI
// (+x Right, +y Anterior, +z Inferior); see README for the letter convention.
struct Mat3 {
  std::array<Vec3, 3> col{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static Mat3 identity() { return Mat3{}; }

  double determinant() const {
    const auto& a = col[0];
    const auto& b = col[1];
    const auto& c = col[2];
    return a[0] * (b[1] * c[2] - b[2] * c[1]) -
           b[0] * (a[1] * c[2] - a[2] * c[1]) +
           c[0] * (a[1] * b[2] - a[2] * b[1]);
  }

  bool orthonormal(double tol = 1e-6) const {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += col[i][k] * col[j][k];
        const double want = (i == j) ? 1.0 : 0.0;
        if (std::abs(dot - want) > tol) return false;
      }
    }
    return true;
  }

  bool operator==(const Mat3& other) const { return col == other.col; }
};

enum class VoxelKind { continuous, labels };

struct BoundingBox {
  Index3 lo{0, 0, 0};  // inclusive
  Index3 hi{0, 0, 0};  // exclusive

  Index3 extent() const {
    return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
  }
  std::int64_t volume() const {
    const Index3 e = extent();
    return e[0] * e[1] * e[2];
  }
  bool operator==(const BoundingBox& o) const {
    return lo == o.lo && hi == o.hi;
  }
};

// A 3D (optionally multi-channel) scalar grid with physical geometry.
// Data is contiguous and channel-major; within a channel the x index is
// fastest, matching NIfTI voxel order.
class Volume {
 public:
  Volume() = default;

  Volume(Index3 shape, std::int64_t channels, VoxelKind kind)
      : shape_(shape), channels_(channels), kind_(kind) {
    if (shape[0] < 1 || shape[1] < 1 || shape[2] < 1 || channels < 1)
      throw Error(ErrorCode::InvalidArgument, "volume shape must be positive");
    data_.assign(static_cast<std::size_t>(channels * voxels_per_channel()),
                 0.0f);
  }

  const Index3& shape() const { return shape_; }
  std::int64_t channels() const { return channels_; }
  std::int64_t voxels_per_channel() const {
    return shape_[0] * shape_[1] * shape_[2];
  }
  std::int64_t size() const { return channels_ * voxels_per_channel(); }

  VoxelKind kind() const { return kind_; }
  void set_kind(VoxelKind kind) { kind_ = kind; }

  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  const Mat3& direction() const { return direction_; }

  void set_spacing(const Vec3& s) {
    if (s[0] <= 0 || s[1] <= 0 || s[2] <= 0)
      throw Error(ErrorCode::NonPositiveSpacing, "spacing must be positive");
    spacing_ = s;
  }
  void set_origin(const Vec3& o) { origin_ = o; }
  void set_direction(const Mat3& d) { direction_ = d; }

  void copy_geometry_from(const Volume& other) {
    spacing_ = other.spacing_;
    origin_ = other.origin_;
    direction_ = other.direction_;
  }

  std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i + shape_[0] * (j + shape_[1] * k);
  }

  float& at(std::int64_t c, std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>(c * voxels_per_channel() +
                                          index(i, j, k))];
  }
  float at(std::int64_t c, std::int64_t i, std::int64_t j,
           std::int64_t k) const {
    return data_[static_cast<std::size_t>(c * voxels_per_channel() +
                                          index(i, j, k))];
  }

  float* channel_data(std::int64_t c) {
    return data_.data() + c * voxels_per_channel();
  }
  const float* channel_data(std::int64_t c) const {
    return data_.data() + c * voxels_per_channel();
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  // Physical position of a voxel center: origin + D * diag(spacing) * index.
  Vec3 position(double i, double j, double k) const {
    Vec3 p = origin_;
    const double idx[3] = {i, j, k};
    for (int axis = 0; axis < 3; ++axis) {
      for (int row = 0; row < 3; ++row) {
        p[row] += direction_.col[axis][row] * spacing_[axis] * idx[axis];
      }
    }
    return p;
  }

  double physical_diagonal() const {
    double acc = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double extent = static_cast<double>(shape_[a]) * spacing_[a];
      acc += extent * extent;
    }
    return std::sqrt(acc);
  }

  // Extracts channel c as a single-channel volume with the same geometry.
  Volume channel(std::int64_t c) const {
    Volume out(shape_, 1, kind_);
    out.copy_geometry_from(*this);
    const float* src = channel_data(c);
    std::copy(src, src + voxels_per_channel(), out.data().begin());
    return out;
  }

  // Enforces the labels-kind invariant: every value is a nonnegative integer.
  void require_labels() const {
    for (float v : data_) {
      if (!(v >= 0.0f) || v != std::floor(v))
        throw Error(ErrorCode::UnknownLabel,
                    "label volume contains non-integer or negative value " +
                        std::to_string(v));
    }
  }

 private:
  Index3 shape_{1, 1, 1};
  std::int64_t channels_ = 1;
  Vec3 spacing_{1.0, 1.0, 1.0};
  Vec3 origin_{0.0, 0.0, 0.0};
  Mat3 direction_ = Mat3::identity();
  VoxelKind kind_ = VoxelKind::continuous;
  std::vector<float> data_;
};

}  // namespace mist

#endif
