#include "mist/resample.hpp"

#include <algorithm>
#include <cmath>

#include "mist/volume_ops.hpp"

namespace mist::preprocess {

namespace {

enum class Interp { nearest, linear, cubic };

std::int64_t round_shape(std::int64_t n, double s_in, double s_out) {
  const double exact = static_cast<double>(n) * s_in / s_out;
  return std::max<std::int64_t>(1, std::llround(exact));
}

// Whole-sample mirror for indices outside [0, n-1].
std::int64_t mirror_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

// In-place cubic B-spline prefilter with mirror boundaries (pole sqrt(3)-2).
void bspline_prefilter(std::vector<double>& c) {
  const std::int64_t n = static_cast<std::int64_t>(c.size());
  if (n == 1) return;
  const double z1 = std::sqrt(3.0) - 2.0;
  for (double& v : c) v *= 6.0;

  const std::int64_t horizon = static_cast<std::int64_t>(
      std::ceil(std::log(1e-14) / std::log(std::abs(z1))));
  if (horizon < n) {
    double sum = c[0];
    double zn = z1;
    for (std::int64_t k = 1; k < horizon; ++k) {
      sum += zn * c[static_cast<std::size_t>(k)];
      zn *= z1;
    }
    c[0] = sum;
  } else {
    // Exact whole-sample mirror sum for lines shorter than the horizon.
    double zn = z1;
    const double iz = 1.0 / z1;
    double z2n = std::pow(z1, static_cast<double>(n - 1));
    double sum = c[0] + z2n * c[static_cast<std::size_t>(n - 1)];
    z2n *= z2n * iz;
    for (std::int64_t k = 1; k <= n - 2; ++k) {
      sum += (zn + z2n) * c[static_cast<std::size_t>(k)];
      zn *= z1;
      z2n *= iz;
    }
    c[0] = sum / (1.0 - std::pow(z1, static_cast<double>(2 * n - 2)));
  }
  for (std::int64_t i = 1; i < n; ++i)
    c[static_cast<std::size_t>(i)] += z1 * c[static_cast<std::size_t>(i - 1)];

  c[static_cast<std::size_t>(n - 1)] =
      (z1 / (z1 * z1 - 1.0)) *
      (z1 * c[static_cast<std::size_t>(n - 2)] +
       c[static_cast<std::size_t>(n - 1)]);
  for (std::int64_t i = n - 2; i >= 0; --i)
    c[static_cast<std::size_t>(i)] =
        z1 * (c[static_cast<std::size_t>(i + 1)] -
              c[static_cast<std::size_t>(i)]);
}

struct SampleWeights {
  std::int64_t base;
  std::array<double, 4> w;  // taps at base-1 .. base+2 (cubic) or base..base+1
};

std::vector<SampleWeights> plan_axis(std::int64_t n_in, std::int64_t n_out,
                                     double scale, Interp interp) {
  std::vector<SampleWeights> plan(static_cast<std::size_t>(n_out));
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double u = static_cast<double>(i) * scale;
    SampleWeights& sw = plan[static_cast<std::size_t>(i)];
    if (interp == Interp::nearest) {
      sw.base = std::clamp<std::int64_t>(std::llround(u), 0, n_in - 1);
      sw.w = {1.0, 0.0, 0.0, 0.0};
    } else if (interp == Interp::linear) {
      const double f = std::floor(u);
      sw.base = static_cast<std::int64_t>(f);
      const double t = u - f;
      sw.w = {1.0 - t, t, 0.0, 0.0};
    } else {
      const double f = std::floor(u);
      sw.base = static_cast<std::int64_t>(f);
      const double t = u - f;
      const double omt = 1.0 - t;
      sw.w = {omt * omt * omt / 6.0,
              (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0,
              (4.0 - 6.0 * omt * omt + 3.0 * omt * omt * omt) / 6.0,
              t * t * t / 6.0};
    }
  }
  return plan;
}

// Resamples one axis of a multi-channel volume; the other two axes are
// untouched. Compose per axis: for separable kernels with per-pass
// prefiltering this equals joint tensor-product interpolation.
Volume resample_axis(const Volume& in, int axis, std::int64_t n_out,
                     double s_out, Interp interp) {
  const Index3 in_shape = in.shape();
  const std::int64_t n_in = in_shape[static_cast<std::size_t>(axis)];
  const double s_in = in.spacing()[static_cast<std::size_t>(axis)];

  Index3 out_shape = in_shape;
  out_shape[static_cast<std::size_t>(axis)] = n_out;
  Volume out(out_shape, in.channels(), in.kind());
  Vec3 spacing = in.spacing();
  spacing[static_cast<std::size_t>(axis)] = s_out;
  out.set_spacing(spacing);
  out.set_origin(in.origin());
  out.set_direction(in.direction());

  const double scale = s_out / s_in;
  const std::vector<SampleWeights> plan =
      plan_axis(n_in, n_out, scale, interp);

  const int a1 = (axis + 1) % 3;
  const int a2 = (axis + 2) % 3;
  auto stride_of = [](const Index3& shape, int a) -> std::int64_t {
    if (a == 0) return 1;
    if (a == 1) return shape[0];
    return shape[0] * shape[1];
  };
  const std::int64_t in_stride = stride_of(in_shape, axis);
  const std::int64_t out_stride = stride_of(out_shape, axis);
  const std::int64_t in_s1 = stride_of(in_shape, a1);
  const std::int64_t in_s2 = stride_of(in_shape, a2);
  const std::int64_t out_s1 = stride_of(out_shape, a1);
  const std::int64_t out_s2 = stride_of(out_shape, a2);

  std::vector<double> line(static_cast<std::size_t>(n_in));
  const int taps = interp == Interp::cubic ? 4 : (interp == Interp::linear ? 2 : 1);
  const std::int64_t first_tap = interp == Interp::cubic ? -1 : 0;

  for (std::int64_t c = 0; c < in.channels(); ++c) {
    const float* src = in.channel_data(c);
    float* dst = out.channel_data(c);
    for (std::int64_t p2 = 0; p2 < in_shape[static_cast<std::size_t>(a2)];
         ++p2) {
      for (std::int64_t p1 = 0; p1 < in_shape[static_cast<std::size_t>(a1)];
           ++p1) {
        const std::int64_t in_base = p1 * in_s1 + p2 * in_s2;
        const std::int64_t out_base = p1 * out_s1 + p2 * out_s2;
        for (std::int64_t i = 0; i < n_in; ++i)
          line[static_cast<std::size_t>(i)] = src[in_base + i * in_stride];
        if (interp == Interp::cubic) bspline_prefilter(line);
        for (std::int64_t i = 0; i < n_out; ++i) {
          const SampleWeights& sw = plan[static_cast<std::size_t>(i)];
          double value = 0.0;
          for (int m = 0; m < taps; ++m) {
            const std::int64_t idx =
                interp == Interp::nearest
                    ? sw.base
                    : mirror_index(sw.base + first_tap + m, n_in);
            value += sw.w[static_cast<std::size_t>(m)] *
                     line[static_cast<std::size_t>(idx)];
          }
          dst[out_base + i * out_stride] = static_cast<float>(value);
        }
      }
    }
  }
  return out;
}

int lowest_resolution_axis(const Vec3& spacing) {
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (spacing[static_cast<std::size_t>(a)] >
        spacing[static_cast<std::size_t>(axis)])
      axis = a;
  }
  return axis;
}

bool anisotropic(const Vec3& spacing, double threshold) {
  const double max_sp = *std::max_element(spacing.begin(), spacing.end());
  const double min_sp = *std::min_element(spacing.begin(), spacing.end());
  return max_sp / min_sp > threshold;
}

Volume resample_separable(const Volume& v, const Vec3& target, Interp smooth,
                          double anisotropy_threshold) {
  for (double s : target) {
    if (s <= 0.0)
      throw Error(ErrorCode::NonPositiveSpacing,
                  "target spacing must be positive");
  }

  Volume current = v;
  bool done[3] = {false, false, false};
  if (anisotropic(v.spacing(), anisotropy_threshold)) {
    const int low_res = lowest_resolution_axis(v.spacing());
    const auto a = static_cast<std::size_t>(low_res);
    current = resample_axis(
        current, low_res,
        round_shape(v.shape()[a], v.spacing()[a], target[a]), target[a],
        Interp::nearest);
    done[low_res] = true;
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (done[axis]) continue;
    const auto a = static_cast<std::size_t>(axis);
    current = resample_axis(
        current, axis,
        round_shape(current.shape()[a], current.spacing()[a], target[a]),
        target[a], smooth);
  }
  return current;
}

}  // namespace

Volume resample_image(const Volume& v, const Vec3& target_spacing,
                      double anisotropy_threshold) {
  if (v.kind() != VoxelKind::continuous)
    throw Error(ErrorCode::InvalidArgument,
                "resample_image expects continuous data");
  return resample_separable(v, target_spacing, Interp::cubic,
                            anisotropy_threshold);
}

Volume resample_mask(const Volume& m, const std::vector<std::int64_t>& labels,
                     const Vec3& target_spacing, double anisotropy_threshold) {
  if (m.kind() != VoxelKind::labels)
    throw Error(ErrorCode::InvalidArgument, "resample_mask expects labels");
  if (m.channels() != 1)
    throw Error(ErrorCode::InvalidArgument, "mask must be single channel");

  // One indicator channel per declared label.
  const std::int64_t n_labels = static_cast<std::int64_t>(labels.size());
  Volume onehot(m.shape(), n_labels, VoxelKind::continuous);
  onehot.copy_geometry_from(m);
  for (std::int64_t v = 0; v < m.voxels_per_channel(); ++v) {
    const float value = m.data()[static_cast<std::size_t>(v)];
    std::int64_t channel = -1;
    for (std::int64_t l = 0; l < n_labels; ++l) {
      if (value == static_cast<float>(labels[static_cast<std::size_t>(l)])) {
        channel = l;
        break;
      }
    }
    if (channel < 0)
      throw Error(ErrorCode::UnknownLabel,
                  "mask value " + std::to_string(value) +
                      " is not a declared label");
    onehot.channel_data(channel)[v] = 1.0f;
  }

  const Volume resampled = resample_separable(
      onehot, target_spacing, Interp::linear, anisotropy_threshold);

  Volume out(resampled.shape(), 1, VoxelKind::labels);
  out.copy_geometry_from(resampled);
  for (std::int64_t v = 0; v < resampled.voxels_per_channel(); ++v) {
    std::int64_t best = 0;
    float best_value = resampled.channel_data(0)[v];
    for (std::int64_t l = 1; l < n_labels; ++l) {
      const float value = resampled.channel_data(l)[v];
      if (value > best_value) {  // ties keep the smaller label
        best_value = value;
        best = l;
      }
    }
    out.data()[static_cast<std::size_t>(v)] =
        static_cast<float>(labels[static_cast<std::size_t>(best)]);
  }
  return out;
}

Volume resample_labels_nearest(const Volume& m, const Index3& out_shape,
                               const Vec3& out_spacing) {
  if (m.channels() != 1)
    throw Error(ErrorCode::InvalidArgument, "labels must be single channel");
  Volume out(out_shape, 1, VoxelKind::labels);
  out.set_spacing(out_spacing);
  out.set_origin(m.origin());
  out.set_direction(m.direction());

  std::array<std::vector<std::int64_t>, 3> lookup;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    lookup[ia].resize(static_cast<std::size_t>(out_shape[ia]));
    const double scale = out_spacing[ia] / m.spacing()[ia];
    for (std::int64_t i = 0; i < out_shape[ia]; ++i)
      lookup[ia][static_cast<std::size_t>(i)] = std::clamp<std::int64_t>(
          std::llround(static_cast<double>(i) * scale), 0, m.shape()[ia] - 1);
  }
  for (std::int64_t k = 0; k < out_shape[2]; ++k) {
    for (std::int64_t j = 0; j < out_shape[1]; ++j) {
      for (std::int64_t i = 0; i < out_shape[0]; ++i) {
        out.at(0, i, j, k) =
            m.at(0, lookup[0][static_cast<std::size_t>(i)],
                 lookup[1][static_cast<std::size_t>(j)],
                 lookup[2][static_cast<std::size_t>(k)]);
      }
    }
  }
  return out;
}

}  // namespace mist::preprocess
