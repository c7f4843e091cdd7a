#include "mist/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mist::preprocess {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One lower-envelope pass along an axis: g holds squared distances
// accumulated over previously processed axes and site the winning site.
// Positions are physical (index * spacing).
void envelope_pass(std::vector<double>& g, std::vector<std::int64_t>& site,
                   double h) {
  const std::int64_t n = static_cast<std::int64_t>(g.size());
  static thread_local std::vector<std::int64_t> v;       // parabola apex index
  static thread_local std::vector<double> z;              // envelope breakpoints
  static thread_local std::vector<double> g_out;
  static thread_local std::vector<std::int64_t> site_out;
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n + 1), 0.0);
  g_out.assign(static_cast<std::size_t>(n), kInf);
  site_out.assign(static_cast<std::size_t>(n), -1);

  int k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (g[static_cast<std::size_t>(q)] == kInf) continue;
    const double xq = static_cast<double>(q) * h;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    for (;;) {
      const std::int64_t p = v[static_cast<std::size_t>(k)];
      const double xp = static_cast<double>(p) * h;
      s = ((g[static_cast<std::size_t>(q)] + xq * xq) -
           (g[static_cast<std::size_t>(p)] + xp * xp)) /
          (2.0 * xq - 2.0 * xp);
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        if (k < 0) break;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -kInf : s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }

  if (k < 0) {
    // No finite parabola on this line; leave everything infinite.
    g.assign(static_cast<std::size_t>(n), kInf);
    std::fill(site.begin(), site.end(), std::int64_t{-1});
    return;
  }

  int j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    const double xq = static_cast<double>(q) * h;
    while (z[static_cast<std::size_t>(j + 1)] < xq) ++j;
    const std::int64_t p = v[static_cast<std::size_t>(j)];
    const double xp = static_cast<double>(p) * h;
    g_out[static_cast<std::size_t>(q)] =
        (xq - xp) * (xq - xp) + g[static_cast<std::size_t>(p)];
    site_out[static_cast<std::size_t>(q)] = site[static_cast<std::size_t>(p)];
  }
  g = g_out;
  site = site_out;
}

}  // namespace

std::vector<std::int64_t> nearest_site_transform(
    const Index3& shape, const Vec3& spacing,
    const std::vector<bool>& sites) {
  const std::int64_t nvox = shape[0] * shape[1] * shape[2];
  if (static_cast<std::int64_t>(sites.size()) != nvox)
    throw Error(ErrorCode::ShapeMismatch, "site mask size mismatch");

  std::vector<double> g(static_cast<std::size_t>(nvox), kInf);
  std::vector<std::int64_t> site(static_cast<std::size_t>(nvox), -1);
  for (std::int64_t i = 0; i < nvox; ++i) {
    if (sites[static_cast<std::size_t>(i)]) {
      g[static_cast<std::size_t>(i)] = 0.0;
      site[static_cast<std::size_t>(i)] = i;
    }
  }

  const std::int64_t strides[3] = {1, shape[0], shape[0] * shape[1]};
  std::vector<double> line_g;
  std::vector<std::int64_t> line_site;
  for (int axis = 0; axis < 3; ++axis) {
    const auto ia = static_cast<std::size_t>(axis);
    const std::int64_t n = shape[ia];
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    line_g.resize(static_cast<std::size_t>(n));
    line_site.resize(static_cast<std::size_t>(n));
    for (std::int64_t p2 = 0; p2 < shape[static_cast<std::size_t>(a2)]; ++p2) {
      for (std::int64_t p1 = 0; p1 < shape[static_cast<std::size_t>(a1)];
           ++p1) {
        const std::int64_t base = p1 * strides[a1] + p2 * strides[a2];
        for (std::int64_t i = 0; i < n; ++i) {
          line_g[static_cast<std::size_t>(i)] =
              g[static_cast<std::size_t>(base + i * strides[axis])];
          line_site[static_cast<std::size_t>(i)] =
              site[static_cast<std::size_t>(base + i * strides[axis])];
        }
        envelope_pass(line_g, line_site, spacing[ia]);
        for (std::int64_t i = 0; i < n; ++i) {
          g[static_cast<std::size_t>(base + i * strides[axis])] =
              line_g[static_cast<std::size_t>(i)];
          site[static_cast<std::size_t>(base + i * strides[axis])] =
              line_site[static_cast<std::size_t>(i)];
        }
      }
    }
  }
  return site;
}

double voxel_distance_mm(const Index3& shape, const Vec3& spacing,
                         std::int64_t a, std::int64_t b) {
  const std::int64_t plane = shape[0] * shape[1];
  const std::int64_t ak = a / plane, bk = b / plane;
  const std::int64_t aj = (a % plane) / shape[0], bj = (b % plane) / shape[0];
  const std::int64_t ai = a % shape[0], bi = b % shape[0];
  const double dx = static_cast<double>(ai - bi) * spacing[0];
  const double dy = static_cast<double>(aj - bj) * spacing[1];
  const double dz = static_cast<double>(ak - bk) * spacing[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Volume compute_dtm(const Volume& mask, const std::vector<std::int64_t>& labels,
                   bool normalize) {
  if (mask.kind() != VoxelKind::labels || mask.channels() != 1)
    throw Error(ErrorCode::InvalidArgument,
                "compute_dtm expects a single-channel label mask");

  const Index3 shape = mask.shape();
  const Vec3 spacing = mask.spacing();
  const std::int64_t nvox = mask.voxels_per_channel();
  const double diagonal = mask.physical_diagonal();

  Volume dtm(shape, static_cast<std::int64_t>(labels.size()),
             VoxelKind::continuous);
  dtm.copy_geometry_from(mask);

  std::vector<bool> inside(static_cast<std::size_t>(nvox));
  std::vector<bool> outside(static_cast<std::size_t>(nvox));
  for (std::size_t li = 0; li < labels.size(); ++li) {
    const float label = static_cast<float>(labels[li]);
    std::int64_t object_count = 0;
    for (std::int64_t v = 0; v < nvox; ++v) {
      const bool is_object = mask.data()[static_cast<std::size_t>(v)] == label;
      inside[static_cast<std::size_t>(v)] = is_object;
      outside[static_cast<std::size_t>(v)] = !is_object;
      if (is_object) ++object_count;
    }
    float* out = dtm.channel_data(static_cast<std::int64_t>(li));

    if (object_count == 0) {
      std::fill(out, out + nvox, static_cast<float>(diagonal));
      continue;
    }
    if (object_count == nvox) {
      // No boundary exists; mirror the absent-label convention inward.
      std::fill(out, out + nvox, static_cast<float>(-diagonal));
      continue;
    }

    const std::vector<std::int64_t> nearest_object =
        nearest_site_transform(shape, spacing, inside);
    const std::vector<std::int64_t> nearest_background =
        nearest_site_transform(shape, spacing, outside);

    for (std::int64_t k = 0; k < shape[2]; ++k) {
      for (std::int64_t j = 0; j < shape[1]; ++j) {
        for (std::int64_t i = 0; i < shape[0]; ++i) {
          const std::int64_t v = mask.index(i, j, k);
          if (!inside[static_cast<std::size_t>(v)]) {
            out[v] = static_cast<float>(voxel_distance_mm(
                shape, spacing, v,
                nearest_object[static_cast<std::size_t>(v)]));
            continue;
          }
          // Boundary: object voxel with a 6-adjacent non-object voxel.
          bool boundary = false;
          const std::int64_t idx[3] = {i, j, k};
          for (int a = 0; a < 3 && !boundary; ++a) {
            for (int step = -1; step <= 1 && !boundary; step += 2) {
              std::int64_t nb[3] = {idx[0], idx[1], idx[2]};
              nb[a] += step;
              if (nb[a] < 0 || nb[a] >= shape[static_cast<std::size_t>(a)])
                continue;
              if (!inside[static_cast<std::size_t>(
                      mask.index(nb[0], nb[1], nb[2]))])
                boundary = true;
            }
          }
          if (boundary) {
            out[v] = 0.0f;
          } else {
            out[v] = static_cast<float>(-voxel_distance_mm(
                shape, spacing, v,
                nearest_background[static_cast<std::size_t>(v)]));
          }
        }
      }
    }
  }

  if (normalize) {
    for (std::int64_t c = 0; c < dtm.channels(); ++c) {
      float* data = dtm.channel_data(c);
      float pos_max = 0.0f;
      float neg_min = 0.0f;
      for (std::int64_t v = 0; v < nvox; ++v) {
        pos_max = std::max(pos_max, data[v]);
        neg_min = std::min(neg_min, data[v]);
      }
      for (std::int64_t v = 0; v < nvox; ++v) {
        if (data[v] > 0.0f && pos_max > 0.0f) data[v] /= pos_max;
        if (data[v] < 0.0f && neg_min < 0.0f) data[v] /= -neg_min;
      }
    }
  }
  return dtm;
}

}  // namespace mist::preprocess
