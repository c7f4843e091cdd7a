#include "mist/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mist/distance.hpp"
#include "mist/stats.hpp"

namespace mist::metrics {

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::dice: return "dice";
    case Metric::hd95: return "hd95";
    case Metric::asd: return "asd";
    case Metric::surface_dice: return "surf_dice";
  }
  return "?";
}

Metric metric_from_name(const std::string& name) {
  if (name == "dice") return Metric::dice;
  if (name == "hd95") return Metric::hd95;
  if (name == "asd") return Metric::asd;
  if (name == "surf_dice" || name == "surface_dice")
    return Metric::surface_dice;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
}

int metric_sign(Metric m) {
  return (m == Metric::dice || m == Metric::surface_dice) ? 1 : -1;
}

Volume compose_class(const Volume& mask, const ClassSpec& spec) {
  if (mask.kind() != VoxelKind::labels)
    throw Error(ErrorCode::InvalidArgument, "compose_class expects labels");
  Volume out(mask.shape(), 1, VoxelKind::labels);
  out.copy_geometry_from(mask);
  for (std::size_t i = 0; i < mask.data().size(); ++i) {
    const float v = mask.data()[i];
    for (std::int64_t label : spec.labels) {
      if (v == static_cast<float>(label)) {
        out.data()[i] = 1.0f;
        break;
      }
    }
  }
  return out;
}

double dice(const Volume& pred, const Volume& truth) {
  if (pred.shape() != truth.shape())
    throw Error(ErrorCode::ShapeMismatch, "dice inputs have different shapes");
  std::int64_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const bool in_p = pred.data()[i] != 0.0f;
    const bool in_t = truth.data()[i] != 0.0f;
    p += in_p;
    t += in_t;
    both += in_p && in_t;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

namespace {

// Object voxels 6-adjacent to background, or on the volume edge.
std::vector<bool> boundary_voxels(const Volume& mask) {
  const Index3 shape = mask.shape();
  std::vector<bool> out(mask.data().size(), false);
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        const std::int64_t v = mask.index(i, j, k);
        if (mask.data()[static_cast<std::size_t>(v)] == 0.0f) continue;
        bool boundary = false;
        const std::int64_t idx[3] = {i, j, k};
        for (int a = 0; a < 3 && !boundary; ++a) {
          for (int step = -1; step <= 1 && !boundary; step += 2) {
            std::int64_t nb[3] = {idx[0], idx[1], idx[2]};
            nb[a] += step;
            if (nb[a] < 0 || nb[a] >= shape[static_cast<std::size_t>(a)]) {
              boundary = true;  // volume edge counts
              break;
            }
            if (mask.data()[static_cast<std::size_t>(
                    mask.index(nb[0], nb[1], nb[2]))] == 0.0f)
              boundary = true;
          }
        }
        out[static_cast<std::size_t>(v)] = boundary;
      }
    }
  }
  return out;
}

std::vector<double> directed_distances(const Index3& shape, const Vec3& spacing,
                                       const std::vector<bool>& from,
                                       const std::vector<bool>& to) {
  const std::vector<std::int64_t> nearest =
      preprocess::nearest_site_transform(shape, spacing, to);
  std::vector<double> out;
  for (std::size_t v = 0; v < from.size(); ++v) {
    if (!from[v]) continue;
    out.push_back(preprocess::voxel_distance_mm(
        shape, spacing, static_cast<std::int64_t>(v), nearest[v]));
  }
  return out;
}

}  // namespace

SurfaceDistanceSet surface_distances(const Volume& pred, const Volume& truth,
                                     const Vec3& spacing) {
  if (pred.shape() != truth.shape())
    throw Error(ErrorCode::ShapeMismatch,
                "surface_distances inputs have different shapes");
  const std::vector<bool> pred_boundary = boundary_voxels(pred);
  const std::vector<bool> truth_boundary = boundary_voxels(truth);
  const bool pred_empty =
      std::none_of(pred_boundary.begin(), pred_boundary.end(),
                   [](bool b) { return b; });
  const bool truth_empty =
      std::none_of(truth_boundary.begin(), truth_boundary.end(),
                   [](bool b) { return b; });
  if (pred_empty)
    throw Error(ErrorCode::EmptySurface, "prediction has no surface");
  if (truth_empty)
    throw Error(ErrorCode::EmptySurface, "truth has no surface");

  SurfaceDistanceSet sd;
  sd.spacing = spacing;
  sd.d_pred_to_truth =
      directed_distances(pred.shape(), spacing, pred_boundary, truth_boundary);
  sd.d_truth_to_pred =
      directed_distances(pred.shape(), spacing, truth_boundary, pred_boundary);
  return sd;
}

namespace {

std::vector<double> union_multiset(const SurfaceDistanceSet& sd) {
  std::vector<double> all = sd.d_pred_to_truth;
  all.insert(all.end(), sd.d_truth_to_pred.begin(), sd.d_truth_to_pred.end());
  return all;
}

}  // namespace

double hd95(const SurfaceDistanceSet& sd) {
  return stats::percentile(union_multiset(sd), 95.0);
}

double asd(const SurfaceDistanceSet& sd) {
  return stats::mean(union_multiset(sd));
}

double surface_dice(const SurfaceDistanceSet& sd, double tolerance_mm) {
  std::int64_t within = 0;
  for (double d : sd.d_pred_to_truth) within += d <= tolerance_mm;
  for (double d : sd.d_truth_to_pred) within += d <= tolerance_mm;
  const std::size_t total =
      sd.d_pred_to_truth.size() + sd.d_truth_to_pred.size();
  return static_cast<double>(within) / static_cast<double>(total);
}

std::map<std::pair<std::string, Metric>, double> evaluate_pair(
    const Volume& pred_mask, const Volume& truth_mask,
    const std::vector<ClassSpec>& specs, const std::vector<Metric>& metrics,
    const EvaluatePairOptions& options) {
  if (pred_mask.shape() != truth_mask.shape())
    throw Error(ErrorCode::GeometryMismatch,
                "prediction and truth shapes differ");
  const double tol = options.geometry_tolerance;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    if (std::abs(pred_mask.spacing()[ia] - truth_mask.spacing()[ia]) > tol ||
        std::abs(pred_mask.origin()[ia] - truth_mask.origin()[ia]) > tol)
      throw Error(ErrorCode::GeometryMismatch,
                  "prediction and truth geometry differ");
    for (int r = 0; r < 3; ++r) {
      if (std::abs(pred_mask.direction().col[ia][static_cast<std::size_t>(r)] -
                   truth_mask.direction()
                       .col[ia][static_cast<std::size_t>(r)]) > tol)
        throw Error(ErrorCode::GeometryMismatch,
                    "prediction and truth direction differ");
    }
  }

  const double diagonal = truth_mask.physical_diagonal();
  std::map<std::pair<std::string, Metric>, double> out;
  for (const ClassSpec& spec : specs) {
    const Volume pred = compose_class(pred_mask, spec);
    const Volume truth = compose_class(truth_mask, spec);
    const bool pred_empty = std::all_of(pred.data().begin(), pred.data().end(),
                                        [](float v) { return v == 0.0f; });
    const bool truth_empty =
        std::all_of(truth.data().begin(), truth.data().end(),
                    [](float v) { return v == 0.0f; });

    SurfaceDistanceSet sd;
    bool have_sd = false;
    for (Metric m : metrics) {
      double value = 0.0;
      if (pred_empty && truth_empty) {
        value = (m == Metric::dice || m == Metric::surface_dice) ? 1.0 : 0.0;
      } else if (pred_empty || truth_empty) {
        value = (m == Metric::dice || m == Metric::surface_dice) ? 0.0
                                                                 : diagonal;
      } else {
        switch (m) {
          case Metric::dice:
            value = dice(pred, truth);
            break;
          case Metric::hd95:
          case Metric::asd:
          case Metric::surface_dice:
            if (!have_sd) {
              sd = surface_distances(pred, truth, truth_mask.spacing());
              have_sd = true;
            }
            value = m == Metric::hd95 ? hd95(sd)
                    : m == Metric::asd
                        ? asd(sd)
                        : surface_dice(sd, options.surface_dice_tolerance_mm);
            break;
        }
      }
      out[{spec.name, m}] = value;
    }
  }
  return out;
}

}  // namespace mist::metrics
