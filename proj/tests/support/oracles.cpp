#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace mist::testing::oracle {

namespace {

std::vector<Index3> boundary_list(const Volume& mask) {
  const Index3 shape = mask.shape();
  std::vector<Index3> out;
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        if (mask.at(0, i, j, k) == 0.0f) continue;
        bool boundary = i == 0 || i == shape[0] - 1 || j == 0 ||
                        j == shape[1] - 1 || k == 0 || k == shape[2] - 1;
        if (!boundary) {
          boundary = mask.at(0, i - 1, j, k) == 0.0f ||
                     mask.at(0, i + 1, j, k) == 0.0f ||
                     mask.at(0, i, j - 1, k) == 0.0f ||
                     mask.at(0, i, j + 1, k) == 0.0f ||
                     mask.at(0, i, j, k - 1) == 0.0f ||
                     mask.at(0, i, j, k + 1) == 0.0f;
        }
        if (boundary) out.push_back(Index3{i, j, k});
      }
    }
  }
  return out;
}

double dist_mm(const Index3& a, const Index3& b, const Vec3& s) {
  const double dx = static_cast<double>(a[0] - b[0]) * s[0];
  const double dy = static_cast<double>(a[1] - b[1]) * s[1];
  const double dz = static_cast<double>(a[2] - b[2]) * s[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<double> directed(const std::vector<Index3>& from,
                             const std::vector<Index3>& to, const Vec3& s) {
  std::vector<double> out;
  out.reserve(from.size());
  for (const Index3& f : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Index3& t : to) best = std::min(best, dist_mm(f, t, s));
    out.push_back(best);
  }
  return out;
}

}  // namespace

SurfacePair surface_distances(const Volume& pred, const Volume& truth,
                              const Vec3& spacing) {
  const std::vector<Index3> bp = boundary_list(pred);
  const std::vector<Index3> bt = boundary_list(truth);
  return SurfacePair{directed(bp, bt, spacing), directed(bt, bp, spacing)};
}

std::vector<double> dtm_for_label(const Volume& mask, std::int64_t label) {
  const Index3 shape = mask.shape();
  const Vec3 s = mask.spacing();
  const float lab = static_cast<float>(label);

  std::vector<Index3> object, background;
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        if (mask.at(0, i, j, k) == lab)
          object.push_back(Index3{i, j, k});
        else
          background.push_back(Index3{i, j, k});
      }
    }
  }

  const double diagonal = mask.physical_diagonal();
  std::vector<double> out(static_cast<std::size_t>(mask.voxels_per_channel()));
  if (object.empty()) {
    std::fill(out.begin(), out.end(), diagonal);
    return out;
  }
  if (background.empty()) {
    std::fill(out.begin(), out.end(), -diagonal);
    return out;
  }

  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        const Index3 p{i, j, k};
        const std::size_t v = static_cast<std::size_t>(mask.index(i, j, k));
        if (mask.at(0, i, j, k) != lab) {
          double best = std::numeric_limits<double>::infinity();
          for (const Index3& o : object) best = std::min(best, dist_mm(p, o, s));
          out[v] = best;
          continue;
        }
        bool on_boundary = false;
        for (int a = 0; a < 3 && !on_boundary; ++a) {
          for (int step = -1; step <= 1 && !on_boundary; step += 2) {
            Index3 q = p;
            q[static_cast<std::size_t>(a)] += step;
            if (q[static_cast<std::size_t>(a)] < 0 ||
                q[static_cast<std::size_t>(a)] >=
                    shape[static_cast<std::size_t>(a)])
              continue;
            if (mask.at(0, q[0], q[1], q[2]) != lab) on_boundary = true;
          }
        }
        if (on_boundary) {
          out[v] = 0.0;
          continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (const Index3& b : background)
          best = std::min(best, dist_mm(p, b, s));
        out[v] = -best;
      }
    }
  }
  return out;
}

double otsu_threshold(const std::vector<std::int64_t>& histogram,
                      double range_lo, double range_hi) {
  const std::size_t bins = histogram.size();
  const double width = (range_hi - range_lo) / static_cast<double>(bins);
  auto center = [&](std::size_t b) {
    return range_lo + (static_cast<double>(b) + 0.5) * width;
  };

  double best_var = -1.0;
  std::size_t best_m = 0;
  for (std::size_t m = 0; m < bins; ++m) {
    double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      const double n = static_cast<double>(histogram[b]);
      if (b < m) {
        w0 += n;
        s0 += n * center(b);
      } else {
        w1 += n;
        s1 += n * center(b);
      }
    }
    double var = 0.0;
    if (w0 > 0 && w1 > 0) {
      const double mu0 = s0 / w0;
      const double mu1 = s1 / w1;
      var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    if (var > best_var) {
      best_var = var;
      best_m = m;
    }
  }
  if (best_var <= 0.0) {
    for (std::size_t b = 0; b < bins; ++b) {
      if (histogram[b] > 0) return center(b);
    }
  }
  return center(best_m);
}

double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 1) return values[0];
  const double rank = p / 100.0 * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, n - 1);
  return values[lo] + (rank - std::floor(rank)) * (values[hi] - values[lo]);
}

BoundingBox tight_bbox(const Volume& mask) {
  const Index3 shape = mask.shape();
  BoundingBox box{shape, {0, 0, 0}};
  bool any = false;
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        if (mask.at(0, i, j, k) == 0.0f) continue;
        any = true;
        box.lo = {std::min(box.lo[0], i), std::min(box.lo[1], j),
                  std::min(box.lo[2], k)};
        box.hi = {std::max(box.hi[0], i + 1), std::max(box.hi[1], j + 1),
                  std::max(box.hi[2], k + 1)};
      }
    }
  }
  if (!any) return BoundingBox{{0, 0, 0}, shape};
  return box;
}

std::vector<std::int64_t> component_sizes_sorted(const Volume& binary,
                                                 int connectivity) {
  const Index3 shape = binary.shape();
  const std::int64_t n = binary.voxels_per_channel();
  std::vector<std::int64_t> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::int64_t(std::int64_t)> find =
      [&](std::int64_t x) -> std::int64_t {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  auto unite = [&](std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  };

  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        if (binary.at(0, i, j, k) == 0.0f) continue;
        const std::int64_t v = binary.index(i, j, k);
        for (std::int64_t dk = -1; dk <= 1; ++dk) {
          for (std::int64_t dj = -1; dj <= 1; ++dj) {
            for (std::int64_t di = -1; di <= 1; ++di) {
              const int manhattan = static_cast<int>(std::abs(di) +
                                                     std::abs(dj) +
                                                     std::abs(dk));
              if (manhattan == 0) continue;
              if (connectivity == 6 && manhattan > 1) continue;
              if (connectivity == 18 && manhattan > 2) continue;
              const std::int64_t qi = i + di, qj = j + dj, qk = k + dk;
              if (qi < 0 || qi >= shape[0] || qj < 0 || qj >= shape[1] ||
                  qk < 0 || qk >= shape[2])
                continue;
              if (binary.at(0, qi, qj, qk) == 0.0f) continue;
              unite(v, binary.index(qi, qj, qk));
            }
          }
        }
      }
    }
  }

  std::map<std::int64_t, std::int64_t> sizes;
  for (std::int64_t v = 0; v < n; ++v) {
    if (binary.data()[static_cast<std::size_t>(v)] == 0.0f) continue;
    ++sizes[find(v)];
  }
  std::vector<std::int64_t> out;
  for (const auto& [root, size] : sizes) out.push_back(size);
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace mist::testing::oracle
