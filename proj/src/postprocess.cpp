#include "mist/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "mist/worker_pool.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mist::post {

namespace {

std::vector<Index3> neighbor_offsets(int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    throw Error(ErrorCode::InvalidArgument,
                "connectivity must be 6, 18 or 26");
  std::vector<Index3> out;
  for (std::int64_t dz = -1; dz <= 1; ++dz) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        const int manhattan =
            static_cast<int>(std::abs(dx) + std::abs(dy) + std::abs(dz));
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan > 1) continue;
        if (connectivity == 18 && manhattan > 2) continue;
        out.push_back(Index3{dx, dy, dz});
      }
    }
  }
  return out;
}

bool in_bounds(const Index3& p, const Index3& shape) {
  return p[0] >= 0 && p[0] < shape[0] && p[1] >= 0 && p[1] < shape[1] &&
         p[2] >= 0 && p[2] < shape[2];
}

Volume binary_union(const Volume& mask,
                    const std::vector<std::int64_t>& targets) {
  Volume out(mask.shape(), 1, VoxelKind::labels);
  out.copy_geometry_from(mask);
  for (std::size_t i = 0; i < mask.data().size(); ++i) {
    for (std::int64_t t : targets) {
      if (mask.data()[i] == static_cast<float>(t)) {
        out.data()[i] = 1.0f;
        break;
      }
    }
  }
  return out;
}

std::vector<Index3> ball_offsets(std::int64_t radius) {
  std::vector<Index3> out;
  for (std::int64_t dz = -radius; dz <= radius; ++dz) {
    for (std::int64_t dy = -radius; dy <= radius; ++dy) {
      for (std::int64_t dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy + dz * dz <= radius * radius)
          out.push_back(Index3{dx, dy, dz});
      }
    }
  }
  return out;
}

std::vector<bool> erode(const std::vector<bool>& in, const Index3& shape,
                        const std::vector<Index3>& se) {
  std::vector<bool> out(in.size(), false);
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        const std::size_t v = static_cast<std::size_t>(
            i + shape[0] * (j + shape[1] * k));
        if (!in[v]) continue;
        bool keep = true;
        for (const Index3& d : se) {
          const Index3 p{i + d[0], j + d[1], k + d[2]};
          if (!in_bounds(p, shape) ||
              !in[static_cast<std::size_t>(p[0] +
                                           shape[0] * (p[1] +
                                                       shape[1] * p[2]))]) {
            keep = false;
            break;
          }
        }
        out[v] = keep;
      }
    }
  }
  return out;
}

std::vector<bool> dilate(const std::vector<bool>& in, const Index3& shape,
                         const std::vector<Index3>& se) {
  std::vector<bool> out(in.size(), false);
  for (std::int64_t k = 0; k < shape[2]; ++k) {
    for (std::int64_t j = 0; j < shape[1]; ++j) {
      for (std::int64_t i = 0; i < shape[0]; ++i) {
        const std::size_t v = static_cast<std::size_t>(
            i + shape[0] * (j + shape[1] * k));
        if (!in[v]) continue;
        for (const Index3& d : se) {
          const Index3 p{i + d[0], j + d[1], k + d[2]};
          if (in_bounds(p, shape))
            out[static_cast<std::size_t>(
                p[0] + shape[0] * (p[1] + shape[1] * p[2]))] = true;
        }
      }
    }
  }
  return out;
}

}  // namespace

ComponentLabels connected_components(const Volume& binary, int connectivity) {
  const std::vector<Index3> offsets = neighbor_offsets(connectivity);
  const Index3 shape = binary.shape();

  ComponentLabels out{Volume(shape, 1, VoxelKind::labels), {}};
  out.labels.copy_geometry_from(binary);

  std::vector<std::int64_t> stack;
  std::int64_t next_id = 0;
  for (std::int64_t v = 0; v < binary.voxels_per_channel(); ++v) {
    if (binary.data()[static_cast<std::size_t>(v)] == 0.0f) continue;
    if (out.labels.data()[static_cast<std::size_t>(v)] != 0.0f) continue;
    const std::int64_t id = ++next_id;
    std::int64_t size = 0;
    stack.push_back(v);
    out.labels.data()[static_cast<std::size_t>(v)] = static_cast<float>(id);
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      ++size;
      const std::int64_t plane = shape[0] * shape[1];
      const Index3 p{cur % shape[0], (cur % plane) / shape[0], cur / plane};
      for (const Index3& d : offsets) {
        const Index3 q{p[0] + d[0], p[1] + d[1], p[2] + d[2]};
        if (!in_bounds(q, shape)) continue;
        const std::int64_t w = q[0] + shape[0] * (q[1] + shape[1] * q[2]);
        if (binary.data()[static_cast<std::size_t>(w)] == 0.0f) continue;
        if (out.labels.data()[static_cast<std::size_t>(w)] != 0.0f) continue;
        out.labels.data()[static_cast<std::size_t>(w)] =
            static_cast<float>(id);
        stack.push_back(w);
      }
    }
    out.sizes.emplace_back(id, size);
  }
  std::sort(out.sizes.begin(), out.sizes.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  return out;
}

Volume apply_op(const Volume& mask, const std::vector<std::int64_t>& targets,
                const PostprocessOp& op, int connectivity) {
  if (mask.kind() != VoxelKind::labels)
    throw Error(ErrorCode::InvalidArgument, "apply_op expects a label mask");
  Volume out = mask;
  const Volume target_union = binary_union(mask, targets);
  const float replacement =
      static_cast<float>(op.replacement.value_or(std::int64_t{0}));

  switch (op.kind) {
    case OpKind::remove_small: {
      const ComponentLabels cc =
          connected_components(target_union, connectivity);
      std::set<std::int64_t> drop;
      for (const auto& [id, size] : cc.sizes) {
        if (size < op.min_voxels) drop.insert(id);
      }
      for (std::size_t v = 0; v < out.data().size(); ++v) {
        const auto id =
            static_cast<std::int64_t>(cc.labels.data()[v]);
        if (id != 0 && drop.count(id)) out.data()[v] = replacement;
      }
      break;
    }
    case OpKind::top_k: {
      const ComponentLabels cc =
          connected_components(target_union, connectivity);
      std::set<std::int64_t> keep;
      for (std::size_t r = 0;
           r < std::min<std::size_t>(cc.sizes.size(),
                                     static_cast<std::size_t>(op.k));
           ++r)
        keep.insert(cc.sizes[r].first);
      for (std::size_t v = 0; v < out.data().size(); ++v) {
        const auto id = static_cast<std::int64_t>(cc.labels.data()[v]);
        if (id != 0 && !keep.count(id)) out.data()[v] = replacement;
      }
      break;
    }
    case OpKind::morph_clean: {
      const Index3 shape = mask.shape();
      std::vector<bool> u(target_union.data().size());
      for (std::size_t v = 0; v < u.size(); ++v)
        u[v] = target_union.data()[v] != 0.0f;
      const std::vector<Index3> se = ball_offsets(op.radius);
      const std::vector<bool> opened = dilate(erode(u, shape, se), shape, se);
      for (std::size_t v = 0; v < u.size(); ++v) {
        if (u[v] && !opened[v]) out.data()[v] = replacement;
      }
      break;
    }
    case OpKind::fill_holes: {
      const Index3 shape = mask.shape();
      const std::vector<Index3> offsets = neighbor_offsets(connectivity);
      // Flood the complement of the target union from the volume border;
      // complement voxels left unreached are cavities.
      std::vector<bool> complement(target_union.data().size());
      for (std::size_t v = 0; v < complement.size(); ++v)
        complement[v] = target_union.data()[v] == 0.0f;
      std::vector<bool> reached(complement.size(), false);
      std::vector<std::int64_t> stack;
      for (std::int64_t k = 0; k < shape[2]; ++k) {
        for (std::int64_t j = 0; j < shape[1]; ++j) {
          for (std::int64_t i = 0; i < shape[0]; ++i) {
            if (i != 0 && i != shape[0] - 1 && j != 0 && j != shape[1] - 1 &&
                k != 0 && k != shape[2] - 1)
              continue;
            const std::int64_t v = i + shape[0] * (j + shape[1] * k);
            if (complement[static_cast<std::size_t>(v)] &&
                !reached[static_cast<std::size_t>(v)]) {
              reached[static_cast<std::size_t>(v)] = true;
              stack.push_back(v);
            }
          }
        }
      }
      while (!stack.empty()) {
        const std::int64_t cur = stack.back();
        stack.pop_back();
        const std::int64_t plane = shape[0] * shape[1];
        const Index3 p{cur % shape[0], (cur % plane) / shape[0], cur / plane};
        for (const Index3& d : offsets) {
          const Index3 q{p[0] + d[0], p[1] + d[1], p[2] + d[2]};
          if (!in_bounds(q, shape)) continue;
          const std::int64_t w = q[0] + shape[0] * (q[1] + shape[1] * q[2]);
          if (!complement[static_cast<std::size_t>(w)]) continue;
          if (reached[static_cast<std::size_t>(w)]) continue;
          reached[static_cast<std::size_t>(w)] = true;
          stack.push_back(w);
        }
      }
      // Only background voxels inside cavities are filled; other labels
      // trapped inside are left alone.
      for (std::size_t v = 0; v < complement.size(); ++v) {
        if (complement[v] && !reached[v] && out.data()[v] == 0.0f)
          out.data()[v] = static_cast<float>(op.fill_label);
      }
      break;
    }
  }
  return out;
}

Volume apply_strategy(const Volume& mask, const PostprocessStrategy& strategy) {
  Volume out = mask;
  for (const PostprocessOp& op : strategy.ops)
    out = apply_op(out, strategy.target_labels, op, strategy.connectivity);
  return out;
}

std::vector<PostprocessStrategy> strategies_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError,
                std::string("strategy: invalid JSON: ") + e.what());
  }
  if (!j.is_array())
    throw Error(ErrorCode::SchemaError,
                "strategy file must be a JSON array of strategies");

  std::vector<PostprocessStrategy> out;
  for (const auto& js : j) {
    PostprocessStrategy s;
    if (!js.contains("target_labels") || !js["target_labels"].is_array() ||
        js["target_labels"].empty())
      throw Error(ErrorCode::SchemaError,
                  "strategy needs a nonempty target_labels array");
    for (const auto& v : js["target_labels"])
      s.target_labels.push_back(v.get<std::int64_t>());
    s.connectivity = js.value("connectivity", 26);
    if (s.connectivity != 6 && s.connectivity != 18 && s.connectivity != 26)
      throw Error(ErrorCode::SchemaError, "connectivity must be 6, 18 or 26");
    if (!js.contains("ops") || !js["ops"].is_array() || js["ops"].empty())
      throw Error(ErrorCode::SchemaError, "strategy needs a nonempty ops array");
    for (const auto& jo : js["ops"]) {
      PostprocessOp op;
      const std::string kind = jo.at("op").get<std::string>();
      if (kind == "remove_small") {
        op.kind = OpKind::remove_small;
        op.min_voxels = jo.at("min_voxels").get<std::int64_t>();
        if (op.min_voxels < 1)
          throw Error(ErrorCode::SchemaError, "min_voxels must be >= 1");
      } else if (kind == "top_k") {
        op.kind = OpKind::top_k;
        op.k = jo.at("k").get<std::int64_t>();
        if (op.k < 1) throw Error(ErrorCode::SchemaError, "k must be >= 1");
      } else if (kind == "morph_clean") {
        op.kind = OpKind::morph_clean;
        op.radius = jo.at("radius").get<std::int64_t>();
        if (op.radius < 1)
          throw Error(ErrorCode::SchemaError, "radius must be >= 1");
      } else if (kind == "fill_holes") {
        op.kind = OpKind::fill_holes;
        op.fill_label = jo.at("fill_label").get<std::int64_t>();
      } else {
        throw Error(ErrorCode::SchemaError, "unknown op '" + kind + "'");
      }
      if (jo.contains("replacement"))
        op.replacement = jo["replacement"].get<std::int64_t>();
      s.ops.push_back(op);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PostprocessStrategy> load_strategies(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return strategies_from_json(ss.str());
}

PostprocessResult run_postprocess(
    const fs::path& pred_dir,
    const std::vector<PostprocessStrategy>& strategies,
    const eval::TruthSource& truth, const eval::MetricsTable& baseline,
    const std::vector<metrics::ClassSpec>& specs, const fs::path& out_dir,
    const eval::EvaluateOptions& options) {
  const auto cohort = truth.resolve();
  fs::create_directories(out_dir);

  parallel_for(cohort.size(), options.workers, [&](std::size_t i) {
    const std::string& id = cohort[i].first;
    for (const char* suffix : {".nii.gz", ".nii"}) {
      const fs::path src = pred_dir / (id + suffix);
      if (!fs::exists(src)) continue;
      Volume pred = nifti::read_nifti(src);
      pred.set_kind(VoxelKind::labels);
      for (const PostprocessStrategy& s : strategies)
        pred = apply_strategy(pred, s);
      nifti::write_nifti(pred, out_dir / (id + suffix));
      return;
    }
    log::warn("postprocess", id, "no prediction to postprocess");
  });

  PostprocessResult result;
  result.table = eval::evaluate_run(out_dir, truth, specs, options);

  if (baseline.columns != result.table.columns)
    throw Error(ErrorCode::CohortMismatch,
                "baseline metrics/classes differ from this evaluation");
  if (baseline.ids != result.table.ids)
    throw Error(ErrorCode::CohortMismatch,
                "baseline cohort differs from this evaluation");

  const auto new_summary = result.table.summary();
  const auto base_summary = baseline.summary();
  const double weight =
      1.0 / static_cast<double>(result.table.columns.size());
  double improvement = 0.0;
  for (std::size_t c = 0; c < result.table.columns.size(); ++c) {
    const int sign = metrics::metric_sign(result.table.columns[c].second);
    improvement +=
        weight * sign * (new_summary[0][c] - base_summary[0][c]);
  }
  result.improvement = improvement;
  return result;
}

}  // namespace mist::post
