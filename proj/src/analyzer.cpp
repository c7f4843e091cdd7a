#include "mist/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "mist/stats.hpp"
#include "mist/volume_ops.hpp"
#include "mist/worker_pool.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mist::analysis {

namespace {

double round_half_away(double v) {
  return v < 0.0 ? std::ceil(v - 0.5) : std::floor(v + 0.5);
}

// Maps per-file-axis quantities into RAI axis order so spacing and shape
// statistics are comparable across patients stored in different orientations.
template <typename T>
std::array<T, 3> to_rai_axes(const std::array<T, 3>& values,
                             const Mat3& direction) {
  const OrientationCode code = orientation_of(direction);
  std::array<T, 3> out{};
  for (int s = 0; s < 3; ++s) {
    bool positive = false;
    int world = 0;
    switch (code.code[static_cast<std::size_t>(s)]) {
      case 'R': world = 0; positive = true; break;
      case 'L': world = 0; break;
      case 'A': world = 1; positive = true; break;
      case 'P': world = 1; break;
      case 'I': world = 2; positive = true; break;
      case 'S': world = 2; break;
    }
    (void)positive;
    out[static_cast<std::size_t>(world)] = values[static_cast<std::size_t>(s)];
  }
  return out;
}

}  // namespace

double otsu_threshold(const std::vector<std::int64_t>& histogram,
                      double range_lo, double range_hi) {
  const std::size_t bins = histogram.size();
  if (bins == 0)
    throw Error(ErrorCode::EmptyHistogram, "histogram has no bins");
  std::int64_t total = 0;
  for (std::int64_t n : histogram) {
    if (n < 0)
      throw Error(ErrorCode::InvalidArgument, "negative histogram count");
    total += n;
  }
  if (total == 0)
    throw Error(ErrorCode::EmptyHistogram, "histogram has zero total count");

  const double width = (range_hi - range_lo) / static_cast<double>(bins);
  auto center = [&](std::size_t b) {
    return range_lo + (static_cast<double>(b) + 0.5) * width;
  };

  double weighted_total = 0.0;
  for (std::size_t b = 0; b < bins; ++b)
    weighted_total += static_cast<double>(histogram[b]) * center(b);

  double best_variance = -1.0;
  std::size_t best_m = 0;
  double w0 = 0.0;
  double sum0 = 0.0;
  // Candidate m puts bins [0, m) below the threshold and [m, bins) at or
  // above it.
  for (std::size_t m = 0; m < bins; ++m) {
    if (m > 0) {
      w0 += static_cast<double>(histogram[m - 1]);
      sum0 += static_cast<double>(histogram[m - 1]) * center(m - 1);
    }
    const double w1 = static_cast<double>(total) - w0;
    double variance = 0.0;
    if (w0 > 0.0 && w1 > 0.0) {
      const double mu0 = sum0 / w0;
      const double mu1 = (weighted_total - sum0) / w1;
      variance = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    if (variance > best_variance) {
      best_variance = variance;
      best_m = m;
    }
  }

  if (best_variance <= 0.0) {
    for (std::size_t b = 0; b < bins; ++b) {
      if (histogram[b] > 0) return center(b);
    }
  }
  return center(best_m);
}

Volume foreground_mask(const Volume& image, const AnalyzerRules& rules) {
  if (image.channels() != 1)
    throw Error(ErrorCode::InvalidArgument,
                "foreground_mask expects a single channel");

  std::vector<double> values(image.data().begin(), image.data().end());
  std::sort(values.begin(), values.end());
  const double lo = stats::percentile_sorted(values, rules.crop_window_lo);
  const double hi = stats::percentile_sorted(values, rules.crop_window_hi);

  Volume mask(image.shape(), 1, VoxelKind::labels);
  mask.copy_geometry_from(image);

  if (!(hi > lo)) {
    log::warn("analyze", "",
              "constant image window; foreground mask set to all ones");
    std::fill(mask.data().begin(), mask.data().end(), 1.0f);
    return mask;
  }

  const std::size_t bins = static_cast<std::size_t>(rules.otsu_bins);
  std::vector<std::int64_t> histogram(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  auto clip = [&](double v) { return std::clamp(v, lo, hi); };
  for (float raw : image.data()) {
    const double v = clip(raw);
    const std::size_t b = std::min(
        bins - 1, static_cast<std::size_t>(std::max(0.0, (v - lo) / width)));
    ++histogram[b];
  }
  const double threshold = otsu_threshold(histogram, lo, hi);
  for (std::size_t i = 0; i < image.data().size(); ++i)
    mask.data()[i] = clip(image.data()[i]) >= threshold ? 1.0f : 0.0f;
  return mask;
}

Volume foreground_union(const Volume& multichannel,
                        const AnalyzerRules& rules) {
  Volume mask(multichannel.shape(), 1, VoxelKind::labels);
  mask.copy_geometry_from(multichannel);
  for (std::int64_t c = 0; c < multichannel.channels(); ++c) {
    const Volume channel_mask = foreground_mask(multichannel.channel(c), rules);
    for (std::size_t i = 0; i < mask.data().size(); ++i) {
      if (channel_mask.data()[i] != 0.0f) mask.data()[i] = 1.0f;
    }
  }
  return mask;
}

namespace {

Volume read_image_channels(const data::PatientRecord& rec) {
  std::vector<Volume> channels;
  channels.reserve(rec.image_paths.size());
  for (const auto& path : rec.image_paths)
    channels.push_back(nifti::read_nifti(path));
  return stack_channels(channels);
}

}  // namespace

CroppingDecision decide_cropping(const std::vector<data::PatientRecord>& usable,
                                 const AnalyzerRules& rules, int workers) {
  std::vector<std::optional<double>> reductions(usable.size());
  parallel_for(usable.size(), workers, [&](std::size_t i) {
    try {
      const Volume image = read_image_channels(usable[i]);
      const Volume fg = foreground_union(image, rules);
      const BoundingBox box = tight_bbox(fg);
      const double full = static_cast<double>(image.voxels_per_channel());
      reductions[i] = 1.0 - static_cast<double>(box.volume()) / full;
    } catch (const std::exception& e) {
      log::warn("analyze", usable[i].id,
                std::string("skipped in cropping decision: ") + e.what());
    }
  });

  std::vector<double> ok;
  for (const auto& r : reductions) {
    if (r) ok.push_back(*r);
  }
  if (ok.empty())
    throw Error(ErrorCode::NoUsablePatients,
                "no patient could be read for the cropping decision");
  CroppingDecision out;
  out.mean_reduction = stats::mean(ok);
  out.crop_to_foreground = out.mean_reduction >= rules.crop_reduction_threshold;
  return out;
}

Vec3 select_target_spacing(const std::vector<Vec3>& spacings,
                           const AnalyzerRules& rules) {
  if (spacings.empty())
    throw Error(ErrorCode::InvalidArgument, "no spacings supplied");
  Vec3 target;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> axis;
    axis.reserve(spacings.size());
    for (const auto& s : spacings) axis.push_back(s[static_cast<std::size_t>(a)]);
    target[static_cast<std::size_t>(a)] = stats::median(std::move(axis));
  }

  const double max_sp = *std::max_element(target.begin(), target.end());
  const double min_sp = *std::min_element(target.begin(), target.end());
  if (max_sp / min_sp > rules.anisotropy_ratio) {
    for (int a = 0; a < 3; ++a) {
      if (target[static_cast<std::size_t>(a)] != max_sp) continue;
      std::vector<double> axis;
      axis.reserve(spacings.size());
      for (const auto& s : spacings)
        axis.push_back(s[static_cast<std::size_t>(a)]);
      target[static_cast<std::size_t>(a)] =
          stats::percentile(std::move(axis), rules.low_resolution_percentile);
    }
  }
  return target;
}

std::int64_t estimate_memory(const Index3& median_resampled_shape,
                             std::int64_t channels) {
  return median_resampled_shape[0] * median_resampled_shape[1] *
         median_resampled_shape[2] * channels * 4;
}

Index3 select_patch_size(const Index3& median_resampled_shape,
                         const Index3& max_patch) {
  Index3 out;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    std::int64_t dim = median_resampled_shape[ia];
    if (dim < 1)
      throw Error(ErrorCode::InvalidArgument, "shape must be at least 1");
    std::int64_t p = 1;
    while (p * 2 <= dim) p *= 2;
    out[ia] = std::min(p, max_patch[ia]);
  }
  return out;
}

NormalizationParams compute_normalization_params(
    const std::vector<data::PatientRecord>& usable,
    const data::DatasetDescription& desc, const AnalyzerRules& rules,
    int workers) {
  NormalizationParams out;

  if (desc.modality == data::Modality::ct) {
    std::vector<std::vector<double>> fg(usable.size());
    parallel_for(usable.size(), workers, [&](std::size_t i) {
      if (!usable[i].mask_path)
        throw Error(ErrorCode::InvalidArgument,
                    "CT normalization needs ground-truth masks");
      const Volume image = read_image_channels(usable[i]);
      Volume mask = nifti::read_nifti(*usable[i].mask_path);
      mask.set_kind(VoxelKind::labels);
      std::vector<double>& values = fg[i];
      for (std::int64_t c = 0; c < image.channels(); ++c) {
        const float* data = image.channel_data(c);
        for (std::int64_t v = 0; v < image.voxels_per_channel(); ++v) {
          if (mask.data()[static_cast<std::size_t>(v)] != 0.0f)
            values.push_back(data[v]);
        }
      }
    });

    // Exact pooling, merged in sorted-patient order.
    std::vector<double> pooled;
    for (const auto& values : fg)
      pooled.insert(pooled.end(), values.begin(), values.end());
    if (pooled.empty())
      throw Error(ErrorCode::NoForegroundVoxels,
                  "no nonzero ground-truth voxels in the dataset");
    std::sort(pooled.begin(), pooled.end());
    out.window_lo = stats::percentile_sorted(pooled, rules.norm_window_lo);
    out.window_hi = stats::percentile_sorted(pooled, rules.norm_window_hi);
    out.global_mean = stats::mean(pooled);
    out.global_std = stats::stddev_population(pooled);
    if (*out.global_std <= 0.0) {
      log::warn("analyze", "", "constant CT foreground; global_std forced to 1");
      out.global_std = 1.0;
    }
    return out;
  }

  std::vector<std::vector<double>> ratios(usable.size());
  parallel_for(usable.size(), workers, [&](std::size_t i) {
    const Volume image = read_image_channels(usable[i]);
    for (std::int64_t c = 0; c < image.channels(); ++c) {
      const float* data = image.channel_data(c);
      std::int64_t nonzero = 0;
      for (std::int64_t v = 0; v < image.voxels_per_channel(); ++v) {
        if (data[v] != 0.0f) ++nonzero;
      }
      const std::int64_t zero = image.voxels_per_channel() - nonzero;
      ratios[i].push_back(static_cast<double>(nonzero) /
                          static_cast<double>(std::max<std::int64_t>(zero, 1)));
    }
  });
  std::vector<double> all;
  for (const auto& r : ratios) all.insert(all.end(), r.begin(), r.end());
  if (all.empty())
    throw Error(ErrorCode::NoUsablePatients, "no images for normalization");
  out.use_nonzero_mask = stats::mean(all) < rules.nonzero_ratio_threshold;
  return out;
}

HeaderCheck check_headers(const data::PatientRecord& patient) {
  constexpr double kTol = 1e-3;
  std::vector<nifti::GeometryInfo> infos;
  try {
    for (const auto& path : patient.image_paths)
      infos.push_back(nifti::read_geometry(path));
    if (patient.mask_path)
      infos.push_back(nifti::read_geometry(*patient.mask_path));
  } catch (const std::exception& e) {
    return HeaderCheck{false, std::string("unreadable: ") + e.what()};
  }

  const nifti::GeometryInfo& ref = infos.front();
  Mat3 ref_dir = ref.direction;
  if (!ref_dir.orthonormal(1e-3))
    return HeaderCheck{false, "direction matrix is not orthonormal"};

  for (std::size_t f = 0; f < infos.size(); ++f) {
    const auto& g = infos[f];
    if (g.channels != 1)
      return HeaderCheck{false, "file has multiple channels"};
    if (g.shape != ref.shape) return HeaderCheck{false, "shape mismatch"};
    for (int a = 0; a < 3; ++a) {
      const auto ia = static_cast<std::size_t>(a);
      if (std::abs(g.spacing[ia] - ref.spacing[ia]) > kTol)
        return HeaderCheck{false, "spacing mismatch"};
      if (std::abs(g.origin[ia] - ref.origin[ia]) > kTol)
        return HeaderCheck{false, "origin mismatch"};
      for (int r = 0; r < 3; ++r) {
        if (std::abs(g.direction.col[ia][static_cast<std::size_t>(r)] -
                     ref.direction.col[ia][static_cast<std::size_t>(r)]) > kTol)
          return HeaderCheck{false, "direction mismatch"};
      }
    }
  }
  return HeaderCheck{true, ""};
}

PipelineConfig analyze(const data::DatasetDescription& desc,
                       const AnalyzerRules& rules, int workers) {
  const std::vector<data::PatientRecord> patients =
      data::discover_patients(desc, data::Split::train);

  std::vector<HeaderCheck> checks(patients.size());
  parallel_for(patients.size(), workers,
               [&](std::size_t i) { checks[i] = check_headers(patients[i]); });

  std::vector<data::PatientRecord> usable;
  std::vector<std::string> excluded;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (checks[i].ok) {
      usable.push_back(patients[i]);
    } else {
      excluded.push_back(patients[i].id);
      log::warn("analyze", patients[i].id, "excluded: " + checks[i].reason);
    }
  }
  if (usable.empty())
    throw Error(ErrorCode::NoUsablePatients,
                "no patient passed the header checks");

  struct PatientStats {
    Vec3 spacing_rai;
    Index3 full_shape_rai;
    Index3 cropped_shape_rai;
    double reduction = 0.0;
  };
  std::vector<PatientStats> gathered(usable.size());
  parallel_for(usable.size(), workers, [&](std::size_t i) {
    const Volume image = read_image_channels(usable[i]);
    PatientStats& ps = gathered[i];
    ps.spacing_rai = to_rai_axes(image.spacing(), image.direction());
    ps.full_shape_rai = to_rai_axes(image.shape(), image.direction());

    const Volume fg = foreground_union(image, rules);
    const BoundingBox box = tight_bbox(fg);
    ps.cropped_shape_rai = to_rai_axes(box.extent(), image.direction());
    ps.reduction = 1.0 - static_cast<double>(box.volume()) /
                             static_cast<double>(image.voxels_per_channel());
  });

  PipelineConfig config;
  config.modality = desc.modality;
  config.labels = desc.labels;
  config.final_classes = desc.final_classes;
  config.excluded_ids = excluded;
  config.max_patch_size = rules.max_patch_size;

  std::vector<double> reductions;
  std::vector<Vec3> spacings;
  for (const auto& ps : gathered) {
    reductions.push_back(ps.reduction);
    spacings.push_back(ps.spacing_rai);
  }
  config.mean_volume_reduction = stats::mean(reductions);
  config.crop_to_foreground =
      config.mean_volume_reduction >= rules.crop_reduction_threshold;
  config.target_spacing = select_target_spacing(spacings, rules);

  Vec3 median_spacing;
  Index3 median_resampled;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    std::vector<double> axis_spacing;
    std::vector<double> axis_shape;
    for (const auto& ps : gathered) {
      axis_spacing.push_back(ps.spacing_rai[ia]);
      axis_shape.push_back(static_cast<double>(
          config.crop_to_foreground ? ps.cropped_shape_rai[ia]
                                    : ps.full_shape_rai[ia]));
    }
    median_spacing[ia] = stats::median(std::move(axis_spacing));
    const double median_dim = stats::median(std::move(axis_shape));
    median_resampled[ia] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(round_half_away(
               median_dim * median_spacing[ia] / config.target_spacing[ia])));
  }

  config.patch_size = select_patch_size(median_resampled, rules.max_patch_size);
  const std::int64_t bytes =
      estimate_memory(median_resampled, desc.channel_count());
  config.memory_warning = bytes > rules.memory_warn_bytes;
  if (config.memory_warning)
    log::warn("analyze", "",
              "median resampled example needs " + std::to_string(bytes) +
                  " bytes; consider coarsening the target spacing");

  const NormalizationParams norm =
      compute_normalization_params(usable, desc, rules, workers);
  config.use_nonzero_mask = norm.use_nonzero_mask;
  config.window_lo = norm.window_lo;
  config.window_hi = norm.window_hi;
  config.global_mean = norm.global_mean;
  config.global_std = norm.global_std;
  return config;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["crop_to_foreground"] = c.crop_to_foreground;
  j["mean_volume_reduction"] = c.mean_volume_reduction;
  j["target_spacing"] = c.target_spacing;
  j["patch_size"] = c.patch_size;
  j["max_patch_size"] = c.max_patch_size;
  j["modality"] = data::modality_name(c.modality);
  j["window_lo"] = c.window_lo ? json(*c.window_lo) : json(nullptr);
  j["window_hi"] = c.window_hi ? json(*c.window_hi) : json(nullptr);
  j["global_mean"] = c.global_mean ? json(*c.global_mean) : json(nullptr);
  j["global_std"] = c.global_std ? json(*c.global_std) : json(nullptr);
  j["use_nonzero_mask"] = c.use_nonzero_mask;
  j["labels"] = c.labels;
  json classes = json::object();
  for (const auto& [name, labels] : c.final_classes) classes[name] = labels;
  j["final_classes"] = classes;
  j["excluded_ids"] = c.excluded_ids;
  j["memory_warning"] = c.memory_warning;
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError,
                std::string("config.json: invalid JSON: ") + e.what());
  }
  PipelineConfig c;
  try {
    c.schema_version = j.at("schema_version").get<int>();
    c.crop_to_foreground = j.at("crop_to_foreground").get<bool>();
    c.mean_volume_reduction = j.at("mean_volume_reduction").get<double>();
    for (int a = 0; a < 3; ++a) {
      c.target_spacing[a] = j.at("target_spacing").at(a).get<double>();
      c.patch_size[a] = j.at("patch_size").at(a).get<std::int64_t>();
      c.max_patch_size[a] = j.at("max_patch_size").at(a).get<std::int64_t>();
    }
    c.modality = data::modality_from_name(j.at("modality").get<std::string>());
    if (!j.at("window_lo").is_null())
      c.window_lo = j.at("window_lo").get<double>();
    if (!j.at("window_hi").is_null())
      c.window_hi = j.at("window_hi").get<double>();
    if (!j.at("global_mean").is_null())
      c.global_mean = j.at("global_mean").get<double>();
    if (!j.at("global_std").is_null())
      c.global_std = j.at("global_std").get<double>();
    c.use_nonzero_mask = j.at("use_nonzero_mask").get<bool>();
    for (const auto& v : j.at("labels"))
      c.labels.push_back(v.get<std::int64_t>());
    for (const auto& [name, members] : j.at("final_classes").items()) {
      std::vector<std::int64_t> labels;
      for (const auto& v : members) labels.push_back(v.get<std::int64_t>());
      c.final_classes.emplace_back(name, std::move(labels));
    }
    for (const auto& v : j.at("excluded_ids"))
      c.excluded_ids.push_back(v.get<std::string>());
    c.memory_warning = j.at("memory_warning").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError,
                std::string("config.json: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const PipelineConfig& config, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << config_to_json(config);
  if (!out)
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace mist::analysis
